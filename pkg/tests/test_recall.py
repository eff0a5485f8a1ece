import asyncio
import json
import os

from hamcrest import assert_that, calling, contains_exactly, empty, equal_to, has_length, raises

from namerecall.backend import ChatBackend, ChatRequest, ChatResponse
from namerecall.errors import DataError
from namerecall.mock_backend import MALFORMED_REPLY, load_mock_kb, make_knowledge_base
from namerecall.prompts import PromptKind, direct_prompt, direct_user_prompt, identify_prompt
from namerecall.recall_agents import (AgentKind, RecallEntry, build_recall_prompt, parse_recall_response, recall,
                                      run_dual_recall)
import namerecall
from namerecall.taxonomy import Granularity, load_default_taxonomy
from .helpers import FailingBackend, ScriptedBackend, five_label_taxonomy, mock_backend, run, write_file


def test_parse_keeps_first_m_valid_entries():
    taxonomy = load_default_taxonomy()
    reply = json.dumps([
        {'name': 'Masahiro Tanaka', 'nationality': 'japanese'},
        {'name': '', 'nationality': 'Japanese'},
        {'name': 'Nobody', 'nationality': 'Atlantean'},
        'not an object',
        {'name': 'Tanaka Kakuei', 'nationality': 'Japanese'},
        {'name': 'Tanaka Three', 'nationality': 'Korean'},
    ])
    result = parse_recall_response(ChatResponse(reply), AgentKind.PERSON, taxonomy, 2)
    assert_that(result.entries, contains_exactly(
        RecallEntry('Masahiro Tanaka', 'Japanese', AgentKind.PERSON, 0),
        RecallEntry('Tanaka Kakuei', 'Japanese', AgentKind.PERSON, 1),
    ))


def test_parse_unparseable_output_is_empty():
    taxonomy = load_default_taxonomy()
    result = parse_recall_response(ChatResponse('No one comes to mind.'), AgentKind.MEDIA, taxonomy, 4)
    assert_that(result.entries, empty())
    assert_that(result.agent, equal_to(AgentKind.MEDIA))


def test_parse_region_key():
    taxonomy = five_label_taxonomy()
    reply = json.dumps([{'name': 'X', 'region': 'r2'}, {'name': 'Y', 'nationality': 'A'}])
    result = parse_recall_response(ChatResponse(reply), AgentKind.PERSON, taxonomy, 4, Granularity.REGION)
    assert_that([e.nationality for e in result.entries], contains_exactly('R2'))


def test_build_recall_prompt_rejects_empty_name():
    taxonomy = five_label_taxonomy()
    assert_that(calling(build_recall_prompt).with_args(AgentKind.PERSON, '  ', taxonomy), raises(ValueError))


def test_malformed_output_reprompts_once():
    taxonomy = five_label_taxonomy()
    backend = ScriptedBackend('Sorry, I cannot help.', '[{"name": "P", "nationality": "C"}]')
    result, reprompts = run(recall(AgentKind.PERSON, 'Some Name', backend, taxonomy))
    assert_that(reprompts, equal_to(1))
    assert_that([e.nationality for e in result.entries], contains_exactly('C'))
    assert_that([attempt for _, attempt in backend.requests], contains_exactly(0, 1))


def test_empty_array_does_not_reprompt():
    backend = ScriptedBackend('[]')
    result, reprompts = run(recall(AgentKind.MEDIA, 'Some Name', backend, five_label_taxonomy()))
    assert_that(reprompts, equal_to(0))
    assert_that(backend.requests, has_length(1))


def test_backend_failure_is_empty_recall():
    backend = FailingBackend()
    result, reprompts = run(recall(AgentKind.PERSON, 'Some Name', backend, five_label_taxonomy()))
    assert_that(result.entries, empty())


def test_dual_recall_runs_both_agents():
    taxonomy = five_label_taxonomy()
    backend = mock_backend(taxonomy, person={'cook': [['James Cook', 'B']]},
                           media={'cook': [['Natalie Cook', 'D'], ['Alastair Cook', 'B']]})
    dual = run(run_dual_recall('Natalie Cook', backend, taxonomy))
    assert_that(dual.calls, equal_to(2))
    assert_that([e.person for e in dual.person.entries], contains_exactly('James Cook'))
    assert_that([e.person for e in dual.media.entries], contains_exactly('Natalie Cook', 'Alastair Cook'))
    kinds = sorted(kind.value for kind, _ in backend.call_history)
    assert_that(kinds, contains_exactly(PromptKind.MEDIA_RECALL.value, PromptKind.PERSON_RECALL.value))


class DelayedBackend(ChatBackend):
    """ Holds back the replies to one prompt kind so the other agent finishes first. """

    def __init__(self, inner: ChatBackend, slow: PromptKind):
        self.inner = inner
        self.model_id = inner.model_id
        self.slow = slow

    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        info = identify_prompt(request.system_prompt)
        if info is not None and info.kind is self.slow:
            await asyncio.sleep(0.01)
        return await self.inner.complete(request, attempt=attempt)


def test_dual_recall_ignores_completion_order():
    taxonomy = five_label_taxonomy()
    backend = mock_backend(taxonomy, person={'cook': [['James Cook', 'B'], ['Tim Cook', 'D']]},
                           media={'cook': [['Natalie Cook', 'D'], ['Alastair Cook', 'B']]})
    expected = run(run_dual_recall('Natalie Cook', backend, taxonomy))
    for slow in (PromptKind.PERSON_RECALL, PromptKind.MEDIA_RECALL):
        dual = run(run_dual_recall('Natalie Cook', DelayedBackend(backend, slow), taxonomy))
        assert_that(dual, equal_to(expected))
    assert_that([e.person for e in expected.person.entries], contains_exactly('James Cook', 'Tim Cook'))


def test_dual_recall_is_deterministic():
    taxonomy = five_label_taxonomy()
    backend = mock_backend(taxonomy, person={'cook': [['James Cook', 'B']]},
                           media={'cook': [['Natalie Cook', 'D'], ['Alastair Cook', 'B']]})
    first = run(run_dual_recall('Natalie Cook', backend, taxonomy))
    for _ in range(100):
        assert_that(run(run_dual_recall('Natalie Cook', backend, taxonomy)), equal_to(first))


def test_dual_recall_single_agent():
    taxonomy = five_label_taxonomy()
    backend = mock_backend(taxonomy, person={'cook': [['James Cook', 'B']]})
    dual = run(run_dual_recall('Cook', backend, taxonomy, agents=(AgentKind.MEDIA,)))
    assert_that(dual.calls, equal_to(1))
    assert_that(dual.person.entries, empty())


def test_mock_coarsens_at_region_granularity():
    taxonomy = five_label_taxonomy()
    backend = mock_backend(taxonomy, person={'cook': [['James Cook', 'B'], ['Tim Cook', 'D']]})
    dual = run(run_dual_recall('Cook', backend, taxonomy, granularity=Granularity.REGION))
    assert_that([e.nationality for e in dual.person.entries], contains_exactly('R1', 'R3'))


def test_mock_direct_answers():
    taxonomy = five_label_taxonomy()
    backend = mock_backend(taxonomy, direct={'Xqz': ['E', 'D']})
    request = ChatRequest(direct_prompt(taxonomy.labels(), 5), direct_user_prompt('Xqz'))
    assert_that(json.loads(backend.answer(request)), contains_exactly('E', 'D'))
    default = ChatRequest(direct_prompt(taxonomy.labels(), 5), direct_user_prompt('Other'))
    assert_that(json.loads(backend.answer(default)), contains_exactly('A', 'B', 'C', 'D', 'E'))


def test_mock_malformed_names():
    taxonomy = five_label_taxonomy()
    backend = mock_backend(taxonomy, malformed=['Broken Name'])
    request = build_recall_prompt(AgentKind.PERSON, 'Broken Name', taxonomy)
    assert_that(backend.answer(request), equal_to(MALFORMED_REPLY))


def test_mock_kb_validation(tmp_path):
    taxonomy = five_label_taxonomy()
    bad = {'person_domain': {'x': [['Someone', 'Z']]}}
    assert_that(calling(make_knowledge_base).with_args(bad, taxonomy), raises(DataError, 'not a taxonomy label'))
    path = write_file(tmp_path, 'kb.json', '[1, 2]')
    assert_that(calling(load_mock_kb).with_args(path, taxonomy), raises(DataError))


def test_shipped_mock_kb_is_valid():
    path = os.path.join(os.path.dirname(namerecall.__file__), 'data', 'mock_kb.json')
    kb = load_mock_kb(path, load_default_taxonomy())
    assert_that(kb.recall(PromptKind.MEDIA_RECALL, 'Masahiro Tanaka'), contains_exactly(('Masahiro Tanaka', 'Japanese')))
