""" Deterministic offline backend answering the production prompts from a
    small knowledge base.

    The backend recognises which prompt it received from the system text and
    answers from the matching knowledge-base section, so tests exercise the
    real prompts rather than a parallel path. Knowledge-base file layout:

        {
          "person_domain": {"cook": [["Natalie Cook", "Australian"]]},
          "media_domain":  {"tanaka": [["Masahiro Tanaka", "Japanese"]]},
          "direct_answers": {"Xqz Qwt": ["Chinese", "Taiwanese"]},
          "completions": {"Natalie Cook": ["British", "American"]},
          "malformed": ["Some Name"]
        }

    Domain keys are lower-case name tokens or whole lower-case names. The last
    two sections are optional.
"""
import json
import logging
from typing import Any, NamedTuple

from .backend import ChatBackend, ChatRequest, ChatResponse
from .errors import DataError
from .prompts import PromptKind, identify_prompt, name_from_user_prompt, rank1_from_user_prompt
from .taxonomy import Granularity, Taxonomy
from .utils import read_json


MALFORMED_REPLY = 'I am not able to recall anyone with that name.'


class MockKnowledgeBase(NamedTuple):
    person_domain: dict[str, list[tuple[str, str]]]
    media_domain: dict[str, list[tuple[str, str]]]
    direct_answers: dict[str, list[str]]
    completions: dict[str, list[str]] = {}
    malformed: frozenset[str] = frozenset()

    def recall(self, kind: PromptKind, name: str) -> list[tuple[str, str]]:
        """ Entries for the whole name if it is a key, else the entries
            for each name token in order.
        """
        domain = self.person_domain if kind is PromptKind.PERSON_RECALL else self.media_domain
        key = name.strip().lower()
        if key in domain:
            return list(domain[key])
        rtn: list[tuple[str, str]] = []
        for token in key.split():
            rtn.extend(domain.get(token, []))
        return rtn


def _domain(section: Any, what: str, taxonomy: Taxonomy|None) -> dict[str, list[tuple[str, str]]]:
    if not isinstance(section, dict):
        raise DataError(f'Mock knowledge base section {what} must be an object')
    rtn: dict[str, list[tuple[str, str]]] = {}
    for key, people in section.items():
        entries = []
        for person in people:
            if len(person) != 2:
                raise DataError(f'{what}[{key!r}]: expected [name, nationality] pairs')
            full_name, nationality = person
            if taxonomy is not None:
                canonical = taxonomy.normalize(nationality)
                if canonical is None:
                    raise DataError(f'{what}[{key!r}]: {nationality!r} is not a taxonomy label')
                nationality = canonical
            entries.append((full_name, nationality))
        rtn[key.strip().lower()] = entries
    return rtn


def make_knowledge_base(data: dict[str, Any], taxonomy: Taxonomy|None = None) -> MockKnowledgeBase:
    direct = {k.strip().lower(): list(v) for k, v in data.get('direct_answers', {}).items()}
    if taxonomy is not None:
        for key, answers in direct.items():
            bad = [a for a in answers if taxonomy.normalize(a) is None]
            if bad:
                raise DataError(f'direct_answers[{key!r}]: not taxonomy labels: {", ".join(map(str, bad))}')
    return MockKnowledgeBase(
        person_domain=_domain(data.get('person_domain', {}), 'person_domain', taxonomy),
        media_domain=_domain(data.get('media_domain', {}), 'media_domain', taxonomy),
        direct_answers=direct,
        # Completions replay raw model output and may hold invalid labels on purpose.
        completions={k.strip().lower(): list(v) for k, v in data.get('completions', {}).items()},
        malformed=frozenset(n.strip().lower() for n in data.get('malformed', [])),
    )


def load_mock_kb(path: str, taxonomy: Taxonomy|None = None) -> MockKnowledgeBase:
    data = read_json(path)
    if not isinstance(data, dict):
        raise DataError(f'{path}: mock knowledge base must be a JSON object')
    kb = make_knowledge_base(data, taxonomy)
    logging.info(f'Loaded mock knowledge base {path}: {len(kb.person_domain)} person keys, '
                 f'{len(kb.media_domain)} media keys, {len(kb.direct_answers)} direct answers')
    return kb


class MockChatBackend(ChatBackend):
    """ A pure function of (request, knowledge base). At region or continent
        granularity the nationality answers are coarsened through the taxonomy.
    """

    def __init__(self, kb: MockKnowledgeBase, taxonomy: Taxonomy|None = None, model_id: str = 'mock'):
        self.kb = kb
        self.taxonomy = taxonomy
        self.model_id = model_id
        self.call_history: list[tuple[PromptKind|None, str|None]] = []

    def reset(self) -> None:
        self.call_history = []

    def _coarsen(self, label: str, granularity: Granularity) -> str:
        if granularity is Granularity.NATIONALITY or self.taxonomy is None:
            return label
        canonical = self.taxonomy.normalize(label)
        return self.taxonomy.coarsen(canonical, granularity) if canonical else label

    def answer(self, request: ChatRequest) -> str:
        info = identify_prompt(request.system_prompt)
        name = name_from_user_prompt(request.user_prompt)
        self.call_history.append((info.kind if info else None, name))
        if info is None or name is None:
            return MALFORMED_REPLY
        key = name.lower()
        if key in self.kb.malformed:
            return MALFORMED_REPLY
        g = info.granularity

        if info.kind in (PromptKind.PERSON_RECALL, PromptKind.MEDIA_RECALL):
            people = self.kb.recall(info.kind, name)
            return json.dumps([{'name': p, g.noun: self._coarsen(y, g)} for p, y in people],
                              ensure_ascii=False)

        if info.kind is PromptKind.DIRECT:
            answers = self.kb.direct_answers.get(key, info.labels)
            return json.dumps(list(dict.fromkeys(self._coarsen(a, g) for a in answers)), ensure_ascii=False)

        top1 = rank1_from_user_prompt(request.user_prompt)
        if key in self.kb.completions:
            answers = [self._coarsen(a, g) for a in self.kb.completions[key]]
        else:
            answers = [l for l in info.labels if l != top1]
        return json.dumps(answers, ensure_ascii=False)

    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        return ChatResponse(self.answer(request), 0.0, False)
