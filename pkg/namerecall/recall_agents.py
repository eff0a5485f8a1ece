""" The Person and Media recall agents.

    Each agent is one chat call asking the model for up to M real people who
    share the input name, returned as a JSON array of {name, nationality}.
"""
import asyncio
from enum import Enum
import logging
from typing import Any, NamedTuple

from .backend import ChatBackend, ChatRequest, ChatResponse, extract_json_array
from .errors import BackendError
from .prompts import media_recall_prompt, person_recall_prompt, recall_user_prompt
from .taxonomy import Granularity, Taxonomy


DEFAULT_M = 4


class AgentKind(Enum):
    PERSON = 'person'
    MEDIA = 'media'


class RecallEntry(NamedTuple):
    person: str
    nationality: str
    source: AgentKind
    emit_index: int

    def to_json(self) -> dict[str, Any]:
        return {
            'person': self.person,
            'nationality': self.nationality,
            'source': self.source.value,
            'emit_index': self.emit_index,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> 'RecallEntry':
        return cls(data['person'], data['nationality'], AgentKind(data['source']), int(data['emit_index']))


class AgentRecall(NamedTuple):
    agent: AgentKind
    entries: tuple[RecallEntry, ...] = ()


class DualRecall(NamedTuple):
    person: AgentRecall
    media: AgentRecall
    calls: int
    reprompts: int


def build_recall_prompt(agent: AgentKind, name: str, taxonomy: Taxonomy,
                        granularity: Granularity = Granularity.NATIONALITY,
                        m: int = DEFAULT_M) -> ChatRequest:
    if not name or not name.strip():
        raise ValueError('Input name must be non-empty')
    labels = taxonomy.labels(granularity)
    builder = person_recall_prompt if agent is AgentKind.PERSON else media_recall_prompt
    return ChatRequest(builder(labels, m, granularity), recall_user_prompt(name.strip()))


def parse_recall_response(response: ChatResponse, agent: AgentKind, taxonomy: Taxonomy, m: int,
                          granularity: Granularity = Granularity.NATIONALITY) -> AgentRecall:
    """ Keep the first `m` entries that have a non-empty name and a label in
        the taxonomy, in the order the model emitted them.
    """
    if m < 1:
        raise ValueError(f'M must be >= 1, got {m}')
    items = extract_json_array(response.text)
    if not items:
        return AgentRecall(agent)
    entries: list[RecallEntry] = []
    for item in items:
        if not isinstance(item, dict):
            continue
        person = item.get('name')
        if not isinstance(person, str) or not person.strip():
            continue
        label = taxonomy.normalize(item.get(granularity.noun), granularity)
        if label is None:
            continue
        entries.append(RecallEntry(person.strip(), label, agent, len(entries)))
        if len(entries) == m:
            break
    return AgentRecall(agent, tuple(entries))


async def recall(agent: AgentKind, name: str, backend: ChatBackend, taxonomy: Taxonomy,
                 m: int = DEFAULT_M, granularity: Granularity = Granularity.NATIONALITY,
                 reprompt: bool = True) -> tuple[AgentRecall, int]:
    """ Run one agent. Returns the recall and the number of re-prompts used.
        Backend failures degrade to an empty recall.
    """
    request = build_recall_prompt(agent, name, taxonomy, granularity, m)
    reprompts = 0
    try:
        response = await backend.complete(request)
        if reprompt and extract_json_array(response.text) is None:
            logging.info(f'{agent.value} agent output for {name!r} has no JSON array; re-prompting')
            reprompts = 1
            response = await backend.complete(request, attempt=1)
    except BackendError as e:
        logging.warning(f'{agent.value} agent failed for {name!r}; treating as empty recall: {e}')
        return AgentRecall(agent), reprompts
    return parse_recall_response(response, agent, taxonomy, m, granularity), reprompts


async def run_dual_recall(name: str, backend: ChatBackend, taxonomy: Taxonomy, m: int = DEFAULT_M,
                          granularity: Granularity = Granularity.NATIONALITY,
                          agents: tuple[AgentKind, ...] = (AgentKind.PERSON, AgentKind.MEDIA),
                          reprompt: bool = True) -> DualRecall:
    """ Issue both agents' requests concurrently. Agents not listed in
        `agents` are skipped and contribute an empty recall and no call.
    """
    if not name or not name.strip():
        raise ValueError('Input name must be non-empty')
    active = [a for a in AgentKind if a in agents]
    results = await asyncio.gather(*[
        recall(a, name, backend, taxonomy, m, granularity, reprompt) for a in active
    ])
    by_agent = {a: r for a, r in zip(active, results)}
    person, p_re = by_agent.get(AgentKind.PERSON, (AgentRecall(AgentKind.PERSON), 0))
    media, m_re = by_agent.get(AgentKind.MEDIA, (AgentRecall(AgentKind.MEDIA), 0))
    return DualRecall(person, media, len(active), p_re + m_re)
