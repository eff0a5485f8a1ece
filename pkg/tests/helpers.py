import asyncio
import os
from typing import Any, Iterable

from namerecall.backend import ChatBackend, ChatRequest, ChatResponse
from namerecall.errors import BackendError
from namerecall.mock_backend import MockChatBackend, make_knowledge_base
from namerecall.taxonomy import Taxonomy, build_taxonomy


GOLDEN = os.path.join(os.path.dirname(__file__), 'golden')

# Five nationalities in three regions on two continents.
FIVE_LABELS = [
    ('A', 'R1', 'C1'),
    ('B', 'R1', 'C1'),
    ('C', 'R2', 'C1'),
    ('D', 'R3', 'C2'),
    ('E', 'R3', 'C2'),
]


def five_label_taxonomy() -> Taxonomy:
    return build_taxonomy(FIVE_LABELS, source='five')


def mock_backend(taxonomy: Taxonomy, person: dict|None = None, media: dict|None = None,
                 direct: dict|None = None, completions: dict|None = None,
                 malformed: Iterable[str] = ()) -> MockChatBackend:
    data: dict[str, Any] = {
        'person_domain': person or {},
        'media_domain': media or {},
        'direct_answers': direct or {},
        'completions': completions or {},
        'malformed': list(malformed),
    }
    return MockChatBackend(make_knowledge_base(data, taxonomy), taxonomy)


def run(coro):
    return asyncio.run(coro)


class ScriptedBackend(ChatBackend):
    """ Replies with the given texts in order and records every request. """

    def __init__(self, *replies: str):
        self.model_id = 'scripted'
        self.replies = list(replies)
        self.requests: list[tuple[ChatRequest, int]] = []

    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        self.requests.append((request, attempt))
        return ChatResponse(self.replies.pop(0) if self.replies else '[]')


class FailingBackend(ChatBackend):

    def __init__(self):
        self.model_id = 'failing'
        self.calls = 0

    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        self.calls += 1
        raise BackendError('backend unavailable')


def write_file(folder, name: str, text: str) -> str:
    path = os.path.join(str(folder), name)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    return path
