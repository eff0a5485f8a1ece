""" Chat-completion backends.

    Every backend exposes `model_id` and an async `complete(request, attempt=0)`.
    `HttpChatBackend` speaks the OpenAI-compatible chat-completions wire format,
    `CachingBackend` replays earlier responses from a JSONL file, and
    `ThrottledBackend` caps the number of requests in flight. They are meant to
    be stacked: throttle(cache(http)).
"""
import abc
import asyncio
from dataclasses import dataclass
from datetime import datetime, timezone
import json
import logging
import os
import time
from typing import Any, NamedTuple

import httpx

from .errors import BackendError, ConfigError, HttpStatusError, MissingApiKeyError, TransportError
from .utils import read_jsonl, stable_hash, to_json_line


DEFAULT_BASE_URL = 'https://api.openai.com/v1'
DEFAULT_MODEL = 'gpt-4.1-mini'

# Statuses worth another attempt; anything else is the caller's fault.
_RETRY_STATUSES = {408, 409, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    model_id: str = ''
    temperature: float = 1.0

    def __post_init__(self):
        if not self.system_prompt or not self.user_prompt:
            raise ValueError('Chat prompts must be non-empty')

    def messages(self) -> list[dict[str, str]]:
        return [
            {'role': 'system', 'content': self.system_prompt},
            {'role': 'user', 'content': self.user_prompt},
        ]


class ChatResponse(NamedTuple):
    text: str
    latency: float = 0.0
    from_cache: bool = False


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = DEFAULT_BASE_URL
    api_key_env: str = 'OPENAI_API_KEY'
    model_id: str = DEFAULT_MODEL
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    cache_path: str|None = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError(f'max_retries must be >= 0, got {self.max_retries}')
        if self.timeout <= 0:
            raise ConfigError(f'timeout must be > 0, got {self.timeout}')
        if self.backoff < 0:
            raise ConfigError(f'backoff must be >= 0, got {self.backoff}')


class ChatBackend(abc.ABC):

    model_id: str = ''

    @abc.abstractmethod
    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        """ Send one chat request. `attempt` numbers re-asks of the same
            request; layers that remember responses keep one per attempt.
        """
        ...

    async def aclose(self) -> None:
        return

    def resolve_model(self, request: ChatRequest) -> str:
        return request.model_id or self.model_id


class HttpChatBackend(ChatBackend):

    def __init__(self, config: BackendConfig, transport: httpx.AsyncBaseTransport|None = None):
        api_key = os.environ.get(config.api_key_env, '').strip()
        if not api_key:
            raise MissingApiKeyError(f'Missing required environment variable {config.api_key_env}')
        self.config = config
        self.model_id = config.model_id
        self._headers = {
            'Authorization': f'Bearer {api_key}',
            'Content-Type': 'application/json',
        }
        self._client = httpx.AsyncClient(timeout=config.timeout, transport=transport)

    async def aclose(self) -> None:
        await self._client.aclose()

    def _payload(self, request: ChatRequest) -> dict[str, Any]:
        return {
            'model': self.resolve_model(request),
            'messages': request.messages(),
            'temperature': request.temperature,
        }

    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        url = f'{self.config.base_url.rstrip("/")}/chat/completions'
        attempts = self.config.max_retries + 1
        start = time.perf_counter()
        last_err: Exception|None = None
        for n in range(attempts):
            if n:
                await asyncio.sleep(self.config.backoff * 2 ** (n - 1))
            try:
                response = await self._client.post(url, headers=self._headers, json=self._payload(request))
            except httpx.TransportError as e:
                # Timeouts are transport errors in httpx.
                last_err = e
                logging.warning(f'Chat request attempt {n + 1}/{attempts} failed: {e!r}')
                continue
            if response.status_code in _RETRY_STATUSES:
                last_err = HttpStatusError(response.status_code, response.text)
                logging.warning(f'Chat request attempt {n + 1}/{attempts} got HTTP {response.status_code}')
                continue
            if response.status_code >= 400:
                raise HttpStatusError(response.status_code, response.text)
            return ChatResponse(_content_of(response), time.perf_counter() - start, False)

        if isinstance(last_err, HttpStatusError):
            raise last_err
        raise TransportError(f'Chat request to {url} failed after {attempts} attempts: {last_err!r}')


def _content_of(response: httpx.Response) -> str:
    try:
        content = response.json()['choices'][0]['message']['content']
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise BackendError(f'Malformed chat-completions response: {e!r}')
    return content or ''


def cache_key(model_id: str, system_prompt: str, user_prompt: str, attempt: int = 0) -> str:
    return stable_hash(model_id, system_prompt, user_prompt, str(attempt))


class CachingBackend(ChatBackend):
    """ Append-only JSONL response cache. Each attempt at a request has its
        own key, so re-asks replay in the order they were first made.
    """

    def __init__(self, inner: ChatBackend, path: str):
        self.inner = inner
        self.model_id = inner.model_id
        self.path = path
        self._entries: dict[str, str] = {}
        self._lock = asyncio.Lock()
        if os.path.exists(path):
            for record in read_jsonl(path):
                self._entries[record['key']] = record['response']
            logging.info(f'Loaded {len(self._entries)} cached responses from {path}')
        else:
            folder = os.path.dirname(path)
            if folder:
                os.makedirs(folder, exist_ok=True)

    def __len__(self) -> int:
        return len(self._entries)

    async def aclose(self) -> None:
        await self.inner.aclose()

    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        model = self.resolve_model(request)
        key = cache_key(model, request.system_prompt, request.user_prompt, attempt)
        if key in self._entries:
            logging.debug(f'Cache hit {key[:12]}')
            return ChatResponse(self._entries[key], 0.0, True)
        logging.debug(f'Cache miss {key[:12]}')
        response = await self.inner.complete(request, attempt=attempt)
        record = {
            'key': key,
            'model_id': model,
            'system_prompt': request.system_prompt,
            'user_prompt': request.user_prompt,
            'attempt': attempt,
            'response': response.text,
            'timestamp': datetime.now(timezone.utc).isoformat(),
        }
        async with self._lock:
            self._entries[key] = response.text
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(to_json_line(record))
        return response


class ThrottledBackend(ChatBackend):
    """ Global cap on requests in flight, shared by every caller. """

    def __init__(self, inner: ChatBackend, limit: int):
        if limit < 1:
            raise ConfigError(f'concurrency limit must be >= 1, got {limit}')
        self.inner = inner
        self.model_id = inner.model_id
        self.limit = limit
        self._semaphore = asyncio.Semaphore(limit)

    async def aclose(self) -> None:
        await self.inner.aclose()

    async def complete(self, request: ChatRequest, *, attempt: int = 0) -> ChatResponse:
        async with self._semaphore:
            return await self.inner.complete(request, attempt=attempt)


async def send_chat(request: ChatRequest, config: BackendConfig,
                    transport: httpx.AsyncBaseTransport|None = None) -> ChatResponse:
    """ One-shot request through a live backend, cached when the config names a cache. """
    backend: ChatBackend = HttpChatBackend(config, transport)
    if config.cache_path:
        backend = CachingBackend(backend, config.cache_path)
    try:
        return await backend.complete(request)
    finally:
        await backend.aclose()


_decoder = json.JSONDecoder()


def extract_json_array(text: str|None) -> list|None:
    """ Find the first well-formed JSON array in model output, which often
        comes wrapped in prose or markdown code fences.
    """
    if not text:
        return None
    start = text.find('[')
    while start >= 0:
        try:
            value, _ = _decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            value = None
        if isinstance(value, list):
            return value
        start = text.find('[', start + 1)
    return None
