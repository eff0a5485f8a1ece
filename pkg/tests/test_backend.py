import asyncio
import json

import httpx
import pytest
from hamcrest import (assert_that, calling, contains_exactly, equal_to, has_entries, has_length, is_, none,
                      raises)

from namerecall.backend import (BackendConfig, CachingBackend, ChatRequest, HttpChatBackend, ThrottledBackend,
                                cache_key, extract_json_array, send_chat)
from namerecall.errors import ConfigError, HttpStatusError, MissingApiKeyError, TransportError
from .helpers import ScriptedBackend, run


REQUEST = ChatRequest('You are a test.', 'Name: Ana Silva')


def ok(text: str) -> httpx.Response:
    return httpx.Response(200, json={'choices': [{'message': {'role': 'assistant', 'content': text}}]})


def make_backend(monkeypatch, handler, **settings) -> HttpChatBackend:
    monkeypatch.setenv('NAMERECALL_TEST_KEY', 'sk-test')
    config = BackendConfig(api_key_env='NAMERECALL_TEST_KEY', base_url='https://llm.test/v1', backoff=0.0,
                           **settings)
    return HttpChatBackend(config, httpx.MockTransport(handler))


def test_request_payload(monkeypatch):
    seen = []

    def handler(request: httpx.Request) -> httpx.Response:
        seen.append(request)
        return ok('["French"]')

    backend = make_backend(monkeypatch, handler, model_id='test-model')
    response = run(backend.complete(REQUEST))
    assert_that(response.text, equal_to('["French"]'))
    assert_that(response.from_cache, equal_to(False))
    assert_that(str(seen[0].url), equal_to('https://llm.test/v1/chat/completions'))
    assert_that(seen[0].headers['authorization'], equal_to('Bearer sk-test'))
    body = json.loads(seen[0].content)
    assert_that(body, has_entries({'model': 'test-model', 'temperature': 1.0}))
    assert_that([m['role'] for m in body['messages']], contains_exactly('system', 'user'))


def test_retries_rate_limits(monkeypatch):
    statuses = [429, 503]

    def handler(request: httpx.Request) -> httpx.Response:
        if statuses:
            return httpx.Response(statuses.pop(0), text='slow down')
        return ok('[]')

    backend = make_backend(monkeypatch, handler)
    assert_that(run(backend.complete(REQUEST)).text, equal_to('[]'))
    assert_that(statuses, has_length(0))


def test_retry_statuses_and_backoff(monkeypatch):
    statuses = [408, 409, 503]
    waits = []

    def handler(request: httpx.Request) -> httpx.Response:
        if statuses:
            return httpx.Response(statuses.pop(0), text='busy')
        return ok('[]')

    async def no_sleep(seconds):
        waits.append(seconds)

    monkeypatch.setattr(asyncio, 'sleep', no_sleep)
    monkeypatch.setenv('NAMERECALL_TEST_KEY', 'sk-test')
    config = BackendConfig(api_key_env='NAMERECALL_TEST_KEY', base_url='https://llm.test/v1', backoff=0.5)
    backend = HttpChatBackend(config, httpx.MockTransport(handler))
    assert_that(run(backend.complete(REQUEST)).text, equal_to('[]'))
    assert_that([w for w in waits if w], contains_exactly(0.5, 1.0, 2.0))


def test_gives_up_after_max_retries(monkeypatch):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(1)
        return httpx.Response(500, text='boom')

    backend = make_backend(monkeypatch, handler, max_retries=2)
    with pytest.raises(HttpStatusError) as e:
        run(backend.complete(REQUEST))
    assert_that(e.value.status, equal_to(500))
    assert_that(calls, has_length(3))


def test_client_errors_are_not_retried(monkeypatch):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(1)
        return httpx.Response(401, text='bad key')

    backend = make_backend(monkeypatch, handler)
    assert_that(calling(run).with_args(backend.complete(REQUEST)), raises(HttpStatusError, 'HTTP 401'))
    assert_that(calls, has_length(1))


def test_transport_errors(monkeypatch):
    def handler(request: httpx.Request) -> httpx.Response:
        raise httpx.ConnectError('unreachable', request=request)

    backend = make_backend(monkeypatch, handler, max_retries=1)
    assert_that(calling(run).with_args(backend.complete(REQUEST)), raises(TransportError, 'after 2 attempts'))


def test_missing_api_key(monkeypatch):
    monkeypatch.delenv('NAMERECALL_ABSENT_KEY', raising=False)
    config = BackendConfig(api_key_env='NAMERECALL_ABSENT_KEY')
    assert_that(calling(HttpChatBackend).with_args(config), raises(MissingApiKeyError, 'NAMERECALL_ABSENT_KEY'))


def test_invalid_backend_config():
    assert_that(calling(BackendConfig).with_args(max_retries=-1), raises(ConfigError))
    assert_that(calling(BackendConfig).with_args(timeout=0), raises(ConfigError))


def test_send_chat_uses_cache(monkeypatch, tmp_path):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(1)
        return ok('["German"]')

    monkeypatch.setenv('NAMERECALL_TEST_KEY', 'sk-test')
    config = BackendConfig(api_key_env='NAMERECALL_TEST_KEY', cache_path=str(tmp_path / 'cache.jsonl'))
    first = run(send_chat(REQUEST, config, httpx.MockTransport(handler)))
    second = run(send_chat(REQUEST, config, httpx.MockTransport(handler)))
    assert_that(first.text, equal_to('["German"]'))
    assert_that(second.from_cache, equal_to(True))
    assert_that(calls, has_length(1))


def test_cache_keeps_one_response_per_attempt(tmp_path):
    path = str(tmp_path / 'cache' / 'responses.jsonl')
    inner = ScriptedBackend('first', 'second')
    cache = CachingBackend(inner, path)
    assert_that(run(cache.complete(REQUEST)).text, equal_to('first'))
    hit = run(cache.complete(REQUEST))
    assert_that(hit.text, equal_to('first'))
    assert_that(hit.from_cache, equal_to(True))
    assert_that(inner.requests, has_length(1))

    assert_that(run(cache.complete(REQUEST, attempt=1)).text, equal_to('second'))
    assert_that(inner.requests, has_length(2))

    # A reloaded cache replays both attempts.
    reloaded = CachingBackend(ScriptedBackend(), path)
    assert_that(len(reloaded), equal_to(2))
    assert_that(run(reloaded.complete(REQUEST)).text, equal_to('first'))
    assert_that(run(reloaded.complete(REQUEST, attempt=1)).text, equal_to('second'))
    assert_that(reloaded.inner.requests, has_length(0))


def test_cache_key_depends_on_every_part():
    base = cache_key('m', 'system', 'user')
    assert_that(cache_key('m', 'system', 'user'), equal_to(base))
    assert_that(cache_key('m', 'system', 'user', 0), equal_to(base))
    assert_that(cache_key('m', 'system', 'user', 1) != base)
    assert_that(cache_key('m2', 'system', 'user') != base)
    assert_that(cache_key('m', 'systemuser', '') != cache_key('m', 'system', 'user'))


def test_throttle_limit():
    assert_that(calling(ThrottledBackend).with_args(ScriptedBackend(), 0), raises(ConfigError))
    throttled = ThrottledBackend(ScriptedBackend('x'), 2)
    assert_that(run(throttled.complete(REQUEST)).text, equal_to('x'))


def test_empty_prompts_rejected():
    assert_that(calling(ChatRequest).with_args('', 'user'), raises(ValueError))


def test_extract_json_array():
    assert_that(extract_json_array('["French", "German"]'), equal_to(['French', 'German']))
    assert_that(extract_json_array('Sure!\n```json\n[{"name": "A [B]", "nationality": "French"}]\n```'),
                equal_to([{'name': 'A [B]', 'nationality': 'French'}]))
    assert_that(extract_json_array('[not json] but then ["Japanese"]'), equal_to(['Japanese']))
    assert_that(extract_json_array('I do not know anyone by that name.'), is_(none()))
    assert_that(extract_json_array('{"nationality": "French"}'), is_(none()))
    assert_that(extract_json_array(''), is_(none()))
    assert_that(extract_json_array(None), is_(none()))
