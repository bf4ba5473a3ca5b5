from __future__ import annotations

import json

import httpx
import pytest

from scmem.backends import HttpBackend, ScriptedBackend
from scmem.errors import (
    BackendError,
    BackendRateLimitError,
    BackendTransportError,
    InputError,
)


# -- scripted ----------------------------------------------------------------


def test_first_match_wins():
    backend = ScriptedBackend(
        rules=[("alpha", "first"), ("alpha beta", "second")], default="fallback"
    )
    assert backend.complete("alpha beta gamma") == "first"


def test_default_when_nothing_matches():
    backend = ScriptedBackend(rules=[("alpha", "a")], default="fallback")
    assert backend.complete("something else") == "fallback"


def test_calls_are_recorded():
    backend = ScriptedBackend(default="d")
    backend.complete("p1")
    backend.complete("p2")
    assert backend.calls == [("p1", "d"), ("p2", "d")]
    backend.reset_calls()
    assert backend.calls == []


def test_from_file(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(
        json.dumps({"default": "dflt", "rules": [{"pattern": "x", "response": "y"}]}),
        encoding="utf-8",
    )
    backend = ScriptedBackend.from_file(path)
    assert backend.complete("has x inside") == "y"
    assert backend.complete("nothing") == "dflt"


def test_from_file_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(InputError):
        ScriptedBackend.from_file(path)


# -- http (transport mocked) ----------------------------------------------------


def fake_post(status_code: int, body: dict):
    def post(url, json=None, headers=None, timeout=None):
        request = httpx.Request("POST", url)
        return httpx.Response(status_code, json=body, request=request)

    return post


def test_http_backend_parses_chat_completions(monkeypatch):
    monkeypatch.setattr(
        httpx, "post", fake_post(200, {"choices": [{"message": {"content": "hello"}}]})
    )
    backend = HttpBackend("http://example.test", "model-x", api_key="k")
    assert backend.complete("prompt") == "hello"


def test_http_backend_parses_legacy_text_choice(monkeypatch):
    monkeypatch.setattr(httpx, "post", fake_post(200, {"choices": [{"text": "legacy"}]}))
    backend = HttpBackend("http://example.test", "model-x", api_key="k")
    assert backend.complete("prompt") == "legacy"


def test_http_backend_maps_429_to_rate_limit(monkeypatch):
    monkeypatch.setattr(httpx, "post", fake_post(429, {}))
    backend = HttpBackend("http://example.test", "model-x", api_key="k")
    with pytest.raises(BackendRateLimitError):
        backend.complete("prompt")


def test_http_backend_maps_5xx_to_transport(monkeypatch):
    monkeypatch.setattr(httpx, "post", fake_post(503, {}))
    backend = HttpBackend("http://example.test", "model-x", api_key="k")
    with pytest.raises(BackendTransportError):
        backend.complete("prompt")


def test_http_backend_rejects_empty_choices(monkeypatch):
    monkeypatch.setattr(httpx, "post", fake_post(200, {"choices": []}))
    backend = HttpBackend("http://example.test", "model-x", api_key="k")
    with pytest.raises(BackendError):
        backend.complete("prompt")


def test_http_backend_reads_key_from_environment(monkeypatch):
    monkeypatch.setenv("SCM_LLM_API_KEY", "env-key")
    backend = HttpBackend("http://example.test", "model-x")
    assert backend.api_key == "env-key"
