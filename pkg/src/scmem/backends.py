"""Generation backends and the retry/timeout wrapper around them.

The scripted backend is the offline default everywhere: an ordered list of
substring rules mapping prompts to canned replies, first match wins. Any
instruction-following model can be plugged in through the same interface.
"""

from __future__ import annotations

import json
import os
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    BackendError,
    BackendRateLimitError,
    BackendTimeoutError,
    BackendTransportError,
    InputError,
)

LLM_API_KEY_VAR = "SCM_LLM_API_KEY"


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    initial_backoff: float = 1.0
    backoff_multiplier: float = 2.0


@dataclass
class CompletionResult:
    text: str
    retries: int


@dataclass
class BackendCall:
    """One backend interaction as recorded in a turn trace."""

    purpose: str
    raw_output: str
    retries: int


class GenerationBackend(ABC):
    name: str = "backend"
    max_context_tokens: int = 8192

    @abstractmethod
    def complete(self, prompt: str) -> str: ...


class ScriptedBackend(GenerationBackend):
    """Fixture-driven backend: substring rules, first match wins."""

    def __init__(self, rules=(), default: str = "", name: str = "scripted"):
        self.name = name
        self.rules: list[tuple[str, str]] = []
        for rule in rules:
            if isinstance(rule, dict):
                self.rules.append((rule["pattern"], rule["response"]))
            else:
                pattern, response = rule
                self.rules.append((pattern, response))
        self.default = default
        self.calls: list[tuple[str, str]] = []

    def complete(self, prompt: str) -> str:
        reply = self.default
        for pattern, response in self.rules:
            if pattern in prompt:
                reply = response
                break
        self.calls.append((prompt, reply))
        return reply

    def reset_calls(self) -> None:
        self.calls = []

    @classmethod
    def from_file(cls, path: str | Path, name: str | None = None) -> "ScriptedBackend":
        source = Path(path)
        try:
            spec = json.loads(source.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise InputError(f"cannot read fixture {source}: {err}") from err
        return cls(
            rules=spec.get("rules", ()),
            default=spec.get("default", ""),
            name=name or f"scripted:{source.stem}",
        )


class HttpBackend(GenerationBackend):
    """Chat-completions style HTTP backend.

    POSTs {"model", "messages"} to ``{base_url}/chat/completions`` and reads
    the first choice. The API key comes from SCM_LLM_API_KEY unless given.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        request_timeout: float = 60.0,
        max_context_tokens: int = 8192,
    ):
        self.base_url = base_url.rstrip("/")
        self.name = model
        self.api_key = api_key if api_key is not None else os.environ.get(LLM_API_KEY_VAR)
        self.request_timeout = request_timeout
        self.max_context_tokens = max_context_tokens

    def complete(self, prompt: str) -> str:
        import httpx

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            reply = httpx.post(
                f"{self.base_url}/chat/completions",
                json={
                    "model": self.name,
                    "messages": [{"role": "user", "content": prompt}],
                },
                headers=headers,
                timeout=self.request_timeout,
            )
        except httpx.TimeoutException as err:
            raise BackendTimeoutError(f"backend timed out: {err}") from err
        except httpx.HTTPError as err:
            raise BackendTransportError(f"backend request failed: {err}") from err
        if reply.status_code == 429:
            raise BackendRateLimitError("backend rate limit")
        if reply.status_code >= 500:
            raise BackendTransportError(f"backend returned {reply.status_code}")
        if reply.status_code >= 400:
            raise BackendError(f"backend rejected the request ({reply.status_code}): {reply.text[:300]}")
        body = reply.json()
        try:
            choice = body["choices"][0]
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"no choices in backend response: {str(body)[:300]}") from None
        if isinstance(choice, dict):
            message = choice.get("message")
            if isinstance(message, dict) and isinstance(message.get("content"), str):
                return message["content"]
            if isinstance(choice.get("text"), str):
                return choice["text"]
        raise BackendError(f"unreadable choice in backend response: {str(choice)[:300]}")


def complete_with_timeout(
    backend: GenerationBackend,
    prompt: str,
    timeout: float | None = None,
    retry: RetryPolicy | None = None,
) -> CompletionResult:
    """Run one completion with a hard timeout, retrying retryable failures.

    ``timeout`` bounds each attempt, not the whole call. With ``None`` the
    backend is invoked inline (offline backends cannot hang).
    """
    if timeout is not None and timeout <= 0:
        raise InputError(f"timeout must be positive, got {timeout}")
    policy = retry if retry is not None else RetryPolicy()
    delay = policy.initial_backoff
    for attempt in range(policy.max_attempts):
        try:
            if timeout is None:
                text = backend.complete(prompt)
            else:
                text = _complete_bounded(backend, prompt, timeout)
        except BackendError as err:
            if not err.retryable or attempt == policy.max_attempts - 1:
                raise
            if delay > 0:
                time.sleep(delay)
            delay *= policy.backoff_multiplier
        else:
            return CompletionResult(text=text, retries=attempt)
    raise BackendError("unreachable: retry loop exhausted")  # pragma: no cover


def _complete_bounded(backend: GenerationBackend, prompt: str, timeout: float) -> str:
    pool = ThreadPoolExecutor(max_workers=1)
    future = pool.submit(backend.complete, prompt)
    try:
        return future.result(timeout=timeout)
    except FutureTimeout:
        raise BackendTimeoutError(
            f"backend {backend.name} exceeded {timeout}s"
        ) from None
    finally:
        pool.shutdown(wait=False, cancel_futures=True)
