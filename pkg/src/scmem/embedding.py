"""Embedding providers for memory retrieval.

Two providers ship: a deterministic signed-feature-hashing embedder that
works offline (tests, CLI default) and a remote HTTP embedder for real
embedding models. Both return unit-norm float64 vectors of their declared
dimension; streams record that dimension and reject anything else.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import (
    BackendError,
    BackendRateLimitError,
    BackendTransportError,
    InputError,
    SchemaError,
)

INTERACTION_SEPARATOR = "\n"

EMBED_API_KEY_VAR = "SCM_EMBED_API_KEY"


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def cosine(a, b) -> float:
    """Cosine similarity, clamped to [-1, 1] against float rounding."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise SchemaError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise InputError("cosine of a zero vector is undefined")
    value = float(np.dot(va, vb)) / (na * nb)
    return max(-1.0, min(1.0, value))


def _term_hash(term: str) -> int:
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def hash_embed(text: str, dimension: int) -> np.ndarray:
    """Signed feature hashing over lowercase whitespace terms.

    Bag-of-words: term order never matters. An all-zero accumulation
    (e.g. empty text) maps to the first basis vector so the result is
    always unit norm.
    """
    if dimension < 8:
        raise InputError(f"hash embedding dimension must be >= 8, got {dimension}")
    vec = np.zeros(dimension, dtype=np.float64)
    for term in text.lower().split():
        h = _term_hash(term)
        bucket = h % dimension
        sign = -1.0 if (h // dimension) & 1 else 1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return vec / norm


class HashEmbedder:
    """Deterministic offline provider; a pure function of (text, dimension)."""

    def __init__(self, dimension: int = 256):
        if dimension < 8:
            raise InputError(f"hash embedding dimension must be >= 8, got {dimension}")
        self.dimension = dimension
        self.name = f"hash-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(text, self.dimension)


class RemoteEmbedder:
    """HTTP embedding provider with retries and a per-process memo cache.

    POSTs {"input": text, "model": name} to `base_url` and reads the first
    embedding from the response. The API key comes from SCM_EMBED_API_KEY
    unless given explicitly.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int = 1536,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = 3,
        initial_backoff: float = 1.0,
        max_in_flight: int = 8,
    ):
        self.base_url = base_url.rstrip("/")
        self.name = model
        self.dimension = dimension
        self.api_key = api_key if api_key is not None else os.environ.get(EMBED_API_KEY_VAR)
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.initial_backoff = initial_backoff
        self._cache: dict[str, np.ndarray] = {}
        self._cache_lock = threading.Lock()
        self._in_flight = threading.Semaphore(max_in_flight)

    def embed(self, text: str) -> np.ndarray:
        with self._cache_lock:
            cached = self._cache.get(text)
        if cached is not None:
            return cached
        vec = self._fetch(text)
        with self._cache_lock:
            self._cache[text] = vec
        return vec

    def _fetch(self, text: str) -> np.ndarray:
        import httpx

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        delay = self.initial_backoff
        last_error: BackendError | None = None
        for attempt in range(self.max_attempts):
            try:
                with self._in_flight:
                    reply = httpx.post(
                        self.base_url,
                        json={"input": text, "model": self.name},
                        headers=headers,
                        timeout=self.timeout,
                    )
            except httpx.HTTPError as err:
                last_error = BackendTransportError(f"embedding request failed: {err}")
            else:
                if reply.status_code == 429:
                    last_error = BackendRateLimitError("embedding provider rate limit")
                elif reply.status_code >= 500:
                    last_error = BackendTransportError(
                        f"embedding provider returned {reply.status_code}"
                    )
                elif reply.status_code >= 400:
                    raise BackendError(
                        f"embedding provider rejected the request "
                        f"({reply.status_code}): {reply.text[:300]}"
                    )
                else:
                    return self._parse(reply.json())
            if attempt < self.max_attempts - 1:
                time.sleep(delay)
                delay *= 2
        assert last_error is not None
        raise last_error

    def _parse(self, body) -> np.ndarray:
        values = None
        if isinstance(body, dict):
            data = body.get("data")
            if isinstance(data, list) and data and isinstance(data[0], dict):
                values = data[0].get("embedding")
            if values is None:
                values = body.get("embedding") or body.get("embeddings")
                if isinstance(values, list) and values and isinstance(values[0], list):
                    values = values[0]
        if not isinstance(values, list):
            raise BackendError(f"no embedding found in provider response: {str(body)[:300]}")
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise SchemaError(
                f"provider returned dimension {vec.shape[0]}, expected {self.dimension}"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not np.all(np.isfinite(vec)):
            raise BackendError("provider returned a degenerate embedding")
        return vec / norm


def embed_interaction(
    provider: EmbeddingProvider, observation_summary: str, response_summary: str
) -> np.ndarray:
    """Embedding of one interaction: both summaries joined by a newline.

    The concatenation (not the raw observation/response) is what gets
    embedded, so very long turns and very short replies carry balanced
    weight in retrieval.
    """
    if not observation_summary and not response_summary:
        raise InputError("at least one of the two summaries must be nonempty")
    text = f"{observation_summary}{INTERACTION_SEPARATOR}{response_summary}"
    vec = np.asarray(provider.embed(text), dtype=np.float64)
    if vec.shape != (provider.dimension,):
        raise SchemaError(
            f"provider {provider.name} returned dimension {vec.shape}, "
            f"declared {provider.dimension}"
        )
    return vec
