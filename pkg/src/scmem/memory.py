"""The memory stream: append-only interaction records with ranked retrieval.

Every turn of a session is stored as one MemoryItem holding the raw texts,
their summaries, and a unit-norm embedding. Retrieval scores each item by
recency (exponential decay over turns since last access) plus relevance
(normalized cosine against the query embedding) and returns the top k.

Streams may be bound to a log file, in which case every mutation rewrites
the file atomically; retrieval updates last-access times retroactively, so
a pure append-only log cannot represent the state.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .embedding import cosine
from .errors import (
    ContractError,
    PersistenceError,
    PersistFormatError,
    PersistVersionError,
    SchemaError,
)
from .tokens import HeuristicTokenizer, Tokenizer, truncate_to_tokens

FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-6

SHIFTED_COSINE = "shifted_cosine"
CLAMPED_COSINE = "clamped_cosine"

_ITEM_FIELDS = (
    "index",
    "observation",
    "response",
    "observation_summary",
    "response_summary",
    "embedding",
    "created_turn",
    "last_accessed_turn",
    "token_count_full",
    "token_count_summary",
)


@dataclass
class RetrievalConfig:
    k: int = 5
    recency_decay: float = 0.995
    relevance_normalization: str = SHIFTED_COSINE

    def __post_init__(self):
        if not 3 <= self.k <= 10:
            raise SchemaError(f"k must be in [3, 10], got {self.k}")
        if not 0.0 < self.recency_decay < 1.0:
            raise SchemaError(f"recency_decay must be in (0, 1), got {self.recency_decay}")
        if self.relevance_normalization not in (SHIFTED_COSINE, CLAMPED_COSINE):
            raise SchemaError(
                f"unknown relevance normalization {self.relevance_normalization!r}"
            )


@dataclass
class MemoryItem:
    index: int
    observation: str
    response: str
    observation_summary: str
    response_summary: str
    embedding: np.ndarray
    created_turn: int
    last_accessed_turn: int
    token_count_full: int
    token_count_summary: int

    def render_full(self) -> str:
        return _join_nonempty(self.observation, self.response)

    def render_summary(self) -> str:
        return _join_nonempty(self.observation_summary, self.response_summary)


@dataclass
class RankedMemory:
    item_index: int
    recency_score: float
    relevance_score: float
    rank_score: float


def _join_nonempty(first: str, second: str) -> str:
    return "\n".join(part for part in (first, second) if part)


def recency_score(item: MemoryItem, current_turn: int, config: RetrievalConfig) -> float:
    """decay^(turns since last access); 1.0 when the gap is zero."""
    gap = current_turn - item.last_accessed_turn
    if gap < 0:
        raise ContractError(
            f"current_turn {current_turn} precedes last access "
            f"{item.last_accessed_turn} of item {item.index}"
        )
    return config.recency_decay**gap


def relevance_score(item: MemoryItem, query_embedding, config: RetrievalConfig) -> float:
    """Cosine against the query, normalized into [0, 1]."""
    value = cosine(item.embedding, query_embedding)
    if config.relevance_normalization == SHIFTED_COSINE:
        return (value + 1.0) / 2.0
    return max(value, 0.0)


class MemoryStream:
    """Append-only, consecutively indexed interaction records.

    Single writer, many readers: mutations serialize on an internal lock;
    reads hand out snapshots. Streams are independent of one another.
    """

    def __init__(
        self,
        embedding_dim: int,
        tokenizer: Tokenizer | None = None,
        persist_path: str | Path | None = None,
    ):
        if embedding_dim < 1:
            raise SchemaError(f"embedding_dim must be positive, got {embedding_dim}")
        self.embedding_dim = int(embedding_dim)
        self.tokenizer = tokenizer if tokenizer is not None else HeuristicTokenizer()
        self.persist_path = Path(persist_path) if persist_path is not None else None
        self._items: list[MemoryItem] = []
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._items)

    def items(self) -> list[MemoryItem]:
        with self._lock:
            return list(self._items)

    def get(self, index: int) -> MemoryItem | None:
        with self._lock:
            if 0 <= index < len(self._items):
                return self._items[index]
        return None

    def append_interaction(
        self,
        observation: str,
        response: str,
        observation_summary: str,
        response_summary: str,
        embedding,
    ) -> MemoryItem:
        emb = np.asarray(embedding, dtype=np.float64)
        if emb.shape != (self.embedding_dim,):
            raise SchemaError(
                f"embedding dimension {emb.shape} does not match stream "
                f"dimension {self.embedding_dim}"
            )
        if not np.all(np.isfinite(emb)):
            raise SchemaError("embedding has non-finite components")
        norm = float(np.linalg.norm(emb))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise SchemaError(f"embedding norm {norm!r} is not 1 within {NORM_TOLERANCE}")
        with self._lock:
            index = len(self._items)
            full_count = self.tokenizer.count(_join_nonempty(observation, response))
            obs_sum, resp_sum, summary_count = self._fit_summaries(
                observation_summary, response_summary, full_count
            )
            item = MemoryItem(
                index=index,
                observation=observation,
                response=response,
                observation_summary=obs_sum,
                response_summary=resp_sum,
                embedding=emb,
                created_turn=index,
                last_accessed_turn=index,
                token_count_full=full_count,
                token_count_summary=summary_count,
            )
            self._items.append(item)
            self._write_if_bound()
        return item

    def _fit_summaries(self, obs_sum: str, resp_sum: str, budget: int) -> tuple[str, str, int]:
        # Summaries may never cost more tokens than the text they stand for.
        tok = self.tokenizer
        for _ in range(4):
            count = tok.count(_join_nonempty(obs_sum, resp_sum))
            if count <= budget:
                return obs_sum, resp_sum, count
            excess = count - budget
            if resp_sum:
                keep = max(0, tok.count(resp_sum) - excess)
                resp_sum = truncate_to_tokens(resp_sum, keep, tok)
            elif obs_sum:
                keep = max(0, tok.count(obs_sum) - excess)
                obs_sum = truncate_to_tokens(obs_sum, keep, tok)
            else:
                break
        return obs_sum, resp_sum, tok.count(_join_nonempty(obs_sum, resp_sum))

    def flash_memory(self, current_turn: int) -> MemoryItem | None:
        """The previous turn's record (index current_turn - 1), if present."""
        return self.get(current_turn - 1)

    def rank_memories(
        self,
        query_embedding,
        current_turn: int,
        config: RetrievalConfig | None = None,
        exclude: Iterable[int] = (),
    ) -> list[RankedMemory]:
        """Top-k items by recency + relevance, ties to the higher index.

        Scores are computed against pre-call access times; the access time
        of every *returned* item is then bumped to `current_turn`.
        """
        cfg = config if config is not None else RetrievalConfig()
        query = np.asarray(query_embedding, dtype=np.float64)
        if query.shape != (self.embedding_dim,):
            raise SchemaError(
                f"query dimension {query.shape} does not match stream "
                f"dimension {self.embedding_dim}"
            )
        excluded = set(exclude)
        with self._lock:
            scored = []
            for item in self._items:
                if item.index in excluded:
                    continue
                recency = recency_score(item, current_turn, cfg)
                relevance = relevance_score(item, query, cfg)
                scored.append(RankedMemory(item.index, recency, relevance, recency + relevance))
            scored.sort(key=lambda r: (-r.rank_score, -r.item_index))
            top = scored[: cfg.k]
            for ranked in top:
                self._items[ranked.item_index].last_accessed_turn = current_turn
            if top:
                self._write_if_bound()
        return top

    def access_times(self) -> dict[int, int]:
        with self._lock:
            return {item.index: item.last_accessed_turn for item in self._items}

    def restore_access_times(self, snapshot: dict[int, int]) -> None:
        """Roll back last-access bumps (used when a turn aborts mid-way)."""
        with self._lock:
            changed = False
            for index, turn in snapshot.items():
                if 0 <= index < len(self._items) and self._items[index].last_accessed_turn != turn:
                    self._items[index].last_accessed_turn = turn
                    changed = True
            if changed:
                self._write_if_bound()

    # -- persistence ---------------------------------------------------

    def persist(self, path: str | Path | None = None) -> Path:
        """Write the whole stream to a line-delimited UTF-8 log, atomically."""
        target = Path(path) if path is not None else self.persist_path
        if target is None:
            raise PersistenceError("no path given and the stream is not bound to one")
        with self._lock:
            lines = [json.dumps({"version": FORMAT_VERSION, "embedding_dim": self.embedding_dim})]
            for item in self._items:
                record = {
                    "index": item.index,
                    "observation": item.observation,
                    "response": item.response,
                    "observation_summary": item.observation_summary,
                    "response_summary": item.response_summary,
                    "embedding": [float(x) for x in item.embedding],
                    "created_turn": item.created_turn,
                    "last_accessed_turn": item.last_accessed_turn,
                    "token_count_full": item.token_count_full,
                    "token_count_summary": item.token_count_summary,
                }
                lines.append(json.dumps(record, ensure_ascii=False))
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        os.replace(tmp, target)
        return target

    def _write_if_bound(self) -> None:
        if self.persist_path is not None:
            self.persist(self.persist_path)

    @classmethod
    def load(
        cls,
        path: str | Path,
        tokenizer: Tokenizer | None = None,
        bind: bool = False,
    ) -> "MemoryStream":
        """Read a stream written by persist(). Errors name the bad line."""
        source = Path(path)
        try:
            raw = source.read_text(encoding="utf-8")
        except OSError as err:
            raise PersistenceError(f"cannot read {source}: {err}") from err
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise PersistFormatError("empty file, expected a header record", 1)
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as err:
            raise PersistFormatError(f"unreadable header: {err.msg}", 1) from err
        if not isinstance(header, dict) or "version" not in header:
            raise PersistFormatError("header must carry a version field", 1)
        if header["version"] != FORMAT_VERSION:
            raise PersistVersionError(
                f"log version {header['version']!r} unsupported (expected {FORMAT_VERSION})"
            )
        dim = header.get("embedding_dim")
        if not isinstance(dim, int) or dim < 1:
            raise PersistFormatError(f"bad embedding_dim {dim!r}", 1)
        stream = cls(dim, tokenizer=tokenizer, persist_path=source if bind else None)
        for line_number, line in enumerate(lines[1:], start=2):
            if not line.strip():
                raise PersistFormatError("blank line inside the log", line_number)
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise PersistFormatError(f"unreadable record: {err.msg}", line_number) from err
            missing = [f for f in _ITEM_FIELDS if f not in record]
            if missing:
                raise PersistFormatError(f"missing fields {missing}", line_number)
            emb = np.asarray(record["embedding"], dtype=np.float64)
            if emb.shape != (dim,):
                raise PersistFormatError(
                    f"embedding dimension {emb.shape} does not match header {dim}", line_number
                )
            expected_index = len(stream._items)
            if record["index"] != expected_index:
                raise PersistFormatError(
                    f"index {record['index']} out of order (expected {expected_index})",
                    line_number,
                )
            if record["created_turn"] != record["index"]:
                raise PersistFormatError("created_turn must equal index", line_number)
            if record["last_accessed_turn"] < record["created_turn"]:
                raise PersistFormatError("last_accessed_turn precedes created_turn", line_number)
            item = MemoryItem(
                index=record["index"],
                observation=record["observation"],
                response=record["response"],
                observation_summary=record["observation_summary"],
                response_summary=record["response_summary"],
                embedding=emb,
                created_turn=record["created_turn"],
                last_accessed_turn=record["last_accessed_turn"],
                token_count_full=record["token_count_full"],
                token_count_summary=record["token_count_summary"],
            )
            stream._items.append(item)
        return stream
