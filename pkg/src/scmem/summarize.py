"""Hierarchical summarization of ultra-long documents.

The document is chunked into token-budgeted blocks (preferring paragraph
boundaries, or speaker turns for transcripts). Blocks are summarized
strictly in order; each block's prompt carries the most relevant earlier
block summaries, retrieved through the same memory ranking the dialogue
engine uses, so cross-section dependencies survive. Level-1 summaries are
then merged in groups of ``merge_fanout`` until a single root remains.

Completed nodes stream into a checkpoint file, so an interrupted run can
resume and produce the identical tree under a deterministic backend.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .backends import GenerationBackend, RetryPolicy, complete_with_timeout
from .embedding import EmbeddingProvider, HashEmbedder, embed_interaction
from .errors import InputError, PersistenceError
from .memory import MemoryStream, RetrievalConfig
from .prompts import PromptPack
from .tokens import HeuristicTokenizer, Tokenizer, truncate_to_tokens

EARLIER_CONTEXT_HEADER = "EARLIER CONTEXT"

_PARAGRAPH_BREAK = re.compile(r"(\n[ \t]*\n+)")
_SENTENCE_BREAK = re.compile(r"((?<=[.!?])\s+)")
_SPEAKER_LINE = re.compile(r"^[A-Za-z][\w .'\-]{0,39}:")


@dataclass
class SummarizeConfig:
    block_token_budget: int = 2500
    merge_fanout: int = 4
    memory_k: int = 3
    head_tokens: int = 200  # block prefix used as the retrieval query

    def __post_init__(self):
        if self.block_token_budget <= 0:
            raise InputError("block_token_budget must be positive")
        if self.merge_fanout < 2:
            raise InputError("merge_fanout must be at least 2")
        if self.memory_k < 0:
            raise InputError("memory_k must be non-negative")


@dataclass
class SummaryNode:
    node_id: str
    level: int
    children: list[str]
    source_span: tuple[int, int] | None  # token offsets, level 1 only
    source_char_span: tuple[int, int] | None  # char offsets, level 1 only
    text: str
    token_count: int
    prompt: str = ""  # exact prompt that produced this node; "" for pass-through

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "level": self.level,
            "children": list(self.children),
            "source_span": list(self.source_span) if self.source_span else None,
            "source_char_span": list(self.source_char_span) if self.source_char_span else None,
            "text": self.text,
            "token_count": self.token_count,
            "prompt": self.prompt,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "SummaryNode":
        return cls(
            node_id=record["node_id"],
            level=record["level"],
            children=list(record["children"]),
            source_span=tuple(record["source_span"]) if record["source_span"] else None,
            source_char_span=(
                tuple(record["source_char_span"]) if record["source_char_span"] else None
            ),
            text=record["text"],
            token_count=record["token_count"],
            prompt=record.get("prompt", ""),
        )


# -- chunking -------------------------------------------------------------


def _split_keeping_separators(text: str, pattern: re.Pattern) -> list[str]:
    pieces = pattern.split(text)
    units = []
    for i in range(0, len(pieces), 2):
        unit = pieces[i]
        if i + 1 < len(pieces):
            unit += pieces[i + 1]
        if unit:
            units.append(unit)
    return units


def _split_speaker_units(text: str) -> list[str]:
    units: list[str] = []
    current: list[str] = []
    for line in text.splitlines(keepends=True):
        if _SPEAKER_LINE.match(line) and current:
            units.append("".join(current))
            current = []
        current.append(line)
    if current:
        units.append("".join(current))
    return units


def looks_like_transcript(text: str) -> bool:
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) < 4:
        return False
    hits = sum(1 for line in lines if _SPEAKER_LINE.match(line))
    return hits >= 2 and hits * 2 >= len(lines)


def _hard_split(text: str, budget: int, tokenizer: Tokenizer) -> list[str]:
    pieces = []
    rest = text
    while rest:
        piece = truncate_to_tokens(rest, budget, tokenizer)
        if not piece:  # a single character exceeding the budget cannot happen
            piece = rest[0]
        pieces.append(piece)
        rest = rest[len(piece) :]
    return pieces


def chunk_document(text: str, block_token_budget: int, tokenizer: Tokenizer) -> list[str]:
    """Greedy lossless split: paragraph boundaries first (speaker turns for
    transcripts), then sentences, then hard token cuts. The concatenation
    of the blocks is byte-identical to the input."""
    if block_token_budget <= 0:
        raise InputError("block_token_budget must be positive")
    if not text:
        return []
    if looks_like_transcript(text):
        units = _split_speaker_units(text)
    else:
        units = _split_keeping_separators(text, _PARAGRAPH_BREAK)
    atoms: list[str] = []
    for unit in units:
        if tokenizer.count(unit) <= block_token_budget:
            atoms.append(unit)
            continue
        for sentence in _split_keeping_separators(unit, _SENTENCE_BREAK):
            if tokenizer.count(sentence) <= block_token_budget:
                atoms.append(sentence)
            else:
                atoms.extend(_hard_split(sentence, block_token_budget, tokenizer))
    blocks: list[str] = []
    current = ""
    for atom in atoms:
        if not current:
            current = atom
        elif tokenizer.count(current + atom) <= block_token_budget:
            current += atom
        else:
            blocks.append(current)
            current = atom
    if current:
        blocks.append(current)
    return blocks


# -- checkpointing --------------------------------------------------------


class Checkpoint:
    """Append-only record of completed nodes, keyed to (document, config)."""

    def __init__(self, directory: str | Path, document: str, config: SummarizeConfig):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / "nodes.jsonl"
        self.fingerprint = {
            "document_sha256": hashlib.sha256(document.encode("utf-8")).hexdigest(),
            "block_token_budget": config.block_token_budget,
            "merge_fanout": config.merge_fanout,
            "memory_k": config.memory_k,
            "head_tokens": config.head_tokens,
        }
        self.nodes: dict[str, SummaryNode] = {}
        if self.path.exists():
            self._load()
        else:
            with self.path.open("w", encoding="utf-8") as fh:
                fh.write(json.dumps(self.fingerprint) + "\n")

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as err:
                raise PersistenceError(f"unreadable checkpoint header: {err}") from err
            if header != self.fingerprint:
                raise PersistenceError(
                    "checkpoint belongs to a different document or configuration"
                )
            for line in fh:
                if line.strip():
                    node = SummaryNode.from_dict(json.loads(line))
                    self.nodes[node.node_id] = node

    def get(self, node_id: str) -> SummaryNode | None:
        return self.nodes.get(node_id)

    def record(self, node: SummaryNode) -> None:
        self.nodes[node.node_id] = node
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(node.to_dict(), ensure_ascii=False) + "\n")


# -- the pipeline ---------------------------------------------------------


@dataclass
class SummaryPipeline:
    """Sequential block summarization with memory-conditioned prompts."""

    backend: GenerationBackend
    config: SummarizeConfig = field(default_factory=SummarizeConfig)
    embedder: EmbeddingProvider = field(default_factory=HashEmbedder)
    tokenizer: Tokenizer = field(default_factory=HeuristicTokenizer)
    prompt_pack: PromptPack | None = None
    timeout: float | None = None
    retry: RetryPolicy | None = None

    def __post_init__(self):
        if self.prompt_pack is None:
            self.prompt_pack = PromptPack.bundled()
        self._retrieval = RetrievalConfig(k=min(10, max(3, self.config.memory_k or 3)))

    def _block_head(self, block: str) -> str:
        return truncate_to_tokens(block, self.config.head_tokens, self.tokenizer)

    def _context_block(self, stream: MemoryStream, head: str, block_index: int) -> str:
        if self.config.memory_k == 0 or len(stream) == 0:
            return ""
        query = self.embedder.embed(head)
        ranked = stream.rank_memories(query, block_index, self._retrieval)
        ranked = ranked[: self.config.memory_k]
        if not ranked:
            return ""
        entries = []
        for r in ranked:
            item = stream.get(r.item_index)
            entries.append(f"Block {r.item_index}: {item.response}")
        return f"{EARLIER_CONTEXT_HEADER}\n" + "\n\n".join(entries) + "\n\n"

    def summarize_block(
        self,
        block: str,
        memory_stream: MemoryStream,
        block_index: int,
        source_span: tuple[int, int] | None = None,
        source_char_span: tuple[int, int] | None = None,
        precomputed: SummaryNode | None = None,
    ) -> SummaryNode:
        """Summarize one block against earlier-block memories and write the
        result back into the stream. With ``precomputed`` (checkpoint
        replay) the backend is skipped but retrieval and the write-back are
        re-applied so stream state matches an uninterrupted run."""
        head = self._block_head(block)
        context = self._context_block(memory_stream, head, block_index)
        if precomputed is not None:
            summary = precomputed.text
            prompt = precomputed.prompt
        else:
            prompt = self.prompt_pack.render(
                "block_summarization", context_blocks=context, section=block
            )
            result = complete_with_timeout(
                self.backend, prompt, timeout=self.timeout, retry=self.retry
            )
            summary = result.text.strip()
        vector = embed_interaction(self.embedder, head, summary)
        memory_stream.append_interaction(head, summary, head, summary, vector)
        return SummaryNode(
            node_id=f"L1.{block_index:05d}",
            level=1,
            children=[],
            source_span=source_span,
            source_char_span=source_char_span,
            text=summary,
            token_count=self.tokenizer.count(summary),
            prompt=prompt,
        )

    def _merge_group(self, group: list[SummaryNode], node_id: str, level: int) -> SummaryNode:
        if len(group) == 1:  # singleton chain step passes through unchanged
            child = group[0]
            return SummaryNode(
                node_id=node_id,
                level=level,
                children=[child.node_id],
                source_span=None,
                source_char_span=None,
                text=child.text,
                token_count=child.token_count,
                prompt="",
            )
        summaries = "\n\n".join(f"{i + 1}. {node.text}" for i, node in enumerate(group))
        prompt = self.prompt_pack.render("merge_summarization", summaries=summaries)
        result = complete_with_timeout(self.backend, prompt, timeout=self.timeout, retry=self.retry)
        text = result.text.strip()
        return SummaryNode(
            node_id=node_id,
            level=level,
            children=[node.node_id for node in group],
            source_span=None,
            source_char_span=None,
            text=text,
            token_count=self.tokenizer.count(text),
            prompt=prompt,
        )

    def run(
        self, document: str, checkpoint_dir: str | Path | None = None
    ) -> tuple[SummaryNode, list[SummaryNode]]:
        if not document:
            raise InputError("document must be nonempty")
        blocks = chunk_document(document, self.config.block_token_budget, self.tokenizer)
        checkpoint = (
            Checkpoint(checkpoint_dir, document, self.config) if checkpoint_dir else None
        )
        stream = MemoryStream(self.embedder.dimension, tokenizer=self.tokenizer)
        nodes: list[SummaryNode] = []

        level_nodes: list[SummaryNode] = []
        char_offset = 0
        token_offset = 0
        for block_index, block in enumerate(blocks):
            node_id = f"L1.{block_index:05d}"
            block_tokens = self.tokenizer.count(block)
            node = self.summarize_block(
                block,
                stream,
                block_index,
                source_span=(token_offset, token_offset + block_tokens),
                source_char_span=(char_offset, char_offset + len(block)),
                precomputed=checkpoint.get(node_id) if checkpoint else None,
            )
            char_offset += len(block)
            token_offset += block_tokens
            if checkpoint and checkpoint.get(node_id) is None:
                checkpoint.record(node)
            level_nodes.append(node)
            nodes.append(node)

        level = 1
        while len(level_nodes) > 1:
            level += 1
            next_nodes: list[SummaryNode] = []
            fanout = self.config.merge_fanout
            for group_index in range(0, len(level_nodes), fanout):
                group = level_nodes[group_index : group_index + fanout]
                node_id = f"L{level}.{group_index // fanout:05d}"
                cached = checkpoint.get(node_id) if checkpoint else None
                if cached is not None:
                    node = cached
                else:
                    node = self._merge_group(group, node_id, level)
                    if checkpoint:
                        checkpoint.record(node)
                next_nodes.append(node)
                nodes.append(node)
            level_nodes = next_nodes
        return level_nodes[0], nodes


def hierarchical_summarize(
    document: str,
    backend: GenerationBackend,
    config: SummarizeConfig | None = None,
    embedder: EmbeddingProvider | None = None,
    tokenizer: Tokenizer | None = None,
    prompt_pack: PromptPack | None = None,
    checkpoint_dir: str | Path | None = None,
    timeout: float | None = None,
    retry: RetryPolicy | None = None,
) -> tuple[SummaryNode, list[SummaryNode]]:
    """Summarize a document into a single root summary plus the full tree."""
    pipeline = SummaryPipeline(
        backend=backend,
        config=config if config is not None else SummarizeConfig(),
        embedder=embedder if embedder is not None else HashEmbedder(),
        tokenizer=tokenizer if tokenizer is not None else HeuristicTokenizer(),
        prompt_pack=prompt_pack,
        timeout=timeout,
        retry=retry,
    )
    return pipeline.run(document, checkpoint_dir=checkpoint_dir)


def write_tree(nodes: list[SummaryNode], path: str | Path) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as fh:
        for node in nodes:
            fh.write(json.dumps(node.to_dict(), ensure_ascii=False) + "\n")


def load_tree(path: str | Path) -> list[SummaryNode]:
    nodes = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                nodes.append(SummaryNode.from_dict(json.loads(line)))
    return nodes
