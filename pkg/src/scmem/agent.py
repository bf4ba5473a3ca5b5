"""One full engine iteration per turn.

The six steps: take the observation, ask whether memory should be
activated, retrieve and rank memories (excluding the previous turn, which
travels separately as flash memory), reorganize them under the token
budget, fuse everything into one prompt, and generate the response. The
turn then writes itself back: both texts are summarized, embedded, and
appended to the stream so the next turn can retrieve this one.

Turns are atomic: any backend or provider failure aborts the turn with the
stream length, turn counter, and access times unchanged.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from .backends import (
    BackendCall,
    GenerationBackend,
    RetryPolicy,
    complete_with_timeout,
)
from .controller import (
    ControllerConfig,
    ControllerDecision,
    RENDER_FULL,
    RENDER_SUMMARY,
    RenderedMemory,
    fuse_input,
    reorganize_memories,
    should_activate_memory,
)
from .embedding import EmbeddingProvider, embed_interaction
from .errors import InputError, SchemaError, ScmError
from .memory import MemoryStream, RankedMemory, RetrievalConfig
from .prompts import PromptPack
from .tokens import HeuristicTokenizer, Tokenizer, truncate_to_tokens

SUMMARY_IDENTITY_MAX_TOKENS = 200
DEFAULT_CALL_TIMEOUT = 60.0


class Ablation(str, Enum):
    NONE = "none"
    NO_CONTROLLER = "no_controller"
    NO_FLASH = "no_flash"
    NO_ACTIVATION = "no_activation"


@dataclass
class TurnTrace:
    """Full audit of one workflow iteration, serializable and replayable."""

    turn: int
    activation_decision: ControllerDecision | None
    retrieved: list[RankedMemory]
    rendered: list[RenderedMemory]
    summary_decisions: list[ControllerDecision]
    flash_used: bool
    fused_prompt: str
    response: str
    turn_summaries: tuple[str, str]
    backend_calls: list[BackendCall]
    notes: list[str]

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "activation_decision": (
                asdict(self.activation_decision) if self.activation_decision else None
            ),
            "retrieved": [asdict(r) for r in self.retrieved],
            "rendered": [asdict(r) for r in self.rendered],
            "summary_decisions": [asdict(d) for d in self.summary_decisions],
            "flash_used": self.flash_used,
            "fused_prompt": self.fused_prompt,
            "response": self.response,
            "turn_summaries": list(self.turn_summaries),
            "backend_calls": [asdict(c) for c in self.backend_calls],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


def summarize_turn(
    observation: str,
    response: str,
    backend: GenerationBackend,
    prompt_pack: PromptPack,
    tokenizer: Tokenizer | None = None,
    identity_max_tokens: int = SUMMARY_IDENTITY_MAX_TOKENS,
    timeout: float | None = None,
    retry: RetryPolicy | None = None,
    call_log: list[BackendCall] | None = None,
    notes: list[str] | None = None,
) -> tuple[str, str]:
    """Summaries of both turn texts. Texts short enough to store verbatim
    (at most ``identity_max_tokens`` tokens) skip the backend entirely; a
    summary that comes back longer than its source is truncated to the
    source's token count."""
    tok = tokenizer if tokenizer is not None else HeuristicTokenizer()

    def summarize(text: str, purpose: str) -> str:
        source_tokens = tok.count(text)
        if source_tokens <= identity_max_tokens:
            return text
        prompt = prompt_pack.render("turn_summarization", text=text)
        result = complete_with_timeout(backend, prompt, timeout=timeout, retry=retry)
        if call_log is not None:
            call_log.append(BackendCall(purpose, result.text, result.retries))
        summary = result.text.strip()
        if tok.count(summary) > source_tokens:
            summary = truncate_to_tokens(summary, source_tokens, tok)
            if notes is not None:
                notes.append(f"{purpose} output longer than its source; truncated")
        return summary

    return (
        summarize(observation, "observation_summarization"),
        summarize(response, "response_summarization"),
    )


@dataclass
class Session:
    """A dialogue session: one memory stream plus everything needed to run
    turns against it. One turn in flight at a time per session."""

    backend: GenerationBackend
    embedder: EmbeddingProvider
    stream: MemoryStream
    prompt_pack: PromptPack
    tokenizer: Tokenizer
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    ablation: Ablation = Ablation.NONE
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    timeout: float | None = DEFAULT_CALL_TIMEOUT
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    flash_uses_summary: bool = False
    traces: list[TurnTrace] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        backend: GenerationBackend,
        embedder: EmbeddingProvider,
        prompt_pack: PromptPack | None = None,
        tokenizer: Tokenizer | None = None,
        retrieval: RetrievalConfig | None = None,
        controller: ControllerConfig | None = None,
        ablation: Ablation = Ablation.NONE,
        session_id: str | None = None,
        persist_path: str | Path | None = None,
        timeout: float | None = DEFAULT_CALL_TIMEOUT,
        retry: RetryPolicy | None = None,
        flash_uses_summary: bool = False,
    ) -> "Session":
        tok = tokenizer if tokenizer is not None else HeuristicTokenizer()
        if persist_path is not None and Path(persist_path).exists():
            stream = MemoryStream.load(persist_path, tokenizer=tok, bind=True)
            if stream.embedding_dim != embedder.dimension:
                raise SchemaError(
                    f"stream at {persist_path} has dimension {stream.embedding_dim}, "
                    f"provider {embedder.name} produces {embedder.dimension}"
                )
        else:
            stream = MemoryStream(embedder.dimension, tokenizer=tok, persist_path=persist_path)
        return cls(
            backend=backend,
            embedder=embedder,
            stream=stream,
            prompt_pack=prompt_pack if prompt_pack is not None else PromptPack.bundled(),
            tokenizer=tok,
            retrieval=retrieval if retrieval is not None else RetrievalConfig(),
            controller=controller if controller is not None else ControllerConfig(),
            ablation=ablation,
            session_id=session_id or uuid.uuid4().hex[:12],
            timeout=timeout,
            retry=retry if retry is not None else RetryPolicy(),
            flash_uses_summary=flash_uses_summary,
        )

    @property
    def current_turn(self) -> int:
        return len(self.stream)

    def run_turn(self, observation: str) -> tuple[str, TurnTrace]:
        if not observation or not observation.strip():
            raise InputError("observation must be nonempty")
        turn = self.current_turn
        calls: list[BackendCall] = []
        notes: list[str] = []
        access_snapshot: dict[int, int] = {}
        try:
            # (2) memory activation
            activation: ControllerDecision | None = None
            if self.ablation is Ablation.NO_ACTIVATION:
                activated = False
                notes.append("activation memory disabled")
            elif self.ablation is Ablation.NO_CONTROLLER:
                activated = True
                notes.append("memory controller bypassed")
            elif len(self.stream) == 0:
                activated = False  # nothing to retrieve yet; the question is moot
                notes.append("empty stream; activation question skipped")
            else:
                activation = should_activate_memory(
                    observation,
                    self.backend,
                    self.prompt_pack,
                    self.controller,
                    timeout=self.timeout,
                    retry=self.retry,
                    call_log=calls,
                )
                activated = activation.parsed

            # (3) memory retrieval — the previous turn travels as flash
            # memory instead, so it is excluded here
            retrieved: list[RankedMemory] = []
            if activated and len(self.stream) > 0:
                access_snapshot = self.stream.access_times()
                query = self.embedder.embed(observation)
                retrieved = self.stream.rank_memories(
                    query, turn, self.retrieval, exclude={turn - 1}
                )

            # (4) memory reorganization
            rendered, summary_decisions, reorg_notes = reorganize_memories(
                retrieved,
                self.stream,
                observation,
                self.backend,
                self.controller,
                self.tokenizer,
                self.prompt_pack,
                bypass_decisions=self.ablation is Ablation.NO_CONTROLLER,
                timeout=self.timeout,
                retry=self.retry,
                call_log=calls,
            )
            notes.extend(reorg_notes)

            # (5) input fusion
            flash: RenderedMemory | None = None
            if self.ablation is not Ablation.NO_FLASH:
                flash_item = self.stream.flash_memory(turn)
                if flash_item is not None:
                    if self.flash_uses_summary:
                        flash_text = flash_item.render_summary()
                        flash_mode = RENDER_SUMMARY
                    else:
                        flash_text = flash_item.render_full()
                        flash_mode = RENDER_FULL
                    flash = RenderedMemory(
                        flash_item.index, flash_mode, flash_text, self.tokenizer.count(flash_text)
                    )
            fused = fuse_input(rendered, flash, observation, self.prompt_pack)

            # (6) response generation
            result = complete_with_timeout(
                self.backend, fused, timeout=self.timeout, retry=self.retry
            )
            calls.append(BackendCall("generation", result.text, result.retries))
            response = result.text

            # write-back: summarize, embed, append — synchronously, so the
            # next turn's retrieval always sees this one
            obs_summary, resp_summary = summarize_turn(
                observation,
                response,
                self.backend,
                self.prompt_pack,
                self.tokenizer,
                timeout=self.timeout,
                retry=self.retry,
                call_log=calls,
                notes=notes,
            )
            vector = embed_interaction(self.embedder, obs_summary, resp_summary)
            self.stream.append_interaction(
                observation, response, obs_summary, resp_summary, vector
            )
        except ScmError:
            if access_snapshot:
                self.stream.restore_access_times(access_snapshot)
            raise
        trace = TurnTrace(
            turn=turn,
            activation_decision=activation,
            retrieved=retrieved,
            rendered=rendered,
            summary_decisions=summary_decisions,
            flash_used=flash is not None,
            fused_prompt=fused,
            response=response,
            turn_summaries=(obs_summary, resp_summary),
            backend_calls=calls,
            notes=notes,
        )
        self.traces.append(trace)
        return response, trace


@dataclass
class EngineConfig:
    """A bundle of engine knobs that can mint fresh sessions."""

    backend: GenerationBackend
    embedder: EmbeddingProvider
    prompt_pack: PromptPack | None = None
    tokenizer: Tokenizer | None = None
    retrieval: RetrievalConfig | None = None
    controller: ControllerConfig | None = None
    timeout: float | None = DEFAULT_CALL_TIMEOUT
    retry: RetryPolicy | None = None
    flash_uses_summary: bool = False

    def new_session(
        self,
        ablation: Ablation = Ablation.NONE,
        session_id: str | None = None,
        persist_path: str | Path | None = None,
    ) -> Session:
        return Session.create(
            backend=self.backend,
            embedder=self.embedder,
            prompt_pack=self.prompt_pack,
            tokenizer=self.tokenizer,
            retrieval=self.retrieval,
            controller=self.controller,
            ablation=ablation,
            session_id=session_id,
            persist_path=persist_path,
            timeout=self.timeout,
            retry=self.retry,
            flash_uses_summary=self.flash_uses_summary,
        )
