"""The memory controller: decides when memory is activated and how each
retrieved memory is rendered, keeps the assembled context under a token
budget, and fuses everything into the generation prompt.

The backend answers two decision questions about its own context: (1)
does this observation need older conversation memory at all, and (2) per
oversized memory, does its stored summary suffice. Question 2 is only asked when the retrieved set is large
in total (over ``summary_trigger_total_tokens``) and only for items whose
full text is itself large (over ``summary_trigger_item_tokens``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .backends import BackendCall, GenerationBackend, RetryPolicy, complete_with_timeout
from .errors import SchemaError
from .memory import MemoryItem, RankedMemory
from .prompts import PromptPack
from .tokens import Tokenizer

logger = logging.getLogger(__name__)

ACTIVATE_MEMORY = "activate_memory"
USE_SUMMARY = "use_summary"

RENDER_FULL = "full"
RENDER_SUMMARY = "summary"

RELATED_HEADER = "RELATED MEMORY"
FLASH_HEADER = "RECENT CONTEXT"


@dataclass
class ControllerConfig:
    summary_trigger_item_tokens: int = 800
    summary_trigger_total_tokens: int = 2000
    context_budget_tokens: int = 2500
    activation_default_on_parse_failure: bool = True
    summary_default_on_parse_failure: bool = False

    def __post_init__(self):
        for field_name in (
            "summary_trigger_item_tokens",
            "summary_trigger_total_tokens",
            "context_budget_tokens",
        ):
            if getattr(self, field_name) <= 0:
                raise SchemaError(f"{field_name} must be positive")
        if not (
            self.summary_trigger_item_tokens
            < self.summary_trigger_total_tokens
            <= self.context_budget_tokens
        ):
            logger.warning(
                "unusual controller thresholds: item=%d total=%d budget=%d",
                self.summary_trigger_item_tokens,
                self.summary_trigger_total_tokens,
                self.context_budget_tokens,
            )


@dataclass
class ControllerDecision:
    question: str
    raw_model_output: str
    parsed: bool  # the effective A/B verdict, after any fallback
    fallback_used: bool


@dataclass
class RenderedMemory:
    item_index: int
    rendering: str  # RENDER_FULL or RENDER_SUMMARY
    text: str
    token_count: int


def parse_verdict(raw: str, default: bool) -> tuple[bool, bool]:
    """(verdict, fallback_used). First "(a)"/"(b)" marker wins, then a
    leading yes/no; anything else falls back to the configured default."""
    lowered = raw.lower()
    option_a = lowered.find("(a)")
    option_b = lowered.find("(b)")
    if option_a >= 0 and (option_b < 0 or option_a < option_b):
        return True, False
    if option_b >= 0:
        return False, False
    stripped = lowered.strip()
    if stripped.startswith("yes"):
        return True, False
    if stripped.startswith("no"):
        return False, False
    return default, True


def _ask(
    question: str,
    prompt: str,
    default: bool,
    backend: GenerationBackend,
    timeout: float | None,
    retry: RetryPolicy | None,
    call_log: list[BackendCall] | None,
) -> ControllerDecision:
    result = complete_with_timeout(backend, prompt, timeout=timeout, retry=retry)
    if call_log is not None:
        call_log.append(BackendCall(question, result.text, result.retries))
    verdict, fallback_used = parse_verdict(result.text, default)
    return ControllerDecision(
        question=question,
        raw_model_output=result.text,
        parsed=verdict,
        fallback_used=fallback_used,
    )


def should_activate_memory(
    observation: str,
    backend: GenerationBackend,
    prompt_pack: PromptPack,
    config: ControllerConfig | None = None,
    timeout: float | None = None,
    retry: RetryPolicy | None = None,
    call_log: list[BackendCall] | None = None,
) -> ControllerDecision:
    cfg = config if config is not None else ControllerConfig()
    prompt = prompt_pack.render("activation_decision", observation=observation)
    return _ask(
        ACTIVATE_MEMORY,
        prompt,
        cfg.activation_default_on_parse_failure,
        backend,
        timeout,
        retry,
        call_log,
    )


def should_use_summary(
    observation: str,
    item: MemoryItem,
    backend: GenerationBackend,
    prompt_pack: PromptPack,
    config: ControllerConfig | None = None,
    timeout: float | None = None,
    retry: RetryPolicy | None = None,
    call_log: list[BackendCall] | None = None,
) -> ControllerDecision:
    cfg = config if config is not None else ControllerConfig()
    prompt = prompt_pack.render(
        "summary_decision", observation=observation, summary=item.render_summary()
    )
    return _ask(
        USE_SUMMARY,
        prompt,
        cfg.summary_default_on_parse_failure,
        backend,
        timeout,
        retry,
        call_log,
    )


# -- block assembly (shared by reorganization and fusion) ----------------


def render_memory_entry(rendered: RenderedMemory) -> str:
    return f"Turn {rendered.item_index}: {rendered.text}"


def render_related_block(rendered: list[RenderedMemory]) -> str:
    if not rendered:
        return ""
    entries = "\n\n".join(render_memory_entry(r) for r in rendered)
    return f"{RELATED_HEADER}\n{entries}\n\n"


def render_flash_block(flash: RenderedMemory | None) -> str:
    if flash is None:
        return ""
    return f"{FLASH_HEADER}\n{render_memory_entry(flash)}\n\n"


def related_block_tokens(rendered: list[RenderedMemory], tokenizer: Tokenizer) -> int:
    return tokenizer.count(render_related_block(rendered))


def _entry_text_fitting(
    kept: list[RenderedMemory],
    entry: RenderedMemory,
    budget: int,
    tokenizer: Tokenizer,
) -> str | None:
    """Longest prefix of entry.text whose assembled block still fits, or
    None when even an empty entry overflows."""

    def fits(prefix_len: int) -> bool:
        candidate = RenderedMemory(
            entry.item_index, entry.rendering, entry.text[:prefix_len], 0
        )
        return related_block_tokens(kept + [candidate], tokenizer) <= budget

    if not fits(0):
        return None
    lo, hi = 0, len(entry.text)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return entry.text[:lo]


def _fit_by_truncation(
    rendered: list[RenderedMemory], budget: int, tokenizer: Tokenizer
) -> tuple[list[RenderedMemory], list[str]]:
    """Concatenate-and-truncate fit: the boundary memory is cut mid-text
    and everything after it dropped. Used when the controller is bypassed."""
    if related_block_tokens(rendered, tokenizer) <= budget:
        return rendered, []
    notes: list[str] = []
    kept: list[RenderedMemory] = []
    for position, entry in enumerate(rendered):
        if related_block_tokens(kept + [entry], tokenizer) <= budget:
            kept.append(entry)
            continue
        text = _entry_text_fitting(kept, entry, budget, tokenizer)
        if text:
            kept.append(
                RenderedMemory(entry.item_index, entry.rendering, text, tokenizer.count(text))
            )
            notes.append(f"memory {entry.item_index} truncated at the context ceiling")
        else:
            notes.append(f"memory {entry.item_index} dropped at the context ceiling")
        for rest in rendered[position + 1 :]:
            notes.append(f"memory {rest.item_index} dropped at the context ceiling")
        break
    return kept, notes


def reorganize_memories(
    ranked: list[RankedMemory],
    items,
    observation: str,
    backend: GenerationBackend,
    config: ControllerConfig,
    tokenizer: Tokenizer,
    prompt_pack: PromptPack,
    bypass_decisions: bool = False,
    timeout: float | None = None,
    retry: RetryPolicy | None = None,
    call_log: list[BackendCall] | None = None,
) -> tuple[list[RenderedMemory], list[ControllerDecision], list[str]]:
    """Render retrieved memories (full or summary) under the token budget.

    ``items`` is anything with ``get(index) -> MemoryItem`` (normally the
    memory stream). Rank order is preserved throughout; over budget, whole
    low-rank memories are dropped rather than cut mid-text — except in the
    degenerate case where the single top memory alone overflows, which
    falls back to its summary truncated to fit (flagged in the notes).

    With ``bypass_decisions`` the summary question is never asked and the
    block is simply truncated at the budget.
    """
    rendered: list[RenderedMemory] = []
    for ranked_memory in ranked:
        item = items.get(ranked_memory.item_index)
        if item is None:
            raise SchemaError(f"ranked item {ranked_memory.item_index} not in the stream")
        text = item.render_full()
        rendered.append(
            RenderedMemory(item.index, RENDER_FULL, text, tokenizer.count(text))
        )
    notes: list[str] = []
    if bypass_decisions:
        fitted, fit_notes = _fit_by_truncation(rendered, config.context_budget_tokens, tokenizer)
        return fitted, [], fit_notes

    decisions: list[ControllerDecision] = []
    total_full = sum(r.token_count for r in rendered)
    if total_full > config.summary_trigger_total_tokens:
        for position, entry in enumerate(rendered):
            if entry.token_count <= config.summary_trigger_item_tokens:
                continue
            item = items.get(entry.item_index)
            decision = should_use_summary(
                observation,
                item,
                backend,
                prompt_pack,
                config,
                timeout=timeout,
                retry=retry,
                call_log=call_log,
            )
            decisions.append(decision)
            if decision.parsed:
                summary_text = item.render_summary()
                rendered[position] = RenderedMemory(
                    item.index, RENDER_SUMMARY, summary_text, tokenizer.count(summary_text)
                )

    budget = config.context_budget_tokens
    while rendered and related_block_tokens(rendered, tokenizer) > budget:
        if len(rendered) > 1:
            dropped = rendered.pop()  # lowest rank sits last
            notes.append(f"memory {dropped.item_index} dropped over the context budget")
            continue
        only = rendered[0]
        item = items.get(only.item_index)
        if only.rendering != RENDER_SUMMARY:
            summary_text = item.render_summary()
            rendered[0] = RenderedMemory(
                item.index, RENDER_SUMMARY, summary_text, tokenizer.count(summary_text)
            )
            notes.append(f"memory {item.index} forced to summary over the context budget")
            continue
        text = _entry_text_fitting([], only, budget, tokenizer) or ""
        rendered[0] = RenderedMemory(item.index, RENDER_SUMMARY, text, tokenizer.count(text))
        notes.append(f"memory {item.index} summary truncated to the context budget")
        break
    return rendered, decisions, notes


def fuse_input(
    activation: list[RenderedMemory],
    flash: RenderedMemory | None,
    observation: str,
    prompt_pack: PromptPack,
) -> str:
    """Deterministic prompt assembly: related memories (rank order), the
    previous turn, then the observation. Empty blocks vanish entirely."""
    blocks = render_related_block(activation) + render_flash_block(flash)
    return prompt_pack.render("dialogue_fusion", context_blocks=blocks, observation=observation)
