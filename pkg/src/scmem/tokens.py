"""Token counting used by every budget decision in the engine.

The default counter is a vocabulary-free heuristic: ceil(bytes/4) per run
of ASCII plus one token per non-ASCII character. Exact backend tokenizers
can be plugged in behind the same interface; every component takes the
tokenizer it should use instead of constructing its own, so thresholds
stay comparable across the controller, summarizer, and memory stream.
"""

from __future__ import annotations

import re
from typing import Protocol, runtime_checkable

_ASCII_RUN = re.compile(r"[\x00-\x7f]+")


@runtime_checkable
class Tokenizer(Protocol):
    name: str

    def count(self, text: str) -> int: ...


class HeuristicTokenizer:
    """ceil(bytes/4) per ASCII run, one token per non-ASCII character."""

    name = "heuristic-b4"

    def count(self, text: str) -> int:
        if not text:
            return 0
        if text.isascii():
            return (len(text) + 3) // 4
        tokens = 0
        pos = 0
        for match in _ASCII_RUN.finditer(text):
            tokens += match.start() - pos  # non-ASCII chars, one token each
            tokens += (match.end() - match.start() + 3) // 4
            pos = match.end()
        tokens += len(text) - pos
        return tokens


def truncate_to_tokens(text: str, max_tokens: int, tokenizer: Tokenizer) -> str:
    """Longest prefix of `text` counting at most `max_tokens` tokens.

    Relies on prefix monotonicity of the tokenizer (count(prefix) never
    exceeds count(full)), which the Tokenizer contract guarantees.
    """
    if max_tokens <= 0:
        return ""
    if tokenizer.count(text) <= max_tokens:
        return text
    lo, hi = 0, len(text)  # count(text[:lo]) <= max_tokens < count(text[:hi])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tokenizer.count(text[:mid]) <= max_tokens:
            lo = mid
        else:
            hi = mid
    return text[:lo]
