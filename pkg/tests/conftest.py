from __future__ import annotations

import numpy as np
import pytest

from scmem.backends import ScriptedBackend
from scmem.tokens import HeuristicTokenizer

TOK = HeuristicTokenizer()


def ascii_text(n_tokens: int, char: str = "a") -> str:
    """ASCII text counting exactly n_tokens under the heuristic tokenizer."""
    return char * (4 * n_tokens)


def turn_texts(n_tokens: int) -> tuple[str, str]:
    """(observation, response) whose full rendering counts exactly n_tokens."""
    assert n_tokens >= 3
    observation = "a" * (4 * n_tokens - 5)
    response = "b" * 4
    joined = f"{observation}\n{response}"
    assert TOK.count(joined) == n_tokens
    return observation, response


def basis_vector(dim: int, axis: int = 0) -> np.ndarray:
    vec = np.zeros(dim)
    vec[axis] = 1.0
    return vec


RUNNING_RULES = [
    {"pattern": "Message needing a decision: Do you remember", "response": "yes(A)"},
    {"pattern": "Message needing a decision:", "response": "no(B)"},
    {
        "pattern": "RELATED MEMORY\nTurn 0: my first sport was running",
        "response": "Your first sport was running.",
    },
    {
        "pattern": "CURRENT INPUT\nmy first sport was running",
        "response": "running is a great first sport",
    },
]

RUNNING_SCRIPT = [
    "my first sport was running",
    "the weather stayed grey today",
    "dinner was pasta tonight",
]

RUNNING_PROBE = "Do you remember my first sport?"


@pytest.fixture
def running_backend() -> ScriptedBackend:
    return ScriptedBackend(RUNNING_RULES, default="Noted.")
