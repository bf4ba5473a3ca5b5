"""The bundled synthetic probe suite.

Sessions are built so that each probe's gold turns are the unique lexical
matches in the stream: gold turns carry case-unique topic tokens, the
probe repeats them, and filler turns share nothing with the probe. Filler
observations decline memory activation (the scripted controller only
activates for observations starting with "remember"), so access times stay
untouched until the probe fires and retrieval outcomes are exactly
predictable. Answers are scripted to require the gold memory in the fused
prompt — ablating activation memory makes them unanswerable by
construction.

Recall = 1.0 is not assumed: the generator simulates each probe's ranking
with the real hash embeddings and resalts the topic tokens until every
gold turn lands in the top k with margin, so the bundled suite is sound by
construction, not by luck.
"""

from __future__ import annotations

import random

from .backends import ScriptedBackend
from .embedding import hash_embed
from .evalharness import SCOPE_MULTI, SCOPE_SINGLE, ProbeCase
from .memory import RetrievalConfig

# Newest gold turn sits at most this many turns before the probe; the
# spread between a multi case's two golds is bounded separately. Keeps
# gold ranks (relevance ~0.94 + recency) clear of the best recency-only
# competitor (~1.49) at the default decay.
MAX_GOLD_GAP = 60
MIN_GOLD_GAP = 6
MAX_GOLD_SPREAD = 15

EMBED_DIMENSION = 256
RANK_MARGIN = 0.02

DEFAULT_REPLY = "Noted."

_ACTIVATION_RULES = [
    {"pattern": "Message needing a decision: remember", "response": "yes(A)"},
    {"pattern": "Message needing a decision:", "response": "no(B)"},
    {"pattern": "Current question:", "response": "no(B)"},
]


def _case_is_sound(
    script: list[str],
    responses: dict[int, str],
    probe_text: str,
    gold_turns: set[int],
    newest_gold: int,
    config: RetrievalConfig,
) -> bool:
    """Exact simulation of the probe turn's ranking: every item's access
    time equals its creation turn (fillers never activate), the previous
    turn is excluded, and item embeddings hash observation + reply."""
    probe_turn = len(script)
    query = hash_embed(probe_text, EMBED_DIMENSION)
    scored = []
    for turn, observation in enumerate(script):
        if turn == probe_turn - 1:  # travels as flash memory, not retrievable
            continue
        text = f"{observation}\n{responses.get(turn, DEFAULT_REPLY)}"
        relevance = (float(hash_embed(text, EMBED_DIMENSION) @ query) + 1.0) / 2.0
        recency = config.recency_decay ** (probe_turn - turn)
        scored.append((recency + relevance, turn))
    scored.sort(key=lambda pair: (-pair[0], -pair[1]))
    top = scored[: config.k]
    top_turns = [turn for _, turn in top]
    if not gold_turns.issubset(top_turns):
        return False
    if top_turns[0] != newest_gold:  # the answer rule keys on the leading entry
        return False
    if len(scored) > config.k:
        weakest_gold = min(score for score, turn in top if turn in gold_turns)
        best_excluded = scored[config.k][0]
        if weakest_gold - best_excluded < RANK_MARGIN:
            return False
    return True


def build_synthetic_suite(
    n_cases: int = 44, seed: int = 11, max_session_turns: int = 200
) -> tuple[list[ProbeCase], ScriptedBackend]:
    """Probe cases plus the scripted backend fixture that drives them."""
    rng = random.Random(seed)
    retrieval = RetrievalConfig()
    rules = list(_ACTIVATION_RULES)
    cases = []
    for case_index in range(n_cases):
        multi = case_index % 2 == 1
        if case_index == 0:
            probe_turn = max_session_turns
        else:
            probe_turn = rng.randint(12, 160)
        newest_gap = rng.randint(MIN_GOLD_GAP, min(MAX_GOLD_GAP, probe_turn - 3))
        newest_gold = probe_turn - newest_gap
        gold_turns = {newest_gold}
        if multi:
            gold_turns.add(newest_gold - rng.randint(3, min(MAX_GOLD_SPREAD, newest_gold)))

        for salt in range(64):
            tag = f"{case_index:02d}" if salt == 0 else f"{case_index:02d}s{salt}"
            topic = [f"topic{tag}w{j}" for j in range(8)]
            answers = [f"fact{tag}a"] + ([f"fact{tag}b"] if multi else [])
            gold_obs = {newest_gold: " ".join(topic)}
            if multi:
                (older_gold,) = gold_turns - {newest_gold}
                gold_obs[older_gold] = " ".join(reversed(topic))
            script = [
                gold_obs.get(
                    turn,
                    f"log entry {turn:03d} pad{tag}t{turn:03d}a "
                    f"pad{tag}t{turn:03d}b pad{tag}t{turn:03d}c",
                )
                for turn in range(probe_turn)
            ]
            responses = {
                turn: fact
                for turn, fact in zip(sorted(gold_turns, reverse=True), answers)
            }
            probe_text = "remember " + " ".join(topic)
            if _case_is_sound(script, responses, probe_text, gold_turns, newest_gold, retrieval):
                break
        else:  # pragma: no cover - 64 salts always suffice in practice
            raise AssertionError(f"could not build a sound case {case_index}")

        for turn, fact in responses.items():
            rules.append({"pattern": f"CURRENT INPUT\n{gold_obs[turn]}\n", "response": fact})
        rules.append(
            {
                "pattern": f"RELATED MEMORY\nTurn {newest_gold}: {gold_obs[newest_gold]}",
                "response": f"recall: {' '.join(answers)} as noted",
            }
        )
        cases.append(
            ProbeCase(
                case_id=f"case{case_index:03d}",
                session_script=script,
                probe_turn=probe_turn,
                probe_text=probe_text,
                gold_memory_turns=gold_turns,
                gold_answer_keywords=answers,
                turn_scope=SCOPE_MULTI if multi else SCOPE_SINGLE,
            )
        )
    backend = ScriptedBackend(rules, default=DEFAULT_REPLY, name="suite-fixture")
    return cases, backend
