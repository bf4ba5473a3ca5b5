from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st


from scmem.errors import (
    ContractError,
    PersistFormatError,
    PersistVersionError,
    SchemaError,
)
from scmem.memory import (
    MemoryStream,
    RankedMemory,
    RetrievalConfig,
    recency_score,
    relevance_score,
)

from conftest import basis_vector


def make_stream(dim: int = 8) -> MemoryStream:
    return MemoryStream(dim)


def add_item(stream: MemoryStream, text: str = "obs", embedding=None):
    emb = embedding if embedding is not None else basis_vector(stream.embedding_dim)
    return stream.append_interaction(text, "resp", text, "resp", emb)


def brute_force_rank(items, query, current_turn, config, exclude=frozenset()):
    """Independent oracle: full sort by decay^gap + (cos+1)/2, ties by
    higher index."""
    query = np.asarray(query, dtype=np.float64)
    scored = []
    for item in items:
        if item.index in exclude:
            continue
        gap = current_turn - item.last_accessed_turn
        recency = config.recency_decay**gap
        raw = float(np.dot(item.embedding, query)) / (
            float(np.linalg.norm(item.embedding)) * float(np.linalg.norm(query))
        )
        raw = max(-1.0, min(1.0, raw))
        relevance = (raw + 1.0) / 2.0
        scored.append(RankedMemory(item.index, recency, relevance, recency + relevance))
    scored.sort(key=lambda r: (-r.rank_score, -r.item_index))
    return scored[: config.k]


# -- append ----------------------------------------------------------------


def test_first_append_gets_index_zero():
    stream = make_stream()
    item = add_item(stream, "hello")
    assert item.index == 0
    assert item.created_turn == 0
    assert item.last_accessed_turn == 0


def test_indices_are_consecutive():
    stream = make_stream()
    add_item(stream)
    add_item(stream)
    item = add_item(stream)
    assert item.index == 2
    assert [it.index for it in stream.items()] == [0, 1, 2]


def test_append_rejects_non_unit_norm():
    stream = make_stream()
    with pytest.raises(SchemaError):
        stream.append_interaction("a", "b", "a", "b", basis_vector(8) * 0.5)


def test_append_rejects_dimension_mismatch():
    stream = make_stream(8)
    with pytest.raises(SchemaError):
        stream.append_interaction("a", "b", "a", "b", basis_vector(9))


def test_append_rejects_non_finite():
    stream = make_stream()
    bad = basis_vector(8)
    bad[3] = float("nan")
    with pytest.raises(SchemaError):
        stream.append_interaction("a", "b", "a", "b", bad)


def test_summary_longer_than_full_is_truncated():
    stream = make_stream()
    item = stream.append_interaction(
        "tiny", "text", "s" * 400, "also very long summary " * 10, basis_vector(8)
    )
    assert item.token_count_summary <= item.token_count_full


def test_token_counts_match_renderings():
    stream = make_stream()
    item = add_item(stream, "observation text")
    assert item.token_count_full == stream.tokenizer.count(item.render_full())
    assert item.token_count_summary == stream.tokenizer.count(item.render_summary())


# -- scores ------------------------------------------------------------------


def test_recency_zero_gap_is_one():
    stream = make_stream()
    item = add_item(stream)
    assert recency_score(item, 0, RetrievalConfig()) == 1.0


def test_recency_matches_repeated_multiplication():
    # oracle: multiply 0.995 one hundred times
    expected = 1.0
    for _ in range(100):
        expected *= 0.995
    stream = make_stream()
    item = add_item(stream)
    got = recency_score(item, 100, RetrievalConfig(recency_decay=0.995))
    assert got == pytest.approx(expected, rel=1e-9)
    assert got == pytest.approx(0.6058, abs=5e-5)


def test_recency_strictly_decreasing_in_gap():
    stream = make_stream()
    item = add_item(stream)
    config = RetrievalConfig(recency_decay=0.995)
    scores = [recency_score(item, turn, config) for turn in range(0, 50, 7)]
    assert all(earlier > later for earlier, later in zip(scores, scores[1:]))


def test_recency_rejects_time_going_backwards():
    stream = make_stream()
    add_item(stream)
    item = add_item(stream)  # last_accessed_turn == 1
    with pytest.raises(ContractError):
        recency_score(item, 0, RetrievalConfig())


def test_relevance_identical_vectors():
    stream = make_stream()
    item = add_item(stream)
    for mode in ("shifted_cosine", "clamped_cosine"):
        config = RetrievalConfig(relevance_normalization=mode)
        assert relevance_score(item, item.embedding, config) == pytest.approx(1.0)


def test_relevance_orthogonal_vectors():
    stream = make_stream()
    item = add_item(stream, embedding=basis_vector(8, 0))
    query = basis_vector(8, 1)
    assert relevance_score(item, query, RetrievalConfig()) == pytest.approx(0.5)
    clamped = RetrievalConfig(relevance_normalization="clamped_cosine")
    assert relevance_score(item, query, clamped) == 0.0


def test_relevance_antipodal_vectors():
    stream = make_stream()
    item = add_item(stream, embedding=basis_vector(8, 0))
    query = -basis_vector(8, 0)
    assert relevance_score(item, query, RetrievalConfig()) == pytest.approx(0.0)
    clamped = RetrievalConfig(relevance_normalization="clamped_cosine")
    assert relevance_score(item, query, clamped) == 0.0


# -- ranking -----------------------------------------------------------------


def test_single_item_stream():
    stream = make_stream()
    item = add_item(stream)
    [ranked] = stream.rank_memories(item.embedding, 1)
    assert ranked.item_index == 0
    assert ranked.rank_score == ranked.recency_score + ranked.relevance_score


def test_rank_example_from_oracle():
    # relevances 1.0 / 0.2 / 0.8 via cosines 1.0 / -0.6 / 0.6;
    # recencies 1.0 / 0.9 / 0.9^7 ~= 0.478 via access-time gaps 0 / 1 / 7
    stream = make_stream(2)
    add_item(stream, embedding=np.array([1.0, 0.0]))
    add_item(stream, embedding=np.array([-0.6, 0.8]))
    add_item(stream, embedding=np.array([0.6, 0.8]))
    items = stream.items()
    items[0].last_accessed_turn = 7
    items[1].last_accessed_turn = 6
    items[2].last_accessed_turn = 0
    config = RetrievalConfig(k=3, recency_decay=0.9)
    query = np.array([1.0, 0.0])
    expected = brute_force_rank(items, query, 7, config)
    got = stream.rank_memories(query, 7, config)
    assert [r.item_index for r in got] == [r.item_index for r in expected] == [0, 2, 1]
    assert got[0].rank_score == pytest.approx(2.0)
    assert got[1].rank_score == pytest.approx(0.9**7 + 0.8)
    top2 = stream.rank_memories(query, 7, RetrievalConfig(k=3, recency_decay=0.9))
    assert [r.item_index for r in top2][:2] == [0, 2]


def test_equal_rank_breaks_to_higher_index():
    stream = make_stream()
    emb = basis_vector(8)
    add_item(stream, embedding=emb)
    add_item(stream, embedding=emb)
    items = stream.items()
    items[0].last_accessed_turn = 2
    items[1].last_accessed_turn = 2
    got = stream.rank_memories(emb, 2)
    assert [r.item_index for r in got] == [1, 0]
    assert got[0].rank_score == got[1].rank_score


def test_excluded_indices_never_appear():
    stream = make_stream()
    for _ in range(4):
        add_item(stream)
    got = stream.rank_memories(basis_vector(8), 4, exclude={3})
    assert 3 not in [r.item_index for r in got]


def test_empty_after_exclusion_returns_empty():
    stream = make_stream()
    add_item(stream)
    assert stream.rank_memories(basis_vector(8), 1, exclude={0}) == []


def test_access_times_updated_only_for_returned():
    stream = make_stream(4)
    rng = np.random.default_rng(3)
    for _ in range(8):
        vec = rng.normal(size=4)
        add_item(stream, embedding=vec / np.linalg.norm(vec))
    config = RetrievalConfig(k=3)
    got = stream.rank_memories(basis_vector(4), 10, config)
    returned = {r.item_index for r in got}
    for item in stream.items():
        if item.index in returned:
            assert item.last_accessed_turn == 10
        else:
            assert item.last_accessed_turn == item.index


def test_scores_computed_before_access_update():
    stream = make_stream()
    add_item(stream)
    [ranked] = stream.rank_memories(basis_vector(8), 5)
    # gap was 5 at scoring time even though the item is now touched at 5
    assert ranked.recency_score == pytest.approx(0.995**5)
    assert stream.get(0).last_accessed_turn == 5


def test_rank_decomposition_exact():
    stream = make_stream(16)
    rng = np.random.default_rng(7)
    for _ in range(20):
        vec = rng.normal(size=16)
        add_item(stream, embedding=vec / np.linalg.norm(vec))
    query = rng.normal(size=16)
    query /= np.linalg.norm(query)
    for ranked in stream.rank_memories(query, 25, RetrievalConfig(k=10)):
        assert ranked.rank_score == ranked.recency_score + ranked.relevance_score


def test_zero_gaps_reduce_to_relevance_order():
    stream = make_stream(16)
    rng = np.random.default_rng(11)
    for _ in range(12):
        vec = rng.normal(size=16)
        add_item(stream, embedding=vec / np.linalg.norm(vec))
    current = 11  # == last index, so every gap is zero at query time
    for item in stream.items():
        item.last_accessed_turn = current
    query = rng.normal(size=16)
    query /= np.linalg.norm(query)
    config = RetrievalConfig(k=10)
    got = stream.rank_memories(query, current, config)
    by_relevance = sorted(
        got, key=lambda r: (-r.relevance_score, -r.item_index)
    )
    assert [r.item_index for r in got] == [r.item_index for r in by_relevance]


def test_ranking_is_permutation_invariant():
    stream = make_stream(8)
    rng = np.random.default_rng(13)
    for _ in range(15):
        vec = rng.normal(size=8)
        add_item(stream, embedding=vec / np.linalg.norm(vec))
    query = rng.normal(size=8)
    query /= np.linalg.norm(query)
    baseline = stream.rank_memories(query, 20, RetrievalConfig(k=5))
    for item in stream.items():  # undo access updates
        item.last_accessed_turn = item.index
    random.Random(5).shuffle(stream._items)  # storage order must not matter
    shuffled = stream.rank_memories(query, 20, RetrievalConfig(k=5))
    stream._items.sort(key=lambda it: it.index)
    assert [(r.item_index, r.rank_score) for r in baseline] == [
        (r.item_index, r.rank_score) for r in shuffled
    ]


def test_brute_force_equivalence_small_streams():
    rng = np.random.default_rng(42)
    pyrng = random.Random(42)
    for _ in range(60):
        dim = pyrng.choice([4, 8, 16])
        stream = make_stream(dim)
        n = pyrng.randint(1, 50)
        for _ in range(n):
            vec = rng.normal(size=dim)
            add_item(stream, embedding=vec / np.linalg.norm(vec))
        current = n + pyrng.randint(0, 40)
        for item in stream.items():
            item.last_accessed_turn = item.index + pyrng.randint(0, current - item.index)
        config = RetrievalConfig(k=pyrng.randint(3, 10))
        exclude = {pyrng.randrange(n)} if pyrng.random() < 0.4 else set()
        query = rng.normal(size=dim)
        query /= np.linalg.norm(query)
        expected = brute_force_rank(stream.items(), query, current, config, exclude)
        got = stream.rank_memories(query, current, config, exclude)
        assert [(r.item_index, r.rank_score) for r in got] == [
            (r.item_index, r.rank_score) for r in expected
        ]


# -- flash memory -------------------------------------------------------------


def test_flash_none_at_turn_zero():
    assert make_stream().flash_memory(0) is None


def test_flash_returns_previous_turn():
    stream = make_stream()
    for _ in range(5):
        add_item(stream)
    assert stream.flash_memory(5).index == 4


def test_flash_exact_index_semantics():
    stream = make_stream()
    for _ in range(3):
        add_item(stream)  # stream has 0..2
    assert stream.flash_memory(5) is None


# -- persistence ----------------------------------------------------------------


def test_empty_stream_round_trip(tmp_path):
    stream = make_stream()
    path = tmp_path / "mem.jsonl"
    stream.persist(path)
    loaded = MemoryStream.load(path)
    assert len(loaded) == 0
    assert loaded.embedding_dim == 8


def test_round_trip_identity(tmp_path):
    stream = make_stream(16)
    rng = np.random.default_rng(23)
    for i in range(3):
        vec = rng.normal(size=16)
        stream.append_interaction(
            f"obs {i} with ünïcode", f"resp {i}", f"os {i}", f"rs {i}", vec / np.linalg.norm(vec)
        )
    stream.rank_memories(basis_vector(16), 7)  # perturb access times
    path = tmp_path / "mem.jsonl"
    stream.persist(path)
    loaded = MemoryStream.load(path)
    assert len(loaded) == 3
    for original, restored in zip(stream.items(), loaded.items()):
        assert restored.index == original.index
        assert restored.observation == original.observation
        assert restored.response == original.response
        assert restored.observation_summary == original.observation_summary
        assert restored.response_summary == original.response_summary
        assert restored.created_turn == original.created_turn
        assert restored.last_accessed_turn == original.last_accessed_turn
        assert restored.token_count_full == original.token_count_full
        assert restored.token_count_summary == original.token_count_summary
        assert np.array_equal(restored.embedding, original.embedding)  # bit-exact


def test_truncated_last_line_names_line_four(tmp_path):
    stream = make_stream()
    for i in range(3):
        add_item(stream, f"obs {i}")
    path = tmp_path / "mem.jsonl"
    stream.persist(path)
    raw = path.read_text(encoding="utf-8").rstrip("\n")
    path.write_text(raw[:-20] + "\n", encoding="utf-8")  # chop the last record
    with pytest.raises(PersistFormatError) as exc_info:
        MemoryStream.load(path)
    assert exc_info.value.line_number == 4
    assert "line 4" in str(exc_info.value)


def test_version_mismatch(tmp_path):
    path = tmp_path / "mem.jsonl"
    path.write_text('{"version": 99, "embedding_dim": 8}\n', encoding="utf-8")
    with pytest.raises(PersistVersionError):
        MemoryStream.load(path)


def test_bound_stream_persists_on_mutation(tmp_path):
    path = tmp_path / "bound.jsonl"
    stream = MemoryStream(8, persist_path=path)
    add_item(stream, "first")
    assert len(MemoryStream.load(path)) == 1
    add_item(stream, "second")
    stream.rank_memories(basis_vector(8), 4)
    reloaded = MemoryStream.load(path)
    assert len(reloaded) == 2
    assert {it.last_accessed_turn for it in reloaded.items()} == {4}


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(st.text(max_size=40), st.text(max_size=40)),
        min_size=0,
        max_size=6,
    )
)
def test_round_trip_identity_property(tmp_path_factory, pairs):
    stream = make_stream(8)
    for i, (obs, resp) in enumerate(pairs):
        stream.append_interaction(obs, resp, obs, resp, basis_vector(8, i % 8))
    path = tmp_path_factory.mktemp("prop") / "mem.jsonl"
    stream.persist(path)
    loaded = MemoryStream.load(path)
    assert [it.observation for it in loaded.items()] == [p[0] for p in pairs]
    assert [it.response for it in loaded.items()] == [p[1] for p in pairs]


def test_restore_access_times(tmp_path):
    stream = make_stream()
    for _ in range(4):
        add_item(stream)
    snapshot = stream.access_times()
    stream.rank_memories(basis_vector(8), 9)
    assert stream.access_times() != snapshot
    stream.restore_access_times(snapshot)
    assert stream.access_times() == snapshot


def test_retrieval_config_validation():
    with pytest.raises(SchemaError):
        RetrievalConfig(k=2)
    with pytest.raises(SchemaError):
        RetrievalConfig(k=11)
    with pytest.raises(SchemaError):
        RetrievalConfig(recency_decay=1.0)
    with pytest.raises(SchemaError):
        RetrievalConfig(relevance_normalization="raw")
