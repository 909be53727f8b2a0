import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mock_config
from hero2.gateway import DimensionMismatch, Gateway, ServerError, mock_backend
from hero2.retrieval import ExpandedQuery, expand_query, search, summarize_retrieved
from hero2.store import IndexedStore, SourceDocument, build_index
from hero2.types import Claim, EvidenceUnit, SegmentationStrategy

CLAIM = Claim("c1", "The moon is made of cheese.")


def store_from(vectors, dim=None) -> IndexedStore:
    units = tuple(
        EvidenceUnit("c1", f"u{i}", "document", f"doc {i}", (0, 0)) for i in range(len(vectors))
    )
    matrix = np.asarray(vectors, dtype=np.float64).reshape(len(vectors), dim or len(vectors[0]))
    return IndexedStore("c1", SegmentationStrategy.document(), units, matrix)


def brute_force_top_k(vectors, query, k):
    """Exhaustive scoring with plain Python floats, sorted by (-score, index)."""
    scored = [
        (-math.fsum(float(a) * float(b) for a, b in zip(row, query)), i)
        for i, row in enumerate(vectors)
    ]
    return [i for _, i in sorted(scored)[:k]]


# -- expansion ----------------------------------------------------------------


def test_expansion_disabled_uses_normalized_claim():
    config = mock_config(embedding=mock_backend(vectors={CLAIM.text: [3.0, 4.0]}, dimension=2))
    config = config.replace(expansion=False)
    hyde = Gateway(config.endpoint("hyde"))
    query = expand_query(CLAIM, hyde, Gateway(config.endpoint("embedding")), config)
    assert query.hypothetical_articles == ()
    assert np.array_equal(query.query_vector, np.array([0.6, 0.8]))
    assert hyde.mock.calls == []


def test_two_articles_mean_of_three_unit_vectors():
    vectors = {CLAIM.text: [2.0, 0.0, 0.0], "A1": [0.0, 5.0, 0.0], "A2": [0.0, 0.0, 0.5]}
    config = mock_config(
        hyde=mock_backend({"Claim:": ["A1", "A2"]}),
        embedding=mock_backend(vectors=vectors, dimension=3),
    ).replace(num_hypothetical_articles=2, stage_parallelism=1)
    query = expand_query(CLAIM, Gateway(config.endpoint("hyde")), Gateway(config.endpoint("embedding")), config)
    assert sorted(query.hypothetical_articles) == ["A1", "A2"]
    # unit vectors e1, e2, e3 -> mean (1/3, 1/3, 1/3) -> renormalized 1/sqrt(3) each
    expected = np.full(3, 1 / math.sqrt(3))
    assert np.allclose(query.query_vector, expected, atol=1e-12)


def test_articles_only_aggregation():
    vectors = {CLAIM.text: [1.0, 0.0], "A": [0.0, 2.0]}
    config = mock_config(
        hyde=mock_backend(default="A"), embedding=mock_backend(vectors=vectors, dimension=2)
    ).replace(num_hypothetical_articles=1, include_claim_in_query=False)
    query = expand_query(CLAIM, Gateway(config.endpoint("hyde")), Gateway(config.endpoint("embedding")), config)
    assert np.allclose(query.query_vector, [0.0, 1.0])


def test_hyde_decoding_on_the_wire():
    config = mock_config()
    hyde = Gateway(config.endpoint("hyde"))
    expand_query(CLAIM, hyde, Gateway(config.endpoint("embedding")), config)
    assert len(hyde.mock.calls) == 4
    body = hyde.mock.calls[0].body()
    assert (body["max_tokens"], body["temperature"], body["top_p"]) == (512, 0.7, 1.0)
    assert "top_k" not in body and "min_p" not in body
    assert CLAIM.text in hyde.mock.calls[0].prompt


def test_failed_generation_degrades_to_claim_only():
    config = mock_config(hyde=mock_backend({"Claim": ServerError("down")}))
    embed = Gateway(config.endpoint("embedding"))
    query = expand_query(CLAIM, Gateway(config.endpoint("hyde")), embed, config)
    plain = expand_query(CLAIM, None, Gateway(mock_backend()), config)
    assert query.hypothetical_articles == ()
    assert query.query_vector.tobytes() == plain.query_vector.tobytes()


# -- search -------------------------------------------------------------------


def test_top1_exact():
    store = store_from([[1.0, 0.0], [0.0, 1.0]])
    (hit,) = search(store, np.array([1.0, 0.0]), 1)
    assert hit.source_url == "u0" and hit.retrieval_score == 1.0


def test_k_larger_than_store_returns_all_sorted():
    store = store_from([[0.0, 1.0], [1.0, 0.0], [0.6, 0.8]])
    hits = search(store, np.array([1.0, 0.0]), 10)
    assert [h.source_url for h in hits] == ["u1", "u2", "u0"]


def test_ties_broken_by_insertion_order():
    store = store_from([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    hits = search(store, np.array([1.0, 0.0]), 4)
    assert [h.source_url for h in hits] == ["u1", "u3", "u0", "u2"]


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        search(store_from([[1.0, 0.0]]), np.array([1.0, 0.0, 0.0]), 1)


def test_matches_exhaustive_sort_on_random_store():
    rng = np.random.default_rng(3)
    raw = rng.standard_normal((200, 8))
    vectors = (raw / np.linalg.norm(raw, axis=1, keepdims=True)).astype(np.float32)
    query = rng.standard_normal(8)
    query /= np.linalg.norm(query)
    store = store_from(vectors)
    got = [int(h.source_url[1:]) for h in search(store, query, 10)]
    assert got == brute_force_top_k(vectors, query, 10)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2**32 - 1))
def test_ranking_properties(n, seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, 4))
    unit = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    hits = search(store_from(unit), rng.standard_normal(4), n)
    assert sorted(h.source_url for h in hits) == sorted(f"u{i}" for i in range(n))
    scores = [h.retrieval_score for h in hits]
    assert all(a >= b for a, b in zip(scores, scores[1:]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 100.0))
def test_ranking_invariant_to_raw_vector_scale(seed, scale):
    rng = np.random.default_rng(seed)
    docs = [SourceDocument("c1", f"u{i}", (f"doc {i}",)) for i in range(12)]
    raw = {f"doc {i}": rng.standard_normal(4) for i in range(12)}
    scaled = {text: v * scale for text, v in raw.items()}
    query = rng.standard_normal(4)
    config = mock_config()
    rankings = []
    for table in (raw, scaled):
        embedder = Gateway(mock_backend(vectors=table, dimension=4))
        store = build_index(docs, SegmentationStrategy.document(), embedder, config).store
        rankings.append([h.source_url for h in search(store, query, 12)])
    assert rankings[0] == rankings[1]


def test_expanded_query_accepted():
    store = store_from([[1.0, 0.0], [0.0, 1.0]])
    query = ExpandedQuery("x", (), np.array([0.0, 1.0]))
    assert search(store, query, 1)[0].source_url == "u1"


# -- post-retrieval summarization ---------------------------------------------


def units(n):
    return [EvidenceUnit("c1", f"u{i}", "document", f"TEXT_{i}", (0, 0), 1.0 - i / 10) for i in range(n)]


def test_summaries_replace_text_in_order():
    script = {f"TEXT_{i}": f"SUM_{i}" for i in range(10)}
    config = mock_config(summarize=mock_backend(script))
    out = summarize_retrieved(units(10), Gateway(config.endpoint("summarize")), config)
    assert [u.text for u in out] == [f"SUM_{i}" for i in range(10)]
    assert all(u.segment_kind == "summary" for u in out)
    assert [u.source_url for u in out] == [f"u{i}" for i in range(10)]
    assert [u.retrieval_score for u in out] == [u.retrieval_score for u in units(10)]


def test_one_failing_unit_passes_through():
    script = {"TEXT_3": ServerError("boom")}
    config = mock_config(summarize=mock_backend(script, default="SUM"))
    out = summarize_retrieved(units(10), Gateway(config.endpoint("summarize")), config)
    assert len(out) == 10
    assert sum(u.segment_kind == "summary" for u in out) == 9
    assert out[3].text == "TEXT_3" and out[3].segment_kind == "document"


def test_empty_input():
    config = mock_config()
    assert summarize_retrieved([], Gateway(config.endpoint("summarize")), config) == []


def test_index_time_summary_reused():
    config = mock_config()
    gateway = Gateway(config.endpoint("summarize"))
    out = summarize_retrieved(units(2), gateway, config, summaries={"u0": "PRE"})
    assert out[0].text == "PRE" and out[1].text == "SUMMARY"
    assert len(gateway.mock.calls) == 1
