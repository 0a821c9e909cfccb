import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkforge.clients import EmbeddingCache, EmbeddingClient
from linkforge.corpus import Document, Sentence
from linkforge.errors import (DomainError, IntegrityError, TransportError,
                              ValidationError)
from linkforge.retrieval import (Bm25Scorer, RetrievalConfig, ScoredRanking,
                                 bm25_score_targets, dense_rank_pair,
                                 embed_batch, rank_by_cosine, threshold_topk,
                                 tokenize)
from linkforge.stubs import StubServer, embedding_handler, failing_handler

from conftest import make_pair


# ---------------------------------------------------------------------------
# independent BM25 oracle: direct formula evaluation, separate code path
# ---------------------------------------------------------------------------

def bm25_oracle(query_tokens, docs_tokens, k1=1.2, b=0.75):
    n = len(docs_tokens)
    avgdl = sum(len(d) for d in docs_tokens) / n
    scores = []
    for doc in docs_tokens:
        total = 0.0
        for t in query_tokens:
            tf = doc.count(t)
            if tf == 0:
                continue
            df = sum(1 for other in docs_tokens if t in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len(doc) / avgdl))
        scores.append(total)
    return scores


FIXTURE_TARGETS = ["the cat sat", "dogs bark", "cat videos"]


def test_bm25_fixture_scores_and_order():
    doc = Document.from_texts("t", "target", FIXTURE_TARGETS)
    ranking = bm25_score_targets(Sentence(0, "cat"), doc)
    assert [idx for idx, _ in ranking.ranked] == [2, 0, 1]
    scores = dict(ranking.ranked)
    # hand evaluation: idf = ln(1.6); dl 3 and 2 against avgdl 7/3
    idf = math.log(1.6)
    expected_d0 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 3 / (7 / 3)))
    expected_d2 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2 / (7 / 3)))
    assert scores[0] == pytest.approx(expected_d0, abs=1e-9)
    assert scores[2] == pytest.approx(expected_d2, abs=1e-9)
    assert scores[2] == pytest.approx(0.4992, abs=5e-5)
    assert scores[0] == pytest.approx(0.4208, abs=5e-5)


def test_bm25_no_overlap_keeps_document_order():
    doc = Document.from_texts("t", "target", ["alpha beta", "gamma delta", "epsilon"])
    ranking = bm25_score_targets(Sentence(0, "zeta"), doc)
    assert [idx for idx, _ in ranking.ranked] == [0, 1, 2]
    assert all(score == 0.0 for _, score in ranking.ranked)


def test_bm25_identical_targets_tie_break_by_index():
    doc = Document.from_texts("t", "target", ["same words here", "other thing", "same words here"])
    ranking = bm25_score_targets(Sentence(0, "same words"), doc)
    assert ranking.ranked[0][0] == 0 and ranking.ranked[1][0] == 2
    assert ranking.ranked[0][1] == ranking.ranked[1][1]


VOCAB = ["apple", "bear", "cat", "dog", "eel", "fox"]


def test_bm25_matches_oracle_on_random_micro_corpora():
    rng = random.Random(421)
    for _ in range(200):
        n_docs = rng.randint(1, 8)
        docs = [[rng.choice(VOCAB) for _ in range(rng.randint(1, 6))] for _ in range(n_docs)]
        query = [rng.choice(VOCAB) for _ in range(rng.randint(1, 4))]
        k1 = rng.choice([0.5, 1.2, 2.0])
        b = rng.choice([0.0, 0.4, 0.75, 1.0])
        scorer = Bm25Scorer([" ".join(d) for d in docs], k1=k1, b=b)
        got = scorer.scores(" ".join(query))
        want = bm25_oracle(query, docs, k1=k1, b=b)
        for g, w in zip(got, want):
            assert g == pytest.approx(w, abs=1e-9)


def test_retrieval_config_validation():
    with pytest.raises(ValidationError):
        RetrievalConfig(method="sparse")
    with pytest.raises(ValidationError):
        RetrievalConfig(k1=0.0)
    with pytest.raises(ValidationError):
        RetrievalConfig(b=1.5)


# ---------------------------------------------------------------------------
# ranking type invariants
# ---------------------------------------------------------------------------

def test_ranking_rejects_duplicate_targets():
    with pytest.raises(ValidationError):
        ScoredRanking(0, ((1, 0.5), (1, 0.4)))


def test_ranking_rejects_increasing_scores():
    with pytest.raises(ValidationError):
        ScoredRanking(0, ((1, 0.5), (2, 0.9)))


def test_ranking_rejects_ties_out_of_index_order():
    with pytest.raises(ValidationError):
        ScoredRanking(0, ((5, 0.5), (2, 0.5)))


@given(st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=1, max_size=12))
@settings(max_examples=100, deadline=None)
def test_from_scores_builds_a_permutation(scores):
    ranking = ScoredRanking.from_scores(3, scores)
    assert sorted(idx for idx, _ in ranking.ranked) == list(range(len(scores)))


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def test_embed_batch_empty_is_empty():
    client = EmbeddingClient("http://unused.invalid", "m", retries=0, backoff=0)
    assert embed_batch([], client) == []


def test_embed_batch_serves_cache_without_network(tmp_path):
    with StubServer(embedding_handler()) as server:
        client = EmbeddingClient(server.url, "m", backoff=0)
        cache = EmbeddingCache(tmp_path / "cache")
        first = embed_batch(["hello world", "second text"], client, cache)
        assert server.request_count == 1
        second = embed_batch(["hello world", "second text"], client, cache)
        assert server.request_count == 1  # all cached, zero new requests
    assert first == second


def test_embed_batch_deduplicates_within_one_call(tmp_path):
    with StubServer(embedding_handler()) as server:
        client = EmbeddingClient(server.url, "m", backoff=0)
        out = embed_batch(["same", "same", "same"], client)
        assert server.request_count == 1
        assert server.requests[0]["input"] == ["same"]
    assert out[0] == out[1] == out[2]


def test_embed_batch_mixed_dimensions_is_integrity_error():
    def mixed(payload):
        return {"data": [
            {"index": i, "embedding": [1.0] * (3 if i == 0 else 4)}
            for i in range(len(payload["input"]))
        ]}
    with StubServer(mixed) as server:
        client = EmbeddingClient(server.url, "m", backoff=0)
        with pytest.raises(IntegrityError):
            embed_batch(["a", "b"], client)


def test_embedding_client_retries_then_succeeds():
    with StubServer(failing_handler(1, embedding_handler())) as server:
        client = EmbeddingClient(server.url, "m", retries=1, backoff=0)
        assert len(client.embed(["text"])) == 1


def test_embedding_client_transport_error_after_retries():
    with StubServer(failing_handler(10, embedding_handler())) as server:
        client = EmbeddingClient(server.url, "m", retries=1, backoff=0)
        with pytest.raises(TransportError):
            client.embed(["text"])


# ---------------------------------------------------------------------------
# cosine
# ---------------------------------------------------------------------------

def test_cosine_identical_direction():
    assert rank_by_cosine((1, 0), [(1, 0)]).ranked[0][1] == pytest.approx(1.0)


def test_cosine_45_degrees():
    r = rank_by_cosine((1, 0), [(math.sqrt(2) / 2, math.sqrt(2) / 2)])
    assert r.ranked[0][1] == pytest.approx(0.7071, abs=1e-4)


def test_cosine_orthogonal():
    assert rank_by_cosine((1, 0), [(0, 1)]).ranked[0][1] == pytest.approx(0.0)


def test_cosine_zero_norm_is_domain_error():
    with pytest.raises(DomainError):
        rank_by_cosine((0, 0), [(1, 0)])
    with pytest.raises(DomainError):
        rank_by_cosine((1, 0), [(0, 0)])


@given(
    st.lists(st.lists(st.floats(-3, 3), min_size=3, max_size=3), min_size=1, max_size=6),
    st.floats(min_value=0.01, max_value=50),
)
@settings(max_examples=100, deadline=None)
def test_cosine_invariant_under_positive_scaling(vecs, scale):
    source = [1.0, 0.5, -0.25]
    targets = [v if math.sqrt(sum(x * x for x in v)) > 1e-3 else [1.0, 0.0, 0.0]
               for v in vecs]
    base = rank_by_cosine(source, targets)
    scaled = rank_by_cosine([scale * x for x in source],
                            [[scale * x for x in v] for v in targets])
    scores = {i: s for i, s in base.ranked}
    for (_, a), (_, b) in zip(base.ranked, scaled.ranked):
        assert a == pytest.approx(b, abs=1e-12)
    # ordering is stable wherever scores are not effectively tied (exact ties
    # may legitimately reorder within the 1e-12 score tolerance)
    separated = all(abs(scores[i] - scores[j]) > 1e-9
                    for i in scores for j in scores if i < j)
    if separated:
        assert [i for i, _ in base.ranked] == [i for i, _ in scaled.ranked]


def test_dense_rank_pair_orders_by_similarity(tmp_path):
    pair, _ = make_pair("p", ["shared words appear here."],
                        ["shared words appear here too.", "completely different content."],
                        [])
    with StubServer(embedding_handler()) as server:
        client = EmbeddingClient(server.url, "m", backoff=0)
        rankings = dense_rank_pair(pair, client, EmbeddingCache(tmp_path / "c"))
    assert rankings[0].ranked[0][0] == 0  # overlapping sentence ranks first


# ---------------------------------------------------------------------------
# thresholding
# ---------------------------------------------------------------------------

def test_threshold_saturates_at_document_size():
    r = ScoredRanking.from_scores(4, [0.3, 0.1, 0.2])
    assert threshold_topk(r, 50).links == {(4, 0), (4, 1), (4, 2)}


def test_threshold_takes_ranking_prefix():
    r = ScoredRanking(7, ((5, 0.9), (2, 0.8), (9, 0.7)))
    assert threshold_topk(r, 2).links == {(7, 5), (7, 2)}


def test_threshold_k1_yields_single_link():
    r = ScoredRanking.from_scores(0, [0.5, 0.9])
    assert len(threshold_topk(r, 1).links) == 1


def test_threshold_rejects_nonpositive_k():
    r = ScoredRanking.from_scores(0, [0.5])
    with pytest.raises(DomainError):
        threshold_topk(r, 0)


@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=15),
       st.integers(1, 15), st.integers(1, 15))
@settings(max_examples=150, deadline=None)
def test_threshold_nesting(scores, k_small, k_big):
    lo, hi = sorted((k_small, k_big))
    r = ScoredRanking.from_scores(0, scores)
    assert threshold_topk(r, lo).links <= threshold_topk(r, hi).links


def test_tokenize_is_lowercase_alnum():
    assert tokenize("It's BM25-ready, v2!") == ["it", "s", "bm25", "ready", "v2"]


def test_embed_batch_concurrent_chunks_stay_aligned(tmp_path):
    texts = [f"text number {i} here" for i in range(17)]
    with StubServer(embedding_handler()) as server:
        client = EmbeddingClient(server.url, "m", backoff=0)
        sequential = embed_batch(list(texts), client, batch_size=4, max_in_flight=1)
        concurrent = embed_batch(list(texts), client, batch_size=4, max_in_flight=4)
    assert concurrent == sequential
    assert [len(v) for v in concurrent] == [32] * 17
