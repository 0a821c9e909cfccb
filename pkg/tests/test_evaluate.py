import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkforge.corpus import LinkingDataset, LinkSet
from linkforge.errors import ContractError, DomainError
from linkforge.evaluate import (aggregate_dataset, evaluate_binary,
                                evaluate_rankings, f1_score, overall_average,
                                prf_for_source, true_recall_report)
from linkforge.retrieval import ScoredRanking

from conftest import make_pair


def test_prf_exact_match():
    assert prf_for_source({2, 5}, {2, 5}) == (1, 1, 1)


def test_prf_partial_overlap():
    p, r, f1 = prf_for_source({1, 2, 3}, {2, 5})
    assert (p, r, f1) == (F(1, 3), F(1, 2), F(2, 5))


def test_prf_empty_prediction():
    assert prf_for_source(set(), {2}) == (0, 0, 0)


def test_prf_empty_gold_is_domain_error():
    with pytest.raises(DomainError):
        prf_for_source({1}, set())


@given(st.sets(st.integers(0, 20), max_size=10),
       st.sets(st.integers(0, 20), min_size=1, max_size=10))
@settings(max_examples=150, deadline=None)
def test_prf_bounds_and_zero_condition(pred, gold):
    p, r, f1 = prf_for_source(pred, gold)
    assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f1 <= 1
    assert f1 <= max(p, r)
    assert (f1 == 0) == (len(pred & gold) == 0)


@given(st.lists(st.integers(0, 30), min_size=1, max_size=20, unique=True),
       st.sets(st.integers(0, 30), min_size=1, max_size=10),
       st.integers(1, 20), st.integers(1, 20))
@settings(max_examples=150, deadline=None)
def test_recall_monotone_in_k_for_prefixes(ranked, gold, k1, k2):
    lo, hi = sorted((k1, k2))
    _, r_lo, _ = prf_for_source(set(ranked[:lo]), gold)
    _, r_hi, _ = prf_for_source(set(ranked[:hi]), gold)
    assert r_lo <= r_hi


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def test_aggregate_singleton_is_identity():
    triple = (F(1, 2), F(1, 3), F(2, 5))
    report = aggregate_dataset({3: [triple]})
    m = report.per_cutoff[0]
    assert (m.precision, m.recall, m.f1) == triple
    assert report.avg_f1 == F(2, 5)


def test_aggregate_means_f1s():
    report = aggregate_dataset({1: [(F(1), F(1), F(2, 5)), (F(1), F(1), F(3, 5))]})
    assert report.per_cutoff[0].f1 == F(1, 2)


def test_aggregate_is_per_source_then_mean_not_harmonic_of_aggregates():
    # two sources whose macro P and R would give a different harmonic mean
    triples = [prf_for_source({1}, {1, 2, 3}), prf_for_source({4, 5, 6, 7}, {4})]
    report = aggregate_dataset({1: triples})
    m = report.per_cutoff[0]
    assert m.f1 == (triples[0][2] + triples[1][2]) / 2
    assert m.f1 != f1_score(m.precision, m.recall)


def test_aggregate_empty_is_domain_error():
    with pytest.raises(DomainError):
        aggregate_dataset({})
    with pytest.raises(DomainError):
        aggregate_dataset({1: []})


def test_aggregate_mismatched_counts_is_contract_error():
    t = (F(1), F(1), F(1))
    with pytest.raises(ContractError):
        aggregate_dataset({1: [t, t], 3: [t]})


def test_aggregate_recall_at_unknown_cutoff_is_contract_error():
    t = (F(1), F(1), F(1))
    with pytest.raises(ContractError):
        aggregate_dataset({1: [t]}, recall_at=10)


def test_overall_average_reference_rows():
    dragon = overall_average([42.42, 36.99, 21.11, 31.51])
    minilm = overall_average([41.88, 36.71, 21.26, 31.88])
    assert round(float(dragon), 2) == 33.01
    assert round(float(minilm), 2) == 32.93


def test_overall_average_identity_and_empty():
    assert overall_average([F(7, 2)]) == F(7, 2)
    with pytest.raises(DomainError):
        overall_average([])


# ---------------------------------------------------------------------------
# true recall against an exhaustive subset
# ---------------------------------------------------------------------------

def test_true_recall_oracle_method_is_perfect():
    gold = LinkSet("p", frozenset({(0, 1), (0, 2), (3, 4)}))
    report = true_recall_report({"oracle": gold}, gold)
    assert report["oracle"] == (1, 1, 1)


def test_true_recall_random_method_scores_zero():
    gold = LinkSet("p", frozenset({(0, 1), (3, 4)}))
    miss = LinkSet("p", frozenset({(0, 7), (3, 9)}))
    assert true_recall_report({"random": miss}, gold)["random"] == (0, 0, 0)


def test_true_recall_macro_averages_per_source():
    # source 0: P=1, R=1/2;  source 1: P=1/2, R=1
    gold = LinkSet("p", frozenset({(0, 1), (0, 2), (1, 5)}))
    pred = LinkSet("p", frozenset({(0, 1), (1, 5), (1, 6)}))
    p, r, _ = true_recall_report({"m": pred}, gold)["m"]
    assert p == F(3, 4) and r == F(3, 4)


def test_true_recall_warns_and_excludes_stray_sources(caplog):
    gold = LinkSet("p", frozenset({(0, 1)}))
    pred = LinkSet("p", frozenset({(0, 1), (9, 9)}))
    report = true_recall_report({"m": pred}, gold)
    assert report["m"] == (1, 1, 1)
    assert any("outside the gold subset" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# dataset harnesses
# ---------------------------------------------------------------------------

def _ranked(source_idx, order):
    n = len(order)
    return ScoredRanking(source_idx, tuple((t, float(n - i)) for i, t in enumerate(order)))


def test_evaluate_rankings_counts_excluded_sources(tiny_dataset):
    rankings = {
        pair.pair_id: {s.index: _ranked(s.index, list(range(len(pair.target))))
                       for s in pair.source.sentences}
        for pair, _ in tiny_dataset.pairs
    }
    report, rows = evaluate_rankings(tiny_dataset, rankings, cutoffs=(1, 3), recall_at=3)
    assert report.n_eligible_sources == 4
    assert report.n_excluded_sources == 0
    assert len(rows) == 4
    assert report.recall_at_fixed[0] == 3


def test_evaluate_rankings_missing_ranking_is_contract_error(tiny_dataset):
    with pytest.raises(ContractError):
        evaluate_rankings(tiny_dataset, {}, cutoffs=(1,))


def test_evaluate_binary_macro(tiny_dataset):
    predictions = {}
    for pair, gold in tiny_dataset.pairs:
        predictions[pair.pair_id] = {
            i: set(gold.targets_for(i)) for i in gold.source_indices()
        }
    macro, rows, n_eligible, n_excluded = evaluate_binary(tiny_dataset, predictions)
    assert macro == (1, 1, 1)
    assert n_eligible == len(rows) == 4


def test_evaluate_binary_zero_link_sources_excluded():
    pair = make_pair("p", ["linked source sentence here.", "unlinked source sentence here."],
                     ["target zero text.", "target one text."], [(0, 0)])
    ds = LinkingDataset("d", "other", [pair])
    macro, rows, n_eligible, n_excluded = evaluate_binary(ds, {"p": {0: {0}}})
    assert n_eligible == 1 and n_excluded == 1
    assert macro == (1, 1, 1)


# ---------------------------------------------------------------------------
# oracle equivalence on random instances (small copy; full size in acceptance)
# ---------------------------------------------------------------------------

def brute_force_macro(per_source, cutoffs):
    """Independent re-computation from raw sets using plain counting."""
    out = {}
    for k in cutoffs:
        ps, rs, fs = [], [], []
        for pred_by_k, gold in per_source:
            pred = pred_by_k[k]
            inter = len(pred & gold)
            p = F(inter, len(pred)) if pred else F(0)
            r = F(inter, len(gold))
            f = F(0) if p + r == 0 else F(2) * p * r / (p + r)
            ps.append(p)
            rs.append(r)
            fs.append(f)
        out[k] = (sum(ps) / len(ps), sum(rs) / len(rs), sum(fs) / len(fs))
    return out


def test_aggregate_matches_brute_force_on_random_instances():
    rng = random.Random(99)
    cutoffs = (1, 3, 5)
    for _ in range(100):
        n_sources = rng.randint(1, 10)
        per_source = []
        for _ in range(n_sources):
            ranked = rng.sample(range(30), rng.randint(5, 20))
            gold = set(rng.sample(range(30), rng.randint(1, 8)))
            per_source.append(({k: set(ranked[:k]) for k in cutoffs}, gold))
        grouped = {
            k: [prf_for_source(pred_by_k[k], gold) for pred_by_k, gold in per_source]
            for k in cutoffs
        }
        report = aggregate_dataset(grouped)
        expected = brute_force_macro(per_source, cutoffs)
        for m in report.per_cutoff:
            assert (m.precision, m.recall, m.f1) == expected[m.k]
        assert report.avg_f1 == sum(expected[k][2] for k in cutoffs) / len(cutoffs)
