"""Scoring of predicted links against gold links.

Metrics are macro-averaged: precision/recall/F1 are computed per source
sentence (over sentences with at least one gold link), then averaged over
those sentences, then over cutoffs, then over datasets. All arithmetic is
exact (fractions); rounding happens only at display time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .corpus import LinkingDataset, LinkSet
from .errors import ContractError, DomainError
from .retrieval import ScoredRanking

log = logging.getLogger(__name__)

DEFAULT_CUTOFFS = (1, 3, 5, 7, 10, 20)

Triple = tuple[Fraction, Fraction, Fraction]


@dataclass(frozen=True)
class MetricsAtK:
    k: int
    precision: Fraction
    recall: Fraction
    f1: Fraction


@dataclass(frozen=True)
class EvalReport:
    per_cutoff: tuple[MetricsAtK, ...]
    avg_f1: Fraction
    recall_at_fixed: tuple[int, Fraction]
    n_eligible_sources: int = 0
    n_excluded_sources: int = 0


def f1_score(precision: Fraction, recall: Fraction) -> Fraction:
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def prf_for_source(predicted: set[int], gold: set[int]) -> Triple:
    """Precision/recall/F1 of one source sentence's predicted targets."""
    if not gold:
        raise DomainError("gold set is empty; sources without gold links are excluded")
    hits = len(predicted & gold)
    precision = Fraction(hits, len(predicted)) if predicted else Fraction(0)
    recall = Fraction(hits, len(gold))
    return precision, recall, f1_score(precision, recall)


def _mean(values: Sequence[Fraction]) -> Fraction:
    return Fraction(sum(values), len(values))


def aggregate_dataset(per_source: Mapping[int, Sequence[Triple]],
                      recall_at: int | None = None,
                      n_excluded: int = 0) -> EvalReport:
    """Macro-average per-source triples, grouped by cutoff.

    Per-cutoff metrics are means of the per-source values (so the reported
    F1 is the mean of per-source F1s, not the harmonic mean of the
    aggregate P and R). ``avg_f1`` averages the per-cutoff F1s.
    """
    if not per_source:
        raise DomainError("no cutoffs to aggregate")
    cutoffs = sorted(per_source)
    counts = {len(per_source[k]) for k in cutoffs}
    if counts == {0}:
        raise DomainError("no eligible source sentences")
    if len(counts) != 1:
        raise ContractError(f"cutoffs disagree on source count: {sorted(counts)}")
    per_cutoff = []
    for k in cutoffs:
        triples = per_source[k]
        per_cutoff.append(MetricsAtK(
            k,
            _mean([t[0] for t in triples]),
            _mean([t[1] for t in triples]),
            _mean([t[2] for t in triples]),
        ))
    avg_f1 = _mean([m.f1 for m in per_cutoff])
    fixed_k = recall_at if recall_at is not None else cutoffs[-1]
    by_k = {m.k: m for m in per_cutoff}
    if fixed_k not in by_k:
        raise ContractError(f"recall cutoff {fixed_k} not among computed cutoffs {cutoffs}")
    return EvalReport(tuple(per_cutoff), avg_f1, (fixed_k, by_k[fixed_k].recall),
                      n_eligible_sources=counts.pop(), n_excluded_sources=n_excluded)


def overall_average(per_dataset_avg_f1: Sequence[Fraction | float | str]) -> Fraction:
    """Arithmetic mean of per-dataset average F1 values, exact."""
    if not per_dataset_avg_f1:
        raise DomainError("no datasets to average")
    values = [v if isinstance(v, Fraction) else Fraction(str(v)) for v in per_dataset_avg_f1]
    return _mean(values)


def true_recall_report(predictions_by_method: Mapping[str, LinkSet],
                       exhaustive_gold: LinkSet) -> dict[str, Triple]:
    """Score methods against an exhaustively labeled gold subset.

    Metrics are macro-averaged over the gold subset's source sentences only;
    predictions for other sources are dropped with a warning.
    """
    gold_sources = sorted(exhaustive_gold.source_indices())
    if not gold_sources:
        raise DomainError("exhaustive gold subset is empty")
    out: dict[str, Triple] = {}
    for method, predicted in predictions_by_method.items():
        stray = predicted.source_indices() - set(gold_sources)
        if stray:
            log.warning("method %s predicts for sources %s outside the gold subset; excluded",
                        method, sorted(stray))
        triples = [
            prf_for_source(predicted.targets_for(i), exhaustive_gold.targets_for(i))
            for i in gold_sources
        ]
        out[method] = (
            _mean([t[0] for t in triples]),
            _mean([t[1] for t in triples]),
            _mean([t[2] for t in triples]),
        )
    return out


# ---------------------------------------------------------------------------
# Dataset-level harnesses
# ---------------------------------------------------------------------------

def evaluate_rankings(ds: LinkingDataset,
                      rankings: Mapping[str, Mapping[int, ScoredRanking]],
                      cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
                      recall_at: int | None = None) -> tuple[EvalReport, list[dict]]:
    """Sweep cutoffs over per-source rankings for a whole dataset.

    Returns the aggregated report plus machine-readable per-source rows.
    """
    per_source: dict[int, list[Triple]] = {k: [] for k in cutoffs}
    rows: list[dict] = []
    n_excluded = 0
    for pair, gold in ds.pairs:
        pair_rankings = rankings.get(pair.pair_id, {})
        for sent in pair.source.sentences:
            gold_targets = gold.targets_for(sent.index)
            if not gold_targets:
                n_excluded += 1
                continue
            ranking = pair_rankings.get(sent.index)
            if ranking is None:
                raise ContractError(
                    f"no ranking for pair {pair.pair_id!r} source {sent.index}"
                )
            row_metrics = {}
            for k in cutoffs:
                triple = prf_for_source(set(ranking.top(k)), gold_targets)
                per_source[k].append(triple)
                row_metrics[str(k)] = [float(x) for x in triple]
            rows.append({"pair_id": pair.pair_id, "source_idx": sent.index,
                         "metrics": row_metrics})
    report = aggregate_dataset(per_source, recall_at, n_excluded)
    return report, rows


def evaluate_binary(ds: LinkingDataset,
                    predictions: Mapping[str, Mapping[int, set[int]]]
                    ) -> tuple[Triple, list[dict], int, int]:
    """Score fixed (non-ranked) predictions, e.g. LLM-refined link sets."""
    triples: list[Triple] = []
    rows: list[dict] = []
    n_excluded = 0
    for pair, gold in ds.pairs:
        pair_preds = predictions.get(pair.pair_id, {})
        for sent in pair.source.sentences:
            gold_targets = gold.targets_for(sent.index)
            if not gold_targets:
                n_excluded += 1
                continue
            predicted = set(pair_preds.get(sent.index, set()))
            triple = prf_for_source(predicted, gold_targets)
            triples.append(triple)
            rows.append({"pair_id": pair.pair_id, "source_idx": sent.index,
                         "metrics": [float(x) for x in triple]})
    if not triples:
        raise DomainError("no eligible source sentences")
    macro = (_mean([t[0] for t in triples]), _mean([t[1] for t in triples]),
             _mean([t[2] for t in triples]))
    return macro, rows, len(triples), n_excluded


def _pct(x: Fraction) -> float:
    return round(float(x) * 100.0, 2)


def render_sweep_report(name: str, report: EvalReport, rows: list[dict]) -> dict:
    """JSON-ready report in the benchmark-table shape (values as percentages)."""
    return {
        "kind": "cutoff_sweep",
        "dataset": name,
        "eligible_sources": report.n_eligible_sources,
        "excluded_sources": report.n_excluded_sources,
        "cutoffs": [
            {"k": m.k, "precision": _pct(m.precision), "recall": _pct(m.recall),
             "f1": _pct(m.f1)}
            for m in report.per_cutoff
        ],
        "avg_f1": _pct(report.avg_f1),
        "recall_at": {"k": report.recall_at_fixed[0],
                      "recall": _pct(report.recall_at_fixed[1])},
        "per_source": rows,
    }


def render_binary_report(name: str, macro: Triple, rows: list[dict],
                         n_eligible: int, n_excluded: int) -> dict:
    return {
        "kind": "binary",
        "dataset": name,
        "eligible_sources": n_eligible,
        "excluded_sources": n_excluded,
        "precision": _pct(macro[0]),
        "recall": _pct(macro[1]),
        "f1": _pct(macro[2]),
        "per_source": rows,
    }
