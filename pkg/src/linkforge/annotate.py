"""Assisted-labeling support: candidate bundles and agreement analytics.

For each eligible source sentence, the top candidates of two link-suggestion
methods are merged (tagged with which method proposed them) and padded with
random distractors. Humans accept or reject each candidate; analytics break
acceptance down by suggestion method and measure chance-corrected agreement.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .corpus import Document, LinkSet, word_tokens
from .errors import AssemblyError, ContractError, ValidationError
from .retrieval import ScoredRanking

METHOD_FLAGS = ("rllm", "retriever")
CATEGORIES = ("rllm-only", "retriever-only", "both", "random")

# (n_rllm, n_retr, n_random) per domain
ASSEMBLY_PRESETS = {
    "reviews": (3, 3, 2),
    "news": (2, 2, 1),
}


@dataclass(frozen=True)
class Provenance:
    """Which suggestion method(s) produced a candidate."""

    flags: frozenset[str]

    def __post_init__(self):
        if not self.flags:
            raise ValidationError("provenance flags must be non-empty")
        unknown = self.flags - {"rllm", "retriever", "random"}
        if unknown:
            raise ValidationError(f"unknown provenance flags {sorted(unknown)}")
        if "random" in self.flags and len(self.flags) > 1:
            raise ValidationError("random provenance excludes method flags")

    @property
    def category(self) -> str:
        if self.flags == {"random"}:
            return "random"
        if self.flags == {"rllm", "retriever"}:
            return "both"
        return "rllm-only" if "rllm" in self.flags else "retriever-only"


@dataclass(frozen=True)
class AssemblyConfig:
    n_rllm: int
    n_retr: int
    n_random: int

    @classmethod
    def preset(cls, domain: str) -> "AssemblyConfig":
        if domain not in ASSEMBLY_PRESETS:
            raise ValidationError(f"no assembly preset for domain {domain!r}")
        return cls(*ASSEMBLY_PRESETS[domain])

    @property
    def max_size(self) -> int:
        return self.n_rllm + self.n_retr + self.n_random


@dataclass(frozen=True)
class CandidateBundle:
    """One annotation task: a source sentence and its tagged candidates."""

    pair_id: str
    source_idx: int
    candidates: tuple[tuple[int, Provenance], ...]
    seed: int | None = None

    def __post_init__(self):
        ids = [t for t, _ in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate candidate targets in bundle: {ids}")

    def target_indices(self) -> list[int]:
        return [t for t, _ in self.candidates]


@dataclass(frozen=True)
class Decision:
    annotator_id: str
    pair_id: str
    source_idx: int
    target_idx: int
    accepted: bool
    timestamp: str = ""

    @property
    def key(self) -> tuple[str, str, int, int]:
        return (self.annotator_id, self.pair_id, self.source_idx, self.target_idx)


@dataclass(frozen=True)
class AgreementReport:
    kappa: Fraction | None   # None when expected agreement is 1 (kappa undefined)
    observed_agreement: Fraction
    n_items: int


@dataclass(frozen=True)
class CategoryBreakdown:
    shown: int
    accepted_by_all: int
    rate: Fraction | None
    per_annotator: dict[str, Fraction | None] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Source eligibility
# ---------------------------------------------------------------------------

# Explicit locator like "Figure 3", "line 12", "Eq. (5)", "Table A1", "Section 3.2";
# such sentences resolve trivially and are excluded from annotation.
_EXPLICIT_REF = re.compile(
    r"\b(line|figure|fig|table|section|eq|equation|appendix)\b[.\s:]*\(?\s*[A-Za-z]?\d[\w.]*\)?",
    re.IGNORECASE,
)

MIN_SOURCE_WORDS = 4


def eligible_sources(doc: Document) -> list[int]:
    """Source sentences worth annotating: long enough and not explicit references."""
    out = []
    for sent in doc.sentences:
        if len(word_tokens(sent.text)) < MIN_SOURCE_WORDS:
            continue
        if _EXPLICIT_REF.search(sent.text):
            continue
        out.append(sent.index)
    return out


# ---------------------------------------------------------------------------
# Candidate assembly
# ---------------------------------------------------------------------------

def assemble_candidates(pair_id: str, source_idx: int, rllm_rank: ScoredRanking,
                        retr_rank: ScoredRanking, cfg: AssemblyConfig,
                        rng_seed: int) -> CandidateBundle:
    """Merge method top lists and add seeded random distractors.

    A target proposed by both methods appears once carrying both flags.
    Distractors are sampled uniformly from target sentences outside both
    contributing top lists; the seed is recorded in the bundle for replay.
    """
    if rllm_rank.source_idx != source_idx or retr_rank.source_idx != source_idx:
        raise ContractError(
            f"rankings are for sources {rllm_rank.source_idx}/{retr_rank.source_idx}, "
            f"expected {source_idx}"
        )
    rllm_top = rllm_rank.top(cfg.n_rllm)
    retr_top = retr_rank.top(cfg.n_retr)
    flagged: dict[int, set[str]] = {}
    for t in rllm_top:
        flagged.setdefault(t, set()).add("rllm")
    for t in retr_top:
        flagged.setdefault(t, set()).add("retriever")

    universe = {idx for idx, _ in retr_rank.ranked} | {idx for idx, _ in rllm_rank.ranked}
    pool = sorted(universe - set(rllm_top) - set(retr_top))
    if len(pool) < cfg.n_random:
        raise AssemblyError(
            f"pair {pair_id!r} source {source_idx}: only {len(pool)} targets available "
            f"for {cfg.n_random} distractors"
        )
    distractors = random.Random(rng_seed).sample(pool, cfg.n_random)

    candidates = [(t, Provenance(frozenset(flags))) for t, flags in flagged.items()]
    candidates.extend((t, Provenance(frozenset({"random"}))) for t in distractors)
    candidates.sort(key=lambda c: c[0])
    return CandidateBundle(pair_id, source_idx, tuple(candidates), seed=rng_seed)


# ---------------------------------------------------------------------------
# Analytics
# ---------------------------------------------------------------------------

def acceptance_breakdown(decisions: Iterable[Decision],
                         bundles: Sequence[CandidateBundle]
                         ) -> dict[str, CategoryBreakdown]:
    """Acceptance rates per suggestion category.

    A candidate counts as accepted when every annotator in the decision set
    accepted it (the consensus convention); per-annotator rates are reported
    alongside, over the candidates that annotator actually decided.
    """
    provenance: dict[tuple[str, int, int], Provenance] = {}
    for bundle in bundles:
        for t, prov in bundle.candidates:
            provenance[(bundle.pair_id, bundle.source_idx, t)] = prov

    votes: dict[tuple[str, int, int], dict[str, bool]] = {}
    annotators: set[str] = set()
    for d in decisions:
        cand = (d.pair_id, d.source_idx, d.target_idx)
        if cand not in provenance:
            raise ValidationError(
                f"decision by {d.annotator_id!r} references unknown candidate {cand}"
            )
        votes.setdefault(cand, {})[d.annotator_id] = d.accepted
        annotators.add(d.annotator_id)

    out = {}
    for category in CATEGORIES:
        members = [c for c, prov in provenance.items() if prov.category == category]
        shown = len(members)
        accepted_by_all = sum(
            1 for c in members
            if annotators and all(votes.get(c, {}).get(a, False) for a in annotators)
        )
        per_annotator: dict[str, Fraction | None] = {}
        for a in sorted(annotators):
            decided = [c for c in members if a in votes.get(c, {})]
            accepted = sum(1 for c in decided if votes[c][a])
            per_annotator[a] = Fraction(accepted, len(decided)) if decided else None
        out[category] = CategoryBreakdown(
            shown=shown,
            accepted_by_all=accepted_by_all,
            rate=Fraction(accepted_by_all, shown) if shown else None,
            per_annotator=per_annotator,
        )
    return out


def cohens_kappa(labels_a: Sequence[bool], labels_b: Sequence[bool]) -> AgreementReport:
    """Chance-corrected agreement between two label vectors.

    kappa = (p_o - p_e) / (1 - p_e), with expected agreement p_e from the
    raters' marginal label frequencies. When p_e = 1 kappa is undefined and
    reported as None.
    """
    if len(labels_a) != len(labels_b):
        raise ContractError(f"label vectors differ in length: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise ContractError("need at least one item")
    p_o = Fraction(sum(1 for a, b in zip(labels_a, labels_b) if bool(a) == bool(b)), n)
    pa = Fraction(sum(map(bool, labels_a)), n)
    pb = Fraction(sum(map(bool, labels_b)), n)
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if p_e == 1:
        return AgreementReport(None, p_o, n)
    kappa = (p_o - p_e) / (1 - p_e)
    return AgreementReport(kappa, p_o, n)


def qualification_score(annotator_labels: Sequence[bool],
                        gold_labels: Sequence[bool]) -> AgreementReport:
    """Agreement of one annotator against gold labels; used to rank annotators."""
    return cohens_kappa(annotator_labels, gold_labels)


# ---------------------------------------------------------------------------
# Export-record helpers (decisions as written by the annotation service)
# ---------------------------------------------------------------------------

def pairwise_agreement(records: Sequence[Mapping]) -> AgreementReport:
    """Two-annotator agreement over export records they both decided."""
    annotators = sorted({a for r in records for a in r.get("decisions", {})})
    if len(annotators) != 2:
        raise ContractError(f"need exactly 2 annotators, found {annotators}")
    a, b = annotators
    items = [r for r in records if a in r["decisions"] and b in r["decisions"]]
    if not items:
        raise ContractError("annotators share no decided candidates")
    return cohens_kappa([r["decisions"][a] for r in items],
                        [r["decisions"][b] for r in items])


def qualification_scores(records: Sequence[Mapping],
                         gold: Mapping[str, LinkSet]) -> dict[str, AgreementReport]:
    """Per-annotator kappa against gold link membership."""
    annotators = sorted({a for r in records for a in r.get("decisions", {})})
    out = {}
    for a in annotators:
        labels, truth = [], []
        for r in records:
            if a not in r["decisions"] or r["pair_id"] not in gold:
                continue
            labels.append(r["decisions"][a])
            truth.append((r["source_idx"], r["target_idx"]) in gold[r["pair_id"]].links)
        if labels:
            out[a] = qualification_score(labels, truth)
    return out
