"""Per-sentence target ranking and top-k link thresholding.

Two retrieval routes: Okapi BM25 computed natively over the target document's
sentences, or cosine similarity over vectors fetched from an external
embedding service (with a disk cache keyed by model + content hash).
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .clients import EmbeddingCache, EmbeddingClient
from .corpus import Document, DocumentPair, LinkSet, Sentence
from .errors import DomainError, IntegrityError, ValidationError

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens; no stemming, no stopwords."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class ScoredRanking:
    """Ranked target sentence indices for one source sentence.

    Scores are non-increasing; ties are broken by ascending target index.
    """

    source_idx: int
    ranked: tuple[tuple[int, float], ...]

    def __post_init__(self):
        seen: set[int] = set()
        prev: tuple[float, int] | None = None
        for idx, score in self.ranked:
            if idx in seen:
                raise ValidationError(f"target index {idx} appears twice in ranking")
            seen.add(idx)
            if prev is not None:
                prev_score, prev_idx = prev
                if score > prev_score or (score == prev_score and idx < prev_idx):
                    raise ValidationError(
                        "ranking must be sorted by descending score, ascending index"
                    )
            prev = (score, idx)

    @classmethod
    def from_scores(cls, source_idx: int, scores: Sequence[float]) -> "ScoredRanking":
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        return cls(source_idx, tuple((i, float(scores[i])) for i in order))

    def top(self, k: int) -> list[int]:
        return [idx for idx, _ in self.ranked[:k]]

    def __len__(self) -> int:
        return len(self.ranked)


@dataclass
class RetrievalConfig:
    method: str = "bm25"
    k1: float = 1.2          # bm25 term-frequency saturation
    b: float = 0.75          # bm25 length normalization
    embed_model: str = ""
    cache_dir: Path | None = None

    def __post_init__(self):
        if self.method not in ("bm25", "dense"):
            raise ValidationError(f"method must be bm25 or dense, got {self.method!r}")
        if self.k1 <= 0:
            raise ValidationError("k1 must be > 0")
        if not (0.0 <= self.b <= 1.0):
            raise ValidationError("b must be in [0, 1]")


# ---------------------------------------------------------------------------
# BM25
# ---------------------------------------------------------------------------

class Bm25Scorer:
    """Okapi BM25 over the sentences of one target document.

    Uses the non-negative IDF variant idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)).
    Repeated query tokens contribute once per occurrence.
    """

    def __init__(self, target_texts: Sequence[str], k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self._docs = [tokenize(t) for t in target_texts]
        self._tfs = [Counter(d) for d in self._docs]
        self._lens = [len(d) for d in self._docs]
        n = len(self._docs)
        self._avgdl = sum(self._lens) / n if n else 0.0
        df: Counter[str] = Counter()
        for tf in self._tfs:
            df.update(tf.keys())
        self._idf = {
            t: math.log(1.0 + (n - d + 0.5) / (d + 0.5)) for t, d in df.items()
        }

    def scores(self, query: str) -> list[float]:
        q_tokens = tokenize(query)
        out = []
        for tf, dl in zip(self._tfs, self._lens):
            norm = self.k1 * (1.0 - self.b + self.b * dl / self._avgdl) if self._avgdl else 0.0
            s = 0.0
            for t in q_tokens:
                f = tf.get(t)
                if not f:
                    continue
                s += self._idf[t] * (f * (self.k1 + 1.0)) / (f + norm)
            out.append(s)
        return out


def bm25_score_targets(source_sent: Sentence, target_doc: Document,
                       cfg: RetrievalConfig | None = None) -> ScoredRanking:
    cfg = cfg or RetrievalConfig()
    scorer = Bm25Scorer(target_doc.texts, k1=cfg.k1, b=cfg.b)
    return ScoredRanking.from_scores(source_sent.index, scorer.scores(source_sent.text))


def bm25_rank_pair(pair: DocumentPair, cfg: RetrievalConfig | None = None) -> list[ScoredRanking]:
    cfg = cfg or RetrievalConfig()
    scorer = Bm25Scorer(pair.target.texts, k1=cfg.k1, b=cfg.b)
    return [ScoredRanking.from_scores(s.index, scorer.scores(s.text))
            for s in pair.source.sentences]


# ---------------------------------------------------------------------------
# Dense retrieval
# ---------------------------------------------------------------------------

def embed_batch(texts: list[str], service: EmbeddingClient,
                cache: EmbeddingCache | None = None, batch_size: int = 64,
                max_in_flight: int = 1) -> list[list[float]]:
    """Embed texts, serving cache hits without a network call.

    Output is index-aligned with the input. All vectors (cached or fresh)
    must share one dimension.
    """
    vectors: list[list[float] | None] = [None] * len(texts)
    missing: dict[str, list[int]] = {}
    for i, text in enumerate(texts):
        hit = cache.get(service.model, text) if cache is not None else None
        if hit is not None:
            vectors[i] = hit
        else:
            missing.setdefault(text, []).append(i)

    unique = list(missing)
    chunks = [unique[i:i + batch_size] for i in range(0, len(unique), batch_size)]
    if max_in_flight > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(service.embed, chunks))
    else:
        results = [service.embed(chunk) for chunk in chunks]

    fresh: dict[str, list[float]] = {}
    for chunk, embedded in zip(chunks, results):
        fresh.update(zip(chunk, embedded))
    for text, vec in fresh.items():
        for i in missing[text]:
            vectors[i] = vec

    dims = {len(v) for v in vectors if v is not None}
    if len(dims) > 1:
        raise IntegrityError(f"embedding dimensions disagree within batch: {sorted(dims)}")
    if cache is not None:
        for text, vec in fresh.items():
            cache.put(service.model, text, vec)
    return vectors  # type: ignore[return-value]


def rank_by_cosine(source_vec: Sequence[float], target_vecs: Sequence[Sequence[float]],
                   source_idx: int = 0) -> ScoredRanking:
    u = np.asarray(source_vec, dtype=np.float64)
    norm_u = np.linalg.norm(u)
    if norm_u == 0.0:
        raise DomainError("source vector has zero norm")
    scores = []
    for j, v in enumerate(target_vecs):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != u.shape:
            raise DomainError(f"target vector {j} has dimension {v.shape[0]}, expected {u.shape[0]}")
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            raise DomainError(f"target vector {j} has zero norm")
        scores.append(float(np.dot(u, v) / (norm_u * norm_v)))
    return ScoredRanking.from_scores(source_idx, scores)


def dense_rank_pair(pair: DocumentPair, service: EmbeddingClient,
                    cache: EmbeddingCache | None = None,
                    batch_size: int = 64, max_in_flight: int = 1) -> list[ScoredRanking]:
    texts = pair.source.texts + pair.target.texts
    vectors = embed_batch(texts, service, cache, batch_size, max_in_flight)
    n = len(pair.source)
    target_vecs = vectors[n:]
    return [rank_by_cosine(vectors[s.index], target_vecs, source_idx=s.index)
            for s in pair.source.sentences]


# ---------------------------------------------------------------------------
# Thresholding
# ---------------------------------------------------------------------------

def threshold_topk(r: ScoredRanking, k: int, pair_id: str = "") -> LinkSet:
    """Declare the first min(k, M) ranked targets linked."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    return LinkSet(pair_id, frozenset((r.source_idx, t) for t in r.top(k)))
