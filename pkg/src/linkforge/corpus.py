"""Data model for cross-document sentence linking.

A dataset is a list of document pairs. Each pair holds a *source* document
(whose sentences act as queries) and a *target* document (searched for linked
sentences), plus the set of gold links between them. Links are many-to-many
(source_idx, target_idx) pairs over 0-based sentence positions.

Datasets are stored line-delimited, one pair per line:

    {"pair_id": ..., "source": {"doc_id": ..., "sentences": [...], "meta": {}},
     "target": {...}, "links": [[i, j], ...], "meta": {}}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DomainError, ParseError, ValidationError

DOMAINS = ("news", "reviews", "other")
ROLES = ("source", "target")


@dataclass(frozen=True)
class Sentence:
    """One sentence at a stable 0-based position within its document."""

    index: int
    text: str

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"sentence index must be >= 0, got {self.index}")
        if not self.text.strip():
            raise ValidationError(f"sentence {self.index} is empty after trimming")


@dataclass(frozen=True)
class Document:
    doc_id: str
    role: str
    sentences: tuple[Sentence, ...]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.sentences:
            raise ValidationError(f"document {self.doc_id!r} has no sentences")
        for pos, sent in enumerate(self.sentences):
            if sent.index != pos:
                raise ValidationError(
                    f"document {self.doc_id!r}: sentence at position {pos} "
                    f"has index {sent.index}; indices must be contiguous from 0"
                )

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]

    def text(self) -> str:
        """Full document text, sentences joined by single spaces."""
        return " ".join(s.text for s in self.sentences)

    @classmethod
    def from_texts(cls, doc_id: str, role: str, texts: Iterable[str],
                   meta: dict[str, str] | None = None) -> "Document":
        sents = tuple(Sentence(i, t) for i, t in enumerate(texts))
        return cls(doc_id, role, sents, dict(meta or {}))


@dataclass(frozen=True)
class LinkSet:
    """Gold or predicted links for one document pair."""

    pair_id: str
    links: frozenset[tuple[int, int]]

    def __post_init__(self):
        for link in self.links:
            if len(link) != 2:
                raise ValidationError(f"link {link!r} is not an index pair")

    def source_indices(self) -> set[int]:
        return {i for i, _ in self.links}

    def target_indices(self) -> set[int]:
        return {j for _, j in self.links}

    def targets_for(self, source_idx: int) -> set[int]:
        return {j for i, j in self.links if i == source_idx}


@dataclass(frozen=True)
class DocumentPair:
    pair_id: str
    source: Document
    target: Document
    meta: dict[str, str] = field(default_factory=dict)


@dataclass
class LinkingDataset:
    name: str
    domain: str
    pairs: list[tuple[DocumentPair, LinkSet]]

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValidationError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        seen: set[str] = set()
        for pair, links in self.pairs:
            if pair.pair_id in seen:
                raise ValidationError(f"duplicate pair_id {pair.pair_id!r}")
            seen.add(pair.pair_id)
            validate_links(pair, links)

    def __len__(self) -> int:
        return len(self.pairs)

    def pair(self, pair_id: str) -> tuple[DocumentPair, LinkSet]:
        for pair, links in self.pairs:
            if pair.pair_id == pair_id:
                return pair, links
        raise KeyError(pair_id)


@dataclass(frozen=True)
class DatasetStats:
    n_pairs: int
    n_links: int
    avg_sents_src: Fraction
    avg_sents_tgt: Fraction
    avg_links_src: Fraction
    avg_links_tgt: Fraction


def validate_links(pair: DocumentPair, links: LinkSet) -> None:
    if links.pair_id != pair.pair_id:
        raise ValidationError(
            f"link set for {links.pair_id!r} attached to pair {pair.pair_id!r}"
        )
    n, m = len(pair.source), len(pair.target)
    for i, j in links.links:
        if not (0 <= i < n):
            raise ValidationError(
                f"pair {pair.pair_id!r}: link source index {i} out of range 0..{n - 1}"
            )
        if not (0 <= j < m):
            raise ValidationError(
                f"pair {pair.pair_id!r}: link target index {j} out of range 0..{m - 1}"
            )


# ---------------------------------------------------------------------------
# Sentence segmentation
# ---------------------------------------------------------------------------

# Tokens that end in a period without ending a sentence. Matched case-insensitively
# against the token immediately preceding a candidate boundary.
ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "st", "sr", "jr", "vs", "etc",
    "e.g", "i.e", "cf", "al", "fig", "figs", "eq", "eqs", "no", "nos",
    "sec", "secs", "tab", "vol", "pp", "approx", "resp",
})

# Terminator run (with optional closing quotes/brackets), whitespace, then an
# uppercase letter or an opening quote starting the next sentence.
_BOUNDARY = re.compile(
    r"[.!?]+[\"'”’)\]]*"
    r"\s+"
    r"(?=[\"'“‘(\[]?[A-Z])"
)

_TRAILING_TOKEN = re.compile(r"([A-Za-z][\w.]*)[.!?]+$")


def _ends_with_abbreviation(prefix: str) -> bool:
    m = _TRAILING_TOKEN.search(prefix.rstrip())
    if m is None:
        return False
    return m.group(1).rstrip(".").lower() in ABBREVIATIONS


def segment_text(raw: str) -> list[Sentence]:
    """Split text into sentences with a deterministic terminator rule.

    Boundaries fall after `.`, `!` or `?` runs followed by whitespace and an
    uppercase letter or opening quote, unless the preceding token is a known
    abbreviation. Joining the sentence texts reconstructs the input up to
    inter-sentence whitespace.
    """
    pieces: list[str] = []
    start = 0
    for m in _BOUNDARY.finditer(raw):
        if _ends_with_abbreviation(raw[start:m.end()]):
            continue
        pieces.append(raw[start:m.end()])
        start = m.end()
    pieces.append(raw[start:])
    texts = [p.strip() for p in pieces if p.strip()]
    return [Sentence(i, t) for i, t in enumerate(texts)]


_WORD = re.compile(r"[a-z0-9']+")


def word_tokens(text: str) -> list[str]:
    """Case-folded word tokens; apostrophes stay inside words."""
    return _WORD.findall(text.lower())


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def pair_to_record(pair: DocumentPair, links: LinkSet) -> dict:
    return {
        "pair_id": pair.pair_id,
        "source": {
            "doc_id": pair.source.doc_id,
            "sentences": pair.source.texts,
            "meta": dict(pair.source.meta),
        },
        "target": {
            "doc_id": pair.target.doc_id,
            "sentences": pair.target.texts,
            "meta": dict(pair.target.meta),
        },
        "links": [list(l) for l in sorted(links.links)],
        "meta": dict(pair.meta),
    }


def _doc_from_record(obj: dict, role: str, pair_id: str) -> Document:
    try:
        doc_id = obj["doc_id"]
        sentences = obj["sentences"]
    except KeyError as e:
        raise ParseError(f"pair {pair_id!r}: {role} record missing {e.args[0]!r}") from e
    return Document.from_texts(doc_id, role, sentences, obj.get("meta") or {})


def record_to_pair(obj: dict) -> tuple[DocumentPair, LinkSet]:
    for key in ("pair_id", "source", "target"):
        if key not in obj:
            raise ParseError(f"pair record missing {key!r} field")
    pair_id = obj["pair_id"]
    source = _doc_from_record(obj["source"], "source", pair_id)
    target = _doc_from_record(obj["target"], "target", pair_id)
    links = frozenset((int(i), int(j)) for i, j in obj.get("links", []))
    pair = DocumentPair(pair_id, source, target, dict(obj.get("meta") or {}))
    link_set = LinkSet(pair_id, links)
    validate_links(pair, link_set)
    return pair, link_set


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_no, parsed object); raises ParseError with the line number."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", line_no=line_no) from e
            if not isinstance(obj, dict):
                raise ParseError("record is not an object", line_no=line_no)
            yield line_no, obj


def load_dataset(path: str | Path, name: str | None = None,
                 domain: str = "other") -> LinkingDataset:
    path = Path(path)
    pairs: list[tuple[DocumentPair, LinkSet]] = []
    for line_no, obj in read_jsonl(path):
        try:
            pairs.append(record_to_pair(obj))
        except ParseError as e:
            raise ParseError(str(e), line_no=line_no) from e
    return LinkingDataset(name or path.stem, domain, pairs)


def dump_dataset(ds: LinkingDataset) -> Iterator[str]:
    for pair, links in ds.pairs:
        yield json.dumps(pair_to_record(pair, links), ensure_ascii=False)


def save_dataset(ds: LinkingDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in dump_dataset(ds):
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# External corpus conversions
# ---------------------------------------------------------------------------

def convert_ecb(records: Iterable[dict], name: str = "news-ecb") -> LinkingDataset:
    """Build a linking dataset from event-mention cluster records.

    A sentence pair (i, j) is linked iff source sentence i and target
    sentence j both contain mentions of the same cluster. Links touching a
    document's title sentence are kept but listed in the pair meta under
    ``title_links`` so downstream users can filter them.
    """
    pairs = []
    for obj in records:
        for key in ("pair_id", "source", "target", "mentions"):
            if key not in obj:
                raise ParseError(f"cluster record missing {key!r} field")
        pair_id = obj["pair_id"]
        source = _doc_from_record(obj["source"], "source", pair_id)
        target = _doc_from_record(obj["target"], "target", pair_id)
        by_cluster: dict[str, tuple[set[int], set[int]]] = {}
        for mention in obj["mentions"]:
            doc = mention.get("doc")
            if doc not in ROLES:
                raise ValidationError(
                    f"pair {pair_id!r}: mention doc must be one of {ROLES}, got {doc!r}"
                )
            idx = int(mention["sentence"])
            limit = len(source) if doc == "source" else len(target)
            if not (0 <= idx < limit):
                raise ValidationError(
                    f"pair {pair_id!r}: mention references unknown {doc} sentence {idx}"
                )
            src_set, tgt_set = by_cluster.setdefault(str(mention["cluster"]), (set(), set()))
            (src_set if doc == "source" else tgt_set).add(idx)
        links = frozenset(
            (i, j)
            for src_set, tgt_set in by_cluster.values()
            for i in src_set
            for j in tgt_set
        )
        meta = dict(obj.get("meta") or {})
        title_links = sorted(
            (i, j) for i, j in links
            if i == obj["source"].get("title_idx") or j == obj["target"].get("title_idx")
        )
        if title_links:
            meta["title_links"] = json.dumps([list(l) for l in title_links])
        pairs.append((DocumentPair(pair_id, source, target, meta), LinkSet(pair_id, links)))
    return LinkingDataset(name, "news", pairs)


def convert_f1000(records: Iterable[dict], name: str = "reviews-f1000") -> LinkingDataset:
    """Build a linking dataset from dual-annotator candidate link records.

    Only candidates labeled positive by both annotators become links.
    """
    pairs = []
    for obj in records:
        for key in ("pair_id", "source", "target", "candidates"):
            if key not in obj:
                raise ParseError(f"annotation record missing {key!r} field")
        pair_id = obj["pair_id"]
        source = _doc_from_record(obj["source"], "source", pair_id)
        target = _doc_from_record(obj["target"], "target", pair_id)
        links = set()
        for cand in obj["candidates"]:
            labels = cand.get("labels", [])
            if len(labels) != 2:
                raise ValidationError(
                    f"pair {pair_id!r}: candidate ({cand.get('source_idx')}, "
                    f"{cand.get('target_idx')}) has {len(labels)} annotator labels, need 2"
                )
            if all(bool(l) for l in labels):
                links.add((int(cand["source_idx"]), int(cand["target_idx"])))
        pair = DocumentPair(pair_id, source, target, dict(obj.get("meta") or {}))
        link_set = LinkSet(pair_id, frozenset(links))
        validate_links(pair, link_set)
        pairs.append((pair, link_set))
    return LinkingDataset(name, "reviews", pairs)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def compute_stats(ds: LinkingDataset) -> DatasetStats:
    """Per-pair arithmetic means, kept as exact rationals until display.

    ``avg_links_src``/``avg_links_tgt`` count *distinct* linked sentences per
    document, not link endpoints.
    """
    if not ds.pairs:
        raise DomainError("cannot compute statistics of an empty dataset")
    n = len(ds.pairs)
    n_links = sum(len(links.links) for _, links in ds.pairs)
    return DatasetStats(
        n_pairs=n,
        n_links=n_links,
        avg_sents_src=Fraction(sum(len(p.source) for p, _ in ds.pairs), n),
        avg_sents_tgt=Fraction(sum(len(p.target) for p, _ in ds.pairs), n),
        avg_links_src=Fraction(sum(len(l.source_indices()) for _, l in ds.pairs), n),
        avg_links_tgt=Fraction(sum(len(l.target_indices()) for _, l in ds.pairs), n),
    )


def format_stats(stats: DatasetStats) -> dict:
    """Display form: averages rounded to 2 decimals."""
    return {
        "n_pairs": stats.n_pairs,
        "n_links": stats.n_links,
        "avg_sents_src": round(float(stats.avg_sents_src), 2),
        "avg_sents_tgt": round(float(stats.avg_sents_tgt), 2),
        "avg_links_src": round(float(stats.avg_links_src), 2),
        "avg_links_tgt": round(float(stats.avg_links_tgt), 2),
    }
