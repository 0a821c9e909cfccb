"""Annotation service: task serving, decision persistence, export.

Persistence is a single append-only JSONL log of decisions. Later
submissions for the same (annotator, pair, source, target) supersede earlier
ones; superseded entries stay in the log for audit and are dropped on
compaction. The service is the only writer; the web UI and CLI are clients.
"""

from __future__ import annotations

import json
import logging
import os
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from pydantic import BaseModel

from .annotate import (AssemblyConfig, CandidateBundle, Decision, Provenance,
                       assemble_candidates, eligible_sources)
from .corpus import DocumentPair, LinkingDataset, pair_to_record, read_jsonl, record_to_pair
from .errors import AuthError, ParseError, ValidationError
from .retrieval import ScoredRanking

log = logging.getLogger(__name__)


class DecisionIn(BaseModel):
    annotator: str
    pair_id: str
    source_idx: int
    target_idx: int
    accepted: bool


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class DecisionStore:
    """Append-only decision log with an in-memory live view.

    Replays the log on open, so a restarted service resumes exactly where
    the previous process stopped. Identical resubmissions are no-ops.
    """

    def __init__(self, path: str | Path, compact_threshold: int = 4096):
        self.path = Path(path)
        self.live: dict[tuple[str, str, int, int], Decision] = {}
        self.log_length = 0
        if self.path.exists():
            self._replay()
        if self.log_length > compact_threshold and self.log_length > 4 * len(self.live):
            self.compact()
        self._fh = open(self.path, "a", encoding="utf-8")

    def _replay(self) -> None:
        for line_no, obj in read_jsonl(self.path):
            try:
                decision = Decision(
                    annotator_id=obj["annotator_id"], pair_id=obj["pair_id"],
                    source_idx=int(obj["source_idx"]), target_idx=int(obj["target_idx"]),
                    accepted=bool(obj["accepted"]), timestamp=obj.get("timestamp", ""),
                )
            except KeyError as e:
                raise ParseError(f"decision log missing {e.args[0]!r}", line_no=line_no) from e
            self.live[decision.key] = decision
            self.log_length += 1

    def append(self, decision: Decision) -> bool:
        """Durably record a decision; returns False for identical resubmission."""
        current = self.live.get(decision.key)
        if current is not None and current.accepted == decision.accepted:
            return False
        self._fh.write(json.dumps(decision.__dict__, ensure_ascii=False) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self.live[decision.key] = decision
        self.log_length += 1
        return True

    def compact(self) -> None:
        """Rewrite the log keeping live decisions only."""
        if hasattr(self, "_fh"):
            self._fh.close()
        tmp = self.path.with_suffix(".compact.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for decision in self.live.values():
                fh.write(json.dumps(decision.__dict__, ensure_ascii=False) + "\n")
        os.replace(tmp, self.path)
        self.log_length = len(self.live)
        self._fh = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        self._fh.close()

    def decisions_by(self, annotator_id: str) -> dict[tuple[str, int, int], Decision]:
        return {
            (d.pair_id, d.source_idx, d.target_idx): d
            for d in self.live.values()
            if d.annotator_id == annotator_id
        }


# ---------------------------------------------------------------------------
# Session files: document pairs plus assembled bundles, one JSONL stream
# ---------------------------------------------------------------------------

def bundle_to_record(bundle: CandidateBundle) -> dict:
    return {
        "kind": "bundle",
        "pair_id": bundle.pair_id,
        "source_idx": bundle.source_idx,
        "candidates": [
            {"target_idx": t, "provenance": sorted(prov.flags)}
            for t, prov in bundle.candidates
        ],
        "seed": bundle.seed,
    }


def record_to_bundle(obj: dict) -> CandidateBundle:
    return CandidateBundle(
        pair_id=obj["pair_id"],
        source_idx=int(obj["source_idx"]),
        candidates=tuple(
            (int(c["target_idx"]), Provenance(frozenset(c["provenance"])))
            for c in obj["candidates"]
        ),
        seed=obj.get("seed"),
    )


def write_session_file(path: str | Path, pairs: Iterable[DocumentPair | tuple],
                       bundles: Iterable[CandidateBundle]) -> None:
    by_pair: dict[str, list[CandidateBundle]] = {}
    for b in bundles:
        by_pair.setdefault(b.pair_id, []).append(b)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in pairs:
            pair, links = entry if isinstance(entry, tuple) else (entry, None)
            record = pair_to_record(pair, links) if links is not None else {
                **pair_to_record(pair, _empty_links(pair)), "links": [],
            }
            fh.write(json.dumps({"kind": "pair", **record}, ensure_ascii=False) + "\n")
            for b in sorted(by_pair.get(pair.pair_id, []), key=lambda b: b.source_idx):
                fh.write(json.dumps(bundle_to_record(b), ensure_ascii=False) + "\n")


def _empty_links(pair: DocumentPair):
    from .corpus import LinkSet
    return LinkSet(pair.pair_id, frozenset())


def load_session_file(path: str | Path) -> tuple[dict[str, DocumentPair], list[CandidateBundle]]:
    pairs: dict[str, DocumentPair] = {}
    bundles: list[CandidateBundle] = []
    for line_no, obj in read_jsonl(path):
        kind = obj.get("kind")
        try:
            if kind == "pair":
                pair, _ = record_to_pair(obj)
                pairs[pair.pair_id] = pair
            elif kind == "bundle":
                bundles.append(record_to_bundle(obj))
            else:
                raise ParseError(f"unknown record kind {kind!r}")
        except (ParseError, KeyError) as e:
            raise ParseError(f"bad session record: {e}", line_no=line_no) from e
    for b in bundles:
        if b.pair_id not in pairs:
            raise ValidationError(f"bundle references unknown pair {b.pair_id!r}")
    return pairs, bundles


def assemble_session(ds: LinkingDataset,
                     rllm_rankings: Mapping[str, Mapping[int, ScoredRanking]],
                     retr_rankings: Mapping[str, Mapping[int, ScoredRanking]],
                     cfg: AssemblyConfig, base_seed: int
                     ) -> tuple[list[DocumentPair], list[CandidateBundle]]:
    """Build bundles for every eligible source sentence with both rankings.

    Each bundle's distractor seed is derived from the base seed and the
    bundle identity, so reruns reproduce the same session file.
    """
    pairs = []
    bundles = []
    for pair, _ in ds.pairs:
        pairs.append(pair)
        rllm = rllm_rankings.get(pair.pair_id, {})
        retr = retr_rankings.get(pair.pair_id, {})
        for source_idx in eligible_sources(pair.source):
            if source_idx not in rllm or source_idx not in retr:
                log.warning("pair %s source %d lacks a ranking, skipping",
                            pair.pair_id, source_idx)
                continue
            seed = base_seed ^ zlib.crc32(f"{pair.pair_id}:{source_idx}".encode())
            bundles.append(assemble_candidates(
                pair.pair_id, source_idx, rllm[source_idx], retr[source_idx], cfg, seed
            ))
    return pairs, bundles


# ---------------------------------------------------------------------------
# Annotation session
# ---------------------------------------------------------------------------

@dataclass
class Progress:
    completed: int
    total: int


class AnnotationSession:
    """Serves bundles in file order and records decisions.

    ``roster`` restricts access to the listed annotator tokens; when None,
    any non-empty token is accepted and registered on first use.
    """

    def __init__(self, pairs: Mapping[str, DocumentPair],
                 bundles: list[CandidateBundle], store: DecisionStore,
                 roster: set[str] | None = None):
        self.pairs = dict(pairs)
        self.bundles = list(bundles)
        self.store = store
        self.roster = roster
        self._candidates: set[tuple[str, int, int]] = {
            (b.pair_id, b.source_idx, t) for b in bundles for t in b.target_indices()
        }

    def _check_annotator(self, annotator_id: str) -> None:
        if not annotator_id:
            raise AuthError("missing annotator token")
        if self.roster is not None and annotator_id not in self.roster:
            raise AuthError(f"unknown annotator {annotator_id!r}")

    def progress(self, annotator_id: str) -> Progress:
        done = self.store.decisions_by(annotator_id)
        completed = sum(
            1 for b in self.bundles
            if all((b.pair_id, b.source_idx, t) in done for t in b.target_indices())
        )
        return Progress(completed, len(self.bundles))

    def next_task(self, annotator_id: str) -> CandidateBundle | None:
        """Lowest-ordered bundle this annotator has not fully decided."""
        self._check_annotator(annotator_id)
        done = self.store.decisions_by(annotator_id)
        for bundle in self.bundles:
            if any((bundle.pair_id, bundle.source_idx, t) not in done
                   for t in bundle.target_indices()):
                return bundle
        return None

    def submit_decision(self, decision: Decision) -> bool:
        self._check_annotator(decision.annotator_id)
        cand = (decision.pair_id, decision.source_idx, decision.target_idx)
        if cand not in self._candidates:
            raise ValidationError(
                f"decision references unknown candidate pair={decision.pair_id!r} "
                f"source={decision.source_idx} target={decision.target_idx}"
            )
        if not decision.timestamp:
            decision = Decision(decision.annotator_id, decision.pair_id,
                                decision.source_idx, decision.target_idx,
                                decision.accepted, _now())
        return self.store.append(decision)

    def export_records(self, annotator: str | None = None,
                       pair_id: str | None = None) -> Iterator[dict]:
        """Per-candidate export rows for every candidate somebody decided."""
        by_candidate: dict[tuple[str, int, int], dict[str, Decision]] = {}
        for d in self.store.live.values():
            if annotator is not None and d.annotator_id != annotator:
                continue
            if pair_id is not None and d.pair_id != pair_id:
                continue
            by_candidate.setdefault((d.pair_id, d.source_idx, d.target_idx), {})[d.annotator_id] = d
        for bundle in self.bundles:
            for t, prov in bundle.candidates:
                cand = (bundle.pair_id, bundle.source_idx, t)
                if cand not in by_candidate:
                    continue
                decisions = by_candidate[cand]
                yield {
                    "pair_id": bundle.pair_id,
                    "source_idx": bundle.source_idx,
                    "target_idx": t,
                    "provenance": sorted(prov.flags),
                    "decisions": {a: d.accepted for a, d in sorted(decisions.items())},
                    "timestamp": max(d.timestamp for d in decisions.values()),
                }


def read_export(path: str | Path) -> list[dict]:
    records = []
    for line_no, obj in read_jsonl(path):
        for key in ("pair_id", "source_idx", "target_idx", "decisions"):
            if key not in obj:
                raise ParseError(f"export record missing {key!r}", line_no=line_no)
        records.append(obj)
    return records


def import_export(records: Iterable[dict], store: DecisionStore) -> int:
    """Load export records back into a store; inverse of export_records."""
    n = 0
    for r in records:
        for annotator_id, accepted in r["decisions"].items():
            changed = store.append(Decision(
                annotator_id=annotator_id, pair_id=r["pair_id"],
                source_idx=int(r["source_idx"]), target_idx=int(r["target_idx"]),
                accepted=bool(accepted), timestamp=r.get("timestamp", ""),
            ))
            n += int(changed)
    return n


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

def create_app(session: AnnotationSession, ui_dir: str | Path | None = None):
    from fastapi import FastAPI, HTTPException, Query
    from fastapi.responses import PlainTextResponse

    app = FastAPI(title="linkforge annotation service")

    @app.get("/health")
    def health():
        return {"status": "ok", "bundles": len(session.bundles)}

    @app.get("/pairs")
    def pairs():
        counts: dict[str, int] = {}
        for b in session.bundles:
            counts[b.pair_id] = counts.get(b.pair_id, 0) + 1
        return {"pairs": [
            {
                "pair_id": pid,
                "source_sentences": len(pair.source),
                "target_sentences": len(pair.target),
                "bundles": counts.get(pid, 0),
            }
            for pid, pair in session.pairs.items()
        ]}

    @app.get("/tasks/next")
    def next_task(annotator: str = Query(default="")):
        try:
            bundle = session.next_task(annotator)
        except AuthError as e:
            raise HTTPException(status_code=401, detail=str(e))
        progress = session.progress(annotator)
        if bundle is None:
            return {"done": True, "progress": progress.__dict__}
        pair = session.pairs[bundle.pair_id]
        return {
            "done": False,
            "task": {
                "pair_id": bundle.pair_id,
                "source_idx": bundle.source_idx,
                "candidates": [
                    {"target_idx": t, "provenance": sorted(prov.flags)}
                    for t, prov in bundle.candidates
                ],
                "source_doc": {"doc_id": pair.source.doc_id, "sentences": pair.source.texts},
                "target_doc": {"doc_id": pair.target.doc_id, "sentences": pair.target.texts},
                "progress": progress.__dict__,
            },
        }

    @app.post("/decisions")
    def post_decision(body: DecisionIn):
        decision = Decision(body.annotator, body.pair_id, body.source_idx,
                            body.target_idx, body.accepted)
        try:
            changed = session.submit_decision(decision)
        except AuthError as e:
            raise HTTPException(status_code=401, detail=str(e))
        except ValidationError as e:
            raise HTTPException(status_code=404, detail=str(e))
        return {"ok": True, "changed": changed}

    @app.get("/export")
    def export(annotator: str | None = None, pair_id: str | None = None):
        lines = [json.dumps(r, ensure_ascii=False)
                 for r in session.export_records(annotator, pair_id)]
        return PlainTextResponse("\n".join(lines) + ("\n" if lines else ""),
                                 media_type="application/x-ndjson")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
