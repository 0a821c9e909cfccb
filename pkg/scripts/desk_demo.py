#!/usr/bin/env python3
"""End-to-end desk-scale demo with no external services.

Builds a tiny linked corpus, then runs the full pipeline against the built-in
deterministic stand-in services: retrieval (dense embeddings), listwise LLM
refinement with full guidance, evaluation, candidate assembly, a simulated
two-annotator session, and agreement analytics.

Usage:
    python scripts/desk_demo.py [--workdir PATH]
"""

import argparse
import json
import sys
from pathlib import Path

from linkforge.annotate import Decision
from linkforge.cli import main as cli
from linkforge.service import AnnotationSession, DecisionStore, load_session_file
from linkforge.stubs import chat_server, embedding_server

TOPICS = [
    ("storm", ["officials", "harbor", "cleanup", "flooding", "ferries", "insurance"]),
    ("election", ["ballots", "turnout", "recount", "precincts", "observers", "margin"]),
    ("festival", ["tickets", "stages", "headliner", "vendors", "camping", "curfew"]),
    ("merger", ["shareholders", "regulators", "valuation", "layoffs", "synergies", "filings"]),
    ("drought", ["reservoirs", "farmers", "rationing", "rainfall", "irrigation", "forecast"]),
]


def build_corpus(path: Path) -> None:
    records = []
    for name, words in TOPICS:
        target = [
            f"The {name} story begins with the {words[0]} preparing detailed statements.",
            f"Reports describe how the {words[1]} situation developed over several tense days.",
            f"Residents mention the {words[2]} effort as the most visible consequence so far.",
            f"Independent observers connect the {words[3]} problem with earlier warnings from experts.",
            f"A spokesperson confirms the {words[4]} plan will continue through the coming month.",
            f"Analysts expect the {words[5]} question to dominate the next public meeting.",
            "Historical context shows similar situations rarely end quickly in this region.",
            "The final section summarizes open questions that nobody has answered yet.",
        ]
        source = [
            f"A rival outlet frames the {words[1]} situation as entirely predictable this week.",
            f"Their coverage highlights the {words[2]} effort while praising local volunteers broadly.",
            f"One column ties the {words[3]} problem directly to ignored warnings from experts.",
            f"The closing piece questions whether the {words[4]} plan can really last a month.",
        ]
        records.append({
            "pair_id": f"pair-{name}",
            "source": {"doc_id": f"{name}-alt", "sentences": source, "meta": {}},
            "target": {"doc_id": f"{name}-orig", "sentences": target, "meta": {}},
            "links": [[0, 1], [1, 2], [2, 3], [3, 4]],
            "meta": {},
        })
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def simulate_annotators(session_file: Path, store_path: Path) -> Path:
    """Two deterministic annotators decide every bundle; returns export path."""
    pairs, bundles = load_session_file(session_file)
    store = DecisionStore(store_path)
    session = AnnotationSession(pairs, bundles, store)
    for b in bundles:
        for t in b.target_indices():
            session.submit_decision(Decision("demo-a", b.pair_id, b.source_idx, t, t % 2 == 0))
            session.submit_decision(Decision("demo-b", b.pair_id, b.source_idx, t, t % 3 != 2))
    export = session_file.parent / "export.jsonl"
    with open(export, "w", encoding="utf-8") as fh:
        for record in session.export_records():
            fh.write(json.dumps(record) + "\n")
    store.close()
    return export


def run(workdir: Path) -> int:
    workdir.mkdir(parents=True, exist_ok=True)
    raw = workdir / "raw.jsonl"
    dataset = workdir / "dataset.jsonl"
    rankings = workdir / "rankings.jsonl"
    refined = workdir / "refined.jsonl"
    report = workdir / "report.json"
    session_file = workdir / "session.jsonl"

    build_corpus(raw)
    print(f"== corpus written to {raw}")

    with embedding_server() as embed, chat_server() as chat:
        cli(["ingest", "--format", "native", "--in", str(raw),
             "--out", str(dataset), "--domain", "news"])
        cli(["retrieve", "--in", str(dataset), "--method", "dense", "--k", "3",
             "--out", str(rankings), "--embed", embed.url,
             "--model", "stub-embed", "--cache", str(workdir / "cache")])
        print(f"== rankings written to {rankings} ({embed.request_count} embedding calls)")
        cli(["refine", "--in", str(dataset), "--rankings", str(rankings),
             "--form", "listwise", "--mode", "both", "--k", "3",
             "--llm", chat.url, "--model", "stub-llm", "--domain", "news",
             "--out", str(refined)])
        print(f"== refined links written to {refined} ({chat.request_count} chat calls)")

    cli(["evaluate", "--pred", str(refined), "--gold", str(dataset),
         "--out", str(report)])
    payload = json.loads(report.read_text())
    print(f"== evaluation: P={payload['precision']} R={payload['recall']} "
          f"F1={payload['f1']} over {payload['eligible_sources']} sources")

    cli(["assemble", "--in", str(dataset), "--rllm", str(refined),
         "--retr", str(rankings), "--cfg", "news", "--seed", "7",
         "--out", str(session_file)])
    export = simulate_annotators(session_file, workdir / "decisions.log")
    print(f"== simulated annotation session exported to {export}")
    cli(["agree", "--decisions", str(export), "--bundles", str(session_file),
         "--gold", str(dataset)])
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("demo_output"))
    sys.exit(run(parser.parse_args().workdir))
