#!/usr/bin/env python3
"""Sweep retrieval methods over a dataset and print a benchmark table.

Each method is evaluated at cutoffs k in {1, 3, 5, 7, 10, 20}; reported per
method: average F1 across cutoffs and recall at a fixed cutoff. Dense methods
need an embedding endpoint (--embed); pass --stub-embed to use the built-in
deterministic stand-in instead.

Usage:
    python scripts/benchmark_retrievers.py --in dataset.jsonl --out results.json \
        [--methods bm25,dense] [--embed URL --model NAME | --stub-embed] [--recall-at 10]
"""

import argparse
import json
import sys
from pathlib import Path

from linkforge.clients import EmbeddingCache, EmbeddingClient
from linkforge.corpus import load_dataset
from linkforge.evaluate import (DEFAULT_CUTOFFS, evaluate_rankings,
                                render_sweep_report)
from linkforge.retrieval import RetrievalConfig, bm25_rank_pair, dense_rank_pair
from linkforge.stubs import embedding_server


def rank_all(ds, method, client=None, cache=None):
    rankings = {}
    for pair, _ in ds.pairs:
        if method == "bm25":
            per_source = bm25_rank_pair(pair, RetrievalConfig())
        else:
            per_source = dense_rank_pair(pair, client, cache)
        rankings[pair.pair_id] = {r.source_idx: r for r in per_source}
    return rankings


def run(args) -> int:
    ds = load_dataset(args.infile, domain=args.domain)
    methods = args.methods.split(",")
    cutoffs = [int(c) for c in args.cutoffs.split(",")]
    stub = None
    client = cache = None
    try:
        if "dense" in methods:
            if args.stub_embed:
                stub = embedding_server().start()
                client = EmbeddingClient(stub.url, "stub-embed")
            elif args.embed and args.model:
                client = EmbeddingClient(args.embed, args.model)
            else:
                print("dense method needs --embed URL --model NAME or --stub-embed",
                      file=sys.stderr)
                return 2
            if args.cache:
                cache = EmbeddingCache(args.cache)

        results = {}
        print(f"{'method':<10} {'avg F1':>8} {'R@' + str(args.recall_at):>8}")
        for method in methods:
            rankings = rank_all(ds, method, client, cache)
            report, rows = evaluate_rankings(ds, rankings, cutoffs, args.recall_at)
            payload = render_sweep_report(ds.name, report, rows)
            results[method] = payload
            print(f"{method:<10} {payload['avg_f1']:>8.2f} "
                  f"{payload['recall_at']['recall']:>8.2f}")
        if args.out:
            Path(args.out).write_text(
                json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            print(f"full per-cutoff results written to {args.out}")
    finally:
        if stub is not None:
            stub.stop()
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="infile", required=True)
    parser.add_argument("--methods", default="bm25,dense")
    parser.add_argument("--cutoffs", default=",".join(str(k) for k in DEFAULT_CUTOFFS))
    parser.add_argument("--recall-at", dest="recall_at", type=int, default=10)
    parser.add_argument("--domain", default="other")
    parser.add_argument("--embed")
    parser.add_argument("--model")
    parser.add_argument("--cache")
    parser.add_argument("--stub-embed", action="store_true")
    parser.add_argument("--out")
    sys.exit(run(parser.parse_args()))
