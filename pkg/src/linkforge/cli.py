"""Command-line entry point: linkforge <subcommand>."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import annotate, corpus, evaluate, refine, retrieval, service, synthgen
from .clients import ChatClient, EmbeddingCache, EmbeddingClient
from .errors import ConfigurationError, LinkforgeError
from .retrieval import ScoredRanking

log = logging.getLogger(__name__)

DEFAULT_K = {"news": 10, "reviews": 20}


def _write_jsonl(path: str, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def read_rankings(path: str) -> dict[str, dict[int, ScoredRanking]]:
    out: dict[str, dict[int, ScoredRanking]] = {}
    for _, obj in corpus.read_jsonl(path):
        ranking = ScoredRanking(
            int(obj["source_idx"]),
            tuple((int(t), float(s)) for t, s in obj["ranking"]),
        )
        out.setdefault(obj["pair_id"], {})[ranking.source_idx] = ranking
    return out


def read_predictions(path: str) -> dict[str, dict[int, set[int]]]:
    out: dict[str, dict[int, set[int]]] = {}
    for _, obj in corpus.read_jsonl(path):
        out.setdefault(obj["pair_id"], {})[int(obj["source_idx"])] = {
            int(t) for t in obj["predicted"]
        }
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    if args.format == "native":
        ds = corpus.load_dataset(args.infile, name=args.name, domain=args.domain)
    else:
        records = [obj for _, obj in corpus.read_jsonl(args.infile)]
        converter = corpus.convert_ecb if args.format == "ecb" else corpus.convert_f1000
        ds = converter(records)
        if args.name:
            ds.name = args.name
    corpus.save_dataset(ds, args.out)
    stats = corpus.format_stats(corpus.compute_stats(ds))
    print(json.dumps({"dataset": ds.name, "domain": ds.domain, **stats}))
    return 0


def cmd_stats(args) -> int:
    ds = corpus.load_dataset(args.infile, domain=args.domain)
    print(json.dumps({"dataset": ds.name, "domain": ds.domain,
                      **corpus.format_stats(corpus.compute_stats(ds))}, indent=2))
    return 0


def _load_input_documents(path: str) -> list[corpus.Document]:
    docs = []
    for line_no, obj in corpus.read_jsonl(path):
        doc_id = obj.get("doc_id", f"doc-{line_no}")
        if "sentences" in obj:
            texts = obj["sentences"]
        else:
            texts = [s.text for s in corpus.segment_text(obj["text"])]
        docs.append(corpus.Document.from_texts(doc_id, "target", texts,
                                               obj.get("meta") or {}))
    return docs


def cmd_synth(args) -> int:
    naturals = _load_input_documents(args.infile)
    client = ChatClient(args.llm, args.model, temperature=args.temperature,
                        top_p=args.top_p)
    results = synthgen.generate_linked_pairs(naturals, args.domain, client,
                                             max_in_flight=args.max_in_flight)
    pairs = []
    for natural, result in zip(naturals, results):
        pair_id = natural.doc_id
        pair = corpus.DocumentPair(pair_id, result.generated, natural,
                                   {"origin": "synthetic"})
        pairs.append((pair, result.link_set(pair_id)))
    ds = corpus.LinkingDataset(Path(args.out).stem, args.domain, pairs)
    corpus.save_dataset(ds, args.out)
    print(json.dumps(corpus.format_stats(corpus.compute_stats(ds))))
    return 0


def cmd_clean(args) -> int:
    client = ChatClient(args.llm, args.model)
    records = []
    for line_no, obj in corpus.read_jsonl(args.infile):
        cleaned = synthgen.clean_article(obj["text"], client)
        records.append({"doc_id": obj.get("doc_id", f"doc-{line_no}"), "text": cleaned})
    _write_jsonl(args.out, records)
    return 0


def cmd_retrieve(args) -> int:
    ds = corpus.load_dataset(args.infile)
    records = []
    if args.method == "bm25":
        cfg = retrieval.RetrievalConfig(method="bm25", k1=args.k1, b=args.b)
        rank_pair = lambda pair: retrieval.bm25_rank_pair(pair, cfg)
    else:
        if not args.embed or not args.model:
            raise ConfigurationError("dense retrieval needs --embed URL and --model NAME")
        client = EmbeddingClient(args.embed, args.model)
        cache = EmbeddingCache(args.cache) if args.cache else None
        rank_pair = lambda pair: retrieval.dense_rank_pair(pair, client, cache)
    for pair, _ in ds.pairs:
        for ranking in rank_pair(pair):
            records.append({
                "pair_id": pair.pair_id,
                "source_idx": ranking.source_idx,
                "ranking": [[t, s] for t, s in ranking.ranked],
                "topk": ranking.top(args.k),
            })
    _write_jsonl(args.out, records)
    print(json.dumps({"pairs": len(ds.pairs), "rankings": len(records), "k": args.k}))
    return 0


def _resolve_guidance(args, domain: str) -> refine.Guidance | None:
    mode = refine.PromptMode.from_name(args.mode)
    if not (mode.description or mode.examples):
        return None
    if args.guidance:
        return refine.load_guidance_file(args.guidance)
    return refine.load_default_guidance(domain)


def cmd_refine(args) -> int:
    ds = corpus.load_dataset(args.infile, domain=args.domain)
    mode = refine.PromptMode.from_name(args.mode)
    guidance = _resolve_guidance(args, ds.domain)
    client = ChatClient(args.llm, args.model, temperature=args.temperature,
                        top_p=args.top_p)
    k = args.k if args.k is not None else DEFAULT_K.get(ds.domain, 10)
    records = []
    if args.form == "llm-only":
        from .errors import ParseError
        for pair, _ in ds.pairs:
            for sent in pair.source.sentences:
                try:
                    links = refine.llm_only_classify(pair.source, pair.target, sent,
                                                     mode, guidance, client,
                                                     pair_id=pair.pair_id)
                    predicted, failed = sorted(links.targets_for(sent.index)), False
                except ParseError as e:
                    log.error("pair %s source %d failed after retry: %s",
                              pair.pair_id, sent.index, e)
                    predicted, failed = [], True
                records.append({
                    "pair_id": pair.pair_id, "source_idx": sent.index,
                    "predicted": predicted, "failed": failed,
                })
    else:
        rankings = read_rankings(args.rankings)
        for pair, _ in ds.pairs:
            if pair.pair_id not in rankings:
                log.warning("pair %s has no rankings, skipping", pair.pair_id)
                continue
            pair_rankings = sorted(rankings[pair.pair_id].values(),
                                   key=lambda r: r.source_idx)
            outcomes = refine.refine_pair(pair, pair_rankings, args.form, mode,
                                          guidance, client, k,
                                          max_in_flight=args.max_in_flight)
            for outcome in outcomes:
                full = rankings[pair.pair_id][outcome.source_idx]
                kept = refine.filtered_ranking(full, outcome.accepted)
                records.append({
                    "pair_id": pair.pair_id,
                    "source_idx": outcome.source_idx,
                    "presented": list(outcome.presented),
                    "predicted": sorted(outcome.accepted),
                    "ranking": [[t, s] for t, s in kept.ranked],
                    "failed": outcome.failed,
                })
    _write_jsonl(args.out, records)
    print(json.dumps({"sources": len(records), "form": args.form, "mode": args.mode, "k": k}))
    return 0


def cmd_evaluate(args) -> int:
    ds = corpus.load_dataset(args.gold)
    first = next(iter(corpus.read_jsonl(args.pred)), None)
    if first is None:
        raise ConfigurationError(f"prediction file {args.pred} is empty")
    cutoffs = [int(c) for c in args.cutoffs.split(",")]
    if "predicted" in first[1]:
        macro, rows, n_eligible, n_excluded = evaluate.evaluate_binary(
            ds, read_predictions(args.pred))
        payload = evaluate.render_binary_report(ds.name, macro, rows,
                                                n_eligible, n_excluded)
    else:
        report, rows = evaluate.evaluate_rankings(ds, read_rankings(args.pred),
                                                  cutoffs, args.recall_at)
        payload = evaluate.render_sweep_report(ds.name, report, rows)
    rendered = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(rendered + "\n", encoding="utf-8")
    else:
        print(rendered)
    return 0


def cmd_truerecall(args) -> int:
    ds = corpus.load_dataset(args.gold)
    methods = {}
    for spec_arg in args.pred:
        name, _, path = spec_arg.partition("=")
        if not path:
            raise ConfigurationError(f"--pred needs NAME=PATH, got {spec_arg!r}")
        methods[name] = read_predictions(path)
    payload = {"dataset": ds.name, "methods": {}}
    for name, preds in methods.items():
        triples = []
        for pair, gold in ds.pairs:
            for src in sorted(gold.source_indices()):
                predicted = preds.get(pair.pair_id, {}).get(src, set())
                triples.append(evaluate.prf_for_source(predicted, gold.targets_for(src)))
        if not triples:
            raise ConfigurationError("gold dataset has no linked sources")
        n = len(triples)
        payload["methods"][name] = {
            "precision": round(float(sum(t[0] for t in triples) / n), 4),
            "recall": round(float(sum(t[1] for t in triples) / n), 4),
            "f1": round(float(sum(t[2] for t in triples) / n), 4),
            "sources": n,
        }
    rendered = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(rendered + "\n", encoding="utf-8")
    else:
        print(rendered)
    return 0


def cmd_assemble(args) -> int:
    ds = corpus.load_dataset(args.infile)
    cfg = annotate.AssemblyConfig.preset(args.cfg)
    rllm = read_rankings(args.rllm)
    retr = read_rankings(args.retr)
    pairs, bundles = service.assemble_session(ds, rllm, retr, cfg, args.seed)
    links_by_pair = {p.pair_id: l for p, l in ds.pairs}
    service.write_session_file(
        args.out, [(p, links_by_pair[p.pair_id]) for p in pairs], bundles)
    print(json.dumps({"pairs": len(pairs), "bundles": len(bundles),
                      "cfg": args.cfg, "seed": args.seed}))
    return 0


def cmd_agree(args) -> int:
    records = service.read_export(args.decisions)
    report: dict = {}
    try:
        agreement = annotate.pairwise_agreement(records)
        report["agreement"] = {
            "kappa": None if agreement.kappa is None else round(float(agreement.kappa), 4),
            "observed_agreement": round(float(agreement.observed_agreement), 4),
            "n_items": agreement.n_items,
        }
    except LinkforgeError as e:
        report["agreement"] = {"error": str(e)}

    if args.bundles:
        _, bundles = service.load_session_file(args.bundles)
    else:
        # fall back to the decided candidates named in the export
        bundles = _bundles_from_export(records)
    decisions = [
        annotate.Decision(a, r["pair_id"], int(r["source_idx"]), int(r["target_idx"]),
                          bool(v), r.get("timestamp", ""))
        for r in records for a, v in r["decisions"].items()
    ]
    breakdown = annotate.acceptance_breakdown(decisions, bundles)
    report["breakdown"] = {
        cat: {
            "shown": b.shown,
            "accepted_by_all": b.accepted_by_all,
            "rate_pct": None if b.rate is None else round(float(b.rate) * 100, 1),
            "per_annotator_pct": {
                a: None if r is None else round(float(r) * 100, 1)
                for a, r in b.per_annotator.items()
            },
        }
        for cat, b in breakdown.items()
    }

    if args.gold:
        gold_ds = corpus.load_dataset(args.gold)
        gold = {p.pair_id: l for p, l in gold_ds.pairs}
        report["qualification"] = {
            a: {"kappa": None if rep.kappa is None else round(float(rep.kappa), 4),
                "n_items": rep.n_items}
            for a, rep in annotate.qualification_scores(records, gold).items()
        }
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _bundles_from_export(records) -> list[annotate.CandidateBundle]:
    grouped: dict[tuple[str, int], list] = {}
    for r in records:
        prov = annotate.Provenance(frozenset(r.get("provenance", ["random"])))
        grouped.setdefault((r["pair_id"], int(r["source_idx"])), []).append(
            (int(r["target_idx"]), prov))
    return [
        annotate.CandidateBundle(pair_id, source_idx, tuple(sorted(cands)))
        for (pair_id, source_idx), cands in grouped.items()
    ]


def cmd_serve(args) -> int:
    import uvicorn

    host, _, port = args.addr.rpartition(":")
    pairs, bundles = service.load_session_file(args.bundles)
    store = service.DecisionStore(args.store)
    roster = set(args.annotators.split(",")) if args.annotators else None
    session = service.AnnotationSession(pairs, bundles, store, roster)
    app = service.create_app(session, ui_dir=args.ui)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkforge",
                                     description="cross-document sentence linking toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load/convert a dataset and write native format")
    p.add_argument("--format", choices=["native", "ecb", "f1000"], required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name")
    p.add_argument("--domain", choices=list(corpus.DOMAINS), default="other")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--domain", choices=list(corpus.DOMAINS), default="other")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate linked source documents")
    p.add_argument("--domain", choices=["reviews", "news"], required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--llm", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--temperature", type=float, default=0.3)
    p.add_argument("--top-p", dest="top_p", type=float, default=0.9)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("clean", help="strip scraping artifacts from raw articles")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--llm", required=True)
    p.add_argument("--model", default="gpt-4o-mini")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("retrieve", help="rank target sentences per source sentence")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--method", choices=["bm25", "dense"], required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embed", help="embedding endpoint URL (dense)")
    p.add_argument("--model", help="embedding model name (dense)")
    p.add_argument("--cache", help="embedding cache directory")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("refine", help="LLM classification of retrieved candidates")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--rankings")
    p.add_argument("--form", choices=["pairwise", "listwise", "llm-only"], required=True)
    p.add_argument("--mode", choices=list(refine.MODE_NAMES), default="both")
    p.add_argument("--k", type=int)
    p.add_argument("--llm", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--domain", choices=list(corpus.DOMAINS), default="other")
    p.add_argument("--guidance", help="guidance JSON file (defaults ship per domain)")
    p.add_argument("--temperature", type=float, default=0.3)
    p.add_argument("--top-p", dest="top_p", type=float, default=0.9)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="score predictions against gold links")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--cutoffs", default="1,3,5,7,10,20")
    p.add_argument("--recall-at", dest="recall_at", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("truerecall", help="score methods against an exhaustive gold subset")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--out")
    p.set_defaults(func=cmd_truerecall)

    p = sub.add_parser("assemble", help="build annotation bundles from two rankings")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--rllm", required=True)
    p.add_argument("--retr", required=True)
    p.add_argument("--cfg", choices=list(annotate.ASSEMBLY_PRESETS), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("agree", help="agreement analytics over a decision export")
    p.add_argument("--decisions", required=True)
    p.add_argument("--gold")
    p.add_argument("--bundles", help="session file, for shown-candidate counts")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--bundles", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--addr", default="127.0.0.1:8900")
    p.add_argument("--annotators", help="comma-separated annotator tokens")
    p.add_argument("--ui", help="static UI directory to mount at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s:%(name)s:%(message)s",
    )
    try:
        return args.func(args)
    except LinkforgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
