"""Command-line entry point wiring the library into reproducible pipelines.

Every subcommand writes a run manifest (config snapshot, input digests, seed,
timestamps) next to its outputs. Exit codes: 0 success, 1 runtime failure,
2 usage or validation error.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, ivf, metrics, synth, tuning
from .corpus import (
    CorpusError,
    QuerySet,
    load_ground_truth,
    load_judgments,
    load_vectors,
    read_fvecs,
    save_ground_truth,
    save_judgments,
    save_results,
    save_vectors,
    validate_normalized,
)
from .exact import Metric, brute_force_topk
from .judge import JudgeConfig, JudgeError, judge_ground_truth, synthetic_oracle_judge

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "config": {k: v for k, v in config.items() if not callable(v)},
        "inputs": {str(p): _sha256(p) for p in inputs if p.is_file()},
        "version": __version__,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config_file(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        return tomllib.load(f)


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    """Precedence: CLI flags > config file > defaults."""
    if not getattr(args, "config", None):
        return
    cfg = _load_config_file(args.config)
    explicit = {
        tok.split("=", 1)[0].lstrip("-").replace("-", "_")
        for tok in argv
        if tok.startswith("--")
    }
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if hasattr(args, key) and key not in explicit:
            setattr(args, key, value)


def _load_queries(path: str) -> QuerySet:
    return QuerySet(read_fvecs(path))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    rule = synth.TopMPlanted(args.planted_m)
    spec = synth.SynthSpec(
        n_docs=args.n_docs,
        dim=args.dim,
        n_clusters=args.n_clusters,
        cluster_std=args.cluster_std,
        n_queries=args.n_queries,
        relevance_rule=rule,
        seed=args.seed,
    )
    if args.profile:
        spec = synth.skew_profile(spec, args.profile, k=args.profile_k)
    docs, queries, oracle = synth.generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_vectors(docs, out / "docs.fvecs")
    save_vectors(synth.VectorSet(queries.data), out / "queries.fvecs")
    oracle.save(out / "oracle.jsonl")
    write_manifest(out, "synth", vars(args), [])
    print(f"wrote {docs.count} docs, {queries.count} queries to {out}")
    return EXIT_OK


def cmd_gt(args) -> int:
    docs = load_vectors(args.docs)
    queries = _load_queries(args.queries)
    metric = Metric.parse(args.metric)
    if metric is Metric.INNER_PRODUCT:
        validate_normalized(docs.data)
    gt = brute_force_topk(queries, docs, args.k, metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_ground_truth(gt, out / "gt_ids.ivecs", out / "gt_scores.fvecs")
    write_manifest(out, "gt", vars(args), [Path(args.docs), Path(args.queries)])
    print(f"wrote top-{args.k} ground truth for {queries.count} queries to {out}")
    return EXIT_OK


def cmd_index(args) -> int:
    docs = load_vectors(args.docs)
    centroids = ivf.train_kmeans(docs, args.nlist, iters=args.iters, seed=args.seed)
    index = ivf.build_index(
        docs, centroids, quantize=not args.no_quantize, metric=Metric.parse(args.metric)
    )
    out = Path(args.out)
    ivf.save_index(index, out)
    write_manifest(out, "index", vars(args), [Path(args.docs)])
    print(f"built IVF index: nlist={args.nlist}, quantized={index.quantized} at {out}")
    return EXIT_OK


def cmd_search(args) -> int:
    docs = load_vectors(args.docs)
    index = ivf.load_index(args.index, docs)
    queries = _load_queries(args.queries)
    params = ivf.SearchParams(nprobe=args.nprobe, reorder_k=args.reorder_k)
    retrieved = ivf.search_batch(index, queries, args.k, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_results(retrieved, out / "results.jsonl")
    write_manifest(out, "search", vars(args), [Path(args.docs), Path(args.queries)])
    print(f"searched {queries.count} queries, mean cost {retrieved.cost_bytes.mean():.0f} bytes")
    return EXIT_OK


def cmd_judge(args) -> int:
    gt = load_ground_truth(args.gt_ids, args.gt_scores)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.oracle:
        oracle = synth.PlantedOracle.load(args.oracle, gt.n_queries)
        judgments = synthetic_oracle_judge(gt, oracle, judge_id=args.judge_id)
    else:
        if not args.endpoint:
            raise CorpusError("either --oracle or --endpoint is required")
        texts = json.loads(Path(args.texts).read_text())
        from .corpus import DocStore

        store = DocStore(
            docs={int(k): v for k, v in texts["docs"].items()},
            queries={int(k): v for k, v in texts["queries"].items()},
        )
        cfg = JudgeConfig(
            endpoint=args.endpoint,
            model=args.model,
            judge_id=args.judge_id,
            max_in_flight=args.threads,
            cache_path=out / "judge_cache.jsonl",
            api_key_env=args.api_key_env,
        )
        judgments = judge_ground_truth(gt, store, cfg)
    save_judgments(judgments, out / "judgments.jsonl")
    write_manifest(out, "judge", {k: v for k, v in vars(args).items()}, [Path(args.gt_ids)])
    print(f"wrote {len(judgments)} judgments to {out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .corpus import load_results

    gt = load_ground_truth(args.gt_ids, args.gt_scores)
    retrieved = load_results(args.results)
    judgments = load_judgments(args.judgments) if args.judgments else None
    x = args.tolerance
    if x is None:
        x = metrics.tolerance_proxy(gt, gt.k)
    evals = metrics.evaluate_queries(gt, retrieved, judgments, x=x, eps=args.eps)
    rows = metrics.aggregate(evals)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_evals_csv(evals, out / "per_query.csv")
    metrics.write_summary_json(rows, out / "summary.json")
    write_manifest(out, "metrics", vars(args), [Path(args.gt_ids), Path(args.results)])
    for row in rows:
        if row["group"] == "all" and row["mean"] is not None:
            print(f"{row['metric']}: mean {row['mean']:.4f} (std {row['std']:.4f})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    gt = load_ground_truth(args.gt_ids, args.gt_scores)
    judgments = load_judgments(args.judgments)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hist = analysis.sn_histogram(judgments, gt, bin_width=args.bin_width)
    analysis.write_histogram_csv([(float(l), c) for l, c in hist], out / "sn_histogram.csv")
    stats = analysis.score_delta_stats(gt, judgments)
    with open(out / "score_deltas.json", "w") as f:
        json.dump([s.__dict__ for s in stats], f, indent=2, sort_keys=True)
        f.write("\n")
    rb = analysis.rank_biserial(gt, judgments)
    (out / "rank_biserial.json").write_text(json.dumps({"pooled": rb}, indent=2) + "\n")
    write_manifest(out, "analyze", vars(args), [Path(args.gt_ids), Path(args.judgments)])
    print(f"rank-biserial (pooled): {rb:.3f}")
    return EXIT_OK


def cmd_tune(args) -> int:
    docs = load_vectors(args.docs)
    index = ivf.load_index(args.index, docs)
    queries = _load_queries(args.queries)
    gt = load_ground_truth(args.gt_ids, args.gt_scores)
    judgments = load_judgments(args.judgments) if args.judgments else None
    grid = tuning.default_grid(index.nlist, gt.k)
    x = args.tolerance if args.tolerance is not None else metrics.tolerance_proxy(gt, gt.k)
    trials = tuning.sweep(index, queries, gt, args.objective, grid, judgments, x=x)
    front = tuning.pareto(trials)
    savings = None
    if args.target is not None and judgments is not None:
        savings = tuning.cost_savings_experiment(
            index, queries, gt, judgments, grid, x, args.target
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tuning.write_tuning_report(
        trials, front, out / "tuning.json", out / "cost_curve.csv", savings
    )
    write_manifest(out, "tune", vars(args), [Path(args.docs), Path(args.queries)])
    print(f"swept {len(trials)} configs; Pareto front has {len(front)} points")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """synth -> gt -> index -> search -> judge -> metrics -> analyze, end to end."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = "synth"
    try:
        spec = synth.SynthSpec(
            n_docs=args.n_docs,
            dim=args.dim,
            n_clusters=args.n_clusters,
            cluster_std=args.cluster_std,
            n_queries=args.n_queries,
            seed=args.seed,
        )
        spec = synth.skew_profile(spec, args.profile, k=args.k)
        docs, queries, oracle = synth.generate(spec)
        save_vectors(docs, out / "docs.fvecs")

        stage = "gt"
        gt = brute_force_topk(queries, docs, args.k, Metric.INNER_PRODUCT)
        save_ground_truth(gt, out / "gt_ids.ivecs", out / "gt_scores.fvecs")

        stage = "index"
        centroids = ivf.train_kmeans(docs, args.nlist, seed=args.seed)
        index = ivf.build_index(docs, centroids, quantize=True)

        stage = "search"
        params = ivf.SearchParams(nprobe=args.nprobe, reorder_k=args.k)
        retrieved = ivf.search_batch(index, queries, args.k, params)
        retrieved = tuning.exact_rescored(retrieved, queries, index)
        save_results(retrieved, out / "results.jsonl")

        stage = "judge"
        judgments = synthetic_oracle_judge(gt, oracle)
        save_judgments(judgments, out / "judgments.jsonl")

        stage = "metrics"
        x = metrics.tolerance_proxy(gt, args.k)
        evals = metrics.evaluate_queries(gt, retrieved, judgments, x=x)
        metrics.write_evals_csv(evals, out / "per_query.csv")
        metrics.write_summary_json(metrics.aggregate(evals), out / "summary.json")

        stage = "analyze"
        stats = analysis.score_delta_stats(gt, judgments)
        with open(out / "score_deltas.json", "w") as f:
            json.dump([s.__dict__ for s in stats], f, indent=2, sort_keys=True)
            f.write("\n")
    except Exception as exc:
        print(f"pipeline failed at stage {stage!r}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_manifest(out, "pipeline", vars(args), [])
    print(f"pipeline complete: tolerance proxy x={x:.3f}%, reports in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annquality", description="ANNS retrieval-quality evaluation toolkit"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file (flags take precedence)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=0, help="0 = machine parallelism")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--n-docs", type=int, default=10000)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--n-clusters", type=int, default=100)
    p.add_argument("--cluster-std", type=float, default=0.1)
    p.add_argument("--n-queries", type=int, default=100)
    p.add_argument("--planted-m", type=int, default=10)
    p.add_argument("--profile", choices=["bimodal", "powerlaw"])
    p.add_argument("--profile-k", type=int, default=100)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gt", help="brute-force ground truth")
    common(p)
    p.add_argument("--docs", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--metric", default="ip", choices=["ip", "l2"])
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("index", help="train and build an IVF index")
    common(p)
    p.add_argument("--docs", required=True)
    p.add_argument("--nlist", type=int, required=True)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--metric", default="ip", choices=["ip", "l2"])
    p.add_argument("--no-quantize", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="search an IVF index")
    common(p)
    p.add_argument("--docs", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--nprobe", type=int, required=True)
    p.add_argument("--reorder-k", type=int, default=0)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("judge", help="label ground-truth neighbors")
    common(p)
    p.add_argument("--gt-ids", required=True)
    p.add_argument("--gt-scores", required=True)
    p.add_argument("--oracle", help="planted oracle JSONL (offline judging)")
    p.add_argument("--endpoint", help="LLM judge HTTP endpoint")
    p.add_argument("--model", default="")
    p.add_argument("--judge-id", default="judge-1")
    p.add_argument("--texts", help="JSON file with doc and query texts")
    p.add_argument("--api-key-env", help="env var holding the API key")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("metrics", help="compute retrieval-quality metrics")
    common(p)
    p.add_argument("--gt-ids", required=True)
    p.add_argument("--gt-scores", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--judgments")
    p.add_argument("--tolerance", type=float, help="x%% (default: proxy from gt)")
    p.add_argument("--eps", type=float, default=0.01)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("analyze", help="SN distribution and score-delta analyses")
    common(p)
    p.add_argument("--gt-ids", required=True)
    p.add_argument("--gt-scores", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--bin-width", type=int, default=10)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("tune", help="grid search over search parameters")
    common(p)
    p.add_argument("--docs", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt-ids", required=True)
    p.add_argument("--gt-scores", required=True)
    p.add_argument("--judgments")
    p.add_argument("--objective", default="recall", choices=["recall", "trecall", "srecall"])
    p.add_argument("--tolerance", type=float)
    p.add_argument("--target", type=float)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("pipeline", help="synthetic end-to-end evaluation")
    common(p)
    p.add_argument("--n-docs", type=int, default=10000)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--n-clusters", type=int, default=100)
    p.add_argument("--cluster-std", type=float, default=0.1)
    p.add_argument("--n-queries", type=int, default=100)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--nlist", type=int, default=100)
    p.add_argument("--nprobe", type=int, default=10)
    p.add_argument("--profile", default="bimodal", choices=["bimodal", "powerlaw"])
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        _apply_config(args, argv)
        _validate_args(args)
        return args.func(args)
    except (CorpusError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, FileNotFoundError) else _error_code(exc)
    except (JudgeError, tuning.TargetUnreachable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _error_code(exc: CorpusError) -> int:
    return EXIT_USAGE


def _validate_args(args) -> None:
    if getattr(args, "k", None) is not None and args.k <= 0:
        raise CorpusError("k must be positive")


if __name__ == "__main__":
    sys.exit(main())
