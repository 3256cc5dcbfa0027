"""Hyperparameter search over (nprobe, reorder_k): grid sweeps, Pareto fronts,
tuning to a metric target at minimum cost, and the cost-savings comparison
between traditional, tolerant, and semantic recall objectives."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import CorpusError, GroundTruth, JudgmentSet, PathLike, QuerySet, RetrievedSet
from .exact import score
from .ivf import IvfIndex, SearchParams, search_batch
from .metrics import recall_at_k, semantic_recall, tolerant_recall


class TargetUnreachable(RuntimeError):
    def __init__(self, metric_name: str, target: float, best: float):
        super().__init__(
            f"no trial reaches {metric_name} >= {target:.4f}; best achieved {best:.4f}"
        )
        self.best = best


@dataclass(frozen=True)
class TuningTrial:
    params: SearchParams
    metric_name: str
    achieved: float
    cost: float  # mean bytes read per query
    inner_products: float = 0.0
    extras: dict = field(default_factory=dict, compare=False)


def exact_rescored(
    retrieved: RetrievedSet, queries: QuerySet, index: IvfIndex
) -> RetrievedSet:
    """Replace retrieved scores with exact raw-vector scores and re-sort each
    row (score descending, id ascending). Evaluation-time only: costs keep the
    values charged by the original search."""
    ids = retrieved.ids.copy()
    scores = np.empty_like(retrieved.scores, dtype=np.float64)
    for qi in range(retrieved.n_queries):
        q = queries.data[qi]
        for j, doc_id in enumerate(ids[qi]):
            scores[qi, j] = score(q, index.docs.data[int(doc_id)], index.metric)
        order = np.lexsort((ids[qi], -scores[qi]))
        ids[qi] = ids[qi][order]
        scores[qi] = scores[qi][order]
    return RetrievedSet(
        ids, scores.astype(np.float32), retrieved.cost_bytes, retrieved.inner_products
    )


def _mean_metric(
    metric_name: str,
    gt: GroundTruth,
    retrieved: RetrievedSet,
    sn_sets: Optional[list[set[int]]],
    x: float,
) -> float:
    vals = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for qi in range(gt.n_queries):
            if metric_name == "recall":
                vals.append(recall_at_k(gt.ids[qi], retrieved.ids[qi]))
            elif metric_name == "trecall":
                vals.append(
                    tolerant_recall(
                        gt.ids[qi], gt.scores[qi], retrieved.ids[qi], retrieved.scores[qi], x
                    )
                )
            elif metric_name == "srecall":
                v = semantic_recall(sn_sets[qi], retrieved.ids[qi])
                if v is not None:
                    vals.append(v)
            else:
                raise CorpusError(f"unknown tuning metric {metric_name!r}")
    if not vals:
        raise CorpusError(f"{metric_name} undefined for every query")
    return float(np.mean(vals))


def sweep(
    index: IvfIndex,
    queries: QuerySet,
    gt: GroundTruth,
    metric_name: str,
    grid: Sequence[SearchParams],
    judgments: Optional[JudgmentSet] = None,
    x: float = 1.0,
) -> list[TuningTrial]:
    """Evaluate every grid configuration over all queries. Tolerant recall is
    always computed on exact rescored scores; recall and srecall need ids only."""
    if not grid:
        raise CorpusError("empty tuning grid")
    if metric_name == "srecall" and judgments is None:
        raise CorpusError("srecall tuning requires judgments")
    sn_sets = judgments.sn_sets(gt) if judgments is not None else None
    k = gt.k
    trials = []
    for params in grid:
        retrieved = search_batch(index, queries, k, params)
        rescored = exact_rescored(retrieved, queries, index)
        achieved = _mean_metric(metric_name, gt, rescored, sn_sets, x)
        extras = {
            name: _mean_metric(name, gt, rescored, sn_sets, x)
            for name in ("recall", "trecall", "srecall")
            if name != metric_name and (name != "srecall" or sn_sets is not None)
        }
        trials.append(
            TuningTrial(
                params=params,
                metric_name=metric_name,
                achieved=achieved,
                cost=float(retrieved.cost_bytes.mean()),
                inner_products=float(retrieved.inner_products.mean()),
                extras=extras,
            )
        )
    return trials


def pareto(trials: Sequence[TuningTrial]) -> list[TuningTrial]:
    """Drop every trial dominated by another (>= metric at < cost, or > metric
    at <= cost). The survivors, sorted by cost, have non-decreasing metric."""
    if not trials:
        raise CorpusError("empty trial list")
    front = [
        t
        for t in trials
        if not any(
            (o.achieved >= t.achieved and o.cost < t.cost)
            or (o.achieved > t.achieved and o.cost <= t.cost)
            for o in trials
        )
    ]
    return sorted(front, key=lambda t: (t.cost, t.achieved))


def tune_for_target(
    trials: Sequence[TuningTrial], target: float
) -> TuningTrial:
    """Minimum-cost trial whose achieved metric meets the target."""
    feasible = [t for t in trials if t.achieved >= target]
    if not feasible:
        best = max(t.achieved for t in trials)
        raise TargetUnreachable(trials[0].metric_name, target, best)
    return min(feasible, key=lambda t: (t.cost, -t.achieved))


def cost_savings_experiment(
    index: IvfIndex,
    queries: QuerySet,
    gt: GroundTruth,
    judgments: JudgmentSet,
    grid: Sequence[SearchParams],
    x: float,
    target: float,
) -> dict:
    """Compare tuning objectives as in the cost-savings analysis:

    (a) tune traditional recall to the target; measure the trecall and srecall
    that configuration achieves; (b) re-tune with trecall targeting (a)'s
    trecall; (c) re-tune with srecall targeting (a)'s srecall. Also compares
    targeting `target` directly on trecall vs on recall. Savings are percent
    cost reductions relative to (a)."""
    recall_trials = sweep(index, queries, gt, "recall", grid, judgments, x)
    trecall_trials = sweep(index, queries, gt, "trecall", grid, judgments, x)
    srecall_trials = sweep(index, queries, gt, "srecall", grid, judgments, x)

    a = tune_for_target(recall_trials, target)
    trecall_of_a = a.extras["trecall"]
    srecall_of_a = a.extras["srecall"]
    b = tune_for_target(trecall_trials, trecall_of_a)
    c = tune_for_target(srecall_trials, srecall_of_a)
    direct_trecall = tune_for_target(trecall_trials, target)

    def pct_savings(base: TuningTrial, other: TuningTrial) -> float:
        return 100.0 * (base.cost - other.cost) / base.cost if base.cost else 0.0

    return {
        "target": target,
        "tolerance_x": x,
        "recall_tuned": a,
        "trecall_retuned": b,
        "srecall_retuned": c,
        "trecall_direct": direct_trecall,
        "savings_trecall_pct": pct_savings(a, b),
        "savings_srecall_pct": pct_savings(a, c),
        "savings_direct_trecall_pct": pct_savings(a, direct_trecall),
    }


def default_grid(nlist: int, k: int, reorder_ks: Sequence[int] = ()) -> list[SearchParams]:
    """Log-spaced nprobe values up to nlist, crossed with rescoring depths."""
    nprobes = []
    p = 1
    while p < nlist:
        nprobes.append(p)
        p *= 2
    nprobes.append(nlist)
    reorders = list(reorder_ks) if reorder_ks else [0, k, 2 * k]
    return [SearchParams(np_, rk) for np_ in nprobes for rk in reorders]


def _trial_dict(t: TuningTrial) -> dict:
    return {
        "nprobe": t.params.nprobe,
        "reorder_k": t.params.reorder_k,
        "metric": t.metric_name,
        "achieved": t.achieved,
        "cost_bytes": t.cost,
        "inner_products": t.inner_products,
        "extras": t.extras,
    }


def write_tuning_report(
    trials: Sequence[TuningTrial],
    front: Sequence[TuningTrial],
    path_json: PathLike,
    path_csv: Optional[PathLike] = None,
    savings: Optional[dict] = None,
) -> None:
    report = {
        "trials": [_trial_dict(t) for t in trials],
        "pareto_front": [_trial_dict(t) for t in front],
    }
    if savings is not None:
        report["savings"] = {
            key: (_trial_dict(val) if isinstance(val, TuningTrial) else val)
            for key, val in savings.items()
        }
    with open(path_json, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    if path_csv is not None:
        with open(path_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric_value", "cost_bytes"])
            for t in trials:
                w.writerow([f"{t.achieved:.10g}", f"{t.cost:.10g}"])
