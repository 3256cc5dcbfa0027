"""Retrieval-quality metrics: traditional recall, semantic recall, tolerant
recall, recall@k-eps, R-precision, relative distance error, plus the tolerance
threshold proxy and its calibration against semantic recall.

Semantic recall is the fraction of a query's semantic neighbors (ground-truth
items judged relevant) present in the retrieved set; it is undefined when the
query has no semantic neighbors. Tolerant recall matches retrieved items to
ground-truth items, accepting a substitute whose exact score is within a
relative tolerance of the ground-truth score, and reports the maximum matching
size over k.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import CorpusError, GroundTruth, JudgmentSet, PathLike, RetrievedSet
from .exact import Metric

DEFAULT_SN_BINS = (20, 80)


# ---------------------------------------------------------------------------
# Per-query metrics
# ---------------------------------------------------------------------------


def recall_at_k(gt_ids: Sequence[int], retrieved_ids: Sequence[int]) -> float:
    """|gt ∩ retrieved| / k for two id sets of equal size k."""
    gt_set, ret_set = set(map(int, gt_ids)), set(map(int, retrieved_ids))
    if len(gt_set) != len(gt_ids) or len(ret_set) != len(retrieved_ids):
        raise CorpusError("duplicate ids in recall input")
    if len(gt_set) != len(ret_set):
        raise CorpusError(f"size mismatch: {len(gt_set)} vs {len(ret_set)}")
    if not gt_set:
        raise CorpusError("empty id sets")
    return len(gt_set & ret_set) / len(gt_set)


def semantic_recall(
    sn: set[int], retrieved_ids: Sequence[int]
) -> Optional[float]:
    """|retrieved ∩ SN| / |SN|; None (undefined) when the query has no SN."""
    if not sn:
        return None
    return len(sn & set(map(int, retrieved_ids))) / len(sn)


def r_precision(sn: set[int], retrieved_ids: Sequence[int]) -> Optional[float]:
    """Fraction of the top-R retrieved ids that are semantic neighbors, R=|SN|."""
    if not sn:
        return None
    top = [int(x) for x in retrieved_ids[: len(sn)]]
    return len(sn & set(top)) / len(sn)


def _distances(scores: np.ndarray, metric: Metric) -> np.ndarray:
    """Distance implied by a stored similarity: 1 - score for normalized inner
    product, negated score for Euclidean."""
    s = np.asarray(scores, dtype=np.float64)
    if metric is Metric.INNER_PRODUCT:
        return 1.0 - s
    return -s


def recall_at_k_eps(
    gt_scores: Sequence[float],
    retrieved_scores: Sequence[float],
    eps: float,
    metric: Metric = Metric.INNER_PRODUCT,
) -> float:
    """Fraction of retrieved items within (1+eps) of the k-th ground-truth
    distance."""
    if eps < 0:
        raise CorpusError("eps must be >= 0")
    gt_d = _distances(np.asarray(gt_scores), metric)
    ret_d = _distances(np.asarray(retrieved_scores), metric)
    if not (np.all(np.isfinite(gt_d)) and np.all(np.isfinite(ret_d))):
        raise CorpusError("non-finite scores")
    d_k = gt_d[-1]  # gt sorted by score descending => last is the k-th distance
    return float(np.mean(ret_d <= (1.0 + eps) * d_k))


def relative_distance_error(
    gt_scores: Sequence[float],
    retrieved_scores: Sequence[float],
    metric: Metric = Metric.INNER_PRODUCT,
) -> tuple[float, int]:
    """Mean rank-wise (d_ret - d_gt) / d_gt. Ranks with d_gt < 1e-9 are
    skipped; returns (rde, skipped_count)."""
    gt_d = _distances(np.asarray(gt_scores), metric)
    ret_d = _distances(np.asarray(retrieved_scores), metric)
    if gt_d.shape != ret_d.shape:
        raise CorpusError("rank count mismatch")
    keep = gt_d >= 1e-9
    skipped = int((~keep).sum())
    if not keep.any():
        return 0.0, skipped
    return float(np.mean((ret_d[keep] - gt_d[keep]) / gt_d[keep])), skipped


# ---------------------------------------------------------------------------
# Tolerant recall
# ---------------------------------------------------------------------------


def tolerant_match_size(
    gt_ids: np.ndarray,
    gt_scores: np.ndarray,
    ret_ids: np.ndarray,
    ret_scores: np.ndarray,
    x: float,
) -> int:
    """Maximum matching between retrieved and ground-truth items where an edge
    is an identical id or a retrieved score within x% of the ground-truth score.

    Greedy over the threshold's interval structure: identity pairs whose score
    fails the threshold are matched first (their coverage interval lies
    strictly below their own ground-truth item, so reserving them never costs
    an augmenting path); the rest are processed in ascending score order, each
    taking the lowest-score unmatched ground-truth item it can cover.
    Optimality is verified against a brute-force matcher in the test suite.
    """
    if x < 0:
        raise CorpusError("tolerance x must be >= 0")
    gs = np.asarray(gt_scores, dtype=np.float64)
    rs = np.asarray(ret_scores, dtype=np.float64)
    if not (np.all(np.isfinite(gs)) and np.all(np.isfinite(rs))):
        raise CorpusError("non-finite scores in tolerant recall input")
    factor = 1.0 - x / 100.0
    gt_pos = {int(g): i for i, g in enumerate(gt_ids)}

    matched_gt = np.zeros(len(gs), dtype=bool)
    matched = 0
    deferred: list[int] = []
    for j in np.argsort(rs, kind="stable"):
        gi = gt_pos.get(int(ret_ids[j]))
        if gi is not None and rs[j] < gs[gi] * factor:
            # identity edge not implied by the threshold: reserve it
            if not matched_gt[gi]:
                matched_gt[gi] = True
                matched += 1
        else:
            deferred.append(j)

    gt_order = np.argsort(gs, kind="stable")  # ascending score
    for j in deferred:
        for gi in gt_order:
            if not matched_gt[gi] and rs[j] >= gs[gi] * factor:
                matched_gt[gi] = True
                matched += 1
                break
    return matched


def tolerant_recall(
    gt_ids: Sequence[int],
    gt_scores: Sequence[float],
    ret_ids: Sequence[int],
    ret_scores: Sequence[float],
    x: float,
) -> float:
    """Maximum matching size over k. Retrieved scores must be exact
    (rescored) similarities for the tolerance comparison to be meaningful."""
    gt_ids = np.asarray(gt_ids, dtype=np.int64)
    ret_ids = np.asarray(ret_ids, dtype=np.int64)
    if len(gt_ids) != len(ret_ids):
        raise CorpusError("tolerant recall requires equal k on both sides")
    if np.any(np.asarray(gt_scores, dtype=np.float64) <= 0):
        warnings.warn(
            "non-positive ground-truth score: the relative tolerance loosens "
            "rather than tightens for negative scores",
            stacklevel=2,
        )
    size = tolerant_match_size(
        gt_ids, np.asarray(gt_scores), ret_ids, np.asarray(ret_scores), x
    )
    return size / len(gt_ids)


# ---------------------------------------------------------------------------
# Tolerance threshold proxy and calibration
# ---------------------------------------------------------------------------


def tolerance_proxy(gt: GroundTruth, k: int) -> float:
    """Dataset-level tolerance estimate from late-neighbor score gaps:
    (score at rank ceil(2k/3) - score at rank k) / max score * 100, averaged
    over queries. Ranks are 1-based; queries whose top score is <= 0 are
    skipped with a warning."""
    if k < 1 or k > gt.k:
        raise CorpusError(f"k={k} exceeds available ground-truth depth {gt.k}")
    mid = math.ceil(2 * k / 3)
    vals = []
    skipped = 0
    for qi in range(gt.n_queries):
        s = gt.scores[qi].astype(np.float64)
        if s[0] <= 0:
            skipped += 1
            continue
        vals.append((s[mid - 1] - s[k - 1]) / s[0] * 100.0)
    if skipped:
        warnings.warn(f"tolerance_proxy skipped {skipped} queries with top score <= 0")
    if not vals:
        raise CorpusError("no queries usable for tolerance proxy")
    return float(np.mean(vals))


def calibrate_tolerance(
    gt: GroundTruth,
    judgments: JudgmentSet,
    retrieved: RetrievedSet,
    grid: Sequence[float],
) -> tuple[list[tuple[float, float]], float]:
    """Mean tolerant recall at each grid tolerance, plus the tolerance at which
    the curve crosses mean semantic recall (linear interpolation between the
    bracketing grid points)."""
    if len(grid) == 0:
        raise CorpusError("empty tolerance grid")
    grid = sorted(float(g) for g in grid)
    sn_sets = judgments.sn_sets(gt)
    srecalls = [
        semantic_recall(sn_sets[qi], retrieved.ids[qi]) for qi in range(gt.n_queries)
    ]
    defined = [v for v in srecalls if v is not None]
    if not defined:
        raise CorpusError("semantic recall undefined for every query")
    target = float(np.mean(defined))

    curve = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for x in grid:
            vals = [
                tolerant_recall(
                    gt.ids[qi], gt.scores[qi], retrieved.ids[qi], retrieved.scores[qi], x
                )
                for qi in range(gt.n_queries)
            ]
            curve.append((x, float(np.mean(vals))))

    crossing = curve[-1][0]
    for i, (x, t) in enumerate(curve):
        if t >= target:
            if i == 0:
                crossing = x
            else:
                x0, t0 = curve[i - 1]
                crossing = x0 + (x - x0) * (target - t0) / (t - t0) if t > t0 else x
            break
    return curve, crossing


# ---------------------------------------------------------------------------
# Per-query evaluation and aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueryEvaluation:
    query_id: int
    recall: float
    srecall: Optional[float]
    trecall: float
    recall_k_eps: float
    r_precision: Optional[float]
    rde: float
    sn_count: int


def evaluate_queries(
    gt: GroundTruth,
    retrieved: RetrievedSet,
    judgments: Optional[JudgmentSet] = None,
    x: float = 1.0,
    eps: float = 0.01,
    metric: Metric = Metric.INNER_PRODUCT,
) -> list[QueryEvaluation]:
    """Compute every metric for every query. Without judgments, the semantic
    metrics are reported as undefined with sn_count 0."""
    if gt.n_queries != retrieved.n_queries:
        raise CorpusError("query count mismatch between ground truth and results")
    sn_sets = judgments.sn_sets(gt) if judgments is not None else None
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for qi in range(gt.n_queries):
            sn = sn_sets[qi] if sn_sets is not None else set()
            rde, _ = relative_distance_error(gt.scores[qi], retrieved.scores[qi], metric)
            out.append(
                QueryEvaluation(
                    query_id=qi,
                    recall=recall_at_k(gt.ids[qi], retrieved.ids[qi]),
                    srecall=semantic_recall(sn, retrieved.ids[qi]),
                    trecall=tolerant_recall(
                        gt.ids[qi], gt.scores[qi], retrieved.ids[qi], retrieved.scores[qi], x
                    ),
                    recall_k_eps=recall_at_k_eps(
                        gt.scores[qi], retrieved.scores[qi], eps, metric
                    ),
                    r_precision=r_precision(sn, list(retrieved.ids[qi])),
                    rde=rde,
                    sn_count=len(sn),
                )
            )
    return out


_METRIC_FIELDS = ("recall", "srecall", "trecall", "recall_k_eps", "r_precision", "rde")


def aggregate(
    evals: Sequence[QueryEvaluation], bins: Sequence[int] = DEFAULT_SN_BINS
) -> list[dict]:
    """Group queries by SN count and report mean and population std per metric.

    Undefined values are excluded per metric; the exclusion count is reported.
    Groups follow the bin edges plus an "all" group.
    """
    if not evals:
        raise CorpusError("empty evaluation list")
    edges = sorted(int(b) for b in bins)
    groups: list[tuple[str, list[QueryEvaluation]]] = [("all", list(evals))]
    lo = 0
    for hi in edges:
        label = f"sn_{lo}_{hi}" if lo else f"sn_lt_{hi}"
        groups.append((label, [e for e in evals if lo <= e.sn_count < hi]))
        lo = hi
    groups.append((f"sn_ge_{lo}", [e for e in evals if e.sn_count >= lo]))

    rows = []
    for label, members in groups:
        for metric in _METRIC_FIELDS:
            vals = [getattr(e, metric) for e in members]
            defined = [v for v in vals if v is not None]
            rows.append(
                {
                    "group": label,
                    "n_queries": len(members),
                    "metric": metric,
                    "mean": float(np.mean(defined)) if defined else None,
                    "std": float(np.std(defined)) if defined else None,
                    "n_excluded": len(vals) - len(defined),
                }
            )
    return rows


def write_evals_csv(evals: Sequence[QueryEvaluation], path: PathLike) -> None:
    """One row per query per metric."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["query_id", "metric", "value", "sn_count"])
        for e in evals:
            for metric in _METRIC_FIELDS:
                v = getattr(e, metric)
                w.writerow([e.query_id, metric, "" if v is None else f"{v:.10g}", e.sn_count])


def write_summary_json(rows: Sequence[dict], path: PathLike) -> None:
    with open(path, "w") as f:
        json.dump({"groups": list(rows)}, f, indent=2, sort_keys=True)
        f.write("\n")
