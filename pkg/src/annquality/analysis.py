"""Descriptive analyses of judged ground truths and quantization errors:
SN-count histograms, score-delta statistics by SN group, rank-biserial
correlation between relevance and ground-truth rank, and quantization-error
percentile summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import CorpusError, GroundTruth, JudgmentSet, PathLike
from .metrics import DEFAULT_SN_BINS


def sn_histogram(
    judgments: JudgmentSet, gt: GroundTruth, bin_width: int = 10
) -> list[tuple[int, int]]:
    """Counts of queries per SN-count bin [left, left + bin_width)."""
    if bin_width < 1:
        raise CorpusError("bin_width must be positive")
    sn_counts = [len(s) for s in judgments.sn_sets(gt)]
    hist: dict[int, int] = {}
    for c in sn_counts:
        left = (c // bin_width) * bin_width
        hist[left] = hist.get(left, 0) + 1
    return sorted(hist.items())


@dataclass(frozen=True)
class ScoreDeltaStats:
    group: str
    n_queries: int
    avg_score_sn: Optional[float]
    std_score_sn: Optional[float]
    avg_score_non_sn: Optional[float]
    std_score_non_sn: Optional[float]
    avg_delta_sn: Optional[float]
    std_delta_sn: Optional[float]
    avg_delta_non_sn: Optional[float]
    std_delta_non_sn: Optional[float]


def _mean_std(vals: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not vals:
        return None, None
    return float(np.mean(vals)), float(np.std(vals))


def score_delta_stats(
    gt: GroundTruth,
    judgments: JudgmentSet,
    bins: Sequence[int] = DEFAULT_SN_BINS,
) -> list[ScoreDeltaStats]:
    """Per SN-count group: mean score and mean consecutive-score delta for SN
    and non-SN items, each a macro average of per-query means with across-query
    std. Deltas are taken within each class separately, scores sorted
    descending."""
    sn_sets = judgments.sn_sets(gt)
    per_query = []
    for qi in range(gt.n_queries):
        sn = sn_sets[qi]
        scores = gt.scores[qi].astype(np.float64)
        in_sn = np.array([int(d) in sn for d in gt.ids[qi]])
        row = {"sn_count": len(sn)}
        for cls, mask in (("sn", in_sn), ("non_sn", ~in_sn)):
            vals = scores[mask]
            row[f"score_{cls}"] = float(vals.mean()) if len(vals) else None
            row[f"delta_{cls}"] = (
                float(np.mean(-np.diff(vals))) if len(vals) >= 2 else None
            )
        per_query.append(row)

    edges = sorted(int(b) for b in bins)
    groups: list[tuple[str, list[dict]]] = [("all", per_query)]
    lo = 0
    for hi in edges:
        label = f"sn_{lo}_{hi}" if lo else f"sn_lt_{hi}"
        groups.append((label, [r for r in per_query if lo <= r["sn_count"] < hi]))
        lo = hi
    groups.append((f"sn_ge_{lo}", [r for r in per_query if r["sn_count"] >= lo]))

    out = []
    for label, rows in groups:
        stats = {}
        for key in ("score_sn", "score_non_sn", "delta_sn", "delta_non_sn"):
            vals = [r[key] for r in rows if r[key] is not None]
            stats[f"avg_{key}"], stats[f"std_{key}"] = _mean_std(vals)
        out.append(ScoreDeltaStats(group=label, n_queries=len(rows), **stats))
    return out


def rank_biserial(
    gt: GroundTruth,
    judgments: JudgmentSet,
    sn_filter=None,
    pooled: bool = True,
) -> float:
    """Rank-biserial correlation between relevance and ground-truth rank,
    derived from the Mann-Whitney U of Relevant vs NotRelevant items.

    Ranks are ground-truth positions (1 = nearest). Negative values mean
    Relevant items occupy earlier ranks. Pools (query, item) pairs across the
    filtered queries by default; pooled=False averages per-query coefficients
    over queries where both groups are nonempty."""
    sn_sets = judgments.sn_sets(gt)
    selected = [
        qi
        for qi in range(gt.n_queries)
        if sn_filter is None or sn_filter(len(sn_sets[qi]))
    ]
    if not selected:
        raise CorpusError("no queries pass the SN filter")

    def coefficient(ranks: np.ndarray, labels: np.ndarray) -> float:
        n1 = int(labels.sum())
        n0 = len(labels) - n1
        if n1 == 0 or n0 == 0:
            raise CorpusError("a relevance group is empty")
        r = rankdata(ranks)  # midranks for ties across pooled queries
        # U for the Relevant group: pairs where a Relevant item ranks later
        u1 = float(r[labels].sum()) - n1 * (n1 + 1) / 2.0
        return 2.0 * u1 / (n1 * n0) - 1.0

    if pooled:
        ranks, labels = [], []
        for qi in selected:
            ranks.extend(range(1, gt.k + 1))
            sn = sn_sets[qi]
            labels.extend(int(d) in sn for d in gt.ids[qi])
        return coefficient(np.asarray(ranks, dtype=np.float64), np.asarray(labels))

    coeffs = []
    for qi in selected:
        sn = sn_sets[qi]
        labels = np.array([int(d) in sn for d in gt.ids[qi]])
        if 0 < labels.sum() < len(labels):
            coeffs.append(
                coefficient(np.arange(1, gt.k + 1, dtype=np.float64), labels)
            )
    if not coeffs:
        raise CorpusError("no query has both groups nonempty")
    return float(np.mean(coeffs))


@dataclass(frozen=True)
class QuantErrorReport:
    n: int
    p50: float
    p90: float
    p99: float
    max: float
    histogram: list[tuple[float, int]]  # (bin_left, count)


def quant_error_report(errors: Sequence[float], n_bins: int = 50) -> QuantErrorReport:
    """Percentile summary and histogram of relative score errors."""
    errs = np.asarray(errors, dtype=np.float64)
    if errs.size == 0:
        raise CorpusError("empty error list")
    p50, p90, p99 = np.percentile(errs, [50, 90, 99])
    counts, edges = np.histogram(errs, bins=n_bins)
    hist = [(float(edges[i]), int(counts[i])) for i in range(len(counts))]
    return QuantErrorReport(
        n=errs.size,
        p50=float(p50),
        p90=float(p90),
        p99=float(p99),
        max=float(errs.max()),
        histogram=hist,
    )


def write_histogram_csv(hist: Sequence[tuple[float, int]], path: PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_left", "count"])
        for left, count in hist:
            w.writerow([f"{left:.10g}", count])
