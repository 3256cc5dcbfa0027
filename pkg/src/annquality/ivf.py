"""Partition-based ANNS index with 8-bit scalar quantization and cost accounting.

The index assigns every document to its nearest centroid (Euclidean). A search
scans the centroid table, probes the `nprobe` nearest partitions, scores the
candidates on quantized codes (or raw vectors), optionally rescores the best
candidates exactly, and reports the bytes read by each step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import (
    CorpusError,
    PathLike,
    QuerySet,
    RetrievedSet,
    VectorSet,
    read_fvecs,
    read_ivecs_ragged,
    write_fvecs,
    write_ivecs_ragged,
)
from .exact import Metric, score_matrix, topk_rows

FLOAT_BYTES = 4
CODE_BYTES = 1


@dataclass(frozen=True)
class SearchParams:
    """Probe width and exact-rescoring depth for one search."""

    nprobe: int
    reorder_k: int = 0

    def validate(self, nlist: int, k: int) -> None:
        if not 1 <= self.nprobe <= nlist:
            raise CorpusError(f"nprobe={self.nprobe} out of range [1, {nlist}]")
        if self.reorder_k < 0:
            raise CorpusError("reorder_k must be >= 0")
        if 0 < self.reorder_k < k:
            raise CorpusError(f"reorder_k={self.reorder_k} must be >= k={k} when rescoring")


@dataclass(frozen=True)
class CostReport:
    bytes_read: int
    inner_products: int

    def __add__(self, other: "CostReport") -> "CostReport":
        return CostReport(
            self.bytes_read + other.bytes_read, self.inner_products + other.inner_products
        )


@dataclass
class IvfIndex:
    centroids: np.ndarray  # (nlist, dim) float32
    assignments: list[np.ndarray]  # per-partition int32 doc ids
    docs: VectorSet  # raw vectors, kept for rescoring
    metric: Metric
    codes: Optional[np.ndarray] = None  # (count, dim) uint8
    q_min: Optional[np.ndarray] = None  # (dim,) float64
    q_step: Optional[np.ndarray] = None  # (dim,) float64

    @property
    def nlist(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def quantized(self) -> bool:
        return self.codes is not None

    def dequantize(self, doc_ids: np.ndarray) -> np.ndarray:
        if not self.quantized:
            raise CorpusError("index is not quantized")
        return self.q_min[None, :] + self.codes[doc_ids].astype(np.float64) * self.q_step[None, :]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _squared_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    pp = np.einsum("ij,ij->i", points, points)
    cc = np.einsum("ij,ij->i", centers, centers)
    return np.maximum(pp[:, None] + cc[None, :] - 2.0 * (points @ centers.T), 0.0)


def _kmeanspp_init(data: np.ndarray, nlist: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centers = np.empty((nlist, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = data[first]
    d2 = _squared_dists(data, centers[:1]).ravel()
    for c in range(1, nlist):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = data[idx]
        d2 = np.minimum(d2, _squared_dists(data, centers[c : c + 1]).ravel())
    return centers


def train_kmeans(docs: VectorSet, nlist: int, iters: int = 20, seed: int = 0) -> np.ndarray:
    """Lloyd's k-means with k-means++ init; empty clusters reseeded from the
    point farthest from its assigned centroid. Deterministic given the seed."""
    if nlist < 1 or nlist > docs.count:
        raise CorpusError(f"nlist={nlist} out of range for {docs.count} docs")
    data = docs.data.astype(np.float64)
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(data, nlist, rng)
    for _ in range(iters):
        d2 = _squared_dists(data, centers)
        assign = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(len(data)), assign]
        for c in range(nlist):
            mask = assign == c
            if mask.any():
                centers[c] = data[mask].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                centers[c] = data[far]
                point_d2[far] = 0.0
    return centers.astype(np.float32)


def kmeans_objective(docs: VectorSet, centroids: np.ndarray) -> float:
    """Sum of squared distances to nearest centroid."""
    d2 = _squared_dists(docs.data.astype(np.float64), centroids.astype(np.float64))
    return float(d2.min(axis=1).sum())


# ---------------------------------------------------------------------------
# Build
# ---------------------------------------------------------------------------


def build_index(
    docs: VectorSet,
    centroids: np.ndarray,
    quantize: bool = True,
    metric: Metric = Metric.INNER_PRODUCT,
) -> IvfIndex:
    """Assign docs to nearest centroids and, optionally, fit the 8-bit scalar
    quantizer over per-dimension min/max of the whole collection."""
    centroids = np.asarray(centroids, dtype=np.float32)
    if centroids.ndim != 2 or centroids.shape[1] != docs.dim:
        raise CorpusError(
            f"centroid dim {centroids.shape} does not match docs dim {docs.dim}"
        )
    d2 = _squared_dists(docs.data.astype(np.float64), centroids.astype(np.float64))
    assign = np.argmin(d2, axis=1)
    assignments = [
        np.flatnonzero(assign == c).astype(np.int32) for c in range(centroids.shape[0])
    ]

    codes = q_min = q_step = None
    if quantize:
        data = docs.data.astype(np.float64)
        q_min = data.min(axis=0)
        q_max = data.max(axis=0)
        q_step = (q_max - q_min) / 255.0
        # constant dimensions carry no information: step 0, all codes 0
        safe_step = np.where(q_step > 0, q_step, 1.0)
        codes = np.clip(np.rint((data - q_min[None, :]) / safe_step[None, :]), 0, 255)
        codes = np.where(q_step[None, :] > 0, codes, 0).astype(np.uint8)

    return IvfIndex(
        centroids=centroids,
        assignments=assignments,
        docs=docs,
        metric=metric,
        codes=codes,
        q_min=q_min,
        q_step=q_step,
    )


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def _rank_candidates(ids: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the top-k by score descending, ties by ascending doc id."""
    order = np.lexsort((ids, -scores))
    return order[:k]


def search(
    index: IvfIndex, query: np.ndarray, k: int, params: SearchParams
) -> tuple[np.ndarray, np.ndarray, CostReport]:
    """Single-query search. Returns (ids, exactness-depends scores, cost).

    Scores are float64: quantized scores unless rescoring is enabled, in which
    case the returned top-k carries exact raw-vector scores.
    """
    if k < 1 or k > index.docs.count:
        raise CorpusError(f"k={k} out of range for {index.docs.count} docs")
    params.validate(index.nlist, k)
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != index.dim:
        raise CorpusError(f"query dim {q.shape[0]} != index dim {index.dim}")

    # centroid scan (always charged, Euclidean selection regardless of metric)
    cd2 = _squared_dists(q[None, :], index.centroids.astype(np.float64)).ravel()
    probe_order = np.lexsort((np.arange(index.nlist), cd2))[: params.nprobe]
    bytes_read = index.nlist * index.dim * FLOAT_BYTES
    inner_products = index.nlist

    parts = [index.assignments[c] for c in probe_order if len(index.assignments[c]) > 0]
    if parts:
        cand = np.concatenate(parts)
    else:
        cand = np.empty(0, dtype=np.int32)
    cand = np.sort(cand)

    if index.quantized:
        cand_vecs = index.dequantize(cand)
        bytes_read += len(cand) * index.dim * CODE_BYTES
    else:
        cand_vecs = index.docs.data[cand].astype(np.float64)
        bytes_read += len(cand) * index.dim * FLOAT_BYTES
    cand_scores = score_matrix(q[None, :], cand_vecs, index.metric).ravel()
    inner_products += len(cand)

    if params.reorder_k > 0 and index.quantized:
        keep = _rank_candidates(cand, cand_scores, min(params.reorder_k, len(cand)))
        re_ids = cand[keep]
        re_vecs = index.docs.data[re_ids].astype(np.float64)
        re_scores = score_matrix(q[None, :], re_vecs, index.metric).ravel()
        bytes_read += len(re_ids) * index.dim * FLOAT_BYTES
        inner_products += len(re_ids)
        cand, cand_scores = re_ids, re_scores

    top = _rank_candidates(cand, cand_scores, min(k, len(cand)))
    ids = cand[top].astype(np.int32)
    scores = cand_scores[top]
    if len(ids) < k:
        raise CorpusError(
            f"only {len(ids)} candidates found for k={k}; increase nprobe"
        )
    return ids, scores, CostReport(bytes_read, inner_products)


def search_batch(
    index: IvfIndex, queries: QuerySet, k: int, params: SearchParams
) -> RetrievedSet:
    """Search every query and collect results with per-query cost records."""
    n = queries.count
    ids = np.empty((n, k), dtype=np.int32)
    scores = np.empty((n, k), dtype=np.float32)
    cost_bytes = np.empty(n, dtype=np.int64)
    n_ips = np.empty(n, dtype=np.int64)
    for qi in range(n):
        row_ids, row_scores, cost = search(index, queries.data[qi], k, params)
        ids[qi] = row_ids
        scores[qi] = row_scores.astype(np.float32)
        cost_bytes[qi] = cost.bytes_read
        n_ips[qi] = cost.inner_products
    return RetrievedSet(ids, scores, cost_bytes, n_ips)


# ---------------------------------------------------------------------------
# Quantization error
# ---------------------------------------------------------------------------


def quantized_score_error(
    index: IvfIndex, queries: QuerySet, sample: int, seed: int = 0
) -> tuple[np.ndarray, int]:
    """Relative errors |s_full - s_quant| / |s_full| over sampled (query, doc)
    pairs. Pairs with |s_full| < 1e-9 are skipped; their count is returned."""
    if not index.quantized:
        raise CorpusError("quantized_score_error requires a quantized index")
    if sample < 1:
        raise CorpusError("sample must be positive")
    rng = np.random.default_rng(seed)
    qi = rng.integers(queries.count, size=sample)
    di = rng.integers(index.docs.count, size=sample)
    q = queries.data[qi].astype(np.float64)
    full_vecs = index.docs.data[di].astype(np.float64)
    quant_vecs = index.dequantize(di)
    if index.metric is Metric.INNER_PRODUCT:
        s_full = np.einsum("ij,ij->i", q, full_vecs)
        s_quant = np.einsum("ij,ij->i", q, quant_vecs)
    else:
        s_full = -np.linalg.norm(q - full_vecs, axis=1)
        s_quant = -np.linalg.norm(q - quant_vecs, axis=1)
    keep = np.abs(s_full) >= 1e-9
    errors = np.abs(s_full[keep] - s_quant[keep]) / np.abs(s_full[keep])
    return errors, int((~keep).sum())


def score_error_bound(index: IvfIndex, query: np.ndarray) -> float:
    """Analytic bound on absolute inner-product error: sum_j |q_j| * step_j / 2."""
    if not index.quantized:
        raise CorpusError("bound requires a quantized index")
    q = np.asarray(query, dtype=np.float64).ravel()
    return float(np.sum(np.abs(q) * index.q_step) / 2.0)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_index(index: IvfIndex, dirpath: PathLike) -> None:
    """Persist everything but the raw vectors (supplied again at load time)."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_fvecs(d / "centroids.fvecs", index.centroids)
    write_ivecs_ragged(d / "assignments.ivecs", index.assignments)
    meta = {
        "nlist": index.nlist,
        "dim": index.dim,
        "count": index.docs.count,
        "metric": index.metric.value,
        "quantized": index.quantized,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2))
    if index.quantized:
        from .corpus import write_bvecs

        write_bvecs(d / "codes.bvecs", index.codes)
        (d / "quantizer.json").write_text(
            json.dumps({"min": index.q_min.tolist(), "step": index.q_step.tolist()})
        )


def load_index(dirpath: PathLike, docs: VectorSet) -> IvfIndex:
    d = Path(dirpath)
    meta = json.loads((d / "meta.json").read_text())
    if meta["count"] != docs.count or meta["dim"] != docs.dim:
        raise CorpusError("supplied raw vectors do not match the persisted index")
    centroids = read_fvecs(d / "centroids.fvecs")
    assignments = read_ivecs_ragged(d / "assignments.ivecs")
    codes = q_min = q_step = None
    if meta.get("quantized"):
        from .corpus import read_bvecs

        codes = read_bvecs(d / "codes.bvecs")
        quant = json.loads((d / "quantizer.json").read_text())
        q_min = np.asarray(quant["min"], dtype=np.float64)
        q_step = np.asarray(quant["step"], dtype=np.float64)
    return IvfIndex(
        centroids=centroids,
        assignments=assignments,
        docs=docs,
        metric=Metric.parse(meta["metric"]),
        codes=codes,
        q_min=q_min,
        q_step=q_step,
    )
