"""Brute-force exact top-k search used as the ground-truth oracle."""

from __future__ import annotations

import enum

import numpy as np

from .corpus import CorpusError, GroundTruth, QuerySet, VectorSet


class Metric(enum.Enum):
    """Similarity metric. Euclidean distances are negated so that all ranking
    code sorts scores descending."""

    INNER_PRODUCT = "ip"
    EUCLIDEAN = "l2"

    @classmethod
    def parse(cls, name: str) -> "Metric":
        name = name.strip().lower()
        for m in cls:
            if name in (m.value, m.name.lower()):
                return m
        raise CorpusError(f"unknown metric {name!r}")


def score(query: np.ndarray, doc: np.ndarray, metric: Metric) -> float:
    """Similarity of a single (query, doc) pair with 64-bit accumulation."""
    q = np.asarray(query, dtype=np.float64).ravel()
    d = np.asarray(doc, dtype=np.float64).ravel()
    if q.shape != d.shape:
        raise CorpusError(f"dim mismatch: {q.shape[0]} vs {d.shape[0]}")
    if metric is Metric.INNER_PRODUCT:
        return float(q @ d)
    return float(-np.linalg.norm(q - d))


def score_matrix(queries: np.ndarray, docs: np.ndarray, metric: Metric) -> np.ndarray:
    """All-pairs scores, shape (n_queries, n_docs), float64."""
    q = np.asarray(queries, dtype=np.float64)
    d = np.asarray(docs, dtype=np.float64)
    if q.shape[1] != d.shape[1]:
        raise CorpusError(f"dim mismatch: queries {q.shape[1]} vs docs {d.shape[1]}")
    ip = q @ d.T
    if metric is Metric.INNER_PRODUCT:
        return ip
    qq = np.einsum("ij,ij->i", q, q)
    dd = np.einsum("ij,ij->i", d, d)
    dist2 = np.maximum(qq[:, None] + dd[None, :] - 2.0 * ip, 0.0)
    return -np.sqrt(dist2)


def topk_rows(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k per row of a score matrix, descending, ties by ascending index."""
    n = scores.shape[1]
    ids = np.empty((scores.shape[0], k), dtype=np.int32)
    vals = np.empty((scores.shape[0], k), dtype=np.float64)
    col = np.arange(n)
    for qi in range(scores.shape[0]):
        # lexsort: primary key last -> sort by -score, then ascending id
        order = np.lexsort((col, -scores[qi]))[:k]
        ids[qi] = order
        vals[qi] = scores[qi][order]
    return ids, vals


def brute_force_topk(queries: QuerySet, docs: VectorSet, k: int, metric: Metric) -> GroundTruth:
    """Exact top-k for every query by a full scan.

    Deterministic: ties broken by ascending doc id; scores accumulated in
    float64 and stored as float32.
    """
    if queries.dim != docs.dim:
        raise CorpusError(f"dim mismatch: queries {queries.dim} vs docs {docs.dim}")
    if k <= 0 or k > docs.count:
        raise CorpusError(f"k={k} out of range for {docs.count} docs")
    scores = score_matrix(queries.data, docs.data, metric)
    ids, vals = topk_rows(scores, k)
    return GroundTruth(ids, vals.astype(np.float32))
