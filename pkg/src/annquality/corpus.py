"""Data model and file I/O for embeddings, ground truths, results, and judgments.

Binary formats follow the fvecs/ivecs/bvecs convention: each record is a
little-endian int32 length followed by that many components (float32, int32, or
uint8). Judgments and retrieval results are JSONL.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np

PathLike = Union[str, os.PathLike]

LABEL_RELEVANT = "Relevant"
LABEL_NOT_RELEVANT = "NotRelevant"


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data."""


# ---------------------------------------------------------------------------
# Core containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VectorSet:
    """Dense row-major matrix of embeddings; row index is the document id."""

    data: np.ndarray  # (count, dim) float32

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise CorpusError(f"expected 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise CorpusError("non-finite component in vector data")
        object.__setattr__(self, "data", arr)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class QuerySet:
    """Query embeddings, optionally with the source question texts."""

    data: np.ndarray  # (count, dim) float32
    texts: Optional[list[str]] = None

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise CorpusError(f"expected 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise CorpusError("non-finite component in query data")
        object.__setattr__(self, "data", arr)
        if self.texts is not None and len(self.texts) != arr.shape[0]:
            raise CorpusError("texts length does not match query count")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def _validate_topk(ids: np.ndarray, scores: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    ids = np.asarray(ids, dtype=np.int32)
    scores = np.asarray(scores, dtype=np.float32)
    if ids.ndim != 2 or scores.shape != ids.shape:
        raise CorpusError(f"{what}: ids and scores must be 2-D with identical shape")
    if not np.all(np.isfinite(scores)):
        raise CorpusError(f"{what}: non-finite score")
    for qi in range(ids.shape[0]):
        row_ids = ids[qi]
        if len(np.unique(row_ids)) != len(row_ids):
            raise CorpusError(f"{what}: duplicate doc id in query {qi}")
        if np.any(np.diff(scores[qi].astype(np.float64)) > 0):
            raise CorpusError(f"{what}: scores not sorted descending in query {qi}")
    return ids, scores


@dataclass(frozen=True)
class GroundTruth:
    """Per-query exact top-k ids with their similarity scores, best first."""

    ids: np.ndarray  # (n_queries, k) int32
    scores: np.ndarray  # (n_queries, k) float32

    def __post_init__(self):
        ids, scores = _validate_topk(self.ids, self.scores, "GroundTruth")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)

    @property
    def n_queries(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return (
            self.ids.shape == other.ids.shape
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(frozen=True)
class RetrievedSet:
    """Results of an ANNS run, same shape as GroundTruth plus per-query cost."""

    ids: np.ndarray  # (n_queries, k) int32
    scores: np.ndarray  # (n_queries, k) float32
    cost_bytes: Optional[np.ndarray] = None  # (n_queries,) int64
    inner_products: Optional[np.ndarray] = None  # (n_queries,) int64

    def __post_init__(self):
        ids, scores = _validate_topk(self.ids, self.scores, "RetrievedSet")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)
        for name in ("cost_bytes", "inner_products"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.int64)
                if val.shape != (ids.shape[0],):
                    raise CorpusError(f"RetrievedSet: {name} must have one entry per query")
                object.__setattr__(self, name, val)

    @property
    def n_queries(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]


@dataclass(frozen=True)
class Judgment:
    query_id: int
    doc_id: int
    relevant: bool
    judge_id: str

    @property
    def label(self) -> str:
        return LABEL_RELEVANT if self.relevant else LABEL_NOT_RELEVANT


class JudgmentSet:
    """Binary relevance labels keyed by (query_id, doc_id, judge_id)."""

    def __init__(self, entries: Iterable[Judgment] = ()):
        self._entries: dict[tuple[int, int, str], Judgment] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: Judgment) -> None:
        key = (entry.query_id, entry.doc_id, entry.judge_id)
        if key in self._entries:
            raise CorpusError(
                f"duplicate judgment for query {entry.query_id}, doc {entry.doc_id}, "
                f"judge {entry.judge_id!r}"
            )
        self._entries[key] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Judgment]:
        return iter(self._entries.values())

    def __contains__(self, key: tuple[int, int, str]) -> bool:
        return key in self._entries

    def judge_ids(self) -> list[str]:
        return sorted({e.judge_id for e in self})

    def filter_judge(self, judge_id: str) -> "JudgmentSet":
        return JudgmentSet(e for e in self if e.judge_id == judge_id)

    def lookup(self, query_id: int, doc_id: int, judge_id: Optional[str] = None) -> Optional[bool]:
        """Label for a pair, or None if absent. judge_id=None requires a single judge."""
        if judge_id is None:
            judges = self.judge_ids()
            if len(judges) > 1:
                raise CorpusError("judge_id required: judgment set has multiple judges")
            judge_id = judges[0] if judges else ""
        entry = self._entries.get((query_id, doc_id, judge_id))
        return None if entry is None else entry.relevant

    def sn_sets(self, gt: GroundTruth, judge_id: Optional[str] = None) -> list[set[int]]:
        """Semantic-neighbor set per query: gt ids labeled Relevant.

        Raises if any ground-truth id lacks a judgment.
        """
        if judge_id is None:
            judges = self.judge_ids()
            if len(judges) > 1:
                raise CorpusError("judge_id required: judgment set has multiple judges")
            judge_id = judges[0] if judges else ""
        out: list[set[int]] = []
        for qi in range(gt.n_queries):
            sn: set[int] = set()
            for doc_id in gt.ids[qi]:
                entry = self._entries.get((qi, int(doc_id), judge_id))
                if entry is None:
                    raise CorpusError(f"missing judgment for query {qi}, doc {int(doc_id)}")
                if entry.relevant:
                    sn.add(int(doc_id))
            out.append(sn)
        return out


@dataclass(frozen=True)
class DocStore:
    """Raw texts behind the embeddings, needed only when judging."""

    docs: dict[int, str] = field(default_factory=dict)
    queries: dict[int, str] = field(default_factory=dict)

    def doc_text(self, doc_id: int) -> str:
        try:
            return self.docs[doc_id]
        except KeyError:
            raise CorpusError(f"doc id {doc_id} not present in DocStore") from None

    def query_text(self, query_id: int) -> str:
        try:
            return self.queries[query_id]
        except KeyError:
            raise CorpusError(f"query id {query_id} not present in DocStore") from None


# ---------------------------------------------------------------------------
# Binary vector formats
# ---------------------------------------------------------------------------

_PAYLOADS = {"fvecs": np.dtype("<f4"), "ivecs": np.dtype("<i4"), "bvecs": np.dtype("u1")}


def _read_records(path: PathLike, kind: str) -> list[np.ndarray]:
    dtype = _PAYLOADS[kind]
    raw = Path(path).read_bytes()
    rows: list[np.ndarray] = []
    offset = 0
    rec = 0
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise CorpusError(f"{path}: truncated record header at record {rec}")
        d = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
        if d < 0:
            raise CorpusError(f"{path}: negative dimension at record {rec}")
        nbytes = d * dtype.itemsize
        if offset + 4 + nbytes > len(raw):
            raise CorpusError(f"{path}: truncated payload at record {rec}")
        rows.append(np.frombuffer(raw, dtype=dtype, count=d, offset=offset + 4).copy())
        offset += 4 + nbytes
        rec += 1
    return rows


def _records_to_matrix(rows: list[np.ndarray], path: PathLike, kind: str) -> np.ndarray:
    if not rows:
        return np.empty((0, 0), dtype=_PAYLOADS[kind])
    dim = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != dim:
            raise CorpusError(f"{path}: dimension mismatch at record {i}")
    return np.vstack(rows)


def read_fvecs(path: PathLike) -> np.ndarray:
    """Read an fvecs file into an (n, d) float32 matrix."""
    return _records_to_matrix(_read_records(path, "fvecs"), path, "fvecs")


def read_ivecs(path: PathLike) -> np.ndarray:
    """Read a uniform ivecs file into an (n, d) int32 matrix."""
    return _records_to_matrix(_read_records(path, "ivecs"), path, "ivecs")


def read_bvecs(path: PathLike) -> np.ndarray:
    """Read a bvecs file into an (n, d) uint8 matrix."""
    return _records_to_matrix(_read_records(path, "bvecs"), path, "bvecs")


def read_ivecs_ragged(path: PathLike) -> list[np.ndarray]:
    """Read an ivecs file with possibly varying record lengths."""
    return _read_records(path, "ivecs")


def _write_records(rows: Iterable[np.ndarray], path: PathLike, kind: str) -> None:
    dtype = _PAYLOADS[kind]
    with open(path, "wb") as f:
        for row in rows:
            row = np.ascontiguousarray(row, dtype=dtype)
            f.write(np.int32(len(row)).tobytes())
            f.write(row.tobytes())


def write_fvecs(path: PathLike, data: np.ndarray) -> None:
    _write_records(np.asarray(data, dtype=np.float32), path, "fvecs")


def write_ivecs(path: PathLike, data: np.ndarray) -> None:
    _write_records(np.asarray(data, dtype=np.int32), path, "ivecs")


def write_bvecs(path: PathLike, data: np.ndarray) -> None:
    _write_records(np.asarray(data, dtype=np.uint8), path, "bvecs")


def write_ivecs_ragged(path: PathLike, rows: Iterable[np.ndarray]) -> None:
    _write_records([np.asarray(r, dtype=np.int32) for r in rows], path, "ivecs")


# ---------------------------------------------------------------------------
# High-level loaders / savers
# ---------------------------------------------------------------------------


def load_vectors(path: PathLike, fmt: str = "fvecs") -> VectorSet:
    """Load a VectorSet from fvecs or a raw float32 blob with a JSON sidecar.

    For fmt="rawf32", the sidecar is expected at <path>.json with fields
    {"dim", "count", "dtype": "f32le"}.
    """
    if fmt == "fvecs":
        mat = read_fvecs(path)
        if mat.shape[0] == 0:
            raise CorpusError(f"{path}: empty input")
        if not np.all(np.isfinite(mat)):
            raise CorpusError(f"{path}: non-finite component")
        return VectorSet(mat)
    if fmt == "rawf32":
        sidecar = Path(str(path) + ".json")
        if not sidecar.is_file():
            raise CorpusError(f"{sidecar}: sidecar header not found")
        header = json.loads(sidecar.read_text())
        if header.get("dtype") != "f32le":
            raise CorpusError(f"{sidecar}: unsupported dtype {header.get('dtype')!r}")
        dim, count = int(header["dim"]), int(header["count"])
        if count == 0:
            raise CorpusError(f"{path}: empty input")
        raw = np.fromfile(path, dtype="<f4")
        if raw.size != dim * count:
            raise CorpusError(f"{path}: blob size {raw.size} != dim*count = {dim * count}")
        mat = raw.reshape(count, dim)
        if not np.all(np.isfinite(mat)):
            raise CorpusError(f"{path}: non-finite component")
        return VectorSet(mat)
    raise CorpusError(f"unknown vector format {fmt!r}")


def save_vectors(vs: VectorSet, path: PathLike, fmt: str = "fvecs") -> None:
    if fmt == "fvecs":
        write_fvecs(path, vs.data)
    elif fmt == "rawf32":
        vs.data.astype("<f4").tofile(path)
        Path(str(path) + ".json").write_text(
            json.dumps({"dim": vs.dim, "count": vs.count, "dtype": "f32le"})
        )
    else:
        raise CorpusError(f"unknown vector format {fmt!r}")


def validate_normalized(data: np.ndarray, tol: float = 1e-3) -> bool:
    """Warn (never fix) when rows deviate from unit L2 norm by more than tol."""
    norms = np.linalg.norm(np.asarray(data, dtype=np.float64), axis=1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} of {len(norms)} vectors deviate from unit norm by more "
            f"than {tol}; inner-product scores may leave [-1, 1]",
            stacklevel=2,
        )
        return False
    return True


def save_ground_truth(gt: GroundTruth, path_ids: PathLike, path_scores: PathLike) -> None:
    """Persist ids as ivecs and scores as fvecs."""
    write_ivecs(path_ids, gt.ids)
    write_fvecs(path_scores, gt.scores)


def load_ground_truth(path_ids: PathLike, path_scores: PathLike) -> GroundTruth:
    ids = read_ivecs(path_ids)
    scores = read_fvecs(path_scores)
    if ids.shape != scores.shape:
        raise CorpusError("ground truth ids/scores shape mismatch")
    return GroundTruth(ids, scores)


def load_judgments(path: PathLike) -> JudgmentSet:
    """Load a judgments JSONL file, rejecting duplicates and unknown labels."""
    out = JudgmentSet()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: malformed JSON at line {lineno}: {exc}") from None
            label = obj.get("label")
            if label not in (LABEL_RELEVANT, LABEL_NOT_RELEVANT):
                raise CorpusError(f"{path}: unknown label {label!r} at line {lineno}")
            entry = Judgment(
                query_id=int(obj["query_id"]),
                doc_id=int(obj["doc_id"]),
                relevant=(label == LABEL_RELEVANT),
                judge_id=str(obj["judge_id"]),
            )
            try:
                out.add(entry)
            except CorpusError:
                raise CorpusError(f"{path}: duplicate judgment at line {lineno}") from None
    return out


def save_judgments(judgments: JudgmentSet, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in judgments:
            f.write(
                json.dumps(
                    {
                        "query_id": e.query_id,
                        "doc_id": e.doc_id,
                        "label": e.label,
                        "judge_id": e.judge_id,
                    }
                )
                + "\n"
            )


def save_results(rs: RetrievedSet, path: PathLike) -> None:
    """Write retrieval results as JSONL, one object per query."""
    with open(path, "w", encoding="utf-8") as f:
        for qi in range(rs.n_queries):
            obj = {
                "query_id": qi,
                "ids": [int(x) for x in rs.ids[qi]],
                "scores": [float(x) for x in rs.scores[qi]],
                "cost_bytes": int(rs.cost_bytes[qi]) if rs.cost_bytes is not None else 0,
            }
            f.write(json.dumps(obj) + "\n")


def load_results(path: PathLike) -> RetrievedSet:
    ids_rows, score_rows, costs = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: malformed JSON at line {lineno}: {exc}") from None
            if int(obj["query_id"]) != len(ids_rows):
                raise CorpusError(f"{path}: out-of-order query_id at line {lineno}")
            ids_rows.append(np.asarray(obj["ids"], dtype=np.int32))
            score_rows.append(np.asarray(obj["scores"], dtype=np.float32))
            costs.append(int(obj.get("cost_bytes", 0)))
    if not ids_rows:
        return RetrievedSet(
            np.empty((0, 0), np.int32), np.empty((0, 0), np.float32), np.empty((0,), np.int64)
        )
    return RetrievedSet(np.vstack(ids_rows), np.vstack(score_rows), np.asarray(costs, np.int64))
