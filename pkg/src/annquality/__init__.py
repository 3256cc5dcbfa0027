"""Retrieval-quality evaluation toolkit for approximate nearest-neighbor
search: semantic recall, tolerant recall, and the machinery around them."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CorpusError,
    DocStore,
    GroundTruth,
    Judgment,
    JudgmentSet,
    QuerySet,
    RetrievedSet,
    VectorSet,
)
from .exact import Metric, brute_force_topk, score  # noqa: F401
from .ivf import IvfIndex, SearchParams, build_index, search, train_kmeans  # noqa: F401
from .metrics import (  # noqa: F401
    QueryEvaluation,
    calibrate_tolerance,
    evaluate_queries,
    recall_at_k,
    recall_at_k_eps,
    semantic_recall,
    tolerance_proxy,
    tolerant_recall,
)
