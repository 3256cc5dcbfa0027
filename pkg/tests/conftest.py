import numpy as np
import pytest

from annquality import synth
from annquality.exact import Metric, brute_force_topk
from annquality.ivf import build_index, train_kmeans


@pytest.fixture(scope="session")
def small_corpus():
    spec = synth.SynthSpec(
        n_docs=1000, dim=32, n_clusters=10, cluster_std=0.1, n_queries=20,
        relevance_rule=synth.TopMPlanted(8), seed=42,
    )
    return synth.generate(spec)


@pytest.fixture(scope="session")
def small_gt(small_corpus):
    docs, queries, _ = small_corpus
    return brute_force_topk(queries, docs, 10, Metric.INNER_PRODUCT)


@pytest.fixture(scope="session")
def small_index(small_corpus):
    docs, _, _ = small_corpus
    centroids = train_kmeans(docs, 10, iters=15, seed=7)
    return build_index(docs, centroids, quantize=True)


def max_matching_bruteforce(edges: np.ndarray) -> int:
    """Independent maximum bipartite matching oracle: Kuhn's augmenting-path
    algorithm over an explicit boolean edge matrix (rows: retrieved, cols: gt)."""
    n_rows, n_cols = edges.shape
    match_col = [-1] * n_cols

    def augment(r, seen):
        for c in range(n_cols):
            if edges[r, c] and not seen[c]:
                seen[c] = True
                if match_col[c] == -1 or augment(match_col[c], seen):
                    match_col[c] = r
                    return True
        return False

    size = 0
    for r in range(n_rows):
        if augment(r, [False] * n_cols):
            size += 1
    return size


def max_matching_exhaustive(edges: np.ndarray) -> int:
    """Truly exhaustive matcher for tiny instances: tries every assignment."""
    n_rows, n_cols = edges.shape

    def best(r, used):
        if r == n_rows:
            return 0
        top = best(r + 1, used)
        for c in range(n_cols):
            if edges[r, c] and not (used >> c) & 1:
                top = max(top, 1 + best(r + 1, used | (1 << c)))
        return top

    return best(0, 0)
