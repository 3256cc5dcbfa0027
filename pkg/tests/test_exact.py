import numpy as np
import pytest

from annquality.corpus import CorpusError, QuerySet, VectorSet
from annquality.exact import Metric, brute_force_topk, score, score_matrix


def _normalize(a):
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


class TestScore:
    def test_identical_unit_vectors(self):
        v = _normalize(np.array([1.0, 2.0, 3.0]))
        assert score(v, v, Metric.INNER_PRODUCT) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert score([1.0, 0.0], [0.0, 1.0], Metric.INNER_PRODUCT) == 0.0

    def test_matches_float64_reference(self):
        rng = np.random.default_rng(3)
        q = rng.standard_normal(8).astype(np.float32)
        d = rng.standard_normal(8).astype(np.float32)
        ref = sum(float(a) * float(b) for a, b in zip(q.astype(np.float64), d))
        assert score(q, d, Metric.INNER_PRODUCT) == pytest.approx(ref, rel=1e-12)

    def test_euclidean_negated(self):
        assert score([0.0, 0.0], [3.0, 4.0], Metric.EUCLIDEAN) == pytest.approx(-5.0)

    def test_dim_mismatch(self):
        with pytest.raises(CorpusError, match="dim mismatch"):
            score([1.0], [1.0, 2.0], Metric.INNER_PRODUCT)


class TestBruteForce:
    def test_basis_vectors(self):
        docs = VectorSet(np.eye(3, dtype=np.float32))
        queries = QuerySet(np.eye(3, dtype=np.float32)[1:2])
        gt = brute_force_topk(queries, docs, 1, Metric.INNER_PRODUCT)
        assert gt.ids[0, 0] == 1
        assert gt.scores[0, 0] == pytest.approx(1.0)

    def test_self_similarity(self):
        rng = np.random.default_rng(4)
        docs = VectorSet(_normalize(rng.standard_normal((50, 8))).astype(np.float32))
        queries = QuerySet(docs.data[5:6])
        gt = brute_force_topk(queries, docs, 1, Metric.INNER_PRODUCT)
        assert gt.ids[0, 0] == 5
        assert gt.scores[0, 0] == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("metric", [Metric.INNER_PRODUCT, Metric.EUCLIDEAN])
    def test_matches_naive_reference(self, metric):
        # independent O(n*d) scan with stable sort, written as the oracle
        rng = np.random.default_rng(5)
        docs = VectorSet(rng.standard_normal((200, 6)).astype(np.float32))
        queries = QuerySet(rng.standard_normal((10, 6)).astype(np.float32))
        k = 10
        gt = brute_force_topk(queries, docs, k, metric)
        for qi in range(10):
            naive = []
            for di in range(200):
                naive.append((score(queries.data[qi], docs.data[di], metric), di))
            naive.sort(key=lambda t: (-t[0], t[1]))
            expect_ids = [di for _, di in naive[:k]]
            assert list(gt.ids[qi]) == expect_ids

    def test_tie_break_ascending_id(self):
        docs = VectorSet(np.array([[1.0, 0.0]] * 4, dtype=np.float32))
        queries = QuerySet(np.array([[1.0, 0.0]], dtype=np.float32))
        gt = brute_force_topk(queries, docs, 3, Metric.INNER_PRODUCT)
        assert list(gt.ids[0]) == [0, 1, 2]

    def test_permutation_invariance(self):
        rng = np.random.default_rng(6)
        docs = rng.standard_normal((100, 5)).astype(np.float32)
        queries = QuerySet(rng.standard_normal((5, 5)).astype(np.float32))
        gt = brute_force_topk(queries, VectorSet(docs), 5, Metric.INNER_PRODUCT)
        perm = rng.permutation(100)
        gt_p = brute_force_topk(queries, VectorSet(docs[perm]), 5, Metric.INNER_PRODUCT)
        inverse = np.argsort(perm)
        # remap permuted ids back and compare as sets per rank group
        assert np.array_equal(perm[gt_p.ids], gt.ids)

    def test_normalized_scores_in_range(self):
        rng = np.random.default_rng(7)
        docs = VectorSet(_normalize(rng.standard_normal((300, 16))).astype(np.float32))
        queries = QuerySet(_normalize(rng.standard_normal((20, 16))).astype(np.float32))
        gt = brute_force_topk(queries, docs, 50, Metric.INNER_PRODUCT)
        assert np.all(gt.scores >= -1 - 1e-6)
        assert np.all(gt.scores <= 1 + 1e-6)

    def test_determinism(self):
        rng = np.random.default_rng(8)
        docs = VectorSet(rng.standard_normal((100, 4)).astype(np.float32))
        queries = QuerySet(rng.standard_normal((3, 4)).astype(np.float32))
        a = brute_force_topk(queries, docs, 7, Metric.INNER_PRODUCT)
        b = brute_force_topk(queries, docs, 7, Metric.INNER_PRODUCT)
        assert a == b

    def test_k_too_large(self):
        docs = VectorSet(np.eye(3, dtype=np.float32))
        queries = QuerySet(np.eye(3, dtype=np.float32)[:1])
        with pytest.raises(CorpusError, match="out of range"):
            brute_force_topk(queries, docs, 4, Metric.INNER_PRODUCT)

    def test_dim_mismatch(self):
        docs = VectorSet(np.eye(3, dtype=np.float32))
        queries = QuerySet(np.zeros((1, 4), dtype=np.float32))
        with pytest.raises(CorpusError, match="dim mismatch"):
            brute_force_topk(queries, docs, 1, Metric.INNER_PRODUCT)


def test_score_matrix_euclidean_consistent():
    rng = np.random.default_rng(9)
    q = rng.standard_normal((4, 3))
    d = rng.standard_normal((6, 3))
    m = score_matrix(q, d, Metric.EUCLIDEAN)
    for i in range(4):
        for j in range(6):
            assert m[i, j] == pytest.approx(-np.linalg.norm(q[i] - d[j]), abs=1e-9)
