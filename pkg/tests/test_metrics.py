import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annquality.corpus import (
    CorpusError,
    GroundTruth,
    Judgment,
    JudgmentSet,
    RetrievedSet,
)
from annquality.exact import Metric
from annquality.metrics import (
    aggregate,
    calibrate_tolerance,
    evaluate_queries,
    r_precision,
    recall_at_k,
    recall_at_k_eps,
    relative_distance_error,
    semantic_recall,
    tolerance_proxy,
    tolerant_match_size,
    tolerant_recall,
)
from conftest import max_matching_bruteforce, max_matching_exhaustive


class TestRecall:
    def test_identical(self):
        ids = list(range(20))
        assert recall_at_k(ids, ids) == 1.0

    def test_disjoint(self):
        assert recall_at_k([1, 2, 3], [4, 5, 6]) == 0.0

    def test_partial(self):
        gt = list(range(1, 11))
        retrieved = list(range(1, 9)) + [90, 91]
        assert recall_at_k(gt, retrieved) == pytest.approx(0.8)

    def test_size_mismatch(self):
        with pytest.raises(CorpusError, match="size mismatch"):
            recall_at_k([1, 2], [1])


class TestSemanticRecall:
    def test_full(self):
        assert semantic_recall({1, 2, 3}, [1, 2, 3, 9]) == 1.0

    def test_partial(self):
        assert semantic_recall({1, 2, 3}, [1, 2, 7, 8]) == pytest.approx(2 / 3)

    def test_undefined_when_no_sn(self):
        assert semantic_recall(set(), [1, 2, 3]) is None


class TestRPrecision:
    def test_perfect(self):
        assert r_precision({1, 2, 3}, [3, 1, 2, 9, 8]) == 1.0

    def test_third_sn_ranked_fourth(self):
        # the third relevant item sits at rank 4, outside the top-R window
        assert r_precision({1, 2, 3}, [1, 2, 9, 3, 8]) == pytest.approx(2 / 3)

    def test_undefined(self):
        assert r_precision(set(), [1, 2]) is None


class TestTolerantRecall:
    def test_identity(self):
        ids = [5, 6]
        scores = [0.9, 0.8]
        assert tolerant_recall(ids, scores, ids, scores, x=0.0) == 1.0

    def test_substitution_within_tolerance(self):
        # 0.796 >= 0.80 * 0.99 = 0.792, so the foreign doc covers g2 at x=1
        val = tolerant_recall([1, 2], [0.90, 0.80], [1, 99], [0.90, 0.796], x=1.0)
        assert val == 1.0

    def test_substitution_outside_tolerance(self):
        val = tolerant_recall([1, 2], [0.90, 0.80], [1, 99], [0.90, 0.796], x=0.0)
        assert val == 0.5

    def test_negative_x_rejected(self):
        with pytest.raises(CorpusError):
            tolerant_recall([1], [0.9], [1], [0.9], x=-1.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(CorpusError):
            tolerant_recall([1], [np.nan], [1], [0.9], x=0.0)

    def test_warns_on_nonpositive_gt_score(self):
        with pytest.warns(UserWarning, match="non-positive"):
            tolerant_recall([1, 2], [0.5, -0.1], [1, 2], [0.5, -0.1], x=1.0)


def _edges(gt_ids, gt_scores, ret_ids, ret_scores, x):
    factor = 1.0 - x / 100.0
    k = len(gt_ids)
    edges = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(k):
            edges[i, j] = ret_ids[i] == gt_ids[j] or ret_scores[i] >= gt_scores[j] * factor
    return edges


def _random_instance(rng, k):
    """Threshold-realizable instance: when a retrieved id appears in the ground
    truth, its (exact, rescored) score equals the ground-truth score."""
    gt_scores = np.sort(rng.uniform(-0.2, 1.0, size=k))[::-1]
    gt_ids = np.arange(k)
    n_overlap = int(rng.integers(0, k + 1))
    overlap = rng.choice(k, size=n_overlap, replace=False)
    ret_ids = np.concatenate([overlap, 1000 + np.arange(k - n_overlap)])
    ret_scores = np.empty(k)
    ret_scores[:n_overlap] = gt_scores[overlap]
    ret_scores[n_overlap:] = rng.uniform(-0.2, 1.0, size=k - n_overlap)
    order = np.argsort(-ret_scores)
    x = float(rng.choice([0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 50.0]))
    return gt_ids, gt_scores, ret_ids[order], ret_scores[order], x


class TestMatchingOracle:
    def test_kuhn_oracle_matches_exhaustive(self):
        # validate the Kuhn oracle itself on every tiny edge matrix
        for k in (1, 2, 3):
            for bits in range(2 ** (k * k)):
                edges = np.array(
                    [[(bits >> (i * k + j)) & 1 for j in range(k)] for i in range(k)],
                    dtype=bool,
                )
                assert max_matching_bruteforce(edges) == max_matching_exhaustive(edges)

    def test_greedy_exhaustive_small_k(self):
        # all threshold cap patterns (with and without identity extras) for k <= 7
        for k in range(1, 8):
            score_of_rank = np.linspace(1.0, 0.1, k)  # descending, distinct
            for caps in itertools.combinations_with_replacement(range(k + 1), k):
                for with_identity in (False, True):
                    gt_ids = np.arange(k)
                    gt_scores = score_of_rank
                    ret_ids = 1000 + np.arange(k)
                    # cap c: the retrieved item covers the c lowest-score items
                    asc = gt_scores[::-1]
                    ret_scores = np.array(
                        [asc[c - 1] if c > 0 else asc[0] - 1.0 for c in caps]
                    )
                    if with_identity:
                        ret_ids = ret_ids.copy()
                        ret_ids[0] = gt_ids[k // 2]
                        ret_scores = ret_scores.copy()
                        ret_scores[0] = gt_scores[k // 2]
                    got = tolerant_match_size(gt_ids, gt_scores, ret_ids, ret_scores, 0.0)
                    want = max_matching_bruteforce(
                        _edges(gt_ids, gt_scores, ret_ids, ret_scores, 0.0)
                    )
                    assert got == want, (k, caps, with_identity)

    def test_greedy_random_instances(self):
        rng = np.random.default_rng(1234)
        for trial in range(1000):
            k = int(rng.integers(1, 13))
            gt_ids, gt_scores, ret_ids, ret_scores, x = _random_instance(rng, k)
            got = tolerant_match_size(gt_ids, gt_scores, ret_ids, ret_scores, x)
            want = max_matching_bruteforce(_edges(gt_ids, gt_scores, ret_ids, ret_scores, x))
            assert got == want, (trial, k, x)


class TestRecallKEps:
    def test_identical(self):
        scores = [0.9, 0.8, 0.7]
        for eps in (0.0, 0.5, 10.0):
            assert recall_at_k_eps(scores, scores, eps) == 1.0

    def test_one_item_too_far(self):
        gt = [0.9, 0.8, 0.7]
        retrieved = [0.9, 0.8, 0.5]  # distance 0.5 > d_k = 0.3
        assert recall_at_k_eps(gt, retrieved, 0.0) == pytest.approx(2 / 3)

    def test_huge_eps_vacuous(self):
        gt = [0.9, 0.8, 0.7]
        retrieved = [0.5, 0.4, 0.3]
        assert recall_at_k_eps(gt, retrieved, 1e6) == 1.0

    def test_negative_eps(self):
        with pytest.raises(CorpusError):
            recall_at_k_eps([0.9], [0.9], -0.1)


class TestRde:
    def test_identical(self):
        rde, skipped = relative_distance_error([0.9, 0.8], [0.9, 0.8])
        assert rde == 0.0
        assert skipped == 0

    def test_doubled_distances(self):
        gt = [0.9, 0.8]  # distances 0.1, 0.2
        retrieved = [0.8, 0.6]  # distances 0.2, 0.4
        rde, _ = relative_distance_error(gt, retrieved)
        assert rde == pytest.approx(1.0)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(21)
        gt = np.sort(rng.uniform(0.2, 0.9, 10))[::-1]
        retrieved = gt - rng.uniform(0, 0.05, 10)
        retrieved = np.sort(retrieved)[::-1]
        rde, _ = relative_distance_error(gt, retrieved)
        naive = np.mean([((1 - r) - (1 - g)) / (1 - g) for g, r in zip(gt, retrieved)])
        assert rde == pytest.approx(naive, rel=1e-12)

    def test_skips_tiny_gt_distance(self):
        rde, skipped = relative_distance_error([1.0, 0.8], [1.0, 0.8])
        assert skipped == 1


class TestToleranceProxy:
    def _gt(self, scores):
        scores = np.asarray(scores, dtype=np.float32)[None, :]
        ids = np.arange(scores.shape[1], dtype=np.int32)[None, :]
        return GroundTruth(ids, scores)

    def test_constant_scores(self):
        assert tolerance_proxy(self._gt([0.5, 0.5, 0.5]), 3) == 0.0

    def test_k3_by_hand(self):
        # rank ceil(2*3/3) = 2: (0.9 - 0.8) / 1.0 * 100 = 10
        assert tolerance_proxy(self._gt([1.0, 0.9, 0.8]), 3) == pytest.approx(10.0)

    def test_mean_over_queries(self):
        ids = np.tile(np.arange(3, dtype=np.int32), (2, 1))
        scores = np.array([[1.0, 0.99, 0.97], [1.0, 0.98, 0.94]], dtype=np.float32)
        gt = GroundTruth(ids, scores)
        per_query = [(0.99 - 0.97) / 1.0 * 100, (0.98 - 0.94) / 1.0 * 100]
        assert tolerance_proxy(gt, 3) == pytest.approx(np.mean(per_query), abs=1e-4)

    def test_k_too_large(self):
        with pytest.raises(CorpusError):
            tolerance_proxy(self._gt([0.9, 0.8]), 3)

    def test_nonpositive_top_score_skipped(self):
        ids = np.tile(np.arange(3, dtype=np.int32), (2, 1))
        scores = np.array([[-0.1, -0.2, -0.3], [1.0, 0.9, 0.8]], dtype=np.float32)
        gt = GroundTruth(ids, scores)
        with pytest.warns(UserWarning, match="skipped"):
            val = tolerance_proxy(gt, 3)
        assert val == pytest.approx((0.9 - 0.8) / 1.0 * 100, abs=1e-4)


def _judged_gt(n_queries, k, sn_counts, seed=0):
    rng = np.random.default_rng(seed)
    ids = np.array([rng.permutation(10000)[:k] for _ in range(n_queries)], np.int32)
    scores = np.sort(rng.uniform(0.3, 1.0, (n_queries, k)).astype(np.float32), axis=1)[:, ::-1]
    gt = GroundTruth(ids, scores)
    judgments = JudgmentSet()
    for qi in range(n_queries):
        for rank, doc in enumerate(ids[qi]):
            judgments.add(Judgment(qi, int(doc), rank < sn_counts[qi], "syn"))
    return gt, judgments


class TestCalibration:
    def test_perfect_retrieval_constant_curve(self):
        gt, judgments = _judged_gt(5, 8, [3, 2, 4, 1, 2])
        retrieved = RetrievedSet(gt.ids.copy(), gt.scores.copy())
        curve, crossing = calibrate_tolerance(gt, judgments, retrieved, [0.5, 1.0, 2.0])
        assert all(t == 1.0 for _, t in curve)
        assert crossing == 0.5

    def test_interpolated_crossing(self):
        # single query, constructed so trecall steps from 0.5 to 1.0 between
        # x=1 and x=3 while mean srecall sits at 0.75
        ids = np.array([[0, 1, 2, 3]], np.int32)
        scores = np.array([[1.0, 0.98, 0.96, 0.94]], np.float32)
        gt = GroundTruth(ids, scores)
        judgments = JudgmentSet(
            [
                Judgment(0, 0, True, "syn"),
                Judgment(0, 1, True, "syn"),
                Judgment(0, 2, True, "syn"),
                Judgment(0, 3, True, "syn"),
            ]
        )
        # two hits, two substitutes needing ~2% tolerance
        ret_ids = np.array([[0, 1, 90, 91]], np.int32)
        ret_scores = np.array([[1.0, 0.98, 0.945, 0.92]], np.float32)
        retrieved = RetrievedSet(ret_ids, ret_scores)
        curve, crossing = calibrate_tolerance(
            gt, judgments, retrieved, [0.0, 1.0, 2.0, 3.0]
        )
        trecalls = dict(curve)
        target = 1.0  # srecall: SN = all four, two retrieved -> 0.5... see below
        # srecall here is 2/4 = 0.5; trecall(0) = 0.5 already meets it
        assert trecalls[0.0] >= 0.5
        assert crossing == 0.0

    def test_all_srecall_undefined(self):
        gt, judgments = _judged_gt(2, 4, [0, 0])
        retrieved = RetrievedSet(gt.ids.copy(), gt.scores.copy())
        with pytest.raises(CorpusError, match="undefined"):
            calibrate_tolerance(gt, judgments, retrieved, [1.0])

    def test_monotone_curve_crossing_bracketed(self):
        rng = np.random.default_rng(22)
        gt, judgments = _judged_gt(10, 10, [3] * 10, seed=5)
        # retrieved: drop two gt items per query, substitute close outsiders
        ids = gt.ids.copy()
        scores = gt.scores.astype(np.float64)
        for qi in range(10):
            for slot in (7, 9):
                ids[qi, slot] = 20000 + qi * 10 + slot
                scores[qi, slot] = scores[qi, slot] * (1 - 0.015)
            order = np.lexsort((ids[qi], -scores[qi]))
            ids[qi] = ids[qi][order]
            scores[qi] = scores[qi][order]
        retrieved = RetrievedSet(ids, scores.astype(np.float32))
        grid = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0]
        curve, crossing = calibrate_tolerance(gt, judgments, retrieved, grid)
        vals = [t for _, t in curve]
        assert vals == sorted(vals)  # monotone in x
        assert grid[0] <= crossing <= grid[-1]


class TestInvariantSuite:
    """Seeded randomized invariants over (gt, retrieved, judgments) instances."""

    def _instance(self, rng):
        k = int(rng.integers(2, 12))
        gt_ids, gt_scores, ret_ids, ret_scores, _ = _random_instance(rng, k)
        # keep scores positive for the scale-invariance checks
        gt_scores = np.abs(gt_scores) + 0.01
        gt_scores = np.sort(gt_scores)[::-1]
        overlap_mask = ret_ids < 1000
        ret_scores = ret_scores.copy()
        pos = {int(g): i for i, g in enumerate(gt_ids)}
        # gt is the true top-k, so foreign retrieved items score below g_k
        g_min = gt_scores.min()
        for i, rid in enumerate(ret_ids):
            if rid < 1000:
                ret_scores[i] = gt_scores[pos[int(rid)]]
            else:
                ret_scores[i] = g_min * rng.uniform(0.3, 0.999)
        sn_count = int(rng.integers(0, k + 1))
        sn = {int(g) for g in rng.choice(gt_ids, size=sn_count, replace=False)}
        return gt_ids, gt_scores, ret_ids, ret_scores, sn

    def test_invariants_bulk(self):
        rng = np.random.default_rng(777)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for _ in range(2000):
                gt_ids, gt_scores, ret_ids, ret_scores, sn = self._instance(rng)
                rec = recall_at_k(gt_ids, ret_ids)
                tr = [
                    tolerant_recall(gt_ids, gt_scores, ret_ids, ret_scores, x)
                    for x in (0.0, 0.5, 1.0, 2.0, 5.0)
                ]
                # monotone in x and dominates recall
                assert tr == sorted(tr)
                assert all(t >= rec for t in tr)
                # trecall(0) equals recall when all scores are distinct
                pooled = np.concatenate([gt_scores, ret_scores])
                if len(np.unique(pooled)) == len(pooled):
                    assert tr[0] == pytest.approx(rec)
                # recall@k-eps monotone in eps
                rke = [
                    recall_at_k_eps(gt_scores, ret_scores, eps)
                    for eps in (0.0, 0.1, 1.0, 100.0)
                ]
                assert rke == sorted(rke)
                # scale invariance under positive score scaling
                for c in (0.5, 3.0):
                    assert tolerant_recall(
                        gt_ids, gt_scores * c, ret_ids, ret_scores * c, 1.0
                    ) == pytest.approx(tr[2])
                # srecall undefined iff SN empty
                sr = semantic_recall(sn, ret_ids)
                assert (sr is None) == (len(sn) == 0)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_trecall_bounds_property(self, seed):
        rng = np.random.default_rng(seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gt_ids, gt_scores, ret_ids, ret_scores, _ = self._instance(rng)
            for x in (0.0, 1.0, 10.0):
                t = tolerant_recall(gt_ids, gt_scores, ret_ids, ret_scores, x)
                assert 0.0 <= t <= 1.0


def test_semantic_recall_generalizes_to_recall():
    # every gt item judged Relevant and |retrieved| = k = |SN|
    rng = np.random.default_rng(23)
    for _ in range(50):
        k = int(rng.integers(1, 10))
        gt_ids = rng.choice(1000, size=k, replace=False)
        n_hit = int(rng.integers(0, k + 1))
        hits = rng.choice(gt_ids, size=n_hit, replace=False)
        ret_ids = np.concatenate([hits, 2000 + np.arange(k - n_hit)])
        sn = {int(g) for g in gt_ids}
        assert semantic_recall(sn, ret_ids) == pytest.approx(recall_at_k(gt_ids, ret_ids))


class TestEvaluateAggregate:
    def test_single_query(self):
        gt, judgments = _judged_gt(1, 5, [2])
        retrieved = RetrievedSet(gt.ids.copy(), gt.scores.copy())
        evals = evaluate_queries(gt, retrieved, judgments)
        assert len(evals) == 1
        e = evals[0]
        assert e.recall == 1.0 and e.srecall == 1.0 and e.trecall == 1.0
        rows = aggregate(evals)
        all_recall = next(r for r in rows if r["group"] == "all" and r["metric"] == "recall")
        assert all_recall["mean"] == 1.0 and all_recall["std"] == 0.0

    def test_mean_std_arithmetic(self):
        gt, judgments = _judged_gt(2, 10, [10, 10], seed=9)
        ids = gt.ids.copy()
        # query 1 misses two items
        ids[1, 8] = 90001
        ids[1, 9] = 90002
        scores = gt.scores.copy()
        retrieved = RetrievedSet(ids, scores)
        evals = evaluate_queries(gt, retrieved, judgments, x=0.0)
        rows = aggregate(evals)
        rec = next(r for r in rows if r["group"] == "all" and r["metric"] == "recall")
        assert rec["mean"] == pytest.approx(0.9)
        assert rec["std"] == pytest.approx(0.1)

    def test_undefined_excluded_not_imputed(self):
        gt, judgments = _judged_gt(3, 4, [0, 2, 4], seed=11)
        retrieved = RetrievedSet(gt.ids.copy(), gt.scores.copy())
        evals = evaluate_queries(gt, retrieved, judgments)
        rows = aggregate(evals)
        sr = next(r for r in rows if r["group"] == "all" and r["metric"] == "srecall")
        assert sr["n_excluded"] == 1
        assert sr["mean"] == 1.0

    def test_table_shaped_groups(self):
        gt, judgments = _judged_gt(6, 100, [5, 10, 30, 50, 85, 95], seed=12)
        retrieved = RetrievedSet(gt.ids.copy(), gt.scores.copy())
        evals = evaluate_queries(gt, retrieved, judgments)
        rows = aggregate(evals, bins=(20, 80))
        groups = {r["group"] for r in rows}
        assert groups == {"all", "sn_lt_20", "sn_20_80", "sn_ge_80"}
        counts = {
            r["group"]: r["n_queries"] for r in rows if r["metric"] == "recall"
        }
        assert counts == {"all": 6, "sn_lt_20": 2, "sn_20_80": 2, "sn_ge_80": 2}
