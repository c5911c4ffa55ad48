"""Tests for EER computation, DET curves, and rank histograms."""

import numpy as np
import pytest

from cohortsv.metrics import TrialRecord, compute_eer, det_curve, rank_histogram


def brute_force_operating_points(scores, genuine):
    """Quadratic recount: loop every threshold, count every trial."""
    n_gen = int(np.sum(genuine))
    n_imp = len(scores) - n_gen
    thresholds = sorted(set(scores))
    thresholds.append(thresholds[-1] + 1.0)
    points = []
    for t in thresholds:
        fa = sum(1 for s, g in zip(scores, genuine) if not g and s >= t)
        fr = sum(1 for s, g in zip(scores, genuine) if g and s < t)
        points.append((t, fa / n_imp, fr / n_gen))
    return points


def brute_force_eer(scores, genuine):
    points = brute_force_operating_points(scores, genuine)
    for i, (_, far, frr) in enumerate(points):
        d = far - frr
        if d <= 0.0:
            if d == 0.0:
                return far
            _, far0, frr0 = points[i - 1]
            d0 = far0 - frr0
            t = d0 / (d0 - d)
            return far0 + t * (far - far0)
    raise AssertionError("no crossing found")


def random_trial_set(rng, max_n=500):
    n_gen = int(rng.integers(2, max_n // 2))
    n_imp = int(rng.integers(2, max_n // 2))
    gen = rng.normal(1.0, 1.0, n_gen)
    imp = rng.normal(-1.0, 1.0, n_imp)
    scores = np.concatenate([gen, imp])
    genuine = np.array([True] * n_gen + [False] * n_imp)
    if rng.random() < 0.3:
        scores = np.round(scores, 1)  # provoke threshold ties
    return scores, genuine


class TestTrialRecord:
    def test_valid(self):
        t = TrialRecord("u1", "s1", "genuine")
        assert t.is_genuine

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError, match="label"):
            TrialRecord("u1", "s1", "target")

    def test_rejects_empty_ids(self):
        with pytest.raises(ValueError, match="nonempty"):
            TrialRecord("", "s1", "genuine")


class TestComputeEer:
    def test_perfect_separation(self):
        report = compute_eer([0.9, 0.8, 0.1, 0.2], [True, True, False, False])
        assert report.eer == 0.0
        assert report.n_target == 2 and report.n_nontarget == 2

    def test_hand_case_half(self):
        # At a threshold between 0.8 and 0.9: FAR = 0.5, FRR = 0.5.
        report = compute_eer([0.9, 0.8, 0.95, 0.1], [True, True, False, False])
        assert report.eer == 0.5
        assert report.eer_threshold == pytest.approx(0.9)

    def test_negation_and_label_swap_invariance(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(0, 1, 200)  # continuous, no ties
        genuine = rng.random(200) < 0.4
        a = compute_eer(scores, genuine)
        b = compute_eer(-scores, ~genuine)
        assert a.eer == pytest.approx(b.eer, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(0, 1, 300)
        genuine = rng.random(300) < 0.5
        a = compute_eer(scores, genuine)
        b = compute_eer(np.exp(scores), genuine)
        assert a.eer == b.eer

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            compute_eer([0.1, 0.2], [True, True])

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            scores, genuine = random_trial_set(rng)
            report = compute_eer(scores, genuine)
            assert report.eer == brute_force_eer(list(scores), list(genuine))

    def test_accepts_label_strings(self):
        report = compute_eer([0.9, 0.1], ["genuine", "imposter"])
        assert report.eer == 0.0

    def test_eer_in_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            scores, genuine = random_trial_set(rng, max_n=60)
            report = compute_eer(scores, genuine)
            assert 0.0 <= report.eer <= 1.0


class TestDetCurve:
    def test_extreme_points(self):
        points = det_curve([0.9, 0.8, 0.95, 0.1], [True, True, False, False])
        assert points[0] == (1.0, 0.0)
        assert points[-1] == (0.0, 1.0)

    def test_monotone(self):
        rng = np.random.default_rng(4)
        scores, genuine = random_trial_set(rng, max_n=300)
        points = det_curve(scores, genuine)
        far = np.array([p[0] for p in points])
        frr = np.array([p[1] for p in points])
        assert np.all(np.diff(far) <= 0)
        assert np.all(np.diff(frr) >= 0)

    def test_matches_quadratic_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            scores, genuine = random_trial_set(rng, max_n=200)
            points = det_curve(scores, genuine)
            oracle = brute_force_operating_points(list(scores), list(genuine))
            assert len(points) == len(oracle)
            for (far, frr), (_, far_o, frr_o) in zip(points, oracle):
                assert far == far_o and frr == frr_o


class TestRankHistogram:
    def test_hand_example(self):
        assert np.array_equal(rank_histogram([1, 1, 2], 3), [2, 1, 0])

    def test_empty_input(self):
        assert np.array_equal(rank_histogram([], 4), [0, 0, 0, 0])

    def test_counts_sum_to_input_length(self):
        rng = np.random.default_rng(6)
        positions = rng.integers(1, 8, 50)
        counts = rank_histogram(positions, 7)
        assert int(counts.sum()) == 50

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="lie in"):
            rank_histogram([0, 1], 3)
        with pytest.raises(ValueError, match="lie in"):
            rank_histogram([4], 3)
