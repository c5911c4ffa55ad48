"""Tests for the weighted model distance and cohort clustering."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohortsv.cohort import cost_curve, kmeans_gmm, weighted_kl
from cohortsv.gmm import DiagGmm


def make_family(rng, n_models, components=3, dim=2, spread=2.0):
    """Random mean-only model family sharing weights and variances."""
    weights = np.full(components, 1.0 / components)
    variances = rng.uniform(0.5, 2.0, (components, dim))
    return [
        DiagGmm(weights, rng.normal(0.0, spread, (components, dim)), variances)
        for _ in range(n_models)
    ]


def brute_force_best_partition(models, k):
    """Exhaustive search over all assignments into at most k clusters.

    Centroids are the per-component means of member means, matching the
    exact minimizer under the shared-variance distance; completely
    independent of the Lloyd implementation.
    """
    n = len(models)
    weights, variances = models[0].weights, models[0].variances
    best = np.inf
    for assignment in itertools.product(range(k), repeat=n):
        total = 0.0
        for cluster in range(k):
            members = [i for i in range(n) if assignment[i] == cluster]
            if not members:
                continue
            centroid = DiagGmm(
                weights,
                np.mean([models[i].means for i in members], axis=0),
                variances,
            )
            total += sum(weighted_kl(models[i], centroid) for i in members)
        best = min(best, total / n)
    return best


class TestWeightedKl:
    def test_self_distance_zero(self):
        g = make_family(np.random.default_rng(0), 1)[0]
        assert weighted_kl(g, g) == 0.0

    def test_hand_value(self):
        # 1-D, one component, shared unit variance, means 0 and 2:
        # 0.5 * 2^2 * (1 + 1) = 4.
        a = DiagGmm(np.array([1.0]), np.array([[0.0]]), np.array([[1.0]]))
        b = DiagGmm(np.array([1.0]), np.array([[2.0]]), np.array([[1.0]]))
        assert weighted_kl(a, b) == 4.0

    def test_symmetric_and_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b = make_family(rng, 2)
            d_ab = weighted_kl(a, b)
            d_ba = weighted_kl(b, a)
            assert d_ab >= 0.0
            assert d_ab == pytest.approx(d_ba, abs=1e-12)

    def test_zero_iff_means_equal(self):
        rng = np.random.default_rng(2)
        a, b = make_family(rng, 2)
        assert weighted_kl(a, b) > 0.0
        same = DiagGmm(a.weights, a.means.copy(), a.variances)
        assert weighted_kl(a, same) == 0.0

    def test_printed_form_vanishes_for_shared_variances(self):
        rng = np.random.default_rng(3)
        a, b = make_family(rng, 2)
        assert weighted_kl(a, b, printed_form=True) == 0.0

    def test_structure_mismatch(self):
        a = DiagGmm(np.array([1.0]), np.array([[0.0]]), np.array([[1.0]]))
        b = DiagGmm(np.array([0.5, 0.5]), np.zeros((2, 1)), np.ones((2, 1)))
        with pytest.raises(ValueError, match="mismatched"):
            weighted_kl(a, b)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_symmetry_property(self, seed):
        rng = np.random.default_rng(seed)
        a, b = make_family(rng, 2)
        assert weighted_kl(a, b) == pytest.approx(weighted_kl(b, a), abs=1e-12)


class TestKmeansGmm:
    def test_perfect_fit_when_k_equals_n(self):
        models = make_family(np.random.default_rng(4), 5)
        cohort, assignment = kmeans_gmm(models, 5, 20, seed=0, restarts=5)
        assert cohort.size == 5
        assert assignment.cost == 0.0

    def test_k1_centroid_is_mean_of_means(self):
        models = make_family(np.random.default_rng(5), 7)
        cohort, assignment = kmeans_gmm(models, 1, 20, seed=0)
        expected = np.mean([m.means for m in models], axis=0)
        assert np.allclose(cohort.centroids[0].means, expected, atol=1e-12)
        assert np.all(assignment.labels == 0)

    def test_k1_independent_of_seed(self):
        models = make_family(np.random.default_rng(6), 7)
        a = kmeans_gmm(models, 1, 20, seed=0)[0]
        b = kmeans_gmm(models, 1, 20, seed=12345)[0]
        assert np.array_equal(a.centroids[0].means, b.centroids[0].means)

    def test_recovers_two_separated_groups(self):
        rng = np.random.default_rng(7)
        weights = np.array([0.5, 0.5])
        variances = np.ones((2, 2))
        lo = [DiagGmm(weights, rng.normal(-10.0, 0.3, (2, 2)), variances) for _ in range(2)]
        hi = [DiagGmm(weights, rng.normal(10.0, 0.3, (2, 2)), variances) for _ in range(2)]
        models = [lo[0], hi[0], lo[1], hi[1]]
        _, assignment = kmeans_gmm(models, 2, 20, seed=0, restarts=5)
        labels = assignment.labels
        assert labels[0] == labels[2] and labels[1] == labels[3] and labels[0] != labels[1]
        assert assignment.cost == pytest.approx(brute_force_best_partition(models, 2), abs=1e-9)

    def test_matches_exhaustive_search(self):
        for seed in range(5):
            models = make_family(np.random.default_rng(seed), 6)
            _, assignment = kmeans_gmm(models, 2, 50, seed=seed, restarts=20)
            oracle = brute_force_best_partition(models, 2)
            assert assignment.cost == pytest.approx(oracle, abs=1e-9)

    def test_cost_history_non_increasing(self):
        models = make_family(np.random.default_rng(8), 12)
        _, _, histories = kmeans_gmm(models, 3, 50, seed=0, restarts=8, return_history=True)
        for history in histories:
            assert np.all(np.diff(history) <= 1e-9)

    def test_deterministic_for_seed(self):
        models = make_family(np.random.default_rng(9), 10)
        a = kmeans_gmm(models, 3, 30, seed=21)
        b = kmeans_gmm(models, 3, 30, seed=21)
        assert np.array_equal(a[1].labels, b[1].labels)
        assert a[1].cost == b[1].cost
        for ca, cb in zip(a[0].centroids, b[0].centroids):
            assert np.array_equal(ca.means, cb.means)

    def test_centroids_share_ubm_structure(self):
        models = make_family(np.random.default_rng(10), 8)
        cohort, _ = kmeans_gmm(models, 3, 30, seed=0)
        for c in cohort.centroids:
            assert np.array_equal(c.weights, models[0].weights)
            assert np.array_equal(c.variances, models[0].variances)

    def test_errors(self):
        models = make_family(np.random.default_rng(11), 4)
        with pytest.raises(ValueError, match="k must be"):
            kmeans_gmm(models, 5, 10, seed=0)
        with pytest.raises(ValueError, match="nonempty"):
            kmeans_gmm([], 1, 10, seed=0)
        mixed = models[:2] + make_family(np.random.default_rng(12), 1, components=4)
        with pytest.raises(ValueError, match="share"):
            kmeans_gmm(mixed, 2, 10, seed=0)


class TestCostCurve:
    def test_endpoints(self):
        models = make_family(np.random.default_rng(13), 6)
        curve = cost_curve(models, 6, 30, seed=0, restarts=5)
        assert [k for k, _ in curve] == [1, 2, 3, 4, 5, 6]
        assert curve[-1][1] == 0.0
        k1 = kmeans_gmm(models, 1, 30, seed=0)[1].cost
        assert curve[0][1] == pytest.approx(k1, abs=1e-12)

    def test_monotone_non_increasing_with_restarts(self):
        for seed in (0, 1, 2):
            models = make_family(np.random.default_rng(100 + seed), 10)
            curve = cost_curve(models, 8, 50, seed=seed, restarts=10)
            costs = [c for _, c in curve]
            assert np.all(np.diff(costs) <= 1e-12)

    def test_k_max_validation(self):
        models = make_family(np.random.default_rng(14), 3)
        with pytest.raises(ValueError, match="k_max"):
            cost_curve(models, 4, 10, seed=0)
