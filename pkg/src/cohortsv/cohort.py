"""Cohort construction: K-means over speaker models.

Speaker models adapted from one background model share its weights and
variances, so the symmetric weighted distance between two models reduces
to a per-component Mahalanobis form on the means, and the exact centroid
under that distance is the per-component arithmetic mean of the member
means.  Each final centroid acts as one cohort reference model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gmm import DiagGmm, SpeakerModel

__all__ = [
    "Cohort",
    "ClusterAssignment",
    "cost_curve",
    "kmeans_gmm",
    "weighted_kl",
]


def weighted_kl(a: DiagGmm, b: DiagGmm, *, printed_form: bool = False) -> float:
    """Weight-averaged symmetric distance between two mixtures.

    Sums, over components i,

        w_i * 0.5 * (mu_i^a - mu_i^b)^T (inv_var_i^a + inv_var_i^b) (mu_i^a - mu_i^b)

    which is symmetric, nonnegative, and zero exactly when the means
    coincide.  Components are matched by index, which is valid for
    models adapted from the same background model.

    With printed_form=True the inverse variances are subtracted instead
    of added.  For the mean-only model family (shared variances) that
    variant is identically zero; it exists only for fidelity experiments.
    """
    if a.components != b.components or a.dim != b.dim:
        raise ValueError(
            "mismatched mixture structure: "
            f"{a.components}x{a.dim} vs {b.components}x{b.dim}"
        )
    diff = a.means - b.means
    if printed_form:
        scale = 1.0 / a.variances - 1.0 / b.variances
    else:
        scale = 1.0 / a.variances + 1.0 / b.variances
    per_component = 0.5 * np.sum(diff * diff * scale, axis=1)
    return float(np.dot(a.weights, per_component))


@dataclass(frozen=True)
class Cohort:
    """The cohort: one centroid mixture per cluster, sharing the UBM structure."""

    centroids: tuple[DiagGmm, ...]

    def __post_init__(self):
        centroids = tuple(self.centroids)
        if len(centroids) < 1:
            raise ValueError("cohort needs at least one centroid")
        first = centroids[0]
        for c in centroids[1:]:
            if c.components != first.components or c.dim != first.dim:
                raise ValueError("cohort centroids must share component count and dimension")
            if not (np.array_equal(c.weights, first.weights)
                    and np.array_equal(c.variances, first.variances)):
                raise ValueError("cohort centroids must share weights and variances")
        object.__setattr__(self, "centroids", centroids)

    @property
    def size(self) -> int:
        return len(self.centroids)


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-model cluster labels and the mean within-cluster cost."""

    labels: np.ndarray
    cost: float

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-D index array")
        cost = float(self.cost)
        if not np.isfinite(cost) or cost < 0.0:
            raise ValueError(f"cost must be finite and >= 0, got {cost}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "cost", cost)


def _model_family(models) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack member means and verify the shared weights/variances invariant."""
    if not models:
        raise ValueError("models must be nonempty")
    gmms = [m.gmm if isinstance(m, SpeakerModel) else m for m in models]
    first = gmms[0]
    for g in gmms[1:]:
        if g.components != first.components or g.dim != first.dim:
            raise ValueError("models must share component count and dimension")
        if not (np.array_equal(g.weights, first.weights)
                and np.array_equal(g.variances, first.variances)):
            raise ValueError("models must share weights and variances (mean-only family)")
    means = np.stack([g.means for g in gmms])
    return means, first.weights, first.variances


def _distances_to(means: np.ndarray, coeff: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    """Distance of every model to one centroid; exact zero for identical means."""
    diff = means - centroid[None]
    return np.einsum("nmd,md->n", diff * diff, coeff)


def _kmeanspp_models(means, coeff, k, rng):
    n = means.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d = _distances_to(means, coeff, means[chosen[0]])
    for j in range(1, k):
        total = float(d.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d / total))
        else:
            idx = int(rng.integers(n))
        chosen[j] = idx
        d = np.minimum(d, _distances_to(means, coeff, means[idx]))
    return chosen


def _lloyd(means, coeff, k, iterations, rng):
    """One Lloyd run; returns (labels, centroid means, cost, per-iteration costs)."""
    n = means.shape[0]
    centroids = means[_kmeanspp_models(means, coeff, k, rng)].copy()
    labels = None
    history: list[float] = []
    for _ in range(iterations):
        dist = np.stack([_distances_to(means, coeff, centroids[j]) for j in range(k)], axis=1)
        new_labels = np.argmin(dist, axis=1)
        # Re-seed each empty cluster at the model farthest from its assigned
        # centroid; bounded passes in case a re-seed empties another cluster.
        for _pass in range(k):
            counts = np.bincount(new_labels, minlength=k)
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            j = int(empty[0])
            assigned = dist[np.arange(n), new_labels]
            far = int(np.argmax(assigned))
            centroids[j] = means[far]
            dist[:, j] = _distances_to(means, coeff, centroids[j])
            new_labels = np.argmin(dist, axis=1)
        for j in range(k):
            member = new_labels == j
            if np.any(member):
                centroids[j] = means[member].mean(axis=0)
        assigned_cost = np.empty(n)
        for j in range(k):
            member = new_labels == j
            if np.any(member):
                assigned_cost[member] = _distances_to(means[member], coeff, centroids[j])
        cost = float(assigned_cost.mean())
        history.append(cost)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centroids, history[-1], history


def kmeans_gmm(
    models,
    k: int,
    iterations: int = 50,
    seed: int = 0,
    *,
    restarts: int = 10,
    printed_form: bool = False,
    return_history: bool = False,
):
    """Cluster speaker models into a cohort of k centroids.

    Lloyd iterations under the weighted symmetric distance, k-means++
    seeding, best cost over the given number of restarts.  Deterministic
    for a fixed seed.  Returns (Cohort, ClusterAssignment); with
    return_history=True a list of per-restart cost histories is appended.
    """
    means, weights, variances = _model_family(models)
    n = means.shape[0]
    k = int(k)
    iterations = int(iterations)
    restarts = int(restarts)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")

    inv = 1.0 / variances
    pair = (inv - inv) if printed_form else (inv + inv)
    coeff = 0.5 * weights[:, None] * pair

    master = np.random.default_rng(seed)
    best = None
    histories = []
    for _ in range(restarts):
        rng = np.random.default_rng(master.integers(2**63))
        labels, centroids, cost, history = _lloyd(means, coeff, k, iterations, rng)
        histories.append(np.asarray(history))
        if best is None or cost < best[2]:
            best = (labels, centroids, cost)
    labels, centroids, cost = best
    cohort = Cohort(tuple(DiagGmm(weights, centroids[j], variances) for j in range(k)))
    assignment = ClusterAssignment(labels=labels, cost=cost)
    if return_history:
        return cohort, assignment, histories
    return cohort, assignment


def cost_curve(
    models,
    k_max: int,
    iterations: int = 50,
    seed: int = 0,
    *,
    restarts: int = 10,
    printed_form: bool = False,
) -> list[tuple[int, float]]:
    """Clustering cost for every cohort size k = 1..k_max (best of restarts)."""
    k_max = int(k_max)
    if not 1 <= k_max <= len(models):
        raise ValueError(f"k_max must be in [1, {len(models)}], got {k_max}")
    master = np.random.default_rng(seed)
    curve = []
    for k in range(1, k_max + 1):
        child = int(master.integers(2**63))
        _, assignment = kmeans_gmm(
            models, k, iterations, child,
            restarts=restarts, printed_form=printed_form,
        )
        curve.append((k, assignment.cost))
    return curve
