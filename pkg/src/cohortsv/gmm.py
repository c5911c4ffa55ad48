"""Diagonal-covariance Gaussian mixture modeling.

Background models are trained with expectation maximization, speaker
models are derived from a background model by mean-only MAP adaptation,
and utterances are scored by their frame-averaged mixture log-likelihood.
All likelihood math runs in the log domain via log-sum-exp so densities
stay representable at high feature dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_EM_ITERATIONS",
    "DEFAULT_EM_TOL",
    "DEFAULT_RELEVANCE",
    "DEFAULT_VARIANCE_FLOOR_FACTOR",
    "DiagGmm",
    "SpeakerModel",
    "avg_loglik",
    "em_train",
    "em_train_history",
    "llr",
    "map_adapt",
    "validate_features",
]

_LOG_2PI = float(np.log(2.0 * np.pi))

DEFAULT_EM_ITERATIONS = 20
DEFAULT_EM_TOL = 1e-6
DEFAULT_VARIANCE_FLOOR_FACTOR = 1e-4
DEFAULT_RELEVANCE = 16.0

# Applied on top of the data-driven floor so constant feature dimensions
# cannot produce zero variances.
_ABS_VARIANCE_FLOOR = 1e-12


def validate_features(data, *, name: str = "data") -> np.ndarray:
    """Coerce an array-like to a validated float64 frames-by-dim matrix."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (frames x dim), got shape {arr.shape}")
    frames, dim = arr.shape
    if frames < 1 or dim < 1:
        raise ValueError(f"{name} needs at least one frame and one dimension, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class DiagGmm:
    """An M-component Gaussian mixture with diagonal covariances.

    Attributes:
        weights: (M,) nonnegative mixture weights summing to one.
        means: (M, dim) component means.
        variances: (M, dim) strictly positive diagonal variances.

    Instances are treated as immutable: training and adaptation always
    build new models, and scoring holds no state, so concurrent
    read-only use is safe.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if w.ndim != 1 or mu.ndim != 2 or var.shape != mu.shape or w.shape[0] != mu.shape[0]:
            raise ValueError(
                "inconsistent GMM parameter shapes: "
                f"weights {w.shape}, means {mu.shape}, variances {var.shape}"
            )
        if w.shape[0] < 1 or mu.shape[1] < 1:
            raise ValueError("GMM needs at least one component and one dimension")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise ValueError("GMM parameters contain non-finite values")
        if np.any(w < 0.0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must sum to 1, got {float(w.sum())!r}")
        if np.any(var <= 0.0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class SpeakerModel:
    """A claimed-speaker GMM derived from a background model.

    Only the means differ from the source model; weights and variances
    are shared by construction (mean-only adaptation).
    """

    gmm: DiagGmm
    ubm_ref: str = "ubm"


def _log_weighted_densities(gmm: DiagGmm, x: np.ndarray) -> np.ndarray:
    """Per-frame, per-component log(w_i) + log N(x; mu_i, var_i), shape (frames, M).

    Uses the quadratic expansion so the whole computation is three
    matrix products instead of a frames x M x dim broadcast.
    """
    inv = 1.0 / gmm.variances
    const = -0.5 * (gmm.dim * _LOG_2PI + np.sum(np.log(gmm.variances), axis=1))
    quad = (
        0.5 * (x * x) @ inv.T
        - x @ (gmm.means * inv).T
        + 0.5 * np.sum(gmm.means * gmm.means * inv, axis=1)
    )
    with np.errstate(divide="ignore"):
        log_w = np.log(gmm.weights)
    return log_w + const - quad


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = np.max(a, axis=1)
    return m + np.log(np.sum(np.exp(a - m[:, None]), axis=1))


def avg_loglik(model: DiagGmm, utterance) -> float:
    """Frame-averaged log-likelihood of an utterance under a mixture.

    Returns (1/frames) * sum_t log sum_i w_i N(x_t; mu_i, var_i),
    evaluated in the log domain.
    """
    x = validate_features(utterance, name="utterance")
    if x.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: model dim {model.dim}, utterance dim {x.shape[1]}")
    return float(np.mean(_logsumexp_rows(_log_weighted_densities(model, x))))


def llr(speaker: SpeakerModel, ubm: DiagGmm, utterance) -> float:
    """Average log-likelihood ratio of an utterance: claimed model minus background."""
    return avg_loglik(speaker.gmm, utterance) - avg_loglik(ubm, utterance)


def _kmeanspp_indices(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """K-means++ seeding over frames: squared-distance-weighted draws."""
    n = x.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        chosen[j] = idx
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return chosen


def em_train_history(
    data,
    components: int,
    iterations: int = DEFAULT_EM_ITERATIONS,
    seed: int = 0,
    *,
    tol: float = DEFAULT_EM_TOL,
    variance_floor_factor: float = DEFAULT_VARIANCE_FLOOR_FACTOR,
) -> tuple[DiagGmm, np.ndarray]:
    """EM training that also returns the per-iteration total log-likelihoods.

    Initialization is k-means++ on the frames for means, the global
    per-dimension variance for variances, and uniform weights.  Variances
    are floored at variance_floor_factor times the global variance every
    M-step.  Stops early once the log-likelihood gain drops below tol.

    The recorded history is the total data log-likelihood evaluated at
    the start of each iteration; EM guarantees it never decreases.
    """
    x = validate_features(data)
    frames, _ = x.shape
    components = int(components)
    iterations = int(iterations)
    if components < 1:
        raise ValueError(f"components must be >= 1, got {components}")
    if frames < components:
        raise ValueError(f"need at least as many frames as components: {frames} < {components}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")

    rng = np.random.default_rng(seed)
    global_var = np.maximum(x.var(axis=0), _ABS_VARIANCE_FLOOR)
    floor = np.maximum(variance_floor_factor * global_var, _ABS_VARIANCE_FLOOR)

    means = x[_kmeanspp_indices(x, components, rng)].copy()
    variances = np.tile(np.maximum(global_var, floor), (components, 1))
    weights = np.full(components, 1.0 / components)

    x_sq = x * x
    history: list[float] = []
    for _ in range(iterations):
        model = DiagGmm(weights, means, variances)
        logdens = _log_weighted_densities(model, x)
        frame_ll = _logsumexp_rows(logdens)
        total = float(frame_ll.sum())
        history.append(total)
        if len(history) >= 2 and total - history[-2] < tol:
            break
        resp = np.exp(logdens - frame_ll[:, None])
        occ = resp.sum(axis=0)
        safe = occ > 1e-12
        new_means = means.copy()
        new_vars = variances.copy()
        new_means[safe] = (resp.T @ x)[safe] / occ[safe, None]
        second_moment = (resp.T @ x_sq)[safe] / occ[safe, None]
        new_vars[safe] = np.maximum(second_moment - new_means[safe] ** 2, floor)
        weights = occ / occ.sum()
        means, variances = new_means, new_vars
    return DiagGmm(weights, means, variances), np.asarray(history)


def em_train(
    data,
    components: int,
    iterations: int = DEFAULT_EM_ITERATIONS,
    seed: int = 0,
    *,
    tol: float = DEFAULT_EM_TOL,
    variance_floor_factor: float = DEFAULT_VARIANCE_FLOOR_FACTOR,
) -> DiagGmm:
    """Train a diagonal-covariance GMM with EM; deterministic for a fixed seed."""
    model, _ = em_train_history(
        data, components, iterations, seed,
        tol=tol, variance_floor_factor=variance_floor_factor,
    )
    return model


def map_adapt(
    ubm: DiagGmm,
    data,
    relevance: float = DEFAULT_RELEVANCE,
    *,
    ubm_ref: str = "ubm",
) -> SpeakerModel:
    """Mean-only MAP adaptation of a background model to enrollment data.

    For component i with posterior occupancy n_i and posterior-weighted
    data mean E_i, the adapted mean is

        alpha_i * E_i + (1 - alpha_i) * ubm_mean_i,
        alpha_i = n_i / (n_i + relevance).

    Components with zero occupancy keep the background mean exactly.
    Weights and variances are shared with the source model unchanged.
    """
    x = validate_features(data)
    if x.shape[1] != ubm.dim:
        raise ValueError(f"dimension mismatch: ubm dim {ubm.dim}, data dim {x.shape[1]}")
    relevance = float(relevance)
    if not np.isfinite(relevance) or relevance < 0.0:
        raise ValueError(f"relevance must be finite and >= 0, got {relevance}")

    logdens = _log_weighted_densities(ubm, x)
    resp = np.exp(logdens - _logsumexp_rows(logdens)[:, None])
    occ = resp.sum(axis=0)
    occupied = occ > 0.0
    post_mean = ubm.means.copy()
    post_mean[occupied] = (resp.T @ x)[occupied] / occ[occupied, None]
    with np.errstate(invalid="ignore"):
        alpha = np.where(occupied, occ / (occ + relevance), 0.0)
    adapted = alpha[:, None] * post_mean + (1.0 - alpha)[:, None] * ubm.means
    gmm = DiagGmm(ubm.weights, adapted, ubm.variances)
    return SpeakerModel(gmm=gmm, ubm_ref=str(ubm_ref))
