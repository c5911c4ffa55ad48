"""Discriminative accept/reject models over assembled score features.

Two decision makers are provided: a linear SVM trained by subgradient
descent on the L2-regularized hinge loss, and a one-hidden-layer MLP
(hidden width fixed at ten times the input dimension) with a two-unit
softmax output trained by cross-entropy backpropagation.  Both carry
their input standardizer so a stored model reproduces its training-time
preprocessing exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HIDDEN_FACTOR",
    "LabeledSet",
    "LinearSvmModel",
    "MlpModel",
    "Standardizer",
    "TrainingDivergenceError",
    "init_mlp_params",
    "mlp_loss_and_grads",
    "predict_score",
    "predict_scores",
    "softmax_probs",
    "svm_objective",
    "train_mlp",
    "train_svm",
]

HIDDEN_FACTOR = 10

# Damps the first subgradient steps of the 1/(lambda * t) schedule.
_SVM_STEP_OFFSET = 100


class TrainingDivergenceError(RuntimeError):
    """Raised when a training loss becomes non-finite."""


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension z-scoring fit on training features, applied everywhere."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        scale = np.asarray(self.scale, dtype=np.float64)
        if mean.ndim != 1 or scale.shape != mean.shape:
            raise ValueError("standardizer mean and scale must be matching 1-D vectors")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale))):
            raise ValueError("standardizer parameters must be finite")
        if np.any(scale <= 0.0):
            raise ValueError("standardizer scale entries must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        x = np.asarray(features, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # Constant dimensions get unit scale instead of a blown-up inverse.
        scale = np.where(std < 1e-12, 1.0, std)
        return cls(mean=mean, scale=scale)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale


@dataclass(frozen=True)
class LabeledSet:
    """Training rows: feature matrix plus boolean labels (True = genuine)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if y.dtype != bool:
            raise ValueError("labels must be a boolean array (True = genuine)")
        if y.shape != (x.shape[0],):
            raise ValueError("labels must have one entry per feature row")
        if x.shape[0] < 2:
            raise ValueError("need at least two training rows")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        if bool(y.all()) or not bool(y.any()):
            raise ValueError("training data must contain both classes")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)


@dataclass(frozen=True)
class LinearSvmModel:
    """Linear decision function: signed margin w . z + b on standardized input."""

    weights: np.ndarray
    bias: float
    regularization: float
    standardizer: Standardizer

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape != self.standardizer.mean.shape:
            raise ValueError("weights must match the standardizer dimension")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "regularization", float(self.regularization))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MlpModel:
    """One-hidden-layer tanh network with a two-unit softmax output.

    Output unit 0 is the imposter class and unit 1 the genuine class.
    The hidden width is fixed at HIDDEN_FACTOR times the input dimension.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    standardizer: Standardizer

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 2 or b1.shape != (w1.shape[1],):
            raise ValueError("layer-1 parameter shapes are inconsistent")
        if w2.shape != (w1.shape[1], 2) or b2.shape != (2,):
            raise ValueError("layer-2 parameter shapes are inconsistent")
        if w1.shape[1] != HIDDEN_FACTOR * w1.shape[0]:
            raise ValueError(
                f"hidden width must be {HIDDEN_FACTOR}x the input dimension, "
                f"got {w1.shape[1]} for input {w1.shape[0]}"
            )
        if w1.shape[0] != self.standardizer.mean.shape[0]:
            raise ValueError("input dimension must match the standardizer")
        for arr in (w1, b1, w2, b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]


def svm_objective(weights, bias, z, y, regularization) -> float:
    """L2-regularized mean hinge loss on standardized features z with labels y = +-1."""
    margins = y * (z @ weights + bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(0.5 * regularization * np.dot(weights, weights) + hinge.mean())


def train_svm(
    data: LabeledSet,
    regularization: float = 0.01,
    epochs: int = 200,
    seed: int = 0,
    *,
    return_history: bool = False,
):
    """Train a linear SVM by epoch-shuffled subgradient descent.

    Each epoch applies one averaged subgradient step over the shuffled
    training set (steps eta_t = 1 / (lambda (t + offset))), so the
    trajectory depends on the data only through its empirical
    distribution; duplicating every row leaves the learned boundary
    unchanged up to rounding.  The returned model carries the running
    average of the epoch iterates.  With return_history=True the
    objective evaluated at the averaged iterate after each epoch is
    returned alongside the model.
    """
    lam = float(regularization)
    epochs = int(epochs)
    if lam <= 0.0 or not np.isfinite(lam):
        raise ValueError(f"regularization must be finite and > 0, got {lam}")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")

    standardizer = Standardizer.fit(data.features)
    z = standardizer.transform(data.features)
    y = np.where(data.labels, 1.0, -1.0)
    n, d = z.shape

    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    w_sum = np.zeros(d)
    b_sum = 0.0
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        zs, ys = z[order], y[order]
        active = ys * (zs @ w + b) < 1.0
        grad_w = lam * w - (ys[active, None] * zs[active]).sum(axis=0) / n
        grad_b = -float(ys[active].sum()) / n
        eta = 1.0 / (lam * (epoch + _SVM_STEP_OFFSET))
        w = w - eta * grad_w
        b = b - eta * grad_b
        w_sum += w
        b_sum += b
        if return_history:
            history.append(svm_objective(w_sum / epoch, b_sum / epoch, z, y, lam))

    model = LinearSvmModel(
        weights=w_sum / epochs,
        bias=b_sum / epochs,
        regularization=lam,
        standardizer=standardizer,
    )
    if return_history:
        return model, np.asarray(history)
    return model


def _init_mlp_params(input_dim: int, rng: np.random.Generator):
    hidden = HIDDEN_FACTOR * input_dim
    w1 = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(input_dim, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, 2))
    b2 = np.zeros(2)
    return w1, b1, w2, b2


def init_mlp_params(input_dim: int, seed: int = 0):
    """Fresh untrained MLP parameters (w1, b1, w2, b2) for a given input width."""
    return _init_mlp_params(int(input_dim), np.random.default_rng(seed))


def mlp_loss_and_grads(w1, b1, w2, b2, z, targets):
    """Mean softmax cross-entropy on a batch and its exact parameter gradients.

    targets holds the output-unit index per row (0 imposter, 1 genuine).
    Returns (loss, (grad_w1, grad_b1, grad_w2, grad_b2)).
    """
    z = np.asarray(z, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    n = z.shape[0]
    hidden = np.tanh(z @ w1 + b1)
    logits = hidden @ w2 + b2
    # Saturated logits may push `shifted` to -inf; log-sum-exp absorbs that,
    # and a genuinely non-finite loss is the caller's divergence signal.
    with np.errstate(over="ignore"):
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(log_probs[np.arange(n), targets].mean())

    delta = np.exp(log_probs)
    delta[np.arange(n), targets] -= 1.0
    delta /= n
    grad_w2 = hidden.T @ delta
    grad_b2 = delta.sum(axis=0)
    dhidden = (delta @ w2.T) * (1.0 - hidden * hidden)
    grad_w1 = z.T @ dhidden
    grad_b1 = dhidden.sum(axis=0)
    return loss, (grad_w1, grad_b1, grad_w2, grad_b2)


def train_mlp(
    data: LabeledSet,
    epochs: int = 500,
    learning_rate: float = 0.01,
    seed: int = 0,
    *,
    batch_size: int = 32,
    return_history: bool = False,
):
    """Train the one-hidden-layer softmax MLP by mini-batch backpropagation.

    Deterministic for a fixed seed (initialization and epoch shuffles
    come from one generator).  Raises TrainingDivergenceError if the
    full-set loss stops being finite.
    """
    epochs = int(epochs)
    learning_rate = float(learning_rate)
    batch_size = int(batch_size)
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if learning_rate <= 0.0 or not np.isfinite(learning_rate):
        raise ValueError(f"learning_rate must be finite and > 0, got {learning_rate}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")

    standardizer = Standardizer.fit(data.features)
    z = standardizer.transform(data.features)
    targets = data.labels.astype(np.int64)
    n, d = z.shape

    rng = np.random.default_rng(seed)
    w1, b1, w2, b2 = _init_mlp_params(d, rng)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            _, (g1, gb1, g2, gb2) = mlp_loss_and_grads(w1, b1, w2, b2, z[batch], targets[batch])
            w1 = w1 - learning_rate * g1
            b1 = b1 - learning_rate * gb1
            w2 = w2 - learning_rate * g2
            b2 = b2 - learning_rate * gb2
        epoch_loss, _ = mlp_loss_and_grads(w1, b1, w2, b2, z, targets)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergenceError(f"training loss diverged to {epoch_loss}")
        if return_history:
            history.append(epoch_loss)

    model = MlpModel(w1=w1, b1=b1, w2=w2, b2=b2, standardizer=standardizer)
    if return_history:
        return model, np.asarray(history)
    return model


def _model_dim(model) -> int:
    if isinstance(model, LinearSvmModel):
        return model.dim
    if isinstance(model, MlpModel):
        return model.input_dim
    raise TypeError(f"unsupported decision model type {type(model).__name__}")


def _decision_values(model, z: np.ndarray) -> np.ndarray:
    if isinstance(model, LinearSvmModel):
        return z @ model.weights + model.bias
    hidden = np.tanh(z @ model.w1 + model.b1)
    logits = hidden @ model.w2 + model.b2
    return logits[:, 1] - logits[:, 0]


def predict_scores(model, features) -> np.ndarray:
    """Decision scores for a feature matrix; higher means more genuine."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if x.shape[1] != _model_dim(model):
        raise ValueError(f"feature dimension {x.shape[1]} does not match model dimension {_model_dim(model)}")
    return _decision_values(model, model.standardizer.transform(x))


def predict_score(model, feature) -> float:
    """Decision score for one feature vector.

    SVM models return the signed margin; MLP models return the log-odds
    of the genuine class.  The stored standardizer is applied exactly
    once, and repeated calls on the same input return identical values.
    """
    x = np.asarray(feature, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("feature must be a 1-D vector")
    return float(predict_scores(model, x[None, :])[0])


def softmax_probs(model: MlpModel, feature) -> np.ndarray:
    """Softmax class probabilities (imposter, genuine) of an MLP for one input."""
    if not isinstance(model, MlpModel):
        raise TypeError("softmax_probs applies to MLP models only")
    x = np.asarray(feature, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise ValueError("feature must be a 1-D vector matching the model dimension")
    z = model.standardizer.transform(x[None, :])
    hidden = np.tanh(z @ model.w1 + model.b1)
    logits = (hidden @ model.w2 + model.b2)[0]
    shifted = logits - logits.max()
    probs = np.exp(shifted)
    return probs / probs.sum()
