"""Trial bookkeeping and verification metrics: EER, DET points, rank histograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LABEL_GENUINE",
    "LABEL_IMPOSTER",
    "EvalReport",
    "TrialRecord",
    "compute_eer",
    "det_curve",
    "rank_histogram",
]

LABEL_GENUINE = "genuine"
LABEL_IMPOSTER = "imposter"


@dataclass(frozen=True)
class TrialRecord:
    """One verification trial: a test utterance claimed as a speaker."""

    utterance_id: str
    claimed_speaker: str
    label: str

    def __post_init__(self):
        if not self.utterance_id or not self.claimed_speaker:
            raise ValueError("trial ids must be nonempty")
        if self.label not in (LABEL_GENUINE, LABEL_IMPOSTER):
            raise ValueError(f"trial label must be genuine or imposter, got {self.label!r}")

    @property
    def is_genuine(self) -> bool:
        return self.label == LABEL_GENUINE


@dataclass(frozen=True)
class EvalReport:
    """EER operating point plus the full DET trade-off for one score set."""

    eer: float
    eer_threshold: float
    det_points: tuple[tuple[float, float], ...]
    n_target: int
    n_nontarget: int


def _genuine_mask(labels) -> np.ndarray:
    """Accept a bool array or a sequence of genuine/imposter label strings."""
    arr = np.asarray(labels)
    if arr.dtype == bool:
        return arr
    mask = np.empty(arr.shape, dtype=bool)
    for i, value in enumerate(arr.reshape(-1)):
        if value == LABEL_GENUINE:
            mask.reshape(-1)[i] = True
        elif value == LABEL_IMPOSTER:
            mask.reshape(-1)[i] = False
        else:
            raise ValueError(f"unknown trial label {value!r}")
    return mask


def _operating_points(scores, labels):
    """Thresholds (ascending, plus a reject-all sentinel) with FAR and FRR.

    A trial is accepted when its score is >= the threshold, so
    FAR(t) = fraction of imposters with score >= t and
    FRR(t) = fraction of genuine trials with score < t.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("scores must be a 1-D vector")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    genuine = _genuine_mask(labels)
    if genuine.shape != scores.shape:
        raise ValueError("scores and labels must have equal length")
    n_gen = int(genuine.sum())
    n_imp = int(genuine.size - n_gen)
    if n_gen == 0 or n_imp == 0:
        raise ValueError("need at least one genuine and one imposter trial")

    gen_sorted = np.sort(scores[genuine])
    imp_sorted = np.sort(scores[~genuine])
    uniq = np.unique(scores)
    thresholds = np.append(uniq, uniq[-1] + 1.0)
    far = (n_imp - np.searchsorted(imp_sorted, thresholds, side="left")) / n_imp
    frr = np.searchsorted(gen_sorted, thresholds, side="left") / n_gen
    return thresholds, far, frr


def det_curve(scores, labels) -> list[tuple[float, float]]:
    """(FAR, FRR) at every distinct threshold, ordered by rising threshold.

    FAR is non-increasing and FRR non-decreasing along the list; the
    first point is accept-all (1, 0) and the last reject-all (0, 1).
    """
    _, far, frr = _operating_points(scores, labels)
    return [(float(a), float(r)) for a, r in zip(far, frr)]


def compute_eer(scores, labels) -> EvalReport:
    """Equal error rate by sweeping all distinct score thresholds.

    The EER is taken at the crossing of FAR and FRR, linearly
    interpolated between the two adjacent operating points where
    FAR - FRR changes sign.
    """
    thresholds, far, frr = _operating_points(scores, labels)
    diff = far - frr
    idx = int(np.argmax(diff <= 0.0))
    if diff[idx] == 0.0:
        eer = float(far[idx])
        eer_threshold = float(thresholds[idx])
    else:
        d0, d1 = float(diff[idx - 1]), float(diff[idx])
        t = d0 / (d0 - d1)
        eer = float(far[idx - 1] + t * (far[idx] - far[idx - 1]))
        eer_threshold = float(thresholds[idx - 1] + t * (thresholds[idx] - thresholds[idx - 1]))
    genuine = _genuine_mask(labels)
    return EvalReport(
        eer=eer,
        eer_threshold=eer_threshold,
        det_points=tuple((float(a), float(r)) for a, r in zip(far, frr)),
        n_target=int(genuine.sum()),
        n_nontarget=int(genuine.size - genuine.sum()),
    )


def rank_histogram(positions, max_rank: int) -> np.ndarray:
    """Bin counts of rank positions 1..max_rank; bins sum to the input length."""
    max_rank = int(max_rank)
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")
    pos = np.asarray(positions)
    if pos.size == 0:
        return np.zeros(max_rank, dtype=np.int64)
    if pos.ndim != 1:
        raise ValueError("positions must be a 1-D vector")
    pos = pos.astype(np.int64)
    if np.any(pos != np.asarray(positions)):
        raise ValueError("positions must be integers")
    if pos.min() < 1 or pos.max() > max_rank:
        raise ValueError(f"positions must lie in [1, {max_rank}]")
    return np.bincount(pos - 1, minlength=max_rank).astype(np.int64)
