"""Per-trial score vectors and the cohort-derived decision features.

For every trial the engine scores the test utterance against the claimed
speaker model, the background model, and each cohort centroid.  Three
features are derived from those scores (z-normalized score, rank
position, sorted score differences) and concatenated per condition
C1..C7 on top of the baseline log-likelihood ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort
from .gmm import DiagGmm, SpeakerModel, avg_loglik
from .metrics import TrialRecord

__all__ = [
    "CONDITIONS",
    "AssembledFeature",
    "ScoreVector",
    "apply_score_basis",
    "assemble",
    "condition_dim",
    "feat_norm",
    "feat_rank_diff",
    "feat_rank_position",
    "imbalance_filter",
    "score_vector",
]

# condition -> (use normalized score, use rank position, use rank of differences);
# the baseline ratio is always included as the first entry.
CONDITIONS: dict[str, tuple[bool, bool, bool]] = {
    "C1": (True, False, False),
    "C2": (False, True, False),
    "C3": (False, False, True),
    "C4": (True, True, False),
    "C5": (True, False, True),
    "C6": (False, True, True),
    "C7": (True, True, True),
}

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class ScoreVector:
    """Frame-averaged log-likelihoods of one trial utterance.

    s_claimed is against the claimed speaker model, s_ubm against the
    background model, and s_cohort[k] against cohort centroid k (in
    centroid order).
    """

    s_claimed: float
    s_ubm: float
    s_cohort: np.ndarray

    def __post_init__(self):
        cohort = np.asarray(self.s_cohort, dtype=np.float64)
        if cohort.ndim != 1 or cohort.shape[0] < 1:
            raise ValueError("s_cohort must be a nonempty 1-D vector")
        values = (float(self.s_claimed), float(self.s_ubm))
        if not (np.all(np.isfinite(cohort)) and all(np.isfinite(v) for v in values)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "s_claimed", values[0])
        object.__setattr__(self, "s_ubm", values[1])
        object.__setattr__(self, "s_cohort", cohort)

    @property
    def cohort_size(self) -> int:
        return self.s_cohort.shape[0]


@dataclass(frozen=True)
class AssembledFeature:
    """Feature vector for one trial under one condition."""

    condition: str
    values: np.ndarray

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("feature values must be a 1-D vector")
        object.__setattr__(self, "values", values)


def score_vector(utterance, claimed: SpeakerModel, ubm: DiagGmm, cohort: Cohort) -> ScoreVector:
    """Score one utterance against the claimed model, the UBM, and the cohort."""
    return ScoreVector(
        s_claimed=avg_loglik(claimed.gmm, utterance),
        s_ubm=avg_loglik(ubm, utterance),
        s_cohort=np.array([avg_loglik(c, utterance) for c in cohort.centroids]),
    )


def feat_norm(sv: ScoreVector, *, std_floor: float = STD_FLOOR) -> float:
    """Claimed score z-normalized by the cohort score statistics.

    Uses the population standard deviation of the cohort scores, floored
    so identical cohort scores still yield a finite value.  Needs at
    least two cohort scores.
    """
    if sv.cohort_size < 2:
        raise ValueError("cohort-based normalization needs at least 2 cohort scores")
    mu = float(np.mean(sv.s_cohort))
    sigma = float(np.std(sv.s_cohort))
    return (sv.s_claimed - mu) / max(sigma, std_floor)


def feat_rank_position(sv: ScoreVector) -> int:
    """Rank of the claimed score among claimed plus cohort scores.

    Descending rank: 1 means the claimed model scored highest.  Ties go
    to the claimed speaker, and the background score is not part of the
    ranking.
    """
    return 1 + int(np.sum(sv.s_cohort > sv.s_claimed))


def feat_rank_diff(sv: ScoreVector) -> np.ndarray:
    """Cohort scores minus the claimed score, sorted ascending."""
    return np.sort(sv.s_cohort - sv.s_claimed)


def apply_score_basis(sv: ScoreVector, basis: str = "raw") -> ScoreVector:
    """Express claimed and cohort scores either raw or as ratios to the UBM.

    The derived features are shift invariant, so both bases give the same
    feature values up to floating-point rounding; the switch exists to
    make that choice explicit and testable.
    """
    if basis == "raw":
        return sv
    if basis == "llr":
        return ScoreVector(
            s_claimed=sv.s_claimed - sv.s_ubm,
            s_ubm=0.0,
            s_cohort=sv.s_cohort - sv.s_ubm,
        )
    raise ValueError(f"unknown score basis {basis!r}; expected 'raw' or 'llr'")


def condition_dim(condition: str, cohort_size: int) -> int:
    """Feature dimension of a condition for a given cohort size."""
    try:
        use_norm, use_rpos, use_rdiff = CONDITIONS[condition]
    except KeyError:
        raise ValueError(f"unknown condition {condition!r}; expected one of {sorted(CONDITIONS)}")
    return 1 + int(use_norm) + int(use_rpos) + (int(cohort_size) if use_rdiff else 0)


def assemble(sv: ScoreVector, condition: str) -> AssembledFeature:
    """Concatenate the selected features in the fixed order raw, norm, r-pos, r-diff.

    The raw score is the baseline log-likelihood ratio (claimed minus
    background) and is always included.
    """
    try:
        use_norm, use_rpos, use_rdiff = CONDITIONS[condition]
    except KeyError:
        raise ValueError(f"unknown condition {condition!r}; expected one of {sorted(CONDITIONS)}")
    parts = [np.array([sv.s_claimed - sv.s_ubm])]
    if use_norm:
        parts.append(np.array([feat_norm(sv)]))
    if use_rpos:
        parts.append(np.array([float(feat_rank_position(sv))]))
    if use_rdiff:
        parts.append(feat_rank_diff(sv))
    return AssembledFeature(condition=condition, values=np.concatenate(parts))


def imbalance_filter(trials):
    """Balance training trials: keep all genuine rows, top-2 imposters per utterance.

    Input rows are (TrialRecord, AssembledFeature, s_claimed) tuples.
    For every test utterance only the two imposter trials with the
    highest claimed-model score survive (all of them when there are
    fewer than two); score ties break toward the earlier row.  Output
    preserves the input order.
    """
    keep = set()
    imposters_by_utt: dict[str, list[tuple[int, float]]] = {}
    for i, (trial, _feature, s_claimed) in enumerate(trials):
        if not isinstance(trial, TrialRecord):
            raise ValueError("rows must be (TrialRecord, AssembledFeature, s_claimed) tuples")
        if trial.is_genuine:
            keep.add(i)
        else:
            imposters_by_utt.setdefault(trial.utterance_id, []).append((i, float(s_claimed)))
    for rows in imposters_by_utt.values():
        rows.sort(key=lambda r: (-r[1], r[0]))
        keep.update(i for i, _ in rows[:2])
    return [row for i, row in enumerate(trials) if i in keep]
