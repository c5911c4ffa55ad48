"""File formats and synthetic corpus generation.

Formats
-------
Binary features ("CVF1"): magic bytes ``CVF1``, little-endian uint32
frame count, little-endian uint32 dimension, then frames x dim
little-endian 32-bit floats in row-major order.  The text alternative is
a plain CSV with one frame per row.

Trial lists: CSV with header ``utterance_id,claimed_speaker,label`` and
label in {genuine, imposter}.

Models (GMMs, speaker models, cohorts, deciders): versioned JSON with
explicit shape fields; floats are written with full repr precision so a
round trip reproduces bit-identical parameters.

The synthetic corpus stands in for a real enrollment/test collection:
a ground-truth base mixture is drawn, each speaker perturbs its
component means, and utterances are sampled from the owning speaker's
mixture.  Everything is a pure function of the configuration.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort import Cohort
from .deciders import LinearSvmModel, MlpModel, Standardizer
from .gmm import DiagGmm, SpeakerModel
from .metrics import LABEL_GENUINE, LABEL_IMPOSTER, TrialRecord

__all__ = [
    "FEATURE_MAGIC",
    "ParseError",
    "ScoreRow",
    "SynthConfig",
    "SynthCorpus",
    "TestUtterance",
    "generate_corpus",
    "load_cohort",
    "load_decider",
    "load_gmm",
    "load_speaker_model",
    "read_features_binary",
    "read_features_csv",
    "read_score_table",
    "read_trials",
    "sample_gmm",
    "save_cohort",
    "save_decider",
    "save_gmm",
    "save_speaker_model",
    "write_features_binary",
    "write_features_csv",
    "write_score_table",
    "write_trials",
]

FEATURE_MAGIC = b"CVF1"
FORMAT_VERSION = 1


class ParseError(ValueError):
    """A malformed input file; carries the path and, when known, the position."""

    def __init__(self, message: str, *, path=None, line: int | None = None,
                 offset: int | None = None):
        where = str(path) if path is not None else "<input>"
        if line is not None:
            where += f", line {line}"
        if offset is not None:
            where += f", offset {offset}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
        self.offset = offset


# ---------------------------------------------------------------------------
# feature matrices
# ---------------------------------------------------------------------------

def write_features_binary(path, values) -> None:
    """Write a feature matrix in the CVF1 binary format (32-bit floats)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"features must be a nonempty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("features contain non-finite values")
    frames, dim = arr.shape
    payload = arr.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", frames, dim))
        fh.write(payload)


def read_features_binary(path) -> np.ndarray:
    """Read a CVF1 feature file; truncated or oversized files fail outright."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise ParseError(f"file too short for a CVF1 header ({len(data)} bytes)", path=path)
    if data[:4] != FEATURE_MAGIC:
        raise ParseError(f"bad magic {data[:4]!r}, expected {FEATURE_MAGIC!r}", path=path, offset=0)
    frames, dim = struct.unpack_from("<II", data, 4)
    if frames < 1 or dim < 1:
        raise ParseError(f"invalid shape {frames}x{dim}", path=path, offset=4)
    expected = 12 + 4 * frames * dim
    if len(data) != expected:
        raise ParseError(
            f"size mismatch: header promises {expected} bytes, file has {len(data)}",
            path=path, offset=12,
        )
    values = np.frombuffer(data, dtype="<f4", offset=12).reshape(frames, dim)
    arr = values.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr.reshape(-1)))[0])
        raise ParseError(f"non-finite value at element {bad}", path=path, offset=12 + 4 * bad)
    return arr


def write_features_csv(path, values) -> None:
    """Text alternative to CVF1: one frame per row, full-precision floats."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"features must be a nonempty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("features contain non-finite values")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([repr(float(v)) for v in row])


def read_features_csv(path) -> np.ndarray:
    rows = []
    dim = None
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        for record in reader:
            if dim is None:
                dim = len(record)
            elif len(record) != dim:
                raise ParseError(
                    f"expected {dim} columns, found {len(record)}",
                    path=path, line=reader.line_num,
                )
            try:
                rows.append([float(v) for v in record])
            except ValueError:
                raise ParseError("non-numeric feature value", path=path, line=reader.line_num)
    if not rows:
        raise ParseError("empty feature file", path=path)
    arr = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite feature value", path=path)
    return arr


# ---------------------------------------------------------------------------
# trial lists and score tables
# ---------------------------------------------------------------------------

_TRIAL_HEADER = ["utterance_id", "claimed_speaker", "label"]


def write_trials(path, trials) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRIAL_HEADER)
        for t in trials:
            writer.writerow([t.utterance_id, t.claimed_speaker, t.label])


def read_trials(path) -> list[TrialRecord]:
    trials = []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _TRIAL_HEADER:
            raise ParseError(f"bad header {header!r}, expected {_TRIAL_HEADER!r}", path=path, line=1)
        for record in reader:
            if len(record) != 3:
                raise ParseError(f"expected 3 columns, found {len(record)}",
                                 path=path, line=reader.line_num)
            utt, spk, label = record
            if label not in (LABEL_GENUINE, LABEL_IMPOSTER):
                raise ParseError(f"unknown label token {label!r}", path=path, line=reader.line_num)
            if not utt or not spk:
                raise ParseError("empty trial id", path=path, line=reader.line_num)
            trials.append(TrialRecord(utt, spk, label))
    return trials


@dataclass(frozen=True)
class ScoreRow:
    """One scored trial: identity columns plus the raw log-likelihood scores."""

    utterance_id: str
    claimed_speaker: str
    label: str
    subset: str
    s_claimed: float
    s_ubm: float
    s_cohort: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s_cohort", np.asarray(self.s_cohort, dtype=np.float64))


def write_score_table(path, rows) -> None:
    if not rows:
        raise ValueError("refusing to write an empty score table")
    k = rows[0].s_cohort.shape[0]
    header = ["utterance_id", "claimed_speaker", "label", "subset", "s_claimed", "s_ubm"]
    header += [f"cohort_{i}" for i in range(k)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            if r.s_cohort.shape[0] != k:
                raise ValueError("inconsistent cohort size across score rows")
            writer.writerow(
                [r.utterance_id, r.claimed_speaker, r.label, r.subset,
                 repr(float(r.s_claimed)), repr(float(r.s_ubm))]
                + [repr(float(v)) for v in r.s_cohort]
            )


def read_score_table(path) -> list[ScoreRow]:
    rows = []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:6] != ["utterance_id", "claimed_speaker", "label",
                                            "subset", "s_claimed", "s_ubm"]:
            raise ParseError(f"bad score table header {header!r}", path=path, line=1)
        k = len(header) - 6
        if k < 1 or header[6:] != [f"cohort_{i}" for i in range(k)]:
            raise ParseError("bad cohort score columns", path=path, line=1)
        for record in reader:
            if len(record) != 6 + k:
                raise ParseError(f"expected {6 + k} columns, found {len(record)}",
                                 path=path, line=reader.line_num)
            if record[2] not in (LABEL_GENUINE, LABEL_IMPOSTER):
                raise ParseError(f"unknown label token {record[2]!r}",
                                 path=path, line=reader.line_num)
            try:
                s_claimed = float(record[4])
                s_ubm = float(record[5])
                cohort = np.array([float(v) for v in record[6:]])
            except ValueError:
                raise ParseError("non-numeric score value", path=path, line=reader.line_num)
            rows.append(ScoreRow(record[0], record[1], record[2], record[3],
                                 s_claimed, s_ubm, cohort))
    return rows


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _read_json(path, expected_format: str) -> dict:
    try:
        with open(path, "r") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno)
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", path=path)
    if obj.get("format") != expected_format:
        raise ParseError(f"format is {obj.get('format')!r}, expected {expected_format!r}", path=path)
    if obj.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported version {obj.get('version')!r}", path=path)
    return obj


def _gmm_fields(gmm: DiagGmm) -> dict:
    return {
        "components": gmm.components,
        "dim": gmm.dim,
        "weights": gmm.weights.tolist(),
        "means": gmm.means.tolist(),
        "variances": gmm.variances.tolist(),
    }


def _gmm_from_fields(obj: dict, path) -> DiagGmm:
    try:
        weights = np.asarray(obj["weights"], dtype=np.float64)
        means = np.asarray(obj["means"], dtype=np.float64)
        variances = np.asarray(obj["variances"], dtype=np.float64)
        components = int(obj["components"])
        dim = int(obj["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or malformed GMM field: {exc}", path=path)
    if means.shape != (components, dim):
        raise ParseError(
            f"means shape {means.shape} does not match declared {components}x{dim}", path=path)
    try:
        return DiagGmm(weights, means, variances)
    except ValueError as exc:
        raise ParseError(f"invalid GMM parameters: {exc}", path=path)


def save_gmm(path, gmm: DiagGmm) -> None:
    _write_json(path, {"format": "diag-gmm", "version": FORMAT_VERSION, **_gmm_fields(gmm)})


def load_gmm(path) -> DiagGmm:
    return _gmm_from_fields(_read_json(path, "diag-gmm"), path)


def save_speaker_model(path, model: SpeakerModel) -> None:
    _write_json(path, {
        "format": "speaker-gmm",
        "version": FORMAT_VERSION,
        "ubm_ref": model.ubm_ref,
        **_gmm_fields(model.gmm),
    })


def load_speaker_model(path) -> SpeakerModel:
    obj = _read_json(path, "speaker-gmm")
    ubm_ref = obj.get("ubm_ref")
    if not isinstance(ubm_ref, str) or not ubm_ref:
        raise ParseError("missing ubm_ref", path=path)
    return SpeakerModel(gmm=_gmm_from_fields(obj, path), ubm_ref=ubm_ref)


def save_cohort(path, cohort: Cohort, *, cost: float | None = None,
                seed: int | None = None) -> None:
    first = cohort.centroids[0]
    obj = {
        "format": "cohort",
        "version": FORMAT_VERSION,
        "k": cohort.size,
        "components": first.components,
        "dim": first.dim,
        "weights": first.weights.tolist(),
        "variances": first.variances.tolist(),
        "centroid_means": [c.means.tolist() for c in cohort.centroids],
    }
    if cost is not None:
        obj["cost"] = float(cost)
    if seed is not None:
        obj["seed"] = int(seed)
    _write_json(path, obj)


def load_cohort(path) -> Cohort:
    obj = _read_json(path, "cohort")
    try:
        k = int(obj["k"])
        weights = np.asarray(obj["weights"], dtype=np.float64)
        variances = np.asarray(obj["variances"], dtype=np.float64)
        all_means = obj["centroid_means"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or malformed cohort field: {exc}", path=path)
    if not isinstance(all_means, list) or len(all_means) != k:
        raise ParseError(f"centroid count does not match declared k={k}", path=path)
    try:
        centroids = tuple(
            DiagGmm(weights, np.asarray(m, dtype=np.float64), variances) for m in all_means
        )
        return Cohort(centroids)
    except ValueError as exc:
        raise ParseError(f"invalid cohort parameters: {exc}", path=path)


def _standardizer_fields(std: Standardizer) -> dict:
    return {"mean": std.mean.tolist(), "scale": std.scale.tolist()}


def _standardizer_from_fields(obj: dict, path) -> Standardizer:
    try:
        return Standardizer(
            mean=np.asarray(obj["mean"], dtype=np.float64),
            scale=np.asarray(obj["scale"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid standardizer: {exc}", path=path)


def save_decider(path, model, *, training: dict | None = None) -> None:
    """Persist a trained decision model with its standardizer and provenance.

    ``training`` holds hyperparameters and the training seed; it is
    stored verbatim for provenance and ignored when loading.
    """
    if isinstance(model, LinearSvmModel):
        obj = {
            "format": "svm-decider",
            "version": FORMAT_VERSION,
            "dim": model.dim,
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "regularization": model.regularization,
            "standardizer": _standardizer_fields(model.standardizer),
        }
    elif isinstance(model, MlpModel):
        obj = {
            "format": "mlp-decider",
            "version": FORMAT_VERSION,
            "input_dim": model.input_dim,
            "hidden_dim": model.hidden_dim,
            "w1": model.w1.tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.tolist(),
            "b2": model.b2.tolist(),
            "standardizer": _standardizer_fields(model.standardizer),
        }
    else:
        raise TypeError(f"unsupported decision model type {type(model).__name__}")
    if training is not None:
        obj["training"] = training
    _write_json(path, obj)


def load_decider(path):
    """Load a decision model file, dispatching on its format tag."""
    try:
        with open(path, "r") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno)
    fmt = obj.get("format") if isinstance(obj, dict) else None
    if fmt == "svm-decider":
        obj = _read_json(path, "svm-decider")
        try:
            return LinearSvmModel(
                weights=np.asarray(obj["weights"], dtype=np.float64),
                bias=float(obj["bias"]),
                regularization=float(obj["regularization"]),
                standardizer=_standardizer_from_fields(obj["standardizer"], path),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"invalid SVM model: {exc}", path=path)
    if fmt == "mlp-decider":
        obj = _read_json(path, "mlp-decider")
        try:
            return MlpModel(
                w1=np.asarray(obj["w1"], dtype=np.float64),
                b1=np.asarray(obj["b1"], dtype=np.float64),
                w2=np.asarray(obj["w2"], dtype=np.float64),
                b2=np.asarray(obj["b2"], dtype=np.float64),
                standardizer=_standardizer_from_fields(obj["standardizer"], path),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"invalid MLP model: {exc}", path=path)
    raise ParseError(f"unknown decider format {fmt!r}", path=path)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Synthetic corpus layout; every field is part of the deterministic seed."""

    n_speakers: int = 60
    dim: int = 8
    ubm_components: int = 32
    ubm_frames_per_speaker: int = 2000
    frames_per_enroll: int = 500
    frames_per_test: int = 200
    tests_per_speaker: int = 4
    speaker_shift_scale: float = 0.2
    seed: int = 42

    def validate(self) -> None:
        for name in ("n_speakers", "dim", "ubm_components", "ubm_frames_per_speaker",
                     "frames_per_enroll", "frames_per_test", "tests_per_speaker"):
            value = getattr(self, name)
            if int(value) != value or int(value) < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not (np.isfinite(self.speaker_shift_scale) and self.speaker_shift_scale > 0):
            raise ValueError(f"speaker_shift_scale must be > 0, got {self.speaker_shift_scale!r}")
        pool = self.n_speakers * self.ubm_frames_per_speaker
        if pool < self.ubm_components:
            raise ValueError(
                f"UBM training pool ({pool} frames) is smaller than ubm_components "
                f"({self.ubm_components})"
            )


@dataclass(frozen=True)
class TestUtterance:
    utterance_id: str
    speaker_id: str
    features: np.ndarray


@dataclass(frozen=True)
class SynthCorpus:
    """Generated corpus: UBM pool, per-speaker enrollments, tests, and trials."""

    ubm_train: np.ndarray
    enrollments: dict[str, np.ndarray]
    tests: list[TestUtterance]
    trials: list[TrialRecord]


def sample_gmm(gmm: DiagGmm, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Draw frames from a diagonal-covariance mixture."""
    n_frames = int(n_frames)
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    comps = rng.choice(gmm.components, size=n_frames, p=gmm.weights)
    noise = rng.standard_normal((n_frames, gmm.dim))
    return gmm.means[comps] + np.sqrt(gmm.variances[comps]) * noise


def _quantize_f32(arr: np.ndarray) -> np.ndarray:
    # Features travel through the 32-bit binary format; quantizing at the
    # source keeps write/read round trips bit-exact.
    return arr.astype(np.float32).astype(np.float64)


def generate_corpus(cfg: SynthConfig) -> SynthCorpus:
    """Build the full synthetic corpus; a pure function of the configuration.

    A ground-truth base mixture is drawn first; every speaker shifts each
    component mean by speaker_shift_scale standard deviations of noise.
    The UBM pool concatenates frames from all speakers, and each test
    utterance is claimed once per speaker (one genuine trial plus
    n_speakers - 1 imposter trials).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    m, d = cfg.ubm_components, cfg.dim

    base_weights = rng.dirichlet(np.full(m, 5.0))
    base_weights = base_weights / base_weights.sum()
    base_means = rng.uniform(-5.0, 5.0, size=(m, d))
    base_vars = rng.uniform(0.5, 2.0, size=(m, d))

    speaker_ids = [f"s{i:03d}" for i in range(cfg.n_speakers)]
    speaker_gmms = {}
    for spk in speaker_ids:
        shift = cfg.speaker_shift_scale * np.sqrt(base_vars) * rng.standard_normal((m, d))
        speaker_gmms[spk] = DiagGmm(base_weights, base_means + shift, base_vars)

    ubm_parts = [sample_gmm(speaker_gmms[s], cfg.ubm_frames_per_speaker, rng)
                 for s in speaker_ids]
    ubm_train = _quantize_f32(np.vstack(ubm_parts))

    enrollments = {
        s: _quantize_f32(sample_gmm(speaker_gmms[s], cfg.frames_per_enroll, rng))
        for s in speaker_ids
    }

    tests = []
    for s in speaker_ids:
        for j in range(cfg.tests_per_speaker):
            features = _quantize_f32(sample_gmm(speaker_gmms[s], cfg.frames_per_test, rng))
            tests.append(TestUtterance(f"{s}_t{j:02d}", s, features))

    trials = []
    for t in tests:
        trials.append(TrialRecord(t.utterance_id, t.speaker_id, LABEL_GENUINE))
        for s in speaker_ids:
            if s != t.speaker_id:
                trials.append(TrialRecord(t.utterance_id, s, LABEL_IMPOSTER))

    return SynthCorpus(ubm_train=ubm_train, enrollments=enrollments, tests=tests, trials=trials)
