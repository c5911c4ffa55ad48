"""Experiment configuration: flat key-value text with sections.

The file format is INI-style.  Every key has a documented default, so an
absent file (or any absent key) runs the bundled desk-scale experiment.
All randomness in the pipeline flows through the named seeds below; the
CLI ``--seed`` flag overrides every one of them at once.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .features import CONDITIONS
from .synthio import SynthConfig

__all__ = [
    "CohortConfig",
    "ConfigError",
    "DeciderKinds",
    "ExperimentConfig",
    "FeatureConfig",
    "GmmConfig",
    "MlpConfig",
    "RunConfig",
    "SvmConfig",
    "apply_overrides",
    "default_config",
    "load_config",
]

DeciderKinds = ("svm", "mlp")
_KL_FORMS = ("sum", "printed")
_SCORE_BASES = ("raw", "llr")


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass(frozen=True)
class GmmConfig:
    em_iterations: int = 20
    em_tol: float = 1e-6
    variance_floor_factor: float = 1e-4
    relevance: float = 16.0
    seed: int = 42


@dataclass(frozen=True)
class CohortConfig:
    k: int = 10
    iterations: int = 50
    restarts: int = 10
    seed: int = 42
    kl_form: str = "sum"
    cost_curve_max_k: int = 20


@dataclass(frozen=True)
class FeatureConfig:
    condition: str = "C3"
    cohort_score_basis: str = "raw"


@dataclass(frozen=True)
class SvmConfig:
    regularization: float = 0.01
    epochs: int = 200
    seed: int = 42


@dataclass(frozen=True)
class MlpConfig:
    epochs: int = 500
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 42


@dataclass(frozen=True)
class RunConfig:
    decider: str = "mlp"
    dev_fraction: float = 0.5
    conditions: tuple[str, ...] = ("C1", "C2", "C3", "C4", "C5", "C6", "C7")
    out: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: SynthConfig = field(default_factory=SynthConfig)
    gmm: GmmConfig = field(default_factory=GmmConfig)
    cohort: CohortConfig = field(default_factory=CohortConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    run: RunConfig = field(default_factory=RunConfig)


def default_config() -> ExperimentConfig:
    """The bundled desk-scale configuration (minutes of runtime end to end)."""
    return ExperimentConfig()


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {text!r}")


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {text!r}")


def _parse_conditions(text: str, where: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    if not names:
        raise ConfigError(f"{where}: expected at least one condition")
    for name in names:
        if name not in CONDITIONS:
            raise ConfigError(f"{where}: unknown condition {name!r}")
    return names


# section -> key -> parser; the parsed value feeds the dataclass field of
# the same name.
_SCHEMA = {
    "corpus": {
        "n_speakers": _parse_int,
        "dim": _parse_int,
        "ubm_components": _parse_int,
        "ubm_frames_per_speaker": _parse_int,
        "frames_per_enroll": _parse_int,
        "frames_per_test": _parse_int,
        "tests_per_speaker": _parse_int,
        "speaker_shift_scale": _parse_float,
        "seed": _parse_int,
    },
    "gmm": {
        "em_iterations": _parse_int,
        "em_tol": _parse_float,
        "variance_floor_factor": _parse_float,
        "relevance": _parse_float,
        "seed": _parse_int,
    },
    "cohort": {
        "k": _parse_int,
        "iterations": _parse_int,
        "restarts": _parse_int,
        "seed": _parse_int,
        "kl_form": str,
        "cost_curve_max_k": _parse_int,
    },
    "features": {
        "condition": str,
        "cohort_score_basis": str,
    },
    "svm": {
        "regularization": _parse_float,
        "epochs": _parse_int,
        "seed": _parse_int,
    },
    "mlp": {
        "epochs": _parse_int,
        "learning_rate": _parse_float,
        "batch_size": _parse_int,
        "seed": _parse_int,
    },
    "run": {
        "decider": str,
        "dev_fraction": _parse_float,
        "conditions": _parse_conditions,
        "out": str,
    },
}

_SECTION_TYPES = {
    "corpus": SynthConfig,
    "gmm": GmmConfig,
    "cohort": CohortConfig,
    "features": FeatureConfig,
    "svm": SvmConfig,
    "mlp": MlpConfig,
    "run": RunConfig,
}


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    try:
        cfg.corpus.validate()
    except ValueError as exc:
        raise ConfigError(f"corpus: {exc}")
    if cfg.gmm.em_iterations < 1:
        raise ConfigError("gmm.em_iterations must be >= 1")
    if cfg.gmm.relevance < 0:
        raise ConfigError("gmm.relevance must be >= 0")
    if cfg.gmm.variance_floor_factor <= 0:
        raise ConfigError("gmm.variance_floor_factor must be > 0")
    if cfg.cohort.k < 1 or cfg.cohort.iterations < 1 or cfg.cohort.restarts < 1:
        raise ConfigError("cohort.k, cohort.iterations, and cohort.restarts must be >= 1")
    if cfg.cohort.cost_curve_max_k < 1:
        raise ConfigError("cohort.cost_curve_max_k must be >= 1")
    if cfg.cohort.kl_form not in _KL_FORMS:
        raise ConfigError(f"cohort.kl_form must be one of {_KL_FORMS}, got {cfg.cohort.kl_form!r}")
    if cfg.features.condition not in CONDITIONS:
        raise ConfigError(f"features.condition must be one of C1..C7, got {cfg.features.condition!r}")
    if cfg.features.cohort_score_basis not in _SCORE_BASES:
        raise ConfigError(
            f"features.cohort_score_basis must be one of {_SCORE_BASES}, "
            f"got {cfg.features.cohort_score_basis!r}"
        )
    if cfg.svm.regularization <= 0 or cfg.svm.epochs < 1:
        raise ConfigError("svm.regularization must be > 0 and svm.epochs >= 1")
    if cfg.mlp.epochs < 1 or cfg.mlp.learning_rate <= 0 or cfg.mlp.batch_size < 1:
        raise ConfigError("mlp.epochs and mlp.batch_size must be >= 1 and mlp.learning_rate > 0")
    if cfg.run.decider not in DeciderKinds:
        raise ConfigError(f"run.decider must be one of {DeciderKinds}, got {cfg.run.decider!r}")
    if not 0.0 < cfg.run.dev_fraction < 1.0:
        raise ConfigError(f"run.dev_fraction must be in (0, 1), got {cfg.run.dev_fraction}")
    if not cfg.run.out:
        raise ConfigError("run.out must be a nonempty path")
    return cfg


def load_config(path: str | None = None) -> ExperimentConfig:
    """Load and fully validate a configuration file; None gives the defaults."""
    if path is None:
        return _validate(default_config())
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read([path])
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    sections = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[key] = _SCHEMA[section][key](raw, f"[{section}] {key}") \
                if _SCHEMA[section][key] is not str else raw.strip()
        sections[section] = _SECTION_TYPES[section](**values)
    cfg = ExperimentConfig(**{name: sections.get(name, _SECTION_TYPES[name]())
                              for name in _SECTION_TYPES})
    return _validate(cfg)


def apply_overrides(
    cfg: ExperimentConfig,
    *,
    seed: int | None = None,
    out: str | None = None,
    condition: str | None = None,
    decider: str | None = None,
) -> ExperimentConfig:
    """Apply CLI flag overrides; --seed replaces every named seed at once."""
    if seed is not None:
        cfg = dataclasses.replace(
            cfg,
            corpus=dataclasses.replace(cfg.corpus, seed=seed),
            gmm=dataclasses.replace(cfg.gmm, seed=seed),
            cohort=dataclasses.replace(cfg.cohort, seed=seed),
            svm=dataclasses.replace(cfg.svm, seed=seed),
            mlp=dataclasses.replace(cfg.mlp, seed=seed),
        )
    if out is not None:
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, out=out))
    if condition is not None:
        if condition not in CONDITIONS:
            raise ConfigError(f"unknown condition {condition!r}")
        cfg = dataclasses.replace(
            cfg,
            features=dataclasses.replace(cfg.features, condition=condition),
            run=dataclasses.replace(cfg.run, conditions=(condition,)),
        )
    if decider is not None:
        if decider not in DeciderKinds:
            raise ConfigError(f"unknown decider {decider!r}")
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, decider=decider))
    return _validate(cfg)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Render a configuration as the INI text the loader accepts.

    The output location is runtime context, not an experiment parameter,
    so ``run.out`` is omitted and the loader's default applies on re-read.
    """
    lines = []
    for section, cls in _SECTION_TYPES.items():
        lines.append(f"[{section}]")
        value = getattr(cfg, section)
        for f in dataclasses.fields(cls):
            if section == "run" and f.name == "out":
                continue
            v = getattr(value, f.name)
            if isinstance(v, tuple):
                v = ",".join(v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)
