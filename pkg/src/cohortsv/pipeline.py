"""Pipeline stages behind the CLI subcommands.

Every stage reads declared inputs from the output directory, writes
declared outputs back into it, and is a pure function of those inputs
plus the configuration.  ``run_all`` chains all stages and finishes with
a summary table and a manifest of output hashes for reproducibility
audits.

Directory layout under the output root:

    corpus/    ubm_train.cvf, enroll/<spk>.cvf, test/<utt>.cvf,
               trials.csv, speakers.csv, utterances.csv
    models/    ubm.json, speakers/<spk>.json, cohort.json,
               decider_<cond>_<kind>.json
    scores/    scores.csv
    features/  features_<cond>.csv
    reports/   cost_curve.csv/.png, cluster_assignment.csv,
               rank_histogram.csv/.png, eval_*.json, det_*.csv/.png,
               score_hist_*.png, summary.csv, resolved_config.ini,
               run_manifest.csv
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plots
from .cohort import cost_curve, kmeans_gmm
from .config import ExperimentConfig, config_to_text
from .deciders import LabeledSet, predict_scores, train_mlp, train_svm
from .features import (
    ScoreVector,
    apply_score_basis,
    assemble,
    condition_dim,
    feat_rank_position,
    imbalance_filter,
)
from .gmm import avg_loglik, em_train, map_adapt
from .metrics import EvalReport, TrialRecord, compute_eer, rank_histogram
from .synthio import (
    ParseError,
    ScoreRow,
    generate_corpus,
    load_cohort,
    load_decider,
    load_gmm,
    load_speaker_model,
    read_features_binary,
    read_score_table,
    read_trials,
    save_cohort,
    save_decider,
    save_gmm,
    save_speaker_model,
    write_features_binary,
    write_score_table,
    write_trials,
)

__all__ = [
    "MissingInputError",
    "run_adapt",
    "run_all",
    "run_cluster",
    "run_cost_curve",
    "run_evaluate",
    "run_features",
    "run_score",
    "run_synth",
    "run_train_decider",
    "run_train_ubm",
]

logger = logging.getLogger("cohortsv")

FORMAT_VERSION = 1


class MissingInputError(FileNotFoundError):
    """A stage input file that should have been produced earlier is absent."""


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"missing input {path} (produce it with '{hint}')")
    return path


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# small corpus-side tables
# ---------------------------------------------------------------------------

def _write_two_column(path: Path, header: tuple[str, str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_two_column(path: Path, header: tuple[str, str]) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != list(header):
            raise ParseError(f"bad header {first!r}, expected {list(header)!r}", path=path, line=1)
        for record in reader:
            if len(record) != 2:
                raise ParseError(f"expected 2 columns, found {len(record)}",
                                 path=path, line=reader.line_num)
            out[record[0]] = record[1]
    return out


def _speaker_subsets(speaker_ids: list[str], dev_fraction: float) -> dict[str, str]:
    """Disjoint dev/eval split: the first round(n * fraction) sorted ids are dev."""
    ordered = sorted(speaker_ids)
    n_dev = int(round(len(ordered) * dev_fraction))
    n_dev = max(1, min(len(ordered) - 1, n_dev))
    return {spk: ("dev" if i < n_dev else "eval") for i, spk in enumerate(ordered)}


# ---------------------------------------------------------------------------
# assembled-feature tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureTableRow:
    trial: TrialRecord
    subset: str
    s_claimed: float
    values: np.ndarray


def _write_feature_table(path: Path, rows: list[FeatureTableRow]) -> None:
    if not rows:
        raise ValueError("refusing to write an empty feature table")
    d = rows[0].values.shape[0]
    header = ["utterance_id", "claimed_speaker", "label", "subset", "s_claimed"]
    header += [f"x{i}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            writer.writerow(
                [r.trial.utterance_id, r.trial.claimed_speaker, r.trial.label,
                 r.subset, _fmt(r.s_claimed)] + [_fmt(v) for v in r.values]
            )


def _read_feature_table(path: Path) -> list[FeatureTableRow]:
    rows = []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["utterance_id", "claimed_speaker",
                                            "label", "subset", "s_claimed"]:
            raise ParseError(f"bad feature table header {header!r}", path=path, line=1)
        d = len(header) - 5
        if d < 1 or header[5:] != [f"x{i}" for i in range(d)]:
            raise ParseError("bad feature columns", path=path, line=1)
        for record in reader:
            if len(record) != 5 + d:
                raise ParseError(f"expected {5 + d} columns, found {len(record)}",
                                 path=path, line=reader.line_num)
            try:
                rows.append(FeatureTableRow(
                    trial=TrialRecord(record[0], record[1], record[2]),
                    subset=record[3],
                    s_claimed=float(record[4]),
                    values=np.array([float(v) for v in record[5:]]),
                ))
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=reader.line_num)
    return rows


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def run_synth(cfg: ExperimentConfig, out: Path) -> None:
    """Generate the synthetic corpus and its trial and subset tables."""
    corpus = generate_corpus(cfg.corpus)
    corpus_dir = out / "corpus"
    (corpus_dir / "enroll").mkdir(parents=True, exist_ok=True)
    (corpus_dir / "test").mkdir(parents=True, exist_ok=True)

    write_features_binary(corpus_dir / "ubm_train.cvf", corpus.ubm_train)
    for spk, feats in corpus.enrollments.items():
        write_features_binary(corpus_dir / "enroll" / f"{spk}.cvf", feats)
    for t in corpus.tests:
        write_features_binary(corpus_dir / "test" / f"{t.utterance_id}.cvf", t.features)
    write_trials(corpus_dir / "trials.csv", corpus.trials)

    subsets = _speaker_subsets(list(corpus.enrollments), cfg.run.dev_fraction)
    _write_two_column(corpus_dir / "speakers.csv", ("speaker_id", "subset"),
                      sorted(subsets.items()))
    _write_two_column(corpus_dir / "utterances.csv", ("utterance_id", "speaker_id"),
                      [(t.utterance_id, t.speaker_id) for t in corpus.tests])
    logger.info("synth: %d speakers, %d test utterances, %d trials",
                len(corpus.enrollments), len(corpus.tests), len(corpus.trials))


def run_train_ubm(cfg: ExperimentConfig, out: Path) -> None:
    """Train the background model on the pooled corpus features."""
    data = read_features_binary(_require(out / "corpus" / "ubm_train.cvf", "synth"))
    ubm = em_train(
        data,
        cfg.corpus.ubm_components,
        cfg.gmm.em_iterations,
        cfg.gmm.seed,
        tol=cfg.gmm.em_tol,
        variance_floor_factor=cfg.gmm.variance_floor_factor,
    )
    (out / "models").mkdir(parents=True, exist_ok=True)
    save_gmm(out / "models" / "ubm.json", ubm)
    logger.info("train-ubm: %d components on %d frames", ubm.components, data.shape[0])


def run_adapt(cfg: ExperimentConfig, out: Path) -> None:
    """Adapt one speaker model per enrollment file."""
    ubm = load_gmm(_require(out / "models" / "ubm.json", "train-ubm"))
    enroll_dir = _require(out / "corpus" / "enroll", "synth")
    speaker_dir = out / "models" / "speakers"
    speaker_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(enroll_dir.glob("*.cvf"))
    if not files:
        raise MissingInputError(f"missing input {enroll_dir}/*.cvf (produce it with 'synth')")
    for path in files:
        model = map_adapt(ubm, read_features_binary(path),
                          relevance=cfg.gmm.relevance, ubm_ref="ubm")
        save_speaker_model(speaker_dir / f"{path.stem}.json", model)
    logger.info("adapt: %d speaker models", len(files))


def _load_dev_models(out: Path) -> tuple[list[str], list]:
    subsets = _read_two_column(_require(out / "corpus" / "speakers.csv", "synth"),
                               ("speaker_id", "subset"))
    dev_ids = sorted(s for s, subset in subsets.items() if subset == "dev")
    speaker_dir = _require(out / "models" / "speakers", "adapt")
    models = [load_speaker_model(_require(speaker_dir / f"{s}.json", "adapt")) for s in dev_ids]
    return dev_ids, models


def run_cluster(cfg: ExperimentConfig, out: Path) -> float:
    """Cluster the dev speaker models into the cohort; returns the cost."""
    dev_ids, models = _load_dev_models(out)
    if cfg.cohort.k > len(models):
        raise ValueError(f"cohort.k = {cfg.cohort.k} exceeds the {len(models)} dev speakers")
    cohort, assignment = kmeans_gmm(
        models, cfg.cohort.k, cfg.cohort.iterations, cfg.cohort.seed,
        restarts=cfg.cohort.restarts,
        printed_form=cfg.cohort.kl_form == "printed",
    )
    (out / "models").mkdir(parents=True, exist_ok=True)
    save_cohort(out / "models" / "cohort.json", cohort,
                cost=assignment.cost, seed=cfg.cohort.seed)
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    _write_two_column(reports / "cluster_assignment.csv", ("speaker_id", "cluster"),
                      [(s, str(int(c))) for s, c in zip(dev_ids, assignment.labels)])
    logger.info("cluster: k=%d cost=%.6f", cohort.size, assignment.cost)
    return assignment.cost


def run_cost_curve(cfg: ExperimentConfig, out: Path) -> list[tuple[int, float]]:
    """Clustering cost for k = 1..max_k over the dev models, as CSV and figure."""
    _, models = _load_dev_models(out)
    k_max = min(cfg.cohort.cost_curve_max_k, len(models))
    if k_max < cfg.cohort.cost_curve_max_k:
        logger.info("cost-curve: clamping max k to the %d dev speakers", k_max)
    curve = cost_curve(
        models, k_max, cfg.cohort.iterations, cfg.cohort.seed,
        restarts=cfg.cohort.restarts,
        printed_form=cfg.cohort.kl_form == "printed",
    )
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    with open(reports / "cost_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "cost"])
        for k, cost in curve:
            writer.writerow([k, _fmt(cost)])
    plots.save_cost_curve(reports / "cost_curve.png",
                          [k for k, _ in curve], [c for _, c in curve])
    logger.info("cost-curve: k up to %d", k_max)
    return curve


def run_score(cfg: ExperimentConfig, out: Path) -> None:
    """Score every same-subset trial against claimed model, UBM, and cohort."""
    ubm = load_gmm(_require(out / "models" / "ubm.json", "train-ubm"))
    cohort = load_cohort(_require(out / "models" / "cohort.json", "cluster"))
    trials = read_trials(_require(out / "corpus" / "trials.csv", "synth"))
    subsets = _read_two_column(_require(out / "corpus" / "speakers.csv", "synth"),
                               ("speaker_id", "subset"))
    owners = _read_two_column(_require(out / "corpus" / "utterances.csv", "synth"),
                              ("utterance_id", "speaker_id"))
    speaker_dir = _require(out / "models" / "speakers", "adapt")
    speakers = {p.stem: load_speaker_model(p) for p in sorted(speaker_dir.glob("*.json"))}

    utt_cache: dict[str, tuple[np.ndarray, float, np.ndarray]] = {}

    def utterance_scores(utt: str):
        if utt not in utt_cache:
            feats = read_features_binary(_require(out / "corpus" / "test" / f"{utt}.cvf", "synth"))
            s_ubm = avg_loglik(ubm, feats)
            s_cohort = np.array([avg_loglik(c, feats) for c in cohort.centroids])
            utt_cache[utt] = (feats, s_ubm, s_cohort)
        return utt_cache[utt]

    rows = []
    for trial in trials:
        owner = owners.get(trial.utterance_id)
        if owner is None:
            raise ParseError(f"trial references unknown utterance {trial.utterance_id!r}",
                             path=out / "corpus" / "trials.csv")
        subset = subsets[trial.claimed_speaker]
        if subsets[owner] != subset:
            continue  # trials never cross the dev/eval speaker split
        if trial.claimed_speaker not in speakers:
            raise MissingInputError(
                f"missing input {speaker_dir / (trial.claimed_speaker + '.json')} "
                "(produce it with 'adapt')"
            )
        feats, s_ubm, s_cohort = utterance_scores(trial.utterance_id)
        s_claimed = avg_loglik(speakers[trial.claimed_speaker].gmm, feats)
        rows.append(ScoreRow(trial.utterance_id, trial.claimed_speaker, trial.label,
                             subset, s_claimed, s_ubm, s_cohort))
    (out / "scores").mkdir(parents=True, exist_ok=True)
    write_score_table(out / "scores" / "scores.csv", rows)
    logger.info("score: %d trials scored (cohort size %d)", len(rows), cohort.size)


def run_features(cfg: ExperimentConfig, out: Path, condition: str | None = None) -> None:
    """Assemble per-trial feature vectors for one condition."""
    condition = condition or cfg.features.condition
    score_rows = read_score_table(_require(out / "scores" / "scores.csv", "score"))
    basis = cfg.features.cohort_score_basis
    table = []
    for r in score_rows:
        sv = apply_score_basis(
            ScoreVector(s_claimed=r.s_claimed, s_ubm=r.s_ubm, s_cohort=r.s_cohort), basis)
        feature = assemble(sv, condition)
        expected = condition_dim(condition, r.s_cohort.shape[0])
        if feature.values.shape[0] != expected:
            raise RuntimeError(
                f"feature dimension {feature.values.shape[0]} != expected {expected}")
        table.append(FeatureTableRow(
            trial=TrialRecord(r.utterance_id, r.claimed_speaker, r.label),
            subset=r.subset, s_claimed=r.s_claimed, values=feature.values))
    (out / "features").mkdir(parents=True, exist_ok=True)
    _write_feature_table(out / "features" / f"features_{condition}.csv", table)
    logger.info("features: condition %s, %d rows", condition, len(table))


def _decider_path(out: Path, condition: str, kind: str) -> Path:
    return out / "models" / f"decider_{condition}_{kind}.json"


def run_train_decider(cfg: ExperimentConfig, out: Path,
                      condition: str | None = None, kind: str | None = None) -> None:
    """Train the decision model on balanced dev trials."""
    condition = condition or cfg.features.condition
    kind = kind or cfg.run.decider
    table = _read_feature_table(
        _require(out / "features" / f"features_{condition}.csv", "features"))
    dev_rows = [(r.trial, r.values, r.s_claimed) for r in table if r.subset == "dev"]
    if not dev_rows:
        raise ValueError("no dev-subset rows in the feature table")
    balanced = imbalance_filter(dev_rows)
    data = LabeledSet(
        features=np.stack([values for _, values, _ in balanced]),
        labels=np.array([trial.is_genuine for trial, _, _ in balanced]),
    )
    if kind == "svm":
        model = train_svm(data, cfg.svm.regularization, cfg.svm.epochs, cfg.svm.seed)
        training = {"kind": "svm", "condition": condition,
                    "regularization": cfg.svm.regularization,
                    "epochs": cfg.svm.epochs, "seed": cfg.svm.seed,
                    "n_rows": data.features.shape[0]}
    elif kind == "mlp":
        model = train_mlp(data, cfg.mlp.epochs, cfg.mlp.learning_rate, cfg.mlp.seed,
                          batch_size=cfg.mlp.batch_size)
        training = {"kind": "mlp", "condition": condition,
                    "epochs": cfg.mlp.epochs, "learning_rate": cfg.mlp.learning_rate,
                    "batch_size": cfg.mlp.batch_size, "seed": cfg.mlp.seed,
                    "n_rows": data.features.shape[0]}
    else:
        raise ValueError(f"unknown decider kind {kind!r}")
    (out / "models").mkdir(parents=True, exist_ok=True)
    save_decider(_decider_path(out, condition, kind), model, training=training)
    logger.info("train-decider: %s on %s, %d balanced dev rows",
                kind, condition, data.features.shape[0])


def _write_eval_report(path: Path, report: EvalReport, condition: str, decider: str) -> None:
    with open(path, "w") as fh:
        json.dump({
            "format": "eval-report",
            "version": FORMAT_VERSION,
            "condition": condition,
            "decider": decider,
            "eer": report.eer,
            "eer_threshold": report.eer_threshold,
            "n_target": report.n_target,
            "n_nontarget": report.n_nontarget,
        }, fh, indent=2)
        fh.write("\n")


def _write_det_csv(path: Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["far", "frr"])
        for far, frr in report.det_points:
            writer.writerow([_fmt(far), _fmt(frr)])


def _baseline_report(out: Path) -> EvalReport:
    """EER of the plain average log-likelihood ratio on the eval trials."""
    rows = [r for r in read_score_table(_require(out / "scores" / "scores.csv", "score"))
            if r.subset == "eval"]
    scores = np.array([r.s_claimed - r.s_ubm for r in rows])
    labels = np.array([r.label == "genuine" for r in rows])
    return compute_eer(scores, labels)


def _emit_rank_histogram(out: Path) -> None:
    rows = [r for r in read_score_table(_require(out / "scores" / "scores.csv", "score"))
            if r.subset == "eval"]
    k = rows[0].s_cohort.shape[0]
    genuine_pos, imposter_pos = [], []
    for r in rows:
        sv = ScoreVector(s_claimed=r.s_claimed, s_ubm=r.s_ubm, s_cohort=r.s_cohort)
        (genuine_pos if r.label == "genuine" else imposter_pos).append(feat_rank_position(sv))
    gen_counts = rank_histogram(genuine_pos, k + 1)
    imp_counts = rank_histogram(imposter_pos, k + 1)
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    with open(reports / "rank_histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "genuine_count", "imposter_count"])
        for i in range(k + 1):
            writer.writerow([i + 1, int(gen_counts[i]), int(imp_counts[i])])
    plots.save_rank_histogram(reports / "rank_histogram.png", gen_counts, imp_counts)


def run_evaluate(cfg: ExperimentConfig, out: Path,
                 condition: str | None = None, kind: str | None = None,
                 ) -> tuple[EvalReport, EvalReport]:
    """Evaluate one trained decider on the eval trials, next to the baseline.

    Also emits the rank-position histogram and, when the speaker models
    are available, the clustering cost curve.
    """
    condition = condition or cfg.features.condition
    kind = kind or cfg.run.decider
    table = _read_feature_table(
        _require(out / "features" / f"features_{condition}.csv", "features"))
    eval_rows = [r for r in table if r.subset == "eval"]
    if not eval_rows:
        raise ValueError("no eval-subset rows in the feature table")
    model = load_decider(_require(_decider_path(out, condition, kind), "train-decider"))
    scores = predict_scores(model, np.stack([r.values for r in eval_rows]))
    labels = np.array([r.trial.is_genuine for r in eval_rows])
    report = compute_eer(scores, labels)

    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    _write_eval_report(reports / f"eval_{condition}_{kind}.json", report, condition, kind)
    _write_det_csv(reports / f"det_{condition}_{kind}.csv", report)
    baseline = _baseline_report(out)
    _write_eval_report(reports / "eval_baseline.json", baseline, "baseline", "llr")
    _write_det_csv(reports / "det_baseline.csv", baseline)
    plots.save_det_curves(
        reports / f"det_{condition}_{kind}.png",
        {"baseline (llr)": baseline.det_points, f"{condition} {kind}": report.det_points},
    )
    plots.save_score_histogram(
        reports / f"score_hist_{condition}_{kind}.png",
        scores[labels], scores[~labels], title=f"{condition} {kind}",
    )
    _emit_rank_histogram(out)
    if not (reports / "cost_curve.csv").exists() and (out / "models" / "speakers").exists():
        run_cost_curve(cfg, out)
    logger.info("evaluate: %s %s eer=%.4f (baseline %.4f)",
                condition, kind, report.eer, baseline.eer)
    return report, baseline


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path) -> None:
    manifest_path = out / "reports" / "run_manifest.csv"
    files = sorted(p for p in out.rglob("*") if p.is_file() and p != manifest_path)
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "sha256"])
        for p in files:
            writer.writerow([p.relative_to(out).as_posix(), _sha256(p)])


def run_all(cfg: ExperimentConfig, out: Path) -> list[dict]:
    """Chain every stage and emit a per-condition summary with the baseline."""
    run_synth(cfg, out)
    run_train_ubm(cfg, out)
    run_adapt(cfg, out)
    run_cluster(cfg, out)
    run_cost_curve(cfg, out)
    run_score(cfg, out)

    kind = cfg.run.decider
    summary = []
    baseline = _baseline_report(out)
    summary.append({"condition": "baseline", "decider": "llr",
                    "eer": baseline.eer, "eer_threshold": baseline.eer_threshold,
                    "n_target": baseline.n_target, "n_nontarget": baseline.n_nontarget})
    for condition in cfg.run.conditions:
        run_features(cfg, out, condition)
        run_train_decider(cfg, out, condition, kind)
        report, _ = run_evaluate(cfg, out, condition, kind)
        summary.append({"condition": condition, "decider": kind,
                        "eer": report.eer, "eer_threshold": report.eer_threshold,
                        "n_target": report.n_target, "n_nontarget": report.n_nontarget})

    reports = out / "reports"
    with open(reports / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "decider", "eer", "eer_threshold",
                         "n_target", "n_nontarget"])
        for row in summary:
            writer.writerow([row["condition"], row["decider"], _fmt(row["eer"]),
                             _fmt(row["eer_threshold"]), row["n_target"], row["n_nontarget"]])
    with open(reports / "resolved_config.ini", "w") as fh:
        fh.write(config_to_text(cfg))
    _write_manifest(out)
    logger.info("run-all: complete, %d summary rows", len(summary))
    return summary
