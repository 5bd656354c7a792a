"""End-to-end experiment: encode -> estimate -> refute -> smooth -> train -> evaluate."""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from ._optim import TrainConfig
from .classifier import SoftLabelClassifier
from .config import apply_overrides, read_config_file
from .dataset import BINARY, CONTINUOUS, OutcomeGuard, load_dataset
from .encoder import INSTRUMENT_REPRESENTATION, train_encoder
from .estimation import ESTIMATORS, TOL_WEAK, CausalQuery, ate_table, estimate, exogeneity_check
from .exceptions import CausalSmoothError, ConfigurationError, PipelineStageError, ReportIOError
from .metrics import confusion_metrics, dispersion
from .refutation import PLACEBO_MODES, bootstrap_refute, format_refutation_table, placebo_refute, subset_refute
from .scm import SCMConfig, generate_dataset, true_ate_with_se
from .smoothing import SmoothingConfig, build_targets

MODES = {"hard": "none", "label": "label", "causal": "causal"}
SPLIT_STREAM = 11
NON_INFERIORITY_MARGIN = 0.01
VOLATILE_KEYS = ("timestamps",)


@dataclass
class PipelineConfig:
    data_source: dict
    encoder: TrainConfig
    causal: dict
    refutation: dict
    smoothing: dict
    classifier: TrainConfig
    splits: dict
    master_seed: int = 42
    label_threshold: float = 0.0
    sweep: dict = field(default_factory=lambda: {"n_seeds": 10, "n": 20000})

    @property
    def queries(self):
        return [CausalQuery.from_dict(q) for q in self.causal["queries"]]

    def smoothing_config(self, mode):
        s = self.smoothing
        return SmoothingConfig(mode=MODES[mode], n_classes=s["n_classes"], epsilon=s["epsilon"],
                               omega=s["omega"], epsilon_max=s["epsilon_max"])

    def to_dict(self):
        return {
            "master_seed": self.master_seed,
            "data_source": copy.deepcopy(self.data_source),
            "encoder": self.encoder.to_dict(),
            "causal": copy.deepcopy(self.causal),
            "refutation": dict(self.refutation),
            "smoothing": copy.deepcopy(self.smoothing),
            "classifier": self.classifier.to_dict(),
            "splits": dict(self.splits),
            "label_threshold": self.label_threshold,
            "sweep": dict(self.sweep),
        }

    @classmethod
    def from_dict(cls, values):
        values = copy.deepcopy(values)
        known = {"master_seed", "data_source", "encoder", "causal", "refutation", "smoothing", "classifier",
                 "splits", "label_threshold", "sweep"}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")

        data_source = values.get("data_source", {"kind": "synthetic"})
        kind = data_source.get("kind", "synthetic")
        if kind == "synthetic":
            scm = SCMConfig.from_dict(data_source.get("scm", {}))
            n = int(data_source.get("n", 100_000))
            if n < 10:
                raise ConfigurationError("synthetic data_source.n must be >= 10")
            data_source = {"kind": "synthetic", "scm": scm.to_dict(), "n": n, "seed": data_source.get("seed")}
        elif kind == "ingest":
            if "path" not in data_source:
                raise ConfigurationError("ingest data_source needs a 'path'")
            data_source = {"kind": "ingest", "path": str(data_source["path"])}
        else:
            raise ConfigurationError(f"data_source.kind must be 'synthetic' or 'ingest', got {kind!r}")

        encoder = TrainConfig.from_dict({"epochs": 100, "learning_rate": 5.0, "init_scale": 0.01,
                                         **values.get("encoder", {})})
        classifier = TrainConfig.from_dict({"epochs": 150, "learning_rate": 1.0, **values.get("classifier", {})})

        causal = {"estimator": "two_stage_ls", "tol_weak": TOL_WEAK, "queries": [{"treatment_index": 0}],
                  **values.get("causal", {})}
        if causal["estimator"] not in ESTIMATORS:
            raise ConfigurationError(f"causal.estimator must be one of {ESTIMATORS}")
        causal["queries"] = [CausalQuery.from_dict(q).to_dict() for q in causal["queries"]]
        if not causal["queries"]:
            raise ConfigurationError("causal.queries is empty")

        refutation = {"n_reps": 100, "fraction": 0.8, "seed": None, "placebo_mode": "treatment",
                      "placebo_tol": None, "n_jobs": 1, **values.get("refutation", {})}
        if int(refutation["n_reps"]) < 2:
            raise ConfigurationError("refutation.n_reps must be >= 2")
        if not 0.0 < float(refutation["fraction"]) <= 1.0:
            raise ConfigurationError("refutation.fraction must be in (0, 1]")
        if refutation["placebo_mode"] not in PLACEBO_MODES:
            raise ConfigurationError(f"refutation.placebo_mode must be one of {PLACEBO_MODES}")

        smoothing = {"modes": list(MODES), "epsilon": 0.1, "omega": 0.1, "epsilon_max": 0.5, "n_classes": 2,
                     **values.get("smoothing", {})}
        bad = [m for m in smoothing["modes"] if m not in MODES]
        if bad or not smoothing["modes"]:
            raise ConfigurationError(f"smoothing.modes must be a non-empty subset of {list(MODES)}")
        SmoothingConfig("causal", smoothing["n_classes"], smoothing["epsilon"], smoothing["omega"],
                        smoothing["epsilon_max"])
        if smoothing["n_classes"] != 2:
            raise ConfigurationError("the judgment task is binary: smoothing.n_classes must be 2")

        splits = {"train": 0.7, "validation": 0.1, "test": 0.2, **values.get("splits", {})}
        fracs = [splits[k] for k in ("train", "validation", "test")]
        if any(not isinstance(f, (int, float)) or f <= 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must be positive and sum to 1, got {splits}")

        sweep = {"n_seeds": 10, "n": 20000, **values.get("sweep", {})}
        if int(sweep["n_seeds"]) < 0:
            raise ConfigurationError("sweep.n_seeds must be >= 0")

        return cls(data_source=data_source, encoder=encoder, causal=causal, refutation=refutation,
                   smoothing=smoothing, classifier=classifier, splits=splits,
                   master_seed=int(values.get("master_seed", 42)),
                   label_threshold=float(values.get("label_threshold", 0.0)), sweep=sweep)


def fixture_path(name):
    """Path of a bundled fixture config, by file name or stem."""
    name = name if name.endswith((".toml", ".json")) else f"{name}.toml"
    path = resources.files("causalsmooth") / "fixtures" / Path(name).name
    if not path.is_file():
        raise ConfigurationError(f"no bundled fixture named {name!r}")
    return Path(str(path))


def load_pipeline_config(path=None, overrides=(), seed=None):
    """Read a config file (a path or a bundled fixture name) and apply overrides."""
    if path is None:
        path = fixture_path("linear_confounded")
    elif not Path(path).exists():
        path = fixture_path(str(path))
    values = apply_overrides(read_config_file(path), overrides)
    if seed is not None:
        values["master_seed"] = int(seed)
    return PipelineConfig.from_dict(values)


@dataclass
class ExperimentReport:
    """JSON-serialisable sections plus in-memory artifacts (models, representations)."""

    sections: dict
    artifacts: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, key):
        return self.sections[key]

    def to_dict(self):
        return self.sections

    def to_json(self, stable=False):
        payload = {k: v for k, v in self.sections.items() if not (stable and k in VOLATILE_KEYS)}
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)


def split_indices(n, splits, master_seed):
    """Seeded shuffle of ``range(n)`` cut into train / validation / test index arrays."""
    order = np.random.default_rng([int(master_seed), SPLIT_STREAM]).permutation(n)
    n_train = int(math.floor(splits["train"] * n))
    n_val = int(math.floor(splits["validation"] * n))
    if n_train < 2 or n - n_train - n_val < 2:
        raise ConfigurationError(f"splits {splits} leave too few rows out of {n}")
    return np.sort(order[:n_train]), np.sort(order[n_train:n_train + n_val]), np.sort(order[n_train + n_val:])


def ljp_labels(outcome, outcome_kind, threshold):
    """Binary judgment labels: the outcome itself if binary, else ``outcome > threshold``."""
    outcome = np.asarray(outcome, dtype=float)
    if outcome_kind == BINARY:
        return outcome.astype(int)
    return (outcome > threshold).astype(int)


def _obtain_data(config):
    source = config.data_source
    if source["kind"] == "synthetic":
        seed = config.master_seed if source.get("seed") is None else int(source["seed"])
        return generate_dataset(SCMConfig.from_dict(source["scm"]), source["n"], seed)
    return load_dataset(source["path"])


class _Stages:
    """Runs the pipeline stages, tracking which one is active for error reports."""

    def __init__(self, config, sections):
        self.config = config
        self.sections = sections
        self.current = None

    def __call__(self, name):
        self.current = name
        return self

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.sections["timestamps"]["stage_seconds"][self.current] = round(time.perf_counter() - self._start, 4)
        if exc is not None and isinstance(exc, CausalSmoothError) and not isinstance(exc, PipelineStageError):
            self.sections["failed_stage"] = self.current
            raise PipelineStageError(self.current, exc, fragment=self.sections) from exc
        return False


def _core(config, data, sections, stage, refute=True):
    """Stages 2-7 on an obtained dataset; fills ``sections`` and returns artifacts."""
    artifacts = {}
    with stage("split"):
        train_idx, val_idx, test_idx = split_indices(len(data), config.splits, config.master_seed)
        train, test = data.take(train_idx), data.take(test_idx)
        sections["splits"] = {"train": int(train_idx.size), "validation": int(val_idx.size),
                              "test": int(test_idx.size)}

    guard = OutcomeGuard(train, stage="encoder")
    with stage("encoder"):
        if data.law_labels.shape[1] == 0:
            sections["encoder"] = {"skipped": "dataset has no law_labels; using stored instrument columns"}
        else:
            enc_cfg = TrainConfig.from_dict({**config.encoder.to_dict(), "seed": config.master_seed})
            encoder = train_encoder(guard, enc_cfg)
            train = train.replace(instrument=encoder.transform(train.features))
            test = test.replace(instrument=encoder.transform(test.features))
            artifacts["encoder"] = encoder
            sections["encoder"] = {
                "instrument_representation": INSTRUMENT_REPRESENTATION,
                "n_articles": int(encoder.n_articles_),
                "final_loss": encoder.loss_curve_[-1],
                "final_learning_rate": encoder.final_learning_rate_,
                "test_subset_accuracy": encoder.subset_accuracy(test.features, test.law_labels),
            }

    with stage("estimation"):
        view = OutcomeGuard(train, stage="estimation", locked=False)
        causal = config.causal
        queries = config.queries
        estimates = [estimate(view, q, causal["estimator"], causal["tol_weak"]) for q in queries]
        sections["causal_estimates"] = [e.to_dict() for e in estimates]

        oracle = []
        if config.data_source["kind"] == "synthetic":
            scm = SCMConfig.from_dict(config.data_source["scm"])
            for est in estimates:
                a, b = est.contrast
                truth, se = true_ate_with_se(scm, est.treatment_index, a, b)
                oracle.append({"treatment_index": est.treatment_index, "contrast": [a, b], "true_ate": truth,
                               "monte_carlo_se": se, "abs_error": abs(est.ate - truth)})
        sections["oracle"] = oracle or {"skipped": "ingested data has no ground truth"}

        cols = queries[0].resolve_instruments(train)
        iv = [e for e in estimates if e.estimator != "naive"]
        if iv and "intercept" in iv[0].diagnostics:
            sections["exogeneity_check"] = exogeneity_check(view, cols, iv, iv[0].diagnostics["intercept"])
        elif iv:
            intercept = float(view.outcome.mean() - sum(
                e.effect_per_unit * train.treatments[:, e.treatment_index].mean() for e in iv))
            sections["exogeneity_check"] = exogeneity_check(view, cols, iv, intercept)
        else:
            sections["exogeneity_check"] = {"skipped": "naive estimator uses no instrument"}

        train_labels = ljp_labels(view.outcome, data.outcome_kind, config.label_threshold)
        test_labels = ljp_labels(test.outcome, data.outcome_kind, config.label_threshold)
        sections["outcome_access_log"] = guard.access_log + view.access_log
        label_view = train.replace(outcome=train_labels.astype(float))
        table = ate_table(label_view, queries, causal["estimator"], causal["tol_weak"])
        sections["ate_table"] = {**table.to_dict(), "outcome_scale": "ljp_label"}
        artifacts["ate_table"] = table
        artifacts["train"], artifacts["test"] = train, test

    if refute:
        with stage("refutation"):
            ref = config.refutation
            seed = config.master_seed if ref["seed"] is None else int(ref["seed"])
            reports = []
            for query in queries:
                args = dict(estimator=causal["estimator"], n_reps=int(ref["n_reps"]), seed=seed,
                            tol_weak=causal["tol_weak"], n_jobs=ref["n_jobs"])
                reports.append({
                    "treatment_index": query.treatment_index,
                    "reports": [
                        bootstrap_refute(train, query, **args).to_dict(),
                        placebo_refute(train, query, mode=ref["placebo_mode"], placebo_tol=ref["placebo_tol"],
                                       **args).to_dict(),
                        subset_refute(train, query, fraction=float(ref["fraction"]), **args).to_dict(),
                    ],
                })
            sections["refutations"] = reports

    with stage("training"):
        results = {}
        representations = {}
        for mode in config.smoothing["modes"]:
            targets, eps, info = build_targets(train_labels, config.smoothing_config(mode), train.treatments, table)
            clf_cfg = config.classifier
            model = SoftLabelClassifier(architecture=clf_cfg.architecture, hidden_width=clf_cfg.hidden_width,
                                        epochs=clf_cfg.epochs, learning_rate=clf_cfg.learning_rate,
                                        seed=config.master_seed, init_scale=clf_cfg.init_scale,
                                        threshold=clf_cfg.threshold).fit(train.features, targets)
            artifacts[f"classifier_{mode}"] = model
            results[mode] = {"smoothing": info, "loss_curve": model.loss_curve_,
                             "final_loss": model.loss_curve_[-1]}
            representations[mode] = model.hidden_representation(test.features)
            results[mode]["_model"] = model

    with stage("evaluation"):
        for mode, res in results.items():
            model = res.pop("_model")
            res["metrics"] = confusion_metrics(model.predict(test.features), test_labels).to_dict()
            try:
                res["dispersion"] = dispersion(representations[mode], test_labels).to_dict()
            except CausalSmoothError as exc:
                res["dispersion"] = {"skipped": str(exc)}
        sections["training"] = results
        artifacts["representations"] = representations
        artifacts["test_labels"] = test_labels
    return artifacts


def _sweep(config):
    n_seeds = int(config.sweep["n_seeds"])
    if n_seeds == 0:
        return {"skipped": "sweep.n_seeds = 0"}
    modes = config.smoothing["modes"]
    if "hard" not in modes or "causal" not in modes:
        return {"skipped": "needs both the hard and causal modes"}
    per_seed = []
    for i in range(n_seeds):
        values = config.to_dict()
        values["master_seed"] = config.master_seed + i
        values["sweep"] = {"n_seeds": 0}
        if values["data_source"]["kind"] == "synthetic":
            values["data_source"]["n"] = int(config.sweep.get("n", values["data_source"]["n"]))
            values["data_source"]["seed"] = None
        sub = PipelineConfig.from_dict(values)
        sections = {"timestamps": {"stage_seconds": {}}}
        _core(sub, _obtain_data(sub), sections, _Stages(sub, sections), refute=False)
        f1 = {m: sections["training"][m]["metrics"]["f1"] for m in modes}
        per_seed.append({"master_seed": sub.master_seed, "f1": f1, "delta_causal_minus_hard": f1["causal"] - f1["hard"]})
    mean_f1 = {m: float(np.mean([r["f1"][m] for r in per_seed])) for m in modes}
    return {
        "n_seeds": n_seeds,
        "n": config.sweep.get("n"),
        "per_seed": per_seed,
        "mean_f1": mean_f1,
        "mean_delta_causal_minus_hard": mean_f1["causal"] - mean_f1["hard"],
        "margin": NON_INFERIORITY_MARGIN,
        "non_inferior": bool(mean_f1["causal"] >= mean_f1["hard"] - NON_INFERIORITY_MARGIN),
    }


def run_experiment(config):
    """Run every stage for ``config`` and return an :class:`ExperimentReport`.

    Deterministic for a fixed config: only the ``timestamps`` section varies
    between runs. A failing stage raises :class:`PipelineStageError` carrying
    the sections completed so far.
    """
    if not isinstance(config, PipelineConfig):
        config = PipelineConfig.from_dict(config)
    sections = {
        "config_echo": config.to_dict(),
        "seed": config.master_seed,
        "timestamps": {"started": datetime.now(timezone.utc).isoformat(), "stage_seconds": {}},
    }
    stage = _Stages(config, sections)
    with stage("data"):
        data = _obtain_data(config)
        sections["dataset"] = {"n": len(data), "schema": {k: list(v) for k, v in data.schema.items()},
                               "provenance": data.provenance, "treatment_kind": data.treatment_kind,
                               "outcome_kind": data.outcome_kind}
    artifacts = _core(config, data, sections, stage)
    with stage("sweep"):
        sections["non_inferiority"] = _sweep(config)
    sections["timestamps"]["finished"] = datetime.now(timezone.utc).isoformat()
    return ExperimentReport(sections, artifacts)


def _pct(x):
    return f"{100 * x:6.2f}"


def render_text(sections):
    """Human-readable summary: the metric grid per smoothing mode and the refutation table."""
    lines = [f"master seed: {sections.get('seed')}"]
    for est, orc in zip(sections.get("causal_estimates", []),
                        sections["oracle"] if isinstance(sections.get("oracle"), list) else []):
        lines.append(
            f"treatment {est['treatment_index']}: {est['estimator']} ATE{tuple(est['contrast'])} = "
            f"{est['ate']:.4f} (se {est['std_error']:.4f}); oracle {orc['true_ate']:.4f}"
        )
    exo = sections.get("exogeneity_check", {})
    if "max_abs_correlation" in exo:
        flag = "FLAGGED" if exo["flagged"] else "ok"
        lines.append(f"exogeneity: max |corr(instrument, residual)| = {exo['max_abs_correlation']:.4f} ({flag})")

    training = sections.get("training", {})
    if training:
        lines += ["", f"{'mode':<8} {'P':>7} {'R':>7} {'F1':>7} {'Acc':>7}"]
        for mode, res in training.items():
            m = res["metrics"]
            lines.append(f"{mode:<8} {_pct(m['precision'])} {_pct(m['recall'])} {_pct(m['f1'])} {_pct(m['accuracy'])}")

    from .refutation import RefutationReport

    for block in sections.get("refutations", []):
        lines += ["", f"refutation, treatment {block['treatment_index']}"]
        lines.append(format_refutation_table([RefutationReport.from_dict(r) for r in block["reports"]]))

    sweep = sections.get("non_inferiority", {})
    if "mean_f1" in sweep:
        verdict = "pass" if sweep["non_inferior"] else "fail"
        lines += ["", f"non-inferiority over {sweep['n_seeds']} seeds: mean F1 hard {sweep['mean_f1']['hard']:.4f}, "
                      f"causal {sweep['mean_f1']['causal']:.4f} (delta {sweep['mean_delta_causal_minus_hard']:+.4f}, "
                      f"margin {sweep['margin']}) -> {verdict}"]
    if "failed_stage" in sections:
        lines += ["", f"FAILED at stage: {sections['failed_stage']}"]
    return "\n".join(lines) + "\n"


def emit_report(report, path, format="json"):
    """Write ``report`` as JSON or as the text summary."""
    sections = report.to_dict() if isinstance(report, ExperimentReport) else report
    if format == "json":
        text = json.dumps(sections, indent=2, sort_keys=True, allow_nan=False) + "\n"
    elif format == "text_summary":
        text = render_text(sections)
    else:
        raise ConfigurationError(f"unknown report format {format!r}")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc


def load_report(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ReportIOError(f"cannot read report {path}: {exc}") from exc


def export_artifacts(report, directory):
    """Write loss curves and test-split representations as CSV files."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        training = report.sections["training"]
        modes = list(training)
        with open(directory / "loss_curves.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", *modes])
            for epoch, row in enumerate(zip(*(training[m]["loss_curve"] for m in modes)), start=1):
                writer.writerow([epoch, *(repr(v) for v in row)])
        labels = report.artifacts["test_labels"]
        for mode, reps in report.artifacts["representations"].items():
            with open(directory / f"representations_{mode}.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["label", *(f"h{i}" for i in range(reps.shape[1]))])
                for label, row in zip(labels, reps):
                    writer.writerow([int(label), *(repr(float(v)) for v in row)])
    except OSError as exc:
        raise ReportIOError(f"cannot export artifacts to {directory}: {exc}") from exc
