"""Command-line entry point: ``causalsmooth <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from ._optim import TrainConfig
from .config import apply_overrides, read_config_file
from .dataset import load_dataset, save_dataset
from .encoder import train_encoder, with_instruments
from .estimation import ESTIMATORS, TOL_WEAK, CausalQuery, ate_table, estimate
from .exceptions import CausalSmoothError, PipelineStageError, ReportIOError
from .pipeline import emit_report, export_artifacts, load_pipeline_config, load_report, render_text, run_experiment
from .refutation import (
    PLACEBO_MODES,
    RefutationReport,
    bootstrap_refute,
    format_refutation_table,
    placebo_refute,
    subset_refute,
)
from .scm import SCMConfig, generate_dataset


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write {out}: {exc}") from exc


def _dump(obj, out):
    _write(json.dumps(obj, indent=2, sort_keys=True) + "\n", out)


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _query(args):
    return CausalQuery(
        treatment_index=args.treatment,
        instrument_columns=args.instruments,
        contrast=tuple(args.contrast),
        instrument_values=tuple(args.instrument_values) if args.instrument_values else None,
        instrument_split=args.instrument_split,
    )


def cmd_synth(args):
    values = {}
    if args.config:
        values = read_config_file(args.config)
        values = values.get("scm", values.get("data_source", {}).get("scm", values))
    config = SCMConfig.from_dict(apply_overrides(dict(values), args.set))
    data = generate_dataset(config, args.n, args.seed)
    save_dataset(data, args.out)
    print(f"wrote {len(data)} records to {args.out}", file=sys.stderr)


def cmd_estimate(args):
    data = load_dataset(args.data)
    query = _query(args)
    if args.table:
        _dump(ate_table(data, [query], args.estimator, args.tol_weak).to_dict(), args.out)
    else:
        _dump(estimate(data, query, args.estimator, args.tol_weak).to_dict(), args.out)


def cmd_refute(args):
    data = load_dataset(args.data)
    query = _query(args)
    common = dict(estimator=args.estimator, n_reps=args.n_reps, seed=args.seed, tol_weak=args.tol_weak,
                  n_jobs=args.n_jobs)
    reports = []
    for method in args.methods:
        if method == "bootstrap":
            reports.append(bootstrap_refute(data, query, **common))
        elif method == "placebo":
            reports.append(placebo_refute(data, query, mode=args.placebo_mode, **common))
        else:
            reports.append(subset_refute(data, query, fraction=args.fraction, **common))
    if args.format == "text":
        _write(format_refutation_table(reports) + "\n", args.out)
    else:
        _dump([r.to_dict() for r in reports], args.out)


def cmd_train_encoder(args):
    data = load_dataset(args.data)
    config = TrainConfig(epochs=args.epochs, learning_rate=args.learning_rate, seed=args.seed,
                         init_scale=args.init_scale)
    model = train_encoder(data, config)
    model.save(args.out)
    if args.instrumented:
        save_dataset(with_instruments(data, model), args.instrumented)
    print(f"final loss {model.loss_curve_[-1]:.6f}; "
          f"subset accuracy {model.subset_accuracy(data.features, data.law_labels):.4f}", file=sys.stderr)


def cmd_run(args):
    config = load_pipeline_config(args.config, args.set, args.seed)
    try:
        report = run_experiment(config)
    except PipelineStageError as exc:
        if args.out:
            emit_report(exc.fragment, args.out)
        raise
    if args.out:
        emit_report(report, args.out)
    if args.summary:
        emit_report(report, args.summary, format="text_summary")
    if args.export_dir:
        export_artifacts(report, args.export_dir)
    sys.stdout.write(render_text(report.sections))


def cmd_report(args):
    sections = load_report(args.report)
    if args.format == "json":
        _dump(sections, args.out)
    else:
        _write(render_text(sections), args.out)


def _add_query_args(p):
    p.add_argument("--data", required=True, help="JSON-Lines dataset")
    p.add_argument("--estimator", choices=ESTIMATORS, default="two_stage_ls")
    p.add_argument("--treatment", type=int, default=0, help="treatment column index")
    p.add_argument("--instruments", type=_int_list, default=None, help="comma-separated instrument columns")
    p.add_argument("--contrast", type=float, nargs=2, default=(1.0, 0.0), metavar=("A", "B"))
    p.add_argument("--instrument-values", type=float, nargs=2, default=None, metavar=("ZA", "ZB"))
    p.add_argument("--instrument-split", type=float, default=None, help="Wald stratum threshold")
    p.add_argument("--tol-weak", type=float, default=TOL_WEAK)
    p.add_argument("--out", default=None, help="output file (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="causalsmooth", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a dataset from the synthetic SCM")
    p.add_argument("--config", help="TOML/JSON SCM config (an [scm] table or a full pipeline config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="destination JSON-Lines file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate an ATE (or an ATE table) from a dataset")
    _add_query_args(p)
    p.add_argument("--table", action="store_true", help="emit the ATE(t, 0) table instead")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("refute", help="run bootstrap / placebo / subset refutations")
    _add_query_args(p)
    p.add_argument("--methods", nargs="+", choices=("bootstrap", "placebo", "subset"),
                   default=["bootstrap", "placebo", "subset"])
    p.add_argument("--n-reps", type=int, default=100)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--placebo-mode", choices=PLACEBO_MODES, default="treatment")
    p.add_argument("--n-jobs", type=int, default=None)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_refute)

    p = sub.add_parser("train-encoder", help="fit the law-article encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=5.0)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--instrumented", help="also write the dataset with encoder instruments here")
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("run", help="run the full experiment")
    p.add_argument("--config", default=None, help="config path or bundled fixture name (default linear_confounded)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--summary", help="text summary path")
    p.add_argument("--export-dir", help="directory for loss-curve and representation CSVs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a saved JSON report")
    p.add_argument("report")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CausalSmoothError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
