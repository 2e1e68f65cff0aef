"""Command-line entry point.

Verbs: train, eval, diagnose, fit-temp, diagram, selftest. Every RunConfig
key is reachable with ``--set section.key=value`` (repeatable); ``--config``
points at a key-value file whose entries the flags override.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import os
import sys

from . import errors, reports, runner, selftest
from .config import RunConfig, apply_overrides, load_config
from .temperature import fit_temperature
from .train import diagnose, model_from_checkpoint, predict_dataset, resolve_datasets
from . import data as datamod

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (
    errors.DataError, errors.BadMagic, errors.CountMismatch, errors.TruncatedFile,
    errors.TooSmall, errors.ZeroStd, errors.EmptyBatch, errors.MissingProbs,
    errors.DegenerateLabels, errors.ManifestMismatch, errors.BlobSizeMismatch,
    FileNotFoundError, IsADirectoryError, PermissionError,
)


def build_parser():
    parser = argparse.ArgumentParser(prog="tempcal",
                                     description="Train, calibrate, and diagnose a small vision transformer "
                                                 "with a per-sample temperature head.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--output-dir", help="shorthand for --set output_dir=...")
        p.add_argument("--seed", type=int, help="shorthand for --set seed=...")

    p_train = sub.add_parser("train", help="train a model and write the run artifacts")
    add_config_args(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on its test set")
    p_eval.add_argument("checkpoint", help="checkpoint base path or run directory")
    p_eval.add_argument("--output-dir", required=True)
    p_eval.add_argument("--bins", type=int, default=15)

    p_diag = sub.add_parser("diagnose", help="per-sample difficulty and scale read-outs")
    p_diag.add_argument("checkpoint")
    p_diag.add_argument("--output-dir", required=True)

    p_fit = sub.add_parser("fit-temp", help="fit the global temperature on the validation split")
    p_fit.add_argument("checkpoint")
    p_fit.add_argument("--criterion", choices=("ece", "nll"), default="ece")
    p_fit.add_argument("--bins", type=int, default=15)

    p_diagram = sub.add_parser("diagram", help="emit reliability diagram files for a checkpoint")
    p_diagram.add_argument("checkpoint")
    p_diagram.add_argument("--output-dir", required=True)
    p_diagram.add_argument("--bins", type=int, default=15)

    sub.add_parser("selftest", help="run the built-in oracle and gradient checks")
    return parser


def _config_from_args(args):
    if args.config:
        cfg = load_config(args.config, args.set)
    else:
        cfg = apply_overrides(RunConfig(), args.set)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def _cmd_train(args):
    cfg = _config_from_args(args)
    ckpt, diags, report = runner.train_run(cfg)
    print(f"trained {cfg.total_epochs} epochs; outputs in {cfg.output_dir}")
    if report is not None:
        print(f"test accuracy {report.pre.accuracy:.4f}  ECE pre {report.pre.ece:.4f}  "
              f"post {report.post.ece:.4f}  (T* = {report.t_star:g})")
    return EXIT_OK


def _cmd_eval(args):
    ckpt = runner.load_checkpoint(args.checkpoint)
    run_cfg, _ = model_from_checkpoint(ckpt)
    _, test_ds = resolve_datasets(run_cfg)
    if test_ds is None or not test_ds.n:
        raise errors.DataError("checkpoint's config declares no test set")
    report = runner.write_eval_outputs(ckpt, test_ds, args.output_dir, m=args.bins)
    print(f"accuracy {report.pre.accuracy:.4f}  ECE pre {report.pre.ece:.4f}  "
          f"post {report.post.ece:.4f}  (T* = {report.t_star:g}); outputs in {args.output_dir}")
    return EXIT_OK


def _cmd_diagnose(args):
    ckpt = runner.load_checkpoint(args.checkpoint)
    run_cfg, _ = model_from_checkpoint(ckpt)
    _, test_ds = resolve_datasets(run_cfg)
    if test_ds is None or not test_ds.n:
        raise errors.DataError("checkpoint's config declares no test set")
    table = diagnose(ckpt, test_ds)
    os.makedirs(args.output_dir, exist_ok=True)
    reports.write_diagnose_csvs(table,
                                os.path.join(args.output_dir, "diagnose_samples.csv"),
                                os.path.join(args.output_dir, "diagnose_curve.csv"))
    from . import figures
    figures.save_norm_confidence_figure(table, os.path.join(args.output_dir, "norm_confidence.png"))
    s = table.scale_summary
    print(f"pearson(cls_norm, confidence) {table.pearson:.4f}   spearman {table.spearman:.4f}")
    print(f"scale: mean {s['mean']:.4f}  cv {s['cv']:.4f}  min {s['min']:.4f}  max {s['max']:.4f}")
    print(f"wrote diagnose_samples.csv / diagnose_curve.csv / norm_confidence.png in {args.output_dir}")
    return EXIT_OK


def _cmd_fit_temp(args):
    ckpt = runner.load_checkpoint(args.checkpoint)
    run_cfg, model = model_from_checkpoint(ckpt)
    train_full, _ = resolve_datasets(run_cfg)
    _, val_ds = datamod.split(train_full, datamod.SplitSpec(run_cfg.dataset.val_fraction, run_cfg.seed))
    pred = predict_dataset(model, val_ds)
    t_star, score = fit_temperature(pred["calibrated_logits"], pred["labels"],
                                    m=args.bins, criterion=args.criterion)
    print(f"T* = {t_star:g}   validation {args.criterion} = {score:.6f}   "
          f"({val_ds.n} validation samples)")
    return EXIT_OK


def _cmd_diagram(args):
    ckpt = runner.load_checkpoint(args.checkpoint)
    run_cfg, _ = model_from_checkpoint(ckpt)
    _, test_ds = resolve_datasets(run_cfg)
    if test_ds is None or not test_ds.n:
        raise errors.DataError("checkpoint's config declares no test set")
    runner.write_eval_outputs(ckpt, test_ds, args.output_dir, m=args.bins)
    print(f"reliability diagrams written to {args.output_dir}")
    return EXIT_OK


def _cmd_selftest(_args):
    failures = selftest.run_all()
    return EXIT_OK if failures == 0 else 1


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "diagnose": _cmd_diagnose,
    "fit-temp": _cmd_fit_temp,
    "diagram": _cmd_diagram,
    "selftest": _cmd_selftest,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except errors.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (errors.NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
