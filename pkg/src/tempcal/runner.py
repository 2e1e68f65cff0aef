"""One level above the training loop: run a config end to end and lay the
standard artifact set down in the output directory.

A completed run directory holds: checkpoint.{manifest,blob}, report.csv,
diagnostics.csv, reliability_preT.{csv,svg,png}, reliability_postT.{csv,svg,png},
scale_dynamics.png, norm_confidence.png, and summary.txt.
"""

import os

from . import checkpoint as ckpt_io
from . import figures, reports
from .train import diagnose, evaluate, resolve_datasets, train


def train_run(run_cfg):
    """Train, evaluate on the test set, and write every artifact.

    Returns (checkpoint, diagnostics, report) for programmatic callers.
    """
    outdir = run_cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    ckpt, diags = train(run_cfg)
    ckpt_io.save(ckpt, os.path.join(outdir, "checkpoint"))
    reports.write_diagnostics_csv(diags, os.path.join(outdir, "diagnostics.csv"))
    figures.save_scale_dynamics_figure(diags, os.path.join(outdir, "scale_dynamics.png"))
    _, test_ds = resolve_datasets(run_cfg)
    report = None
    if test_ds is not None and test_ds.n:
        report = write_eval_outputs(ckpt, test_ds, outdir, diags=diags)
    return ckpt, diags, report


def write_eval_outputs(ckpt, dataset, outdir, m=15, diags=None):
    """Evaluate a checkpoint on a dataset and write the report artifacts."""
    os.makedirs(outdir, exist_ok=True)
    report, pre_batch, post_batch = evaluate(ckpt, dataset, m)
    reports.write_report_csv(report, os.path.join(outdir, "report.csv"))
    for tag, batch in (("preT", pre_batch), ("postT", post_batch)):
        bins, summary = reports.emit_reliability(
            batch, m,
            os.path.join(outdir, f"reliability_{tag}.csv"),
            os.path.join(outdir, f"reliability_{tag}.svg"),
        )
        figures.save_reliability_figure(
            bins, summary, os.path.join(outdir, f"reliability_{tag}.png"),
            title=f"Reliability ({'before' if tag == 'preT' else 'after'} temperature scaling)",
        )
    table = diagnose(ckpt, dataset)
    figures.save_norm_confidence_figure(table, os.path.join(outdir, "norm_confidence.png"))
    reports.write_summary(os.path.join(outdir, "summary.txt"), report, diags=diags,
                          header_lines=(f"run outputs in {outdir}",))
    return report


def load_checkpoint(base_or_dir):
    """Accept either a checkpoint base path or a run directory."""
    base = base_or_dir
    if os.path.isdir(base_or_dir):
        base = os.path.join(base_or_dir, "checkpoint")
    return ckpt_io.load(base)
