"""Delimited outputs and the hand-drawn reliability diagram.

CSV files use shortest-round-trip float formatting (``repr``), so a fixed
input yields a byte-identical file. The SVG is written directly (rects and
lines in a 640x480 viewBox) with fixed-precision coordinates, making it a
deterministic byte stream as well; richer PNG figures live in
:mod:`tempcal.figures`.
"""

from dataclasses import fields

from .metrics import BinStats, reliability_table

REPORT_HEADER = "metric,phase,value"
RELIABILITY_HEADER = "bin_lo,bin_hi,count,acc,conf,gap"
DIAGNOSTICS_HEADER = "epoch,mean_s,cv_s,mean_cls_norm,pearson,spearman,train_loss,val_ece"

_METRIC_FIELDS = ("accuracy", "mean_confidence", "ece", "mce", "ada_ece",
                  "classwise_ece", "smece", "auroc", "hcfp_count", "hcfp_per_1000")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def report_rows(report):
    """MetricReport -> (metric, phase, value) rows."""
    rows = []
    for name in _METRIC_FIELDS:
        rows.append((name, "pre_T", getattr(report.pre, name)))
        rows.append((name, "post_T", getattr(report.post, name)))
    rows.append(("t_star", "fit", report.t_star))
    rows.append(("val_ece_at_t_star", "fit", report.val_ece_at_t_star))
    rows.append(("samples", "meta", report.samples))
    rows.append(("bins", "meta", report.bins))
    return rows


def write_report_csv(report, path):
    lines = [REPORT_HEADER]
    lines += [f"{m},{p},{_fmt(v)}" for m, p, v in report_rows(report)]
    _write_text(path, lines)


def write_diagnostics_csv(diags, path):
    lines = [DIAGNOSTICS_HEADER]
    for d in diags:
        lines.append(",".join(_fmt(getattr(d, f.name)) for f in fields(d)))
    _write_text(path, lines)


def reliability_csv_lines(bins):
    lines = [RELIABILITY_HEADER]
    for b in bins:
        lines.append(",".join([_fmt(b.lower), _fmt(b.upper), str(b.count),
                               _fmt(b.acc), _fmt(b.conf), _fmt(b.gap)]))
    return lines


def read_reliability_csv(path):
    """Parse a reliability CSV back into BinStats rows."""
    with open(path, encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f if line.strip()]
    if not lines or lines[0] != RELIABILITY_HEADER:
        raise ValueError(f"{path} is not a reliability CSV")
    out = []
    for line in lines[1:]:
        lo, hi, count, acc, conf, _gap = line.split(",")
        out.append(BinStats(float(lo), float(hi), int(count), float(acc), float(conf)))
    return out


def emit_reliability(batch, m, csv_path, svg_path):
    """Write the bin table CSV and the standalone SVG diagram.

    Returns (bins, summary) so callers can reuse the table.
    """
    bins, summary = reliability_table(batch, m)
    _write_text(csv_path, reliability_csv_lines(bins))
    _write_text(svg_path, _reliability_svg_lines(bins, summary))
    return bins, summary


# Fixed geometry for the hand-drawn diagram.
_W, _H = 640, 480
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 20, 50


def _px(frac):
    return _LEFT + frac * (_W - _LEFT - _RIGHT)


def _py(frac):
    return _H - _BOTTOM - frac * (_H - _TOP - _BOTTOM)


def _reliability_svg_lines(bins, summary):
    plot_h = _H - _TOP - _BOTTOM
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" width="{_W}" height="{_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    for b in bins:
        x0, x1 = _px(b.lower), _px(b.upper)
        h = b.acc * plot_h
        lines.append(
            f'<rect class="bar" x="{x0:.2f}" y="{_py(b.acc):.2f}" width="{x1 - x0:.2f}" '
            f'height="{h:.2f}" fill="#4878a8" stroke="#29506f" stroke-width="1"/>'
        )
    # bin-confidence ticks along the top of each occupied bar
    for b in bins:
        if b.count:
            x = _px(0.5 * (b.lower + b.upper))
            lines.append(
                f'<line x1="{x - 4:.2f}" y1="{_py(b.conf):.2f}" x2="{x + 4:.2f}" '
                f'y2="{_py(b.conf):.2f}" stroke="#c0392b" stroke-width="2"/>'
            )
    lines.append(
        f'<line x1="{_px(0):.2f}" y1="{_py(0):.2f}" x2="{_px(1):.2f}" y2="{_py(1):.2f}" '
        'stroke="#666666" stroke-width="1.5" stroke-dasharray="6,4"/>'
    )
    lines.append(
        f'<line x1="{_px(0):.2f}" y1="{_py(0):.2f}" x2="{_px(1):.2f}" y2="{_py(0):.2f}" '
        'stroke="black" stroke-width="1"/>'
    )
    lines.append(
        f'<line x1="{_px(0):.2f}" y1="{_py(0):.2f}" x2="{_px(0):.2f}" y2="{_py(1):.2f}" '
        'stroke="black" stroke-width="1"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        lines.append(
            f'<text x="{_px(frac):.2f}" y="{_H - _BOTTOM + 18}" font-size="12" '
            f'text-anchor="middle">{frac:g}</text>'
        )
        lines.append(
            f'<text x="{_LEFT - 8}" y="{_py(frac) + 4:.2f}" font-size="12" '
            f'text-anchor="end">{frac:g}</text>'
        )
    lines.append(f'<text x="{_px(0.5):.2f}" y="{_H - 12}" font-size="13" text-anchor="middle">confidence</text>')
    lines.append(f'<text x="16" y="{_py(0.5):.2f}" font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 16 {_py(0.5):.2f})">accuracy</text>')
    lines.append(
        f'<text x="{_px(0.03):.2f}" y="{_TOP + 14}" font-size="13">'
        f'ECE {summary["ece"]:.4f}  MCE {summary["mce"]:.4f}  N {summary["samples"]}</text>'
    )
    lines.append("</svg>")
    return lines


def write_summary(path, report, diags=None, header_lines=()):
    lines = list(header_lines)
    lines.append(f"samples: {report.samples}   bins: {report.bins}")
    lines.append(f"fitted temperature T*: {report.t_star:g}   validation ECE at T*: {report.val_ece_at_t_star:.6f}")
    lines.append("")
    lines.append(f"{'metric':<18}{'pre_T':>12}{'post_T':>12}")
    for name in _METRIC_FIELDS:
        pre, post = getattr(report.pre, name), getattr(report.post, name)
        lines.append(f"{name:<18}{pre:>12.6f}{post:>12.6f}")
    if diags:
        last = diags[-1]
        lines.append("")
        lines.append(f"final epoch {last.epoch}: mean_s {last.mean_s:.4f}  cv_s {last.cv_s:.4f}  "
                     f"val_ece {last.val_ece:.4f}  pearson(cls_norm, conf) {last.pearson:.4f}")
    _write_text(path, lines)


def write_diagnose_csvs(table, samples_path, curve_path):
    lines = ["cls_norm,confidence,scale"]
    for norm, conf, s in table.rows:
        lines.append(f"{_fmt(norm)},{_fmt(conf)},{_fmt(s)}")
    _write_text(samples_path, lines)
    lines = ["bin_lo,bin_hi,count,mean_confidence"]
    for lo, hi, count, mean_conf in table.curve:
        lines.append(f"{_fmt(lo)},{_fmt(hi)},{count},{_fmt(mean_conf)}")
    _write_text(curve_path, lines)


def _write_text(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
