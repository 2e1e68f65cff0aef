"""Matplotlib renderings of the report tables.

These PNGs sit next to the delimited outputs for quick visual inspection;
the byte-deterministic artifacts remain the CSV/SVG files in
:mod:`tempcal.reports`.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def save_reliability_figure(bins, summary, path, title="Reliability diagram"):
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    lowers = [b.lower for b in bins]
    widths = [b.upper - b.lower for b in bins]
    ax.bar(lowers, [b.acc for b in bins], width=widths, align="edge",
           color="#4878a8", edgecolor="#29506f", label="accuracy")
    occupied = [b for b in bins if b.count]
    ax.plot([0.5 * (b.lower + b.upper) for b in occupied], [b.conf for b in occupied],
            "_", color="#c0392b", markersize=10, markeredgewidth=2, label="confidence")
    ax.plot([0, 1], [0, 1], "--", color="0.4", linewidth=1.2)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.set_title(f"{title}  (ECE {summary['ece']:.4f}, MCE {summary['mce']:.4f})")
    ax.legend(loc="upper left", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def save_scale_dynamics_figure(diags, path):
    epochs = [d.epoch for d in diags]
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.plot(epochs, [d.cv_s for d in diags], color="#2b6a99", label="CV of per-sample scale")
    ax.set_xlabel("epoch")
    ax.set_ylabel("coefficient of variation", color="#2b6a99")
    ax2 = ax.twinx()
    ax2.plot(epochs, [d.mean_s for d in diags], color="#c0392b", label="mean scale")
    ax2.axhline(1.0, color="0.6", linestyle="--", linewidth=1)
    ax2.set_ylabel("mean scale", color="#c0392b")
    ax.set_title("Temperature-head dynamics")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def save_norm_confidence_figure(table, path):
    rows = np.asarray(table.rows)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.plot(rows[:, 0], rows[:, 1], ".", color="#4878a8", markersize=3, alpha=0.35)
    centers = [0.5 * (lo + hi) for lo, hi, count, _ in table.curve if count]
    means = [m for _, _, count, m in table.curve if count]
    ax.plot(centers, means, "o-", color="#c0392b", label="bin mean")
    ax.set_xlabel("CLS embedding norm")
    ax.set_ylabel("confidence")
    ax.set_title(f"Embedding norm vs confidence "
                 f"(pearson {table.pearson:.3f}, spearman {table.spearman:.3f})")
    ax.legend(loc="lower right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
