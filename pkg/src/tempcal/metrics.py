"""Reliability metrics over a batch of predictions.

Histogram metrics (ECE, MCE, adaptive and classwise variants) share one
binning routine; the smooth variant replaces bins with a Gaussian-kernel
regression of correctness on confidence. Everything here is pure numpy on
immutable batches; percentages are a presentation concern, so all values
are fractions.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLabels,
    EmptyBatch,
    MissingProbs,
    ZeroVariance,
)

DEFAULT_BINS = 15
DEFAULT_SMOOTH_BANDWIDTH = 0.05


@dataclass
class PredictionBatch:
    """Per-sample predictions in the form every metric consumes."""

    confidence: np.ndarray           # (N,) top-class probability
    predicted_class: np.ndarray      # (N,) int
    true_class: np.ndarray           # (N,) int
    correct: np.ndarray              # (N,) bool
    full_probs: np.ndarray | None = None   # (N, C), needed for classwise metrics
    cls_norm: np.ndarray | None = None     # (N,) embedding norms, for diagnostics
    scale_s: np.ndarray | None = None      # (N,) per-sample temperatures

    @property
    def n(self):
        return self.confidence.shape[0]

    @classmethod
    def from_probs(cls, probs, labels, cls_norm=None, scale_s=None):
        probs = np.asarray(probs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.intp)
        pred = probs.argmax(axis=1)
        return cls(
            confidence=probs.max(axis=1),
            predicted_class=pred,
            true_class=labels,
            correct=pred == labels,
            full_probs=probs,
            cls_norm=None if cls_norm is None else np.asarray(cls_norm, dtype=np.float64),
            scale_s=None if scale_s is None else np.asarray(scale_s, dtype=np.float64),
        )

    def validate(self):
        if self.full_probs is not None:
            if not np.allclose(self.confidence, self.full_probs.max(axis=1), atol=0, rtol=0):
                raise ValueError("confidence must equal max(full_probs)")
        if not np.array_equal(self.correct, self.predicted_class == self.true_class):
            raise ValueError("correct flags disagree with predicted/true classes")
        return self


@dataclass
class BinStats:
    lower: float
    upper: float
    count: int
    acc: float
    conf: float
    gap: float = field(init=False)

    def __post_init__(self):
        self.gap = abs(self.acc - self.conf)


def bin_stats(batch, m=DEFAULT_BINS, scheme="equal_width"):
    """Group samples by confidence into M bins.

    equal_width: bin k covers ((k-1)/M, k/M]; confidence 0 falls in bin 1 and
    empty bins are kept with count 0. equal_mass: stable sort by confidence,
    then M contiguous groups whose sizes differ by at most one; empty groups
    (possible only when N < M) are dropped.
    """
    _require_samples(batch)
    if m < 1:
        raise ValueError(f"need at least one bin, got {m}")
    conf = batch.confidence
    correct = batch.correct.astype(np.float64)
    if scheme == "equal_width":
        edges = np.arange(m + 1) / m
        idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, m - 1)
        out = []
        for k in range(m):
            mask = idx == k
            count = int(mask.sum())
            acc = float(correct[mask].mean()) if count else 0.0
            cbar = float(conf[mask].mean()) if count else 0.0
            out.append(BinStats(float(edges[k]), float(edges[k + 1]), count, acc, cbar))
        return out
    if scheme == "equal_mass":
        order = np.argsort(conf, kind="stable")
        out = []
        for group in np.array_split(order, m):
            if group.size == 0:
                continue
            c = conf[group]
            out.append(BinStats(float(c.min()), float(c.max()), int(group.size),
                                float(correct[group].mean()), float(c.mean())))
        return out
    raise ValueError(f"unknown binning scheme {scheme!r}")


def _weighted_gap(bins, n):
    return float(sum(b.count / n * b.gap for b in bins))


def ece(batch, m=DEFAULT_BINS):
    """Expected calibration error: count-weighted mean |acc - conf| over equal-width bins."""
    return _weighted_gap(bin_stats(batch, m, "equal_width"), batch.n)


def mce(batch, m=DEFAULT_BINS):
    """Maximum calibration error: the largest |acc - conf| over occupied bins."""
    occupied = [b for b in bin_stats(batch, m, "equal_width") if b.count > 0]
    return float(max(b.gap for b in occupied))


def ada_ece(batch, m=DEFAULT_BINS):
    """ECE over equal-mass (adaptive) bins."""
    return _weighted_gap(bin_stats(batch, m, "equal_mass"), batch.n)


def classwise_ece(batch, m=DEFAULT_BINS):
    """Mean over classes of the calibration gap of each class's probability column.

    Every sample contributes its probability for every class; "accuracy" for
    class k is the indicator that the true label is k.
    """
    _require_samples(batch)
    if batch.full_probs is None:
        raise MissingProbs("classwise ECE needs full probability vectors")
    probs = batch.full_probs
    n, k_classes = probs.shape
    edges = np.arange(m + 1) / m
    total = 0.0
    for k in range(k_classes):
        conf_k = probs[:, k]
        hit_k = (batch.true_class == k).astype(np.float64)
        idx = np.clip(np.searchsorted(edges, conf_k, side="left") - 1, 0, m - 1)
        for b in range(m):
            mask = idx == b
            count = int(mask.sum())
            if count == 0:
                continue
            total += count / n * abs(float(hit_k[mask].mean()) - float(conf_k[mask].mean()))
    return total / k_classes


def smece(batch, bandwidth=DEFAULT_SMOOTH_BANDWIDTH):
    """Bin-free calibration error via Gaussian-kernel smoothing.

    Regresses correctness on confidence with kernel exp(-t^2 / 2h^2)
    (Nadaraya-Watson), then averages |smoothed accuracy - confidence| over
    the samples. Direct O(N^2) evaluation.
    """
    _require_samples(batch)
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    p = batch.confidence
    correct = batch.correct.astype(np.float64)
    diff = p[:, None] - p[None, :]
    w = np.exp(-(diff * diff) / (2.0 * bandwidth * bandwidth))
    acc_hat = (w @ correct) / w.sum(axis=1)
    return float(np.abs(acc_hat - p).mean())


def auroc(batch):
    """Probability that a correct prediction outranks an incorrect one by
    confidence (Mann-Whitney U with ties counted half)."""
    _require_samples(batch)
    correct = batch.correct
    n_pos = int(correct.sum())
    n_neg = batch.n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("need at least one correct and one incorrect sample")
    ranks = _average_ranks(batch.confidence)
    u = float(ranks[correct].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def hcfp(batch, tau=0.90):
    """Count of incorrect predictions with confidence at or above tau."""
    return int(((batch.confidence >= tau) & ~batch.correct).sum())


def pearson(x, y):
    """Product-moment correlation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _require_correlatable(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    return float((xc * yc).sum() / np.sqrt((xc * xc).sum() * (yc * yc).sum()))


def spearman(x, y):
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _require_correlatable(x, y)
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    if rx.std() == 0.0 or ry.std() == 0.0:
        raise ZeroVariance("ranks are constant")
    return pearson(rx, ry)


def reliability_table(batch, m=DEFAULT_BINS):
    """Equal-width bin rows plus the ECE/MCE summary computed from them."""
    bins = bin_stats(batch, m, "equal_width")
    occupied = [b for b in bins if b.count > 0]
    summary = {
        "ece": _weighted_gap(bins, batch.n),
        "mce": float(max(b.gap for b in occupied)),
        "samples": batch.n,
        "bins": m,
    }
    return bins, summary


def _average_ranks(values):
    """1-based ranks; tied values share the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _require_samples(batch):
    if batch.n < 1:
        raise EmptyBatch("metric asked to summarize an empty batch")


def _require_correlatable(x, y):
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ZeroVariance("need at least two points")
    if x.std() == 0.0 or y.std() == 0.0:
        raise ZeroVariance("an input is constant")
