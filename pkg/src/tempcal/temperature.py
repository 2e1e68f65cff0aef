"""Classical global temperature scaling.

A single positive scalar divides every logit vector before the softmax.
Fitting walks a fixed grid (default 0.1, 0.2, ..., 10.0) and keeps the
temperature with the best validation ECE; ties go to the smallest T. The
printed grid in the source protocol starts at 0, which is degenerate
(division by zero), so the usable grid starts at 0.1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatch, NonPositiveTemperature
from .metrics import DEFAULT_BINS, PredictionBatch, ece


def default_grid_values():
    """0.1 through 10.0 in steps of 0.1 (exact decimals via integer division)."""
    return [i / 10.0 for i in range(1, 101)]


@dataclass
class TemperatureGrid:
    values: list = field(default_factory=default_grid_values)

    def __post_init__(self):
        vals = [float(v) for v in self.values]
        if not vals:
            raise ValueError("temperature grid is empty")
        if any(v <= 0 for v in vals):
            raise NonPositiveTemperature("grid temperatures must be > 0")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("grid temperatures must be strictly increasing")
        self.values = vals


def apply_temperature(logits, t):
    """softmax(logits / T) for a (C,) vector or an (N, C) batch."""
    if t <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {t}")
    z = np.asarray(logits, dtype=np.float64) / float(t)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def fit_temperature(val_logits, val_labels, grid=None, m=DEFAULT_BINS, criterion="ece"):
    """Grid-search the temperature that minimizes validation ECE.

    Returns (t_star, score_at_t_star). ``criterion`` may be "nll" for the
    comparison protocol that fits by negative log-likelihood instead.
    """
    logits = np.asarray(val_logits, dtype=np.float64)
    labels = np.asarray(val_labels, dtype=np.intp)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise EmptyBatch("temperature fitting needs a non-empty (N, C) logit matrix")
    if criterion not in ("ece", "nll"):
        raise ValueError(f"unknown fit criterion {criterion!r}")
    grid = grid if grid is not None else TemperatureGrid()
    best_t = None
    best_score = None
    for t in grid.values:
        probs = apply_temperature(logits, t)
        if criterion == "ece":
            score = ece(PredictionBatch.from_probs(probs, labels), m)
        else:
            score = float(-np.log(probs[np.arange(labels.shape[0]), labels]).mean())
        if best_score is None or score < best_score:
            best_t, best_score = t, score
    return best_t, best_score
