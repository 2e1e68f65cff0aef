"""Training objectives: cross-entropy, Brier, their weighted sum, and the
focal / label-smoothing baselines.

Two surfaces: plain probability-space functions for evaluation and testing,
and ``loss_node`` which builds the differentiable batch loss on the tape
(cross-entropy goes through a fused log-sum-exp there for stability).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DegenerateProb

_TINY = 1e-300

LOSS_KINDS = ("ce", "brier", "ce_brier", "focal", "label_smooth")

# Threshold below which the focal "53" schedule switches from gamma=3 to 5,
# following the published schedule of the baseline it reproduces.
FOCAL_53_THRESHOLD = 0.25


@dataclass
class LossConfig:
    kind: str = "ce_brier"
    lam: float = 0.1          # weight on the Brier term in ce_brier
    gamma: float = 3.0        # focal exponent
    alpha: float = 0.1        # label-smoothing mass
    focal_53: bool = False    # gamma=5 below FOCAL_53_THRESHOLD, 3 otherwise

    def validate(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.lam < 0:
            raise ConfigError(f"loss lambda must be >= 0, got {self.lam}")
        if self.gamma < 0:
            raise ConfigError(f"focal gamma must be >= 0, got {self.gamma}")
        if not (0.0 <= self.alpha < 1.0):
            raise ConfigError(f"smoothing alpha must lie in [0, 1), got {self.alpha}")
        return self


def cross_entropy(probs, label):
    """-log p_y for one probability vector."""
    p_y = float(np.asarray(probs)[int(label)])
    if p_y < _TINY:
        raise DegenerateProb(f"true-class probability underflowed: {p_y}")
    return -float(np.log(p_y))


def brier(probs, label):
    """Squared distance to the one-hot target; ranges over [0, 2]."""
    p = np.asarray(probs, dtype=np.float64)
    e = np.zeros_like(p)
    e[int(label)] = 1.0
    return float(((p - e) ** 2).sum())


def combined(probs, label, lam):
    """Cross-entropy plus lam times the Brier score."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    return cross_entropy(probs, label) + lam * brier(probs, label)


def focal(probs, label, gamma):
    """-(1 - p_y)^gamma * log p_y; reduces to cross-entropy at gamma = 0."""
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    p_y = float(np.asarray(probs)[int(label)])
    if p_y >= 1.0:
        return 0.0
    if p_y < _TINY:
        raise DegenerateProb(f"true-class probability underflowed: {p_y}")
    return -((1.0 - p_y) ** gamma) * float(np.log(p_y))


def label_smooth_ce(probs, label, alpha):
    """Cross-entropy against the smoothed target (1-alpha)*e_y + alpha/C."""
    if not (0.0 <= alpha < 1.0):
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    p = np.asarray(probs, dtype=np.float64)
    c = p.shape[0]
    q = np.full(c, alpha / c)
    q[int(label)] += 1.0 - alpha
    if np.any((p < _TINY) & (q > 0)):
        raise DegenerateProb("a smoothed-target class has zero probability")
    return -float((q * np.log(p)).sum())


def loss_node(logits, labels, cfg):
    """Differentiable batch-mean loss on the tape.

    ``logits`` is a (B, C) Tensor (already divided by the per-sample scale
    when the temperature head is active); ``labels`` a (B,) int array.
    """
    cfg.validate()
    labels = np.asarray(labels, dtype=np.intp)
    if cfg.kind == "ce":
        return ad.mean_axis(ad.cross_entropy_with_logits(logits, labels))
    if cfg.kind == "brier":
        return _brier_node(logits, labels)
    if cfg.kind == "ce_brier":
        ce = ad.mean_axis(ad.cross_entropy_with_logits(logits, labels))
        return ad.add(ce, ad.scale(_brier_node(logits, labels), cfg.lam))
    if cfg.kind == "focal":
        return _focal_node(logits, labels, cfg)
    return _label_smooth_node(logits, labels, cfg.alpha)


def _onehot(labels, classes):
    e = np.zeros((labels.shape[0], classes))
    e[np.arange(labels.shape[0]), labels] = 1.0
    return e


def _brier_node(logits, labels):
    probs = ad.softmax(logits)
    target = Tensor(_onehot(labels, logits.data.shape[-1]))
    sq = ad.pow_const(ad.sub(probs, target), 2.0)
    return ad.mean_axis(ad.sum_axis(sq, axis=-1))


def _focal_node(logits, labels, cfg):
    logp = ad.pick(ad.log_softmax(logits), labels)
    p_y = ad.pick(ad.softmax(logits), labels)
    shortfall = ad.add_const(ad.scale(p_y, -1.0), 1.0)  # 1 - p_y, stays in [0, 1]
    neg_logp = ad.scale(logp, -1.0)
    if cfg.focal_53:
        # Piecewise gamma: the switch is treated as a constant mask, as in
        # the baseline's published implementation.
        hard = (p_y.data < FOCAL_53_THRESHOLD).astype(np.float64)
        w = ad.add(
            ad.mul(ad.pow_const(shortfall, 5.0), Tensor(hard)),
            ad.mul(ad.pow_const(shortfall, 3.0), Tensor(1.0 - hard)),
        )
    elif cfg.gamma == 0.0:
        return ad.mean_axis(neg_logp)
    else:
        w = ad.pow_const(shortfall, cfg.gamma)
    return ad.mean_axis(ad.mul(w, neg_logp))


def _label_smooth_node(logits, labels, alpha):
    c = logits.data.shape[-1]
    q = np.full((labels.shape[0], c), alpha / c)
    q[np.arange(labels.shape[0]), labels] += 1.0 - alpha
    weighted = ad.mul(ad.log_softmax(logits), Tensor(q))
    return ad.scale(ad.mean_axis(ad.sum_axis(weighted, axis=-1)), -1.0)
