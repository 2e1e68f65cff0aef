"""Per-sample temperature head.

A two-layer MLP reads a pooled embedding and emits one strictly positive
scale per sample: s = softplus(w2 . GELU(W1 z + b1) + b2) + eps. Logits are
divided by s before the softmax, which cools over-confident samples (s > 1)
and sharpens under-confident ones (s < 1) without changing the argmax.

At initialization w2 = 0 and b2 = ln(e - 1), so softplus(b2) = 1 and the
head is neutral: calibrated probabilities coincide with the plain softmax
until training pushes the scale away from 1.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NonPositiveScale, ShapeMismatch

DEFAULT_EPS = 1e-6


@dataclass
class CalibHeadParams:
    """Weights of the scale head; all tensors are trainable except eps."""

    W1: Tensor  # (h, d_in)
    b1: Tensor  # (h,)
    w2: Tensor  # (h,)
    b2: Tensor  # scalar
    eps: float = DEFAULT_EPS

    @property
    def hidden(self):
        return self.W1.data.shape[0]

    @property
    def d_in(self):
        return self.W1.data.shape[1]

    def named(self, prefix="calib_head"):
        return [
            (f"{prefix}.W1", self.W1),
            (f"{prefix}.b1", self.b1),
            (f"{prefix}.w2", self.w2),
            (f"{prefix}.b2", self.b2),
        ]

    def tensors(self):
        return [self.W1, self.b1, self.w2, self.b2]


def head_init(d_in, h, rng=None):
    """Neutral-start head: W1 ~ N(0, 0.02), b1 = 0, w2 = 0, b2 = ln(e - 1)."""
    if d_in < 1 or h < 1:
        raise ShapeMismatch(f"head dims must be >= 1, got d_in={d_in}, h={h}")
    rng = np.random.default_rng(0) if rng is None else rng
    return CalibHeadParams(
        W1=Tensor(rng.normal(0.0, 0.02, size=(h, d_in))),
        b1=Tensor(np.zeros(h)),
        w2=Tensor(np.zeros(h)),
        b2=Tensor(math.log(math.e - 1.0)),
    )


def head_param_count(d_in, h):
    """Trainable value count: W1 + b1 + w2 + b2 = h*d_in + h + h + 1."""
    return h * d_in + h + h + 1


def predict_scale(feature, params):
    """Per-sample scale for a (d_in,) feature or a (B, d_in) batch.

    Returns a Tensor: shape () for a single feature, (B, 1) for a batch, so
    the batched form broadcasts directly over per-sample logits. Recording
    happens automatically when the head parameters are watched by a tape.
    """
    f = feature if isinstance(feature, Tensor) else Tensor(feature)
    single = f.data.ndim == 1
    if single:
        f = ad.reshape(f, (1, f.data.shape[0]))
    if f.data.shape[-1] != params.d_in:
        raise ShapeMismatch(f"feature dim {f.data.shape[-1]} != head d_in {params.d_in}")
    hidden = ad.gelu(ad.add(ad.matmul(f, ad.transpose(params.W1)), params.b1))
    inner = ad.add(ad.matmul(hidden, ad.reshape(params.w2, (params.hidden, 1))), params.b2)
    s = ad.add_const(ad.softplus(inner), params.eps)
    return ad.reshape(s, ()) if single else s


def predict_scale_value(feature, params):
    """Plain-number convenience around :func:`predict_scale`."""
    s = predict_scale(np.asarray(feature, dtype=np.float64), params)
    return float(s.data) if s.data.ndim == 0 else s.data[:, 0].copy()


def calibrate_logits(logits, s):
    """softmax(logits / s); the argmax is preserved for every s > 0.

    ``logits`` may be a Tensor or array, (C,) or (B, C); ``s`` a positive
    number, a (B, 1) array, or a Tensor of either shape.
    """
    lt = logits if isinstance(logits, Tensor) else Tensor(logits)
    st = s if isinstance(s, Tensor) else Tensor(s)
    if np.any(st.data <= 0.0):
        raise NonPositiveScale(f"scale must be > 0, got min {st.data.min() if st.data.size else st.data}")
    return ad.softmax(ad.mul(lt, ad.pow_const(st, -1.0)))


def scale_grad_ce(logits, s, label):
    """Diagnostic gradient read-out for the predicted class.

    Returns (p_hat_c - 1[y == c]) * (l_c - sum_j p_hat_j l_j) / s where c is
    the argmax class under the scaled softmax p_hat = softmax(logits / s).
    Positive for confident mistakes (push s up, cool the sample), negative
    for under-confident correct predictions (sharpen). This is a read-out of
    the training signal's sign and size, not the loss derivative used by the
    optimizer; see :func:`combined_scale_grad` for the exact derivative.
    """
    ell = np.asarray(logits, dtype=np.float64)
    s = float(s)
    p = _softmax_np(ell / s)
    c = int(np.argmax(ell))
    indicator = 1.0 if int(label) == c else 0.0
    return float((p[c] - indicator) * (ell[c] - float(p @ ell)) / s)


def combined_scale_grad(logits, s, label, lam):
    """Exact d/ds of the combined objective CE + lam * Brier at scale s.

    Differentiates -log p_y + lam * ||p - e_y||^2 with p = softmax(logits/s)
    through the full softmax Jacobian; matches central finite differences to
    float64 accuracy.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    ell = np.asarray(logits, dtype=np.float64)
    s = float(s)
    if s <= 0:
        raise NonPositiveScale(f"scale must be > 0, got {s}")
    y = int(label)
    p = _softmax_np(ell / s)
    e = np.zeros_like(p)
    e[y] = 1.0
    # dL/dz for z = logits / s, then chain through dz/ds = -logits / s^2.
    g_ce = p - e
    r = 2.0 * (p - e)
    g_brier = p * (r - float(r @ p))
    gz = g_ce + lam * g_brier
    return float(gz @ (-ell / (s * s)))


def combined_loss_at_scale(logits, s, label, lam):
    """CE + lam * Brier of softmax(logits / s); the 1-D objective in s."""
    ell = np.asarray(logits, dtype=np.float64)
    z = ell / float(s)
    z = z - z.max()
    logp = z - math.log(np.exp(z).sum())
    p = np.exp(logp)
    e = np.zeros_like(p)
    e[int(label)] = 1.0
    return float(-logp[int(label)] + lam * ((p - e) ** 2).sum())


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimal_scale_oracle(logits, label, lam, domain=(1e-3, 50.0), iters=40):
    """Numeric ground truth for the best per-sample scale.

    Golden-section minimization of the combined objective over ``domain``;
    returns the domain-clamped minimizer. When the loss is constant in s
    (symmetric logits) the arithmetic midpoint of the domain is returned.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if lo <= 0 or hi <= lo:
        raise ValueError(f"domain must be positive and increasing, got {domain}")

    def f(s):
        return combined_loss_at_scale(logits, s, label, lam)

    probes = [f(lo), f(0.5 * (lo + hi)), f(hi)]
    spread = max(probes) - min(probes)
    if spread <= 1e-15 * max(1.0, abs(probes[0])):
        return 0.5 * (lo + hi)

    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    s_star = 0.5 * (a + b)
    # Monotone objectives drive the bracket into a corner; snap to the edge.
    if f(lo) <= f(s_star):
        return lo
    if f(hi) <= f(s_star):
        return hi
    return min(max(s_star, lo), hi)


def _softmax_np(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()
