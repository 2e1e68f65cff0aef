"""Minimal reverse-mode tensor engine.

Tensors wrap float64 numpy arrays. Operations run eagerly; when any input is
watched by a :class:`Tape`, the op records a node so that :meth:`Tape.backward`
can replay the chain rule from a scalar loss. A tape lives for one forward
pass: watch the parameters, build the loss, call ``backward``, then ``release``
the tape before the next pass (or before tape-free evaluation).

Gradients accumulate into ``Tensor.grad``; running backward twice without
zeroing doubles them, which mirrors mini-batch gradient accumulation.
"""

import math

import numpy as np
from scipy.special import erf

from .errors import NonScalarLoss, ShapeMismatch

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# When true, every op asserts its output is finite. Cheap insurance while
# debugging training instabilities; off by default in the hot path.
CHECK_FINITE = False


def set_debug_checks(enabled):
    """Toggle the per-op finiteness assertion (returns the previous value)."""
    global CHECK_FINITE
    previous = CHECK_FINITE
    CHECK_FINITE = bool(enabled)
    return previous


class Tensor:
    """A dense float64 array with a gradient slot and an optional tape handle."""

    __slots__ = ("data", "grad", "tape", "node_id")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.tape = None
        self.node_id = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise NonScalarLoss(f"expected a scalar, got shape {self.data.shape}")

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, recorded={self.node_id is not None})"

    # Operator sugar; the module-level functions do the real work.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class _Node:
    __slots__ = ("parents", "pullback", "out")

    def __init__(self, parents, pullback, out):
        self.parents = parents
        self.pullback = pullback
        self.out = out


class Tape:
    """Ordered record of ops for one forward pass.

    Node order is creation order, so every node's parents precede it and a
    single reverse sweep visits each node exactly once.
    """

    def __init__(self):
        self.nodes = []

    @property
    def next_id(self):
        return len(self.nodes)

    def watch(self, *tensors):
        """Register leaf tensors (parameters) so gradients reach them."""
        for t in tensors:
            t.tape = self
            t.node_id = len(self.nodes)
            self.nodes.append(_Node((), None, t))

    def release(self):
        """Detach every recorded tensor so later ops stop recording here."""
        for node in self.nodes:
            node.out.tape = None
            node.out.node_id = None

    def backward(self, loss):
        """Accumulate d(loss)/d(tensor) into ``.grad`` of every reachable tensor."""
        if not isinstance(loss, Tensor) or loss.data.size != 1:
            raise NonScalarLoss("backward needs a scalar loss tensor")
        if loss.tape is not self or loss.node_id is None:
            raise ValueError("loss was not recorded on this tape")
        grads = [None] * len(self.nodes)
        grads[loss.node_id] = np.ones_like(loss.data)
        for nid in range(loss.node_id, -1, -1):
            g = grads[nid]
            node = self.nodes[nid]
            if g is None or node.pullback is None:
                continue
            for pid, pg in zip(node.parents, node.pullback(g)):
                if pg is None:
                    continue
                if grads[pid] is None:
                    grads[pid] = pg
                else:
                    grads[pid] = grads[pid] + pg
        # Gradient buffers are freshly allocated above and never mutated in
        # place afterwards, so handing them to the tensors without copying
        # is safe and keeps accumulation (+=) semantics exact.
        for nid, g in enumerate(grads):
            if g is None:
                continue
            out = self.nodes[nid].out
            out.grad = g if out.grad is None else out.grad + g


def _common_tape(tensors):
    tape = None
    for t in tensors:
        if t.tape is None or t.node_id is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ValueError("operands recorded on different tapes")
    return tape


def _make_op(inputs, out_data, pullback):
    """Wrap op output, recording a node when any input is on a tape.

    ``pullback(g, needs)`` must return one gradient (or None) per input;
    entries whose ``needs`` flag is False may be skipped as None.
    """
    if CHECK_FINITE and not np.all(np.isfinite(out_data)):
        raise FloatingPointError("non-finite value produced by a forward op")
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.tape = None
    out.node_id = None
    tape = _common_tape(inputs)
    if tape is not None:
        needs = tuple(t.tape is tape and t.node_id is not None for t in inputs)
        parents = tuple(t.node_id for t, n in zip(inputs, needs) if n)

        def node_pullback(g):
            gs = pullback(g, needs)
            return [gg for gg, n in zip(gs, needs) if n]

        out.tape = tape
        out.node_id = len(tape.nodes)
        tape.nodes.append(_Node(parents, node_pullback, out))
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a, b):
    return _make_op((a, b), a.data + b.data, lambda g, needs: (
        _unbroadcast(g, a.data.shape) if needs[0] else None,
        _unbroadcast(g, b.data.shape) if needs[1] else None,
    ))


def sub(a, b):
    return _make_op((a, b), a.data - b.data, lambda g, needs: (
        _unbroadcast(g, a.data.shape) if needs[0] else None,
        _unbroadcast(-g, b.data.shape) if needs[1] else None,
    ))


def mul(a, b):
    return _make_op((a, b), a.data * b.data, lambda g, needs: (
        _unbroadcast(g * b.data, a.data.shape) if needs[0] else None,
        _unbroadcast(g * a.data, b.data.shape) if needs[1] else None,
    ))


def scale(a, c):
    c = float(c)
    return _make_op((a,), a.data * c, lambda g, needs: (g * c,))


def add_const(a, c):
    c = float(c)
    return _make_op((a,), a.data + c, lambda g, needs: (g,))


def pow_const(a, c):
    """Elementwise a**c for a real constant exponent (a must stay positive
    whenever c is non-integral)."""
    c = float(c)
    out = a.data ** c
    return _make_op((a,), out, lambda g, needs: (g * c * a.data ** (c - 1.0),))


def log(a):
    return _make_op((a,), np.log(a.data), lambda g, needs: (g / a.data,))


# ---------------------------------------------------------------------------
# linear algebra / shape


def matmul(a, b):
    """Matrix product with numpy batch semantics on leading axes.

    Backward is the classic pair dA = g @ b^T, dB = a^T @ g, generalized by
    summing over broadcast batch axes.
    """
    ad, bd = a.data, b.data
    if ad.ndim < 1 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeMismatch(f"matmul {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def pullback(g, needs):
        ga = gb = None
        if needs[0]:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if needs[1]:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _make_op((a, b), out, pullback)


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(range(a.data.ndim - 2)) + (a.data.ndim - 1, a.data.ndim - 2)
    inverse = tuple(np.argsort(axes))
    return _make_op((a,), np.transpose(a.data, axes),
                    lambda g, needs: (np.transpose(g, inverse),))


def reshape(a, shape):
    old = a.data.shape
    return _make_op((a,), a.data.reshape(shape), lambda g, needs: (g.reshape(old),))


def select(a, axis, index):
    """Pick one slice along ``axis`` (the axis disappears)."""
    out = np.take(a.data, index, axis=axis)

    def pullback(g, needs):
        ga = np.zeros_like(a.data)
        sl = [slice(None)] * a.data.ndim
        sl[axis] = index
        ga[tuple(sl)] = g
        return (ga,)

    return _make_op((a,), out, pullback)


def slice_axis(a, axis, lo, hi):
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(lo, hi)
    sl = tuple(sl)

    def pullback(g, needs):
        ga = np.zeros_like(a.data)
        ga[sl] = g
        return (ga,)

    return _make_op((a,), a.data[sl], pullback)


def concat(tensors, axis):
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def pullback(g, needs):
        return tuple(np.split(g, splits, axis=axis))

    return _make_op(tuple(tensors), np.concatenate(datas, axis=axis), pullback)


def sum_axis(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def pullback(g, needs):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make_op((a,), out, pullback)


def mean_axis(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(sum_axis(a, axis=axis, keepdims=keepdims), 1.0 / n)


def pick(a, indices):
    """Gather one entry per row: (B, C) with (B,) -> (B,); (C,) with int -> ()."""
    if a.data.ndim == 1:
        idx = int(indices)
        out = np.asarray(a.data[idx])

        def pullback(g, needs):
            ga = np.zeros_like(a.data)
            ga[idx] = g
            return (ga,)
    else:
        idx = np.asarray(indices, dtype=np.intp)
        rows = np.arange(a.data.shape[0])
        out = a.data[rows, idx]

        def pullback(g, needs):
            ga = np.zeros_like(a.data)
            ga[rows, idx] = g
            return (ga,)

    return _make_op((a,), out, pullback)


# ---------------------------------------------------------------------------
# nonlinearities


def gelu(a):
    """Exact GELU x * Phi(x); derivative Phi(x) + x * phi(x)."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def pullback(g, needs):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _make_op((a,), out, pullback)


def softplus(a):
    """log(1 + e^x) via the overflow-stable branch x + log1p(e^-x) for x > 0."""
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def pullback(g, needs):
        return (g * _sigmoid(x),)

    return _make_op((a,), out, pullback)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(a):
    """Row-wise softmax over the last axis, max-subtracted for stability."""
    x = a.data
    if x.shape[-1] < 1:
        raise ShapeMismatch("softmax needs a non-empty last axis")
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def pullback(g, needs):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _make_op((a,), y, pullback)


def log_softmax(a):
    x = a.data
    z = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def pullback(g, needs):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _make_op((a,), out, pullback)


def layer_norm(x, gain, bias, eps=1e-5):
    """Per-row standardization over the last axis (biased variance), then affine."""
    d = x.data.shape[-1]
    if d < 2 or gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeMismatch(f"layer_norm dims: x {x.data.shape}, gain {gain.data.shape}, bias {bias.data.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def pullback(g, needs):
        gx = ggain = gbias = None
        if needs[0]:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        if needs[1]:
            ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        if needs[2]:
            gbias = g.reshape(-1, d).sum(axis=0)
        return gx, ggain, gbias

    return _make_op((x, gain, bias), out, pullback)


def cross_entropy_with_logits(z, labels):
    """Per-sample -log softmax(z)[label], fused for stability.

    (B, C) logits with (B,) labels give a (B,) result; a 1-D logit vector
    with an int label gives a scalar.
    """
    x = z.data
    if x.ndim == 1:
        idx = np.asarray([int(labels)], dtype=np.intp)
        x2 = x[None, :]
    else:
        idx = np.asarray(labels, dtype=np.intp)
        x2 = x
    m = x2.max(axis=-1, keepdims=True)
    zs = x2 - m
    lse = np.log(np.exp(zs).sum(axis=-1, keepdims=True))
    rows = np.arange(x2.shape[0])
    ce = (lse[:, 0] - zs[rows, idx])
    out = ce[0] if x.ndim == 1 else ce

    def pullback(g, needs):
        p = np.exp(zs - lse)
        p[rows, idx] -= 1.0
        gg = np.asarray(g).reshape(-1, 1)
        gz = p * gg
        return (gz[0] if x.ndim == 1 else gz,)

    return _make_op((z,), np.asarray(out), pullback)


# ---------------------------------------------------------------------------
# verification


def grad_check(f, params, eps=1e-5):
    """Compare tape gradients of ``f()`` against central finite differences.

    ``f`` must rebuild its graph on a fresh tape each call (watching
    ``params``) and return the scalar loss tensor. Returns the maximum over
    all parameter entries of |analytic - fd| / max(1, |fd|).
    """
    if not (1e-8 <= eps <= 1e-3):
        raise ValueError(f"eps {eps} outside [1e-8, 1e-3]")
    for p in params:
        p.zero_grad()
    loss = f()
    loss.tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    loss.tape.release()
    max_rel = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = f()
            up.tape.release()
            flat[i] = keep - eps
            down = f()
            down.tape.release()
            flat[i] = keep
            fd = (up.data.item() - down.data.item()) / (2.0 * eps)
            rel = abs(gflat[i] - fd) / max(1.0, abs(fd))
            if rel > max_rel:
                max_rel = rel
    return max_rel
