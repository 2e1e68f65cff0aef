"""Desk-scale vision transformer.

Pre-norm encoder blocks (token + position embedding, multi-head
self-attention, GELU MLP, residuals), a final layer norm, and a linear
classifier on the first-token embedding. The forward pass also exposes the
pooled feature the temperature head reads: the class-token embedding, the
mean of the patch tokens, or their concatenation.

Everything runs on the tape engine, so one code path serves training (with
watched parameters) and evaluation (without).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeMismatch
from .scale_head import head_param_count

INIT_STD = 0.02

HEAD_INPUTS = ("cls", "patch_mean", "concat")


@dataclass
class ModelConfig:
    image_h: int = 28
    image_w: int = 28
    channels: int = 1
    patch: int = 7
    dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    classes: int = 10
    calattn_hidden: int = 128
    calattn_enabled: bool = False
    calattn_input: str = "cls"

    def __post_init__(self):
        for name in ("image_h", "image_w", "channels", "patch", "dim", "depth", "heads", "mlp_ratio"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.image_h % self.patch or self.image_w % self.patch:
            raise ConfigError(f"image {self.image_h}x{self.image_w} not divisible by patch {self.patch}")
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.calattn_hidden < 1:
            raise ConfigError(f"calattn_hidden must be >= 1, got {self.calattn_hidden}")
        if self.calattn_input not in HEAD_INPUTS:
            raise ConfigError(f"calattn_input must be one of {HEAD_INPUTS}, got {self.calattn_input!r}")

    @property
    def tokens(self):
        return (self.image_h // self.patch) * (self.image_w // self.patch)

    @property
    def patch_dim(self):
        return self.patch * self.patch * self.channels

    @property
    def mlp_hidden(self):
        return self.mlp_ratio * self.dim

    @property
    def head_feature_dim(self):
        return 2 * self.dim if self.calattn_input == "concat" else self.dim


@dataclass
class BlockParams:
    ln1_g: Tensor
    ln1_b: Tensor
    Wq: Tensor
    Wk: Tensor
    Wv: Tensor
    Wo: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    mlp_W1: Tensor  # (hidden, d)
    mlp_b1: Tensor
    mlp_W2: Tensor  # (d, hidden)
    mlp_b2: Tensor

    def named(self, prefix):
        return [(f"{prefix}.{name}", getattr(self, name)) for name in (
            "ln1_g", "ln1_b", "Wq", "Wk", "Wv", "Wo",
            "ln2_g", "ln2_b", "mlp_W1", "mlp_b1", "mlp_W2", "mlp_b2")]


@dataclass
class ViTParams:
    patch_W: Tensor    # (d, P*P*channels)
    patch_b: Tensor    # (d,)
    cls_token: Tensor  # (d,)
    pos_embed: Tensor  # (N+1, d)
    blocks: list = field(default_factory=list)
    final_ln_g: Tensor = None
    final_ln_b: Tensor = None
    cls_W: Tensor = None  # (C, d)
    cls_b: Tensor = None  # (C,)

    def named(self):
        out = [("patch_proj.W", self.patch_W), ("patch_proj.b", self.patch_b),
               ("cls_token", self.cls_token), ("pos_embed", self.pos_embed)]
        for i, blk in enumerate(self.blocks):
            out.extend(blk.named(f"block{i}"))
        out.extend([("final_ln.g", self.final_ln_g), ("final_ln.b", self.final_ln_b),
                    ("cls_head.W", self.cls_W), ("cls_head.b", self.cls_b)])
        return out

    def tensors(self):
        return [t for _, t in self.named()]


def init_params(config, rng=None):
    """Fresh backbone weights: N(0, 0.02) matrices, zero biases, unit LN gains."""
    rng = np.random.default_rng(0) if rng is None else rng
    d, hidden = config.dim, config.mlp_hidden

    def w(*shape):
        return Tensor(rng.normal(0.0, INIT_STD, size=shape))

    blocks = []
    for _ in range(config.depth):
        blocks.append(BlockParams(
            ln1_g=Tensor(np.ones(d)), ln1_b=Tensor(np.zeros(d)),
            Wq=w(d, d), Wk=w(d, d), Wv=w(d, d), Wo=w(d, d),
            ln2_g=Tensor(np.ones(d)), ln2_b=Tensor(np.zeros(d)),
            mlp_W1=w(hidden, d), mlp_b1=Tensor(np.zeros(hidden)),
            mlp_W2=w(d, hidden), mlp_b2=Tensor(np.zeros(d)),
        ))
    return ViTParams(
        patch_W=w(d, config.patch_dim),
        patch_b=Tensor(np.zeros(d)),
        cls_token=w(d),
        pos_embed=w(config.tokens + 1, d),
        blocks=blocks,
        final_ln_g=Tensor(np.ones(d)),
        final_ln_b=Tensor(np.zeros(d)),
        cls_W=w(config.classes, d),
        cls_b=Tensor(np.zeros(config.classes)),
    )


def extract_patches(images, patch):
    """(B, ch, H, W) -> (B, N, P*P*ch) constant array, flattening each patch
    channel-major in C order."""
    b, ch, h, w = images.shape
    if h % patch or w % patch:
        raise ShapeMismatch(f"image {h}x{w} not divisible by patch {patch}")
    hp, wp = h // patch, w // patch
    x = images.reshape(b, ch, hp, patch, wp, patch)
    x = x.transpose(0, 2, 4, 1, 3, 5)  # (B, hp, wp, ch, P, P)
    return np.ascontiguousarray(x.reshape(b, hp * wp, ch * patch * patch))


def patch_embed(image, params, patch):
    """Project one image's patches: (ch, H, W) -> (N, d)."""
    image = np.asarray(image, dtype=np.float64)
    patches = Tensor(extract_patches(image[None], patch)[0])
    return ad.add(ad.matmul(patches, ad.transpose(params.patch_W)), params.patch_b)


def assemble_sequence(tokens, params):
    """Prepend the class token and add position embeddings: (N, d) -> (N+1, d)."""
    if tokens.data.shape[-1] != params.cls_token.data.shape[0]:
        raise ShapeMismatch(f"token dim {tokens.data.shape[-1]} != model dim {params.cls_token.data.shape[0]}")
    cls_row = ad.reshape(params.cls_token, (1, params.cls_token.data.shape[0]))
    return ad.add(ad.concat([cls_row, tokens], axis=0), params.pos_embed)


def _linear(t, weight, bias=None):
    """x @ W^T (+ b) with (..., d_in) flattened to one 2-D GEMM."""
    shape = t.data.shape
    d_out = weight.data.shape[0]
    flat = ad.reshape(t, (-1, shape[-1])) if t.data.ndim > 2 else t
    out = ad.matmul(flat, ad.transpose(weight))
    if bias is not None:
        out = ad.add(out, bias)
    return ad.reshape(out, shape[:-1] + (d_out,)) if t.data.ndim > 2 else out


def _split_heads(t, heads):
    lead = t.data.shape[:-2]
    tokens, d = t.data.shape[-2:]
    dh = d // heads
    x = ad.reshape(t, lead + (tokens, heads, dh))
    nd = x.data.ndim
    perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    return ad.transpose(x, perm)


def _merge_heads(t):
    nd = t.data.ndim
    perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    x = ad.transpose(t, perm)
    shape = x.data.shape
    return ad.reshape(x, shape[:-2] + (shape[-2] * shape[-1],))


def encoder_block(seq, blk, heads):
    """One pre-norm block: z + MSA(LN(z)), then z + MLP(LN(z))."""
    d = seq.data.shape[-1]
    if d % heads:
        raise ShapeMismatch(f"dim {d} not divisible by heads {heads}")
    dh = d // heads
    u = ad.layer_norm(seq, blk.ln1_g, blk.ln1_b)
    q = _split_heads(_linear(u, blk.Wq), heads)
    k = _split_heads(_linear(u, blk.Wk), heads)
    v = _split_heads(_linear(u, blk.Wv), heads)
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(dh))
    attn = ad.softmax(scores)
    mixed = _merge_heads(ad.matmul(attn, v))
    z = ad.add(seq, _linear(mixed, blk.Wo))
    w = ad.layer_norm(z, blk.ln2_g, blk.ln2_b)
    hidden = ad.gelu(_linear(w, blk.mlp_W1, blk.mlp_b1))
    return ad.add(z, _linear(hidden, blk.mlp_W2, blk.mlp_b2))


def attention_rows(seq, blk, heads):
    """The post-softmax attention matrix of one block (diagnostic)."""
    d = seq.data.shape[-1]
    dh = d // heads
    u = ad.layer_norm(seq, blk.ln1_g, blk.ln1_b)
    q = _split_heads(_linear(u, blk.Wq), heads)
    k = _split_heads(_linear(u, blk.Wk), heads)
    return ad.softmax(ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(dh))).data


def forward(images, config, params):
    """Run the backbone.

    Accepts one image (ch, H, W) or a batch (B, ch, H, W) and returns
    (z_cls, logits, head_feature) shaped per sample or per batch to match.
    z_cls is row 0 after the final layer norm; head_feature follows
    ``config.calattn_input``.
    """
    arr = np.asarray(images, dtype=np.float64)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.shape[1:] != (config.channels, config.image_h, config.image_w):
        raise ShapeMismatch(f"images {arr.shape[1:]} != configured {(config.channels, config.image_h, config.image_w)}")
    patches = Tensor(extract_patches(arr, config.patch))
    tokens = _linear(patches, params.patch_W, params.patch_b)
    b = arr.shape[0]
    cls_rows = ad.reshape(params.cls_token, (1, 1, config.dim))
    cls_rows = ad.add(cls_rows, Tensor(np.zeros((b, 1, config.dim))))  # broadcast to batch
    seq = ad.add(ad.concat([cls_rows, tokens], axis=1), params.pos_embed)
    for blk in params.blocks:
        seq = encoder_block(seq, blk, config.heads)
    seq = ad.layer_norm(seq, params.final_ln_g, params.final_ln_b)
    z_cls = ad.select(seq, 1, 0)
    logits = _linear(z_cls, params.cls_W, params.cls_b)
    if config.calattn_input == "cls":
        feature = z_cls
    else:
        patch_mean = ad.mean_axis(ad.slice_axis(seq, 1, 1, seq.data.shape[1]), axis=1)
        feature = patch_mean if config.calattn_input == "patch_mean" else ad.concat([z_cls, patch_mean], axis=1)
    if single:
        return (ad.reshape(z_cls, (config.dim,)),
                ad.reshape(logits, (config.classes,)),
                ad.reshape(feature, (feature.data.shape[-1],)))
    return z_cls, logits, feature


def cls_norm(z):
    """Euclidean norm of an embedding (or per-row norms of a batch)."""
    arr = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    return float(np.linalg.norm(arr)) if arr.ndim == 1 else np.linalg.norm(arr, axis=-1)


def param_count(config):
    """Backbone parameter count as a pure function of the configuration."""
    d, hidden, n, c = config.dim, config.mlp_hidden, config.tokens, config.classes
    patch = d * config.patch_dim + d
    embed = d + (n + 1) * d
    block = (2 * d) * 2 + 4 * d * d + (hidden * d + hidden) + (d * hidden + d)
    final = 2 * d + (c * d + c)
    return patch + embed + config.depth * block + final


def total_param_count(config):
    """Backbone plus the temperature head when it is enabled."""
    count = param_count(config)
    if config.calattn_enabled:
        count += head_param_count(config.head_feature_dim, config.calattn_hidden)
    return count
