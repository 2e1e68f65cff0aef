"""Training loop, evaluation, and diagnostics.

SGD with momentum and coupled L2 weight decay trains the backbone and, when
enabled, the temperature head jointly: per-sample scales divide the logits
inside the loss graph, so calibration gradients reach every parameter. The
classifier bias and the head's output bias are excluded from weight decay
(decay would drag the head away from its neutral-start anchor).

Runs are deterministic: one seed fixes initialization, the train/val split,
and the per-epoch shuffles, so identical configs reproduce identical
checkpoints and reports byte for byte.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as datamod
from . import metrics as met
from .checkpoint import Checkpoint
from .config import flatten, unflatten
from .errors import ConfigError, NumericError, ShapeMismatch
from .losses import loss_node
from .metrics import PredictionBatch
from .scale_head import CalibHeadParams, head_init, predict_scale
from .temperature import apply_temperature, fit_temperature
from .vit import ModelConfig, cls_norm, forward, init_params

DECAY_EXCLUDED = ("cls_head.b", "calib_head.b2")

EVAL_BATCH = 256


@dataclass
class EpochDiagnostics:
    epoch: int
    mean_s: float
    cv_s: float
    mean_cls_norm: float
    pearson: float
    spearman: float
    train_loss: float
    val_ece: float


@dataclass
class MetricSet:
    accuracy: float
    mean_confidence: float
    ece: float
    mce: float
    ada_ece: float
    classwise_ece: float
    smece: float
    auroc: float
    hcfp_count: int
    hcfp_per_1000: float

    @classmethod
    def from_batch(cls, batch, m=met.DEFAULT_BINS):
        count = met.hcfp(batch)
        return cls(
            accuracy=float(batch.correct.mean()),
            mean_confidence=float(batch.confidence.mean()),
            ece=met.ece(batch, m),
            mce=met.mce(batch, m),
            ada_ece=met.ada_ece(batch, m),
            classwise_ece=met.classwise_ece(batch, m),
            smece=met.smece(batch),
            auroc=met.auroc(batch),
            hcfp_count=count,
            hcfp_per_1000=1000.0 * count / batch.n,
        )


@dataclass
class MetricReport:
    pre: MetricSet
    post: MetricSet
    t_star: float
    val_ece_at_t_star: float
    samples: int
    bins: int


@dataclass
class Model:
    config: ModelConfig
    params: object
    head: CalibHeadParams | None = None

    def named_tensors(self):
        out = list(self.params.named())
        if self.head is not None:
            out.extend(self.head.named())
        return out

    def tensors(self):
        return [t for _, t in self.named_tensors()]


def build_model(config, seed):
    """Deterministic init: backbone draws first, then the head."""
    rng = np.random.default_rng(seed)
    params = init_params(config, rng)
    head = head_init(config.head_feature_dim, config.calattn_hidden, rng) if config.calattn_enabled else None
    return Model(config=config, params=params, head=head)


class MomentumSGD:
    """Classic SGD: v = mu*v + (g + wd*p); p -= lr*v, with per-name decay masks."""

    def __init__(self, named_tensors, momentum, weight_decay, decay_excluded=DECAY_EXCLUDED):
        self.named = list(named_tensors)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.excluded = set(decay_excluded)
        self.velocity = {name: np.zeros_like(t.data) for name, t in self.named}

    def step(self, lr):
        for name, t in self.named:
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            if self.weight_decay and name not in self.excluded:
                g = g + self.weight_decay * t.data
            v = self.velocity[name]
            v *= self.momentum
            v += g
            t.data -= lr * v
            t.zero_grad()


def resolve_datasets(run_cfg):
    """Build (train, test) datasets from the dataset section of a run config.

    When ``dataset.normalize`` is set, both sets are standardized with the
    training set's per-channel mean and std.
    """
    ds = run_cfg.dataset
    model = run_cfg.model
    if ds.kind == "digits":
        total = ds.train_size + ds.test_size
        full = datamod.synth_digits(total, seed=ds.seed, noise_lo=ds.noise_lo,
                                    noise_hi=ds.noise_hi, size=model.image_h,
                                    classes=model.classes, flip_fraction=ds.flip_fraction)
        train = full.take(np.arange(ds.train_size))
        test = full.take(np.arange(ds.train_size, total))
    elif ds.kind == "gauss":
        shape = (model.channels, model.image_h, model.image_w)
        per_class_train = -(-ds.train_size // ds.classes)
        per_class_test = -(-ds.test_size // ds.classes)
        train = datamod.synth_gaussians(ds.classes, per_class_train, shape, ds.separation, ds.seed)
        test = datamod.synth_gaussians(ds.classes, per_class_test, shape, ds.separation, ds.seed + 1)
        train, test = train.take(np.arange(ds.train_size)), test.take(np.arange(ds.test_size))
    else:
        train = datamod.load_idx(ds.train_images, ds.train_labels, name="train", class_count=model.classes)
        test = (datamod.load_idx(ds.test_images, ds.test_labels, name="test", class_count=model.classes)
                if ds.test_images else None)
        if ds.train_size and ds.train_size < train.n:
            train = datamod.subset(train, ds.train_size, ds.seed)
        if test is not None and ds.test_size and ds.test_size < test.n:
            test = datamod.subset(test, ds.test_size, ds.seed + 1)
    if ds.normalize:
        mean = train.images.mean(axis=(0, 2, 3))
        std = train.images.std(axis=(0, 2, 3))
        train = datamod.normalize(train, mean, std)
        if test is not None:
            test = datamod.normalize(test, mean, std)
    return train, test


def _model_batch(model, images):
    """Forward a batch; returns (z_cls, logits, scaled_logits, s) tensors.

    ``s`` is None when the head is disabled; ``scaled_logits`` are then the
    raw logits.
    """
    z, logits, feature = forward(images, model.config, model.params)
    if model.head is None:
        return z, logits, logits, None
    s = predict_scale(feature, model.head)
    scaled = ad.mul(logits, ad.pow_const(s, -1.0))
    return z, logits, scaled, s


def predict_dataset(model, dataset, batch_size=EVAL_BATCH):
    """Tape-free forward over a dataset.

    Returns dict with raw logits, calibrated logits, probabilities, scales,
    and CLS norms as plain arrays.
    """
    logits_all, scaled_all, s_all, norm_all = [], [], [], []
    for lo in range(0, dataset.n, batch_size):
        images = dataset.images[lo:lo + batch_size]
        z, logits, scaled, s = _model_batch(model, images)
        logits_all.append(logits.data)
        scaled_all.append(scaled.data)
        s_all.append(np.full(images.shape[0], 1.0) if s is None else s.data[:, 0])
        norm_all.append(cls_norm(z))
    logits = np.concatenate(logits_all)
    scaled = np.concatenate(scaled_all)
    probs = apply_temperature(scaled, 1.0)
    return {
        "logits": logits,
        "calibrated_logits": scaled,
        "probs": probs,
        "scale": np.concatenate(s_all),
        "cls_norm": np.concatenate(norm_all),
        "labels": dataset.labels.copy(),
    }


def _safe_corr(fn, x, y):
    try:
        return fn(x, y)
    except Exception:
        return float("nan")


def train(run_cfg):
    """Run the configured training; returns (Checkpoint, [EpochDiagnostics])."""
    run_cfg.validate()
    model = build_model(run_cfg.model, run_cfg.seed)
    train_full, _ = resolve_datasets(run_cfg)
    train_ds, val_ds = datamod.split(train_full, datamod.SplitSpec(run_cfg.dataset.val_fraction, run_cfg.seed))
    opt = MomentumSGD(model.named_tensors(), run_cfg.optimizer.momentum, run_cfg.optimizer.weight_decay)
    shuffle_rng = np.random.default_rng(run_cfg.seed + 1)
    diagnostics = []
    tensors = model.tensors()
    for epoch in range(1, run_cfg.total_epochs + 1):
        lr = run_cfg.optimizer.lr_for_epoch(epoch)
        order = shuffle_rng.permutation(train_ds.n)
        losses_seen = []
        for lo in range(0, train_ds.n, run_cfg.batch_size):
            idx = order[lo:lo + run_cfg.batch_size]
            tape = ad.Tape()
            tape.watch(*tensors)
            _, _, scaled, _ = _model_batch(model, train_ds.images[idx])
            loss = loss_node(scaled, train_ds.labels[idx], run_cfg.loss)
            value = loss.data.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            tape.backward(loss)
            tape.release()
            opt.step(lr)
            losses_seen.append(value)
        diagnostics.append(_epoch_diagnostics(model, val_ds, epoch, float(np.mean(losses_seen))))
    ckpt = Checkpoint(
        tensors={name: t.data.copy() for name, t in model.named_tensors()},
        config_echo=flatten(run_cfg),
        epoch=run_cfg.total_epochs,
    )
    return ckpt, diagnostics


def _epoch_diagnostics(model, val_ds, epoch, train_loss):
    pred = predict_dataset(model, val_ds)
    batch = PredictionBatch.from_probs(pred["probs"], pred["labels"])
    s = pred["scale"]
    conf = batch.confidence
    norms = pred["cls_norm"]
    mean_s = float(s.mean())
    cv_s = float(s.std() / mean_s) if mean_s != 0.0 else float("nan")
    return EpochDiagnostics(
        epoch=epoch,
        mean_s=mean_s,
        cv_s=cv_s,
        mean_cls_norm=float(norms.mean()),
        pearson=_safe_corr(met.pearson, norms, conf),
        spearman=_safe_corr(met.spearman, norms, conf),
        train_loss=train_loss,
        val_ece=met.ece(batch),
    )


def model_from_checkpoint(ckpt):
    """Rebuild (run_config, Model) from a checkpoint's echo and tensors."""
    run_cfg = unflatten(ckpt.config_echo)
    model = build_model(run_cfg.model, run_cfg.seed)
    for name, tensor in model.named_tensors():
        if name not in ckpt.tensors:
            raise ShapeMismatch(f"checkpoint is missing tensor {name}")
        value = ckpt.tensors[name]
        if tuple(value.shape) != tuple(tensor.data.shape):
            raise ShapeMismatch(f"tensor {name}: checkpoint {value.shape} vs model {tensor.data.shape}")
        tensor.data = value.astype(np.float64).copy()
    return run_cfg, model


def evaluate(ckpt, dataset, m=met.DEFAULT_BINS):
    """Metrics before and after global temperature scaling.

    The temperature is fitted on the run's own validation split (recreated
    from the checkpoint's config echo), then applied to the evaluation set's
    calibrated logits.
    """
    run_cfg, model = model_from_checkpoint(ckpt)
    pred = predict_dataset(model, dataset)
    pre_batch = PredictionBatch.from_probs(pred["probs"], pred["labels"],
                                           cls_norm=pred["cls_norm"], scale_s=pred["scale"])
    train_full, _ = resolve_datasets(run_cfg)
    _, val_ds = datamod.split(train_full, datamod.SplitSpec(run_cfg.dataset.val_fraction, run_cfg.seed))
    val_pred = predict_dataset(model, val_ds)
    t_star, val_ece = fit_temperature(val_pred["calibrated_logits"], val_pred["labels"], m=m)
    post_probs = apply_temperature(pred["calibrated_logits"], t_star)
    post_batch = PredictionBatch.from_probs(post_probs, pred["labels"])
    return MetricReport(
        pre=MetricSet.from_batch(pre_batch, m),
        post=MetricSet.from_batch(post_batch, m),
        t_star=t_star,
        val_ece_at_t_star=val_ece,
        samples=dataset.n,
        bins=m,
    ), pre_batch, post_batch


@dataclass
class DiagnosticsTable:
    rows: np.ndarray          # (N, 3): cls_norm, confidence, scale
    curve: list               # 15 equal-width cls-norm bins: (lo, hi, count, mean_confidence)
    pearson: float
    spearman: float
    scale_summary: dict       # mean, cv, min, max


def diagnose(ckpt, dataset, curve_bins=15):
    """Per-sample difficulty read-outs and their summary statistics."""
    _, model = model_from_checkpoint(ckpt)
    pred = predict_dataset(model, dataset)
    conf = pred["probs"].max(axis=1)
    norms = pred["cls_norm"]
    s = pred["scale"]
    lo, hi = float(norms.min()), float(norms.max())
    width = (hi - lo) or 1.0
    edges = lo + np.arange(curve_bins + 1) / curve_bins * width
    idx = np.clip(np.searchsorted(edges, norms, side="left") - 1, 0, curve_bins - 1)
    curve = []
    for k in range(curve_bins):
        mask = idx == k
        curve.append((float(edges[k]), float(edges[k + 1]), int(mask.sum()),
                      float(conf[mask].mean()) if mask.any() else float("nan")))
    mean_s = float(s.mean())
    return DiagnosticsTable(
        rows=np.column_stack([norms, conf, s]),
        curve=curve,
        pearson=_safe_corr(met.pearson, norms, conf),
        spearman=_safe_corr(met.spearman, norms, conf),
        scale_summary={"mean": mean_s,
                       "cv": float(s.std() / mean_s) if mean_s else float("nan"),
                       "min": float(s.min()), "max": float(s.max())},
    )
