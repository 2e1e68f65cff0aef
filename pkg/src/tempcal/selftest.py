"""Built-in verification suite behind the ``selftest`` CLI verb.

Each check pairs a fast re-implementation of a definition (loops, finite
differences, dense scans) against the production code path and reports one
pass/fail line. These are smoke-level versions of the full pytest suite.
"""

import math
import time

import numpy as np

from . import autodiff as ad
from . import metrics as met
from .losses import LossConfig, loss_node
from .metrics import PredictionBatch
from .scale_head import calibrate_logits, combined_scale_grad, combined_loss_at_scale, head_init, predict_scale
from .temperature import apply_temperature, fit_temperature
from .train import build_model, _model_batch
from .vit import ModelConfig


def check_combined_gradient(draws=1000, seed=7):
    """Analytic d/ds of the combined loss vs central finite differences."""
    rng = np.random.default_rng(seed)
    eps = 1e-6
    worst = 0.0
    start = time.time()
    for _ in range(draws):
        logits = rng.normal(0.0, 2.0, size=10)
        s = rng.uniform(0.2, 5.0)
        label = int(rng.integers(0, 10))
        lam = float(rng.choice([0.0, 0.1, 1.0]))
        analytic = combined_scale_grad(logits, s, label, lam)
        fd = (combined_loss_at_scale(logits, s + eps, label, lam)
              - combined_loss_at_scale(logits, s - eps, label, lam)) / (2 * eps)
        worst = max(worst, abs(analytic - fd) / max(1.0, abs(fd)))
    elapsed = time.time() - start
    return worst < 1e-5, f"max rel err {worst:.2e} over {draws} draws in {elapsed:.2f}s"


def check_end_to_end_gradient():
    """Tape gradients of the full loss through a tiny backbone + head."""
    cfg = ModelConfig(image_h=8, image_w=8, channels=1, patch=4, dim=8, depth=1,
                      heads=2, mlp_ratio=2, classes=3, calattn_hidden=4,
                      calattn_enabled=True)
    model = build_model(cfg, seed=3)
    rng = np.random.default_rng(5)
    images = rng.random((2, 1, 8, 8))
    labels = np.array([0, 2])
    tensors = model.tensors()
    loss_cfg = LossConfig(kind="ce_brier", lam=0.1)

    def f():
        tape = ad.Tape()
        tape.watch(*tensors)
        _, _, scaled, _ = _model_batch(model, images)
        return loss_node(scaled, labels, loss_cfg)

    err = ad.grad_check(f, tensors, eps=1e-5)
    return err < 1e-3, f"max rel err {err:.2e} over {sum(t.size for t in tensors)} parameters"


def check_init_neutrality(draws=1000, seed=11):
    head = head_init(16, 8, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(draws):
        feature = rng.normal(0.0, 1.0, size=16)
        logits = rng.normal(0.0, 2.0, size=10)
        s = predict_scale(feature, head)
        with_head = calibrate_logits(ad.Tensor(logits), s).data
        baseline = apply_temperature(logits, 1.0)
        worst = max(worst, float(np.abs(with_head - baseline).max()))
    return worst < 1e-5, f"max |probs_head - probs_plain| = {worst:.2e}"


def check_rank_preservation(draws=10000, seed=13):
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(draws):
        c = int(rng.integers(2, 12))
        logits = rng.normal(0.0, 3.0, size=c)
        s = float(rng.uniform(0.01, 20.0))
        probs = calibrate_logits(ad.Tensor(logits), ad.Tensor(s)).data
        if int(np.argmax(probs)) != int(np.argmax(logits)):
            violations += 1
    return violations == 0, f"{violations} argmax changes in {draws} draws"


def check_metric_oracles(batches=25, seed=17):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(batches):
        n = int(rng.integers(3, 40))
        c = int(rng.integers(2, 6))
        probs = rng.dirichlet(np.ones(c), size=n)
        labels = rng.integers(0, c, size=n)
        batch = PredictionBatch.from_probs(probs, labels)
        m = int(rng.integers(1, 12))
        worst = max(worst, abs(met.ece(batch, m) - _ece_loops(batch, m)))
        worst = max(worst, abs(met.smece(batch) - _smece_loops(batch)))
        if batch.correct.any() and not batch.correct.all():
            worst = max(worst, abs(met.auroc(batch) - _auroc_loops(batch)))
    return worst < 1e-12, f"max |fast - brute force| = {worst:.2e} over {batches} batches"


def check_planted_temperature(seed=19):
    logits, labels = _calibrated_set(4000, 10, seed)
    t0 = 2.0
    t_star, _ = fit_temperature(logits * t0, labels)
    pre = met.ece(PredictionBatch.from_probs(apply_temperature(logits * t0, 1.0), labels))
    post = met.ece(PredictionBatch.from_probs(apply_temperature(logits * t0, t_star), labels))
    ok = (t_star == t0) and post <= pre
    return ok, f"recovered T*={t_star} (planted {t0}); ECE {pre:.4f} -> {post:.4f}"


def _calibrated_set(n, c, seed):
    """Logit set whose empirical accuracy matches confidence by construction:
    within groups sharing one logit vector, exactly round(p * size) samples
    keep the argmax label."""
    rng = np.random.default_rng(seed)
    group_size = 50
    logits = []
    labels = []
    for _ in range(n // group_size):
        vec = rng.normal(0.0, 1.5, size=c)
        probs = np.exp(vec - vec.max())
        probs /= probs.sum()
        top = int(np.argmax(probs))
        correct_n = int(round(float(probs[top]) * group_size))
        others = [k for k in range(c) if k != top]
        lab = [top] * correct_n + [others[i % len(others)] for i in range(group_size - correct_n)]
        logits.extend([vec] * group_size)
        labels.extend(lab)
    return np.array(logits), np.array(labels, dtype=np.intp)


def _ece_loops(batch, m):
    total = 0.0
    for k in range(1, m + 1):
        lo, hi = (k - 1) / m, k / m
        acc_sum = conf_sum = count = 0
        for conf, corr in zip(batch.confidence, batch.correct):
            if (lo < conf <= hi) or (k == 1 and conf == 0.0):
                count += 1
                acc_sum += 1.0 if corr else 0.0
                conf_sum += conf
        if count:
            total += count / batch.n * abs(acc_sum / count - conf_sum / count)
    return total


def _smece_loops(batch, h=0.05):
    total = 0.0
    for i in range(batch.n):
        num = den = 0.0
        for j in range(batch.n):
            w = math.exp(-((batch.confidence[i] - batch.confidence[j]) ** 2) / (2 * h * h))
            num += w * (1.0 if batch.correct[j] else 0.0)
            den += w
        total += abs(num / den - batch.confidence[i])
    return total / batch.n


def _auroc_loops(batch):
    pos = batch.confidence[batch.correct]
    neg = batch.confidence[~batch.correct]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else (0.5 if p == q else 0.0)
    return wins / (len(pos) * len(neg))


ALL_CHECKS = [
    ("combined-scale-gradient-vs-fd", check_combined_gradient),
    ("end-to-end-autodiff", check_end_to_end_gradient),
    ("init-neutrality", check_init_neutrality),
    ("rank-preservation", check_rank_preservation),
    ("metric-brute-force-oracles", check_metric_oracles),
    ("planted-temperature-recovery", check_planted_temperature),
]


def run_all(report=print):
    failures = 0
    for name, fn in ALL_CHECKS:
        ok, detail = fn()
        report(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            failures += 1
    return failures
