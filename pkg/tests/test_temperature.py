"""Global temperature scaling: the softmax identity at T=1, hand values,
grid fitting with planted temperatures, and the fit guarantees."""

import numpy as np
import pytest

from tempcal.errors import EmptyBatch, NonPositiveTemperature
from tempcal.metrics import PredictionBatch, ece
from tempcal.temperature import TemperatureGrid, apply_temperature, fit_temperature


def calibrated_logit_set(n, c, seed, group=50, spread=1.5):
    """Construction with empirical accuracy pinned to confidence: samples
    sharing one logit vector keep the argmax label for exactly
    round(p_max * group) of the group."""
    rng = np.random.default_rng(seed)
    logits, labels = [], []
    for _ in range(n // group):
        vec = rng.normal(0.0, spread, size=c)
        p = np.exp(vec - vec.max())
        p /= p.sum()
        top = int(np.argmax(p))
        k = int(round(float(p[top]) * group))
        others = [i for i in range(c) if i != top]
        lab = [top] * k + [others[i % len(others)] for i in range(group - k)]
        logits.extend([vec] * group)
        labels.extend(lab)
    return np.asarray(logits), np.asarray(labels, dtype=np.intp)


class TestApplyTemperature:
    def test_identity_at_one_is_bitwise_softmax(self, rng):
        logits = rng.normal(0, 3, size=(10, 6))
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        expected = e / e.sum(axis=1, keepdims=True)
        assert np.array_equal(apply_temperature(logits, 1.0), expected)

    def test_two_logit_hand_value(self):
        probs = apply_temperature(np.array([2.0, 0.0]), 2.0)
        assert probs[0] == pytest.approx(0.7310585786300049, abs=1e-12)
        assert probs[1] == pytest.approx(0.2689414213699951, abs=1e-12)

    def test_large_temperature_approaches_uniform(self):
        probs = apply_temperature(np.array([2.0, 0.0]), 1e6)
        np.testing.assert_allclose(probs, 0.5, atol=1e-6)
        wide = apply_temperature(np.array([5.0, 1.0, -2.0]), 1e6)
        np.testing.assert_allclose(wide, 1 / 3, atol=7e-6 / 3)  # spread/T bound

    def test_argmax_preserved(self, rng):
        for _ in range(300):
            logits = rng.normal(0, 4, size=7)
            t = float(rng.uniform(0.05, 20))
            assert np.argmax(apply_temperature(logits, t)) == np.argmax(logits)

    def test_nonpositive_rejected(self):
        with pytest.raises(NonPositiveTemperature):
            apply_temperature(np.array([1.0, 0.0]), 0.0)


class TestTemperatureGrid:
    def test_default_grid(self):
        grid = TemperatureGrid()
        assert grid.values[0] == 0.1
        assert grid.values[-1] == 10.0
        assert len(grid.values) == 100
        assert 1.0 in grid.values and 2.0 in grid.values

    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError):
            TemperatureGrid([1.0, 1.0])
        with pytest.raises(NonPositiveTemperature):
            TemperatureGrid([0.0, 1.0])


class TestFitTemperature:
    @pytest.mark.parametrize("t0", [0.5, 2.0, 3.0])
    def test_planted_temperature_recovered(self, t0):
        logits, labels = calibrated_logit_set(5000, 10, seed=42)
        t_star, _ = fit_temperature(logits * t0, labels)
        assert t_star == t0

    def test_already_calibrated_returns_one(self):
        logits, labels = calibrated_logit_set(5000, 10, seed=7)
        t_star, _ = fit_temperature(logits, labels)
        assert t_star == 1.0

    def test_single_grid_value(self, rng):
        logits = rng.normal(size=(50, 4))
        labels = rng.integers(0, 4, size=50)
        t_star, _ = fit_temperature(logits, labels, grid=TemperatureGrid([1.0]))
        assert t_star == 1.0

    def test_post_fit_ece_never_worse_than_unit(self, rng):
        for seed in range(5):
            r = np.random.default_rng(seed)
            logits = r.normal(0, 3, size=(400, 5))
            labels = r.integers(0, 5, size=400)
            t_star, best = fit_temperature(logits, labels)
            at_unit = ece(PredictionBatch.from_probs(apply_temperature(logits, 1.0), labels))
            assert best <= at_unit

    def test_accuracy_unchanged_across_grid(self, rng):
        logits = rng.normal(0, 3, size=(200, 6))
        labels = rng.integers(0, 6, size=200)
        accs = set()
        for t in TemperatureGrid([0.1, 0.7, 1.0, 3.0, 10.0]).values:
            probs = apply_temperature(logits, t)
            accs.add(float((probs.argmax(axis=1) == labels).mean()))
        assert len(accs) == 1

    def test_deterministic(self, rng):
        logits = rng.normal(size=(300, 4))
        labels = rng.integers(0, 4, size=300)
        assert fit_temperature(logits, labels) == fit_temperature(logits, labels)

    def test_tie_breaks_to_smallest(self):
        # two samples, both always correct with confidence 1 bin regardless
        logits = np.array([[10.0, 0.0], [9.0, 0.0]])
        labels = np.array([0, 0])
        t_star, _ = fit_temperature(logits, labels, grid=TemperatureGrid([0.5, 1.0]))
        assert t_star == 0.5

    def test_nll_criterion_mode(self):
        # labels sampled from softmax(logits) make T0 the NLL-optimal rescale
        rng = np.random.default_rng(3)
        logits = rng.normal(0, 1.5, size=(4000, 6))
        probs = apply_temperature(logits, 1.0)
        labels = np.array([rng.choice(6, p=p) for p in probs])
        t_star, score = fit_temperature(logits * 2.0, labels, criterion="nll")
        assert 1.8 <= t_star <= 2.2
        assert score > 0

    def test_empty_rejected(self):
        with pytest.raises(EmptyBatch):
            fit_temperature(np.zeros((0, 3)), np.zeros(0, dtype=int))
