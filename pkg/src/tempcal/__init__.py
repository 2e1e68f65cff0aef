"""Per-sample temperature calibration toolkit: a small differentiable vision
transformer, an adaptive temperature head, calibration metrics, post-hoc
temperature scaling, and a training/evaluation harness."""

__version__ = "0.1.0"
