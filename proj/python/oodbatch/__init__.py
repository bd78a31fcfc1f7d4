"""Balanced per-environment mini-batch training for out-of-distribution generalization."""

from ._core import (
    ConfigError,
    FormatError,
    apply_affine,
    enumerate_plans,
    forward,
    generate_synthetic,
    init_model,
    roc_auc,
    run_cli,
    sample_affine,
    wbce_loss,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "apply_affine",
    "enumerate_plans",
    "forward",
    "generate_synthetic",
    "init_model",
    "roc_auc",
    "run_cli",
    "sample_affine",
    "wbce_loss",
]
