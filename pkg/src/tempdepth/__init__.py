"""Numerical core for surface-normal-guided temporal consistency in video depth."""

from .diffmask import MaskConfig, difference_mask
from .losses import LossConfig
from .synthetic import SceneObject, SceneSpec, render_sequence
from .temporal import AttentionWeights

__all__ = [
    "AttentionWeights",
    "LossConfig",
    "MaskConfig",
    "SceneObject",
    "SceneSpec",
    "difference_mask",
    "render_sequence",
]
__version__ = "0.1.0"
