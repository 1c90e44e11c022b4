"""Difference mask from the temporal variance of surface normals.

Pipeline: per-pixel directional variance of two normal maps, a camera-motion
baseline taken as the histogram mode of that variance, a strict threshold at
``baseline + alpha`` (raw mask), then morphological refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyInputError, PreconditionError, SizeError
from .geometry import depth_validity, normals_from_depth, sobel_validity

UNIT_TOL = 1e-5


@dataclass(frozen=True)
class MaskConfig:
    alpha: float = 0.05
    histogram_bins: int = 64
    refine_open_radius: int = 0
    refine_close_radius: int = 3

    def __post_init__(self):
        if self.alpha < 0:
            raise PreconditionError(f"alpha must be >= 0, got {self.alpha}")
        if self.histogram_bins < 2:
            raise PreconditionError(f"histogram_bins must be >= 2, got {self.histogram_bins}")
        if self.refine_open_radius < 0 or self.refine_close_radius < 0:
            raise PreconditionError("refinement radii must be >= 0")


@dataclass
class MaskResult:
    normals0: np.ndarray
    normals1: np.ndarray
    variance: np.ndarray
    valid: np.ndarray
    baseline: float
    raw: np.ndarray
    refined: np.ndarray

    @property
    def dynamic_fraction(self) -> float:
        return float(self.refined.mean())


def _check_normals(n: np.ndarray, name: str) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    if n.ndim != 3 or n.shape[0] != 3:
        raise SizeError(f"{name} must be (3, H, W), got {n.shape}")
    norms = np.sqrt((n * n).sum(axis=0))
    if not np.all(np.abs(norms - 1.0) < UNIT_TOL):
        raise PreconditionError(f"{name} contains non-unit vectors")
    return n


def directional_variance(n0: np.ndarray, n1: np.ndarray) -> np.ndarray:
    """Sum over x, y, z of the per-pixel population variance across the two frames."""
    n0 = _check_normals(n0, "n0")
    n1 = _check_normals(n1, "n1")
    if n0.shape != n1.shape:
        raise SizeError(f"normal maps differ in shape: {n0.shape} vs {n1.shape}")
    frames = np.stack([n0, n1])  # (N=2, 3, H, W)
    mean = frames.mean(axis=0)
    return ((frames - mean) ** 2).mean(axis=0).sum(axis=0)


def motion_baseline(
    var: np.ndarray, cfg: MaskConfig = MaskConfig(), valid: np.ndarray | None = None
) -> float:
    """Center of the most populated histogram bin of ``var`` over ``[0, max]``.

    Ties go to the lowest bin. A map that is identically zero has baseline 0.
    """
    var = np.asarray(var, dtype=np.float64)
    values = var[valid.astype(bool)] if valid is not None else var.ravel()
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise EmptyInputError("no valid variance values")
    top = float(values.max())
    if top <= 0.0:
        return 0.0
    counts, edges = np.histogram(values, bins=cfg.histogram_bins, range=(0.0, top))
    k = int(np.argmax(counts))
    return float(0.5 * (edges[k] + edges[k + 1]))


def raw_mask(
    var: np.ndarray,
    baseline: float,
    cfg: MaskConfig = MaskConfig(),
    valid: np.ndarray | None = None,
) -> np.ndarray:
    if baseline < 0:
        raise PreconditionError(f"baseline must be >= 0, got {baseline}")
    out = np.asarray(var) > baseline + cfg.alpha
    if valid is not None:
        out &= valid.astype(bool)
    return out.astype(np.uint8)


def disk(radius: int) -> np.ndarray:
    """Digital disk ``x^2 + y^2 <= (r + 1/2)^2``; radius 1 is the full 3x3 square."""
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy) <= (r + 0.5) ** 2


def _erode(mask: np.ndarray, se: np.ndarray) -> np.ndarray:
    return ndimage.grey_erosion(mask, footprint=se, mode="nearest")


def _dilate(mask: np.ndarray, se: np.ndarray) -> np.ndarray:
    return ndimage.grey_dilation(mask, footprint=se, mode="nearest")


def refine_mask(
    raw: np.ndarray, normals: np.ndarray | None = None, cfg: MaskConfig = MaskConfig()
) -> np.ndarray:
    """Opening then closing with disk structuring elements.

    Pixels outside the grid behave as copies of the nearest border pixel, so
    regions touching the border are not eaten away. ``normals`` only has to
    match the mask's spatial size.
    """
    raw = np.asarray(raw).astype(np.uint8)
    if normals is not None and np.shape(normals)[-2:] != raw.shape:
        raise SizeError(f"normals {np.shape(normals)} do not match mask {raw.shape}")
    out = raw
    if cfg.refine_open_radius > 0:
        se = disk(cfg.refine_open_radius)
        out = _dilate(_erode(out, se), se)
    if cfg.refine_close_radius > 0:
        se = disk(cfg.refine_close_radius)
        out = _erode(_dilate(out, se), se)
    return out


def mask_loss(md: np.ndarray, ml: np.ndarray) -> float:
    """Mean squared difference between the raw mask and a soft refined mask."""
    md = np.asarray(md, dtype=np.float64)
    ml = np.asarray(ml, dtype=np.float64)
    if md.shape != ml.shape:
        raise SizeError(f"mask shapes differ: {md.shape} vs {ml.shape}")
    return float(np.mean((md - ml) ** 2))


def difference_mask(
    depth0: np.ndarray, depth1: np.ndarray, cfg: MaskConfig = MaskConfig()
) -> MaskResult:
    """Full pipeline from two depth maps to the refined mask."""
    depth0 = np.asarray(depth0, dtype=np.float64)
    depth1 = np.asarray(depth1, dtype=np.float64)
    if depth0.shape != depth1.shape:
        raise SizeError(f"depth maps differ in shape: {depth0.shape} vs {depth1.shape}")
    v0, v1 = depth_validity(depth0), depth_validity(depth1)
    n0 = normals_from_depth(depth0, v0)
    n1 = normals_from_depth(depth1, v1)
    valid = sobel_validity(v0) & sobel_validity(v1)
    var = directional_variance(n0, n1)
    base = motion_baseline(var, cfg, valid)
    md = raw_mask(var, base, cfg, valid)
    ml = refine_mask(md, n0, cfg)
    return MaskResult(n0, n1, var, valid, base, md, ml)
