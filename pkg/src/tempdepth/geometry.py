"""Surface normals from depth via a normalized 3x3 Sobel pair."""

from __future__ import annotations

import numpy as np

from .errors import SizeError


def depth_validity(depth: np.ndarray) -> np.ndarray:
    """Pixels with finite, strictly positive depth."""
    depth = np.asarray(depth)
    return np.isfinite(depth) & (depth > 0)


def sobel_validity(valid: np.ndarray) -> np.ndarray:
    """A gradient is valid only if its whole 3x3 replicate-padded footprint is."""
    p = np.pad(np.asarray(valid, dtype=bool), 1, mode="edge")
    h, w = valid.shape
    out = np.ones((h, w), dtype=bool)
    for dy in range(3):
        for dx in range(3):
            out &= p[dy : dy + h, dx : dx + w]
    return out


def _check_depth(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise SizeError(f"depth must be 2-D, got shape {depth.shape}")
    if depth.shape[0] < 3 or depth.shape[1] < 3:
        raise SizeError(f"depth must be at least 3x3, got {depth.shape}")
    return depth


def sobel_gradients(
    depth: np.ndarray, valid: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel depth slope along x (columns) and y (rows).

    The Sobel responses are divided by 8 so a unit ramp ``d = x`` gives
    exactly 1.0. Borders use replicate padding. Where the 3x3 footprint
    touches an invalid pixel both gradients are 0.
    """
    depth = _check_depth(depth)
    if valid is None:
        valid = depth_validity(depth)
    filled = np.where(valid, depth, 0.0)
    p = np.pad(filled, 1, mode="edge")

    gx = (
        (p[:-2, 2:] - p[:-2, :-2])
        + 2.0 * (p[1:-1, 2:] - p[1:-1, :-2])
        + (p[2:, 2:] - p[2:, :-2])
    ) / 8.0
    gy = (
        (p[2:, :-2] - p[:-2, :-2])
        + 2.0 * (p[2:, 1:-1] - p[:-2, 1:-1])
        + (p[2:, 2:] - p[:-2, 2:])
    ) / 8.0

    ok = sobel_validity(valid)
    gx[~ok] = 0.0
    gy[~ok] = 0.0
    return gx, gy


def normals_from_depth(depth: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Camera-facing unit normals ``normalize(-gx, -gy, 1)`` as a ``(3, H, W)`` grid.

    Pixels without a valid Sobel footprint get (0, 0, 1); use
    :func:`sobel_validity` to exclude them downstream.
    """
    gx, gy = sobel_gradients(depth, valid)
    norm = np.sqrt(gx * gx + gy * gy + 1.0)
    return np.stack([-gx / norm, -gy / norm, 1.0 / norm])


def plane_normal(a: float, b: float) -> np.ndarray:
    """Analytic normal of the plane ``d = a*x + b*y + c`` in the same convention."""
    v = np.array([-a, -b, 1.0])
    return v / np.linalg.norm(v)
