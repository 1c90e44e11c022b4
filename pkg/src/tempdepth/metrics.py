"""Depth accuracy and flow-warped temporal consistency metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyInputError, PreconditionError, SizeError


@dataclass
class MetricsReport:
    abs_rel: float | None = None
    sq_rel: float | None = None
    rmse: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    delta3: float | None = None
    qtc: float | None = None
    rtc: float | None = None

    def to_dict(self) -> dict[str, float]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _same_shape(*grids):
    shapes = {np.shape(g) for g in grids}
    if len(shapes) != 1:
        raise SizeError(f"inconsistent grid shapes: {sorted(shapes)}")


def depth_metrics(pred: np.ndarray, gt: np.ndarray, cap: float = 80.0,
                  valid: np.ndarray | None = None) -> MetricsReport:
    """Abs Rel, Sq Rel, RMSE and threshold accuracies over pixels with gt in (0, cap]."""
    _same_shape(pred, gt)
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    ok = np.isfinite(gt) & (gt > 0) & (gt <= cap) & np.isfinite(pred) & (pred > 0)
    if valid is not None:
        ok &= np.asarray(valid, dtype=bool)
    if not ok.any():
        raise EmptyInputError("no valid pixels to evaluate")
    p, g = pred[ok], gt[ok]
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff * diff / g)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


def backward_warp(prev: np.ndarray, flow: np.ndarray,
                  prev_valid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly sample ``prev`` at ``p + flow(p)``.

    ``flow`` is ``(2, H, W)`` holding (dx, dy) in pixels. A pixel is invalid if
    any of the four bilinear corners lies outside the grid or on an invalid
    source pixel; exact integer positions use just one corner.
    """
    prev = np.asarray(prev, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape != (2, *prev.shape):
        raise SizeError(f"flow {flow.shape} does not match depth {prev.shape}")
    h, w = prev.shape
    if prev_valid is None:
        prev_valid = np.isfinite(prev) & (prev > 0)
    prev_valid = np.asarray(prev_valid, dtype=bool)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = xs + flow[0]
    sy = ys + flow[1]
    finite = np.isfinite(sx) & np.isfinite(sy)
    sx = np.where(finite, sx, -1.0)
    sy = np.where(finite, sy, -1.0)
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    warped = np.zeros((h, w))
    valid = finite.copy()
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            wgt = wy * wx
            used = wgt > 0
            xi, yi = x0 + dx, y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            xc, yc = np.clip(xi, 0, w - 1), np.clip(yi, 0, h - 1)
            src_ok = inside & prev_valid[yc, xc]
            valid &= ~used | src_ok
            warped += np.where(used & src_ok, wgt * np.where(src_ok, prev[yc, xc], 0.0), 0.0)
    warped[~valid] = 0.0
    return warped, valid.astype(np.uint8)


def _tc_inputs(d, dw, k):
    _same_shape(d, dw, k)
    d = np.asarray(d, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    k = np.asarray(k).astype(bool)
    if not k.any():
        raise EmptyInputError("validity mask is empty")
    if np.any(d[k] <= 0):
        raise PreconditionError("depth must be positive at valid pixels")
    return d[k], dw[k]


def qtc(d: np.ndarray, dw: np.ndarray, k: np.ndarray) -> float:
    """Mean relative change ``|d - dw| / d`` over the validity mask (also called aTC)."""
    dv, wv = _tc_inputs(d, dw, k)
    return float(np.mean(np.abs(dv - wv) / dv))


def rtc(d: np.ndarray, dw: np.ndarray, k: np.ndarray, thr: float = 1.25) -> float:
    """Fraction of valid pixels with ``max(d/dw, dw/d) < thr``."""
    dv, wv = _tc_inputs(d, dw, k)
    if np.any(wv <= 0):
        raise PreconditionError("warped depth must be positive at valid pixels")
    ratio = np.maximum(dv / wv, wv / dv)
    return float(np.mean(ratio < thr))


def temporal_consistency(dt: np.ndarray, dprev: np.ndarray, flow: np.ndarray,
                         thr: float = 1.25, valid: np.ndarray | None = None) -> MetricsReport:
    """Warp the previous prediction onto the current one and score both TC metrics."""
    warped, k = backward_warp(dprev, flow)
    k = k.astype(bool) & np.isfinite(dt) & (np.asarray(dt) > 0) & (warped > 0)
    if valid is not None:
        k &= np.asarray(valid, dtype=bool)
    return MetricsReport(qtc=qtc(dt, warped, k), rtc=rtc(dt, warped, k, thr))
