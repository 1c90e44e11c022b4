"""Training losses, their analytic gradients, and a central-difference oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DegenerateGradientError,
    EmptyInputError,
    NumericError,
    PreconditionError,
    SizeError,
)


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.85
    silog_scale: float = 10.0
    loss_alpha: float = 10.0
    eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise PreconditionError(f"lambda must be in [0, 1], got {self.lam}")
        if self.silog_scale <= 0:
            raise PreconditionError("silog_scale must be positive")
        if self.loss_alpha < 0:
            raise PreconditionError("loss_alpha must be >= 0")
        if self.eps <= 0:
            raise PreconditionError("eps must be positive")


@dataclass(frozen=True)
class LossReport:
    depth_loss: float
    normal_loss: float
    mask_loss: float
    total: float


def _overlap(pred, gt, valid):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise SizeError(f"pred {pred.shape} and gt {gt.shape} differ")
    ok = np.isfinite(pred) & np.isfinite(gt) & (gt > 0)
    if valid is not None:
        ok &= np.asarray(valid, dtype=bool)
    if not ok.any():
        raise EmptyInputError("no valid overlap between prediction and ground truth")
    return pred, gt, ok


def _log_residual(pred, gt, ok, eps):
    g = np.zeros_like(pred)
    g[ok] = np.log(np.maximum(pred[ok], eps)) - np.log(np.maximum(gt[ok], eps))
    return g


def silog(pred: np.ndarray, gt: np.ndarray, cfg: LossConfig = LossConfig(),
          valid: np.ndarray | None = None) -> float:
    """``scale * sqrt(mean(g^2) - lam * mean(g)^2)`` with ``g = log pred - log gt``."""
    pred, gt, ok = _overlap(pred, gt, valid)
    g = _log_residual(pred, gt, ok, cfg.eps)[ok]
    d = np.mean(g * g) - cfg.lam * np.mean(g) ** 2
    return float(cfg.silog_scale * np.sqrt(max(d, 0.0)))


def silog_grad(pred: np.ndarray, gt: np.ndarray, cfg: LossConfig = LossConfig(),
               valid: np.ndarray | None = None) -> np.ndarray:
    """Gradient of :func:`silog` with respect to ``pred``; zero off the valid overlap
    and where ``pred`` is clamped at ``eps``."""
    pred, gt, ok = _overlap(pred, gt, valid)
    g = _log_residual(pred, gt, ok, cfg.eps)
    n = np.count_nonzero(ok)
    gv = g[ok]
    mean_g = np.mean(gv)
    d = np.mean(gv * gv) - cfg.lam * mean_g**2
    if d <= 0.0:
        raise DegenerateGradientError("silog is zero; its gradient is undefined")
    dloss_dg = cfg.silog_scale * (gv - cfg.lam * mean_g) / (n * np.sqrt(d))
    grad = np.zeros_like(pred)
    live = pred[ok] > cfg.eps
    grad[ok] = np.where(live, dloss_dg / np.where(live, pred[ok], 1.0), 0.0)
    return grad


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SizeError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def mse_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gradient of :func:`mse` with respect to ``a``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SizeError(f"shapes differ: {a.shape} vs {b.shape}")
    return 2.0 * (a - b) / a.size


def total_loss(depth_loss: float, normal_loss: float, mask_loss: float,
               cfg: LossConfig = LossConfig()) -> LossReport:
    """Depth loss plus ``loss_alpha`` times each of the normal and mask losses."""
    parts = (depth_loss, normal_loss, mask_loss)
    if not all(np.isfinite(p) and p >= 0 for p in parts):
        raise PreconditionError(f"loss components must be finite and >= 0, got {parts}")
    total = depth_loss + cfg.loss_alpha * normal_loss + cfg.loss_alpha * mask_loss
    return LossReport(float(depth_loss), float(normal_loss), float(mask_loss), float(total))


def finite_diff(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every element."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite evaluation at element {i}")
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max|n|``, scaled by the largest gradient entry so that
    near-zero entries do not dominate."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-30)
    return float(np.abs(analytic - numeric).max() / denom)


def silog_log_domain_check(pred, gt, cfg: LossConfig = LossConfig(), step: float = 1e-4) -> float:
    """Compare the analytic SILog gradient against central differences taken in
    log-depth (``d loss / d log p = p * d loss / d p``)."""
    pred = np.asarray(pred, dtype=np.float64)
    analytic = silog_grad(pred, gt, cfg) * pred
    numeric = finite_diff(lambda u: silog(np.exp(u), gt, cfg), np.log(pred), step)
    return max_relative_error(analytic, numeric)


def gradcheck_suite(seed: int = 0, instances: int = 100, shape=(4, 4), step: float = 1e-4,
                    cfg: LossConfig = LossConfig(), inject_bug: bool = False) -> dict[str, float]:
    """Max relative errors of every analytic gradient over seeded random instances."""
    rng = np.random.default_rng(seed)
    worst = {"silog": 0.0, "mse": 0.0}
    for _ in range(instances):
        gt = rng.uniform(1.0, 80.0, size=shape)
        pred = gt * np.exp(rng.normal(0.0, 0.3, size=shape))
        analytic = silog_grad(pred, gt, cfg) * pred
        if inject_bug:
            analytic.flat[0] *= 1.5
        numeric = finite_diff(lambda u: silog(np.exp(u), gt, cfg), np.log(pred), step)
        worst["silog"] = max(worst["silog"], max_relative_error(analytic, numeric))

        a = rng.normal(size=shape)
        b = rng.normal(size=shape)
        numeric = finite_diff(lambda x: mse(x, b), a, step)
        worst["mse"] = max(worst["mse"], max_relative_error(mse_grad(a, b), numeric))
    return worst
