"""Feature-level temporal alignment: surface-normal similarity (dynamic area)
and masked static cross-attention, plus fusion into a single video feature.

Feature grids are ``(C, h, w)``; attention operates on their flattened
``(L, C)`` form with ``L = h * w`` locations in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeError


@dataclass
class AttentionWeights:
    """Projection matrices and pointwise (1x1) kernels for one channel width ``C``.

    Kernels are ``(C, 2C)`` with a length-``C`` bias. ``ms_scale=None`` means
    the conventional ``1/sqrt(C)``; the similarity product is unscaled by default.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    dyna_kernel: np.ndarray
    dyna_bias: np.ndarray
    static_kernel: np.ndarray
    static_bias: np.ndarray
    fuse_kernel: np.ndarray
    fuse_bias: np.ndarray
    sns_scale: float = 1.0
    ms_scale: float | None = None
    normalize_sns: bool = False

    def __post_init__(self):
        c = self.channels
        for name in ("w_q", "w_k", "w_v"):
            if getattr(self, name).shape != (c, c):
                raise SizeError(f"{name} must be ({c}, {c})")
        for name in ("dyna", "static", "fuse"):
            if getattr(self, f"{name}_kernel").shape != (c, 2 * c):
                raise SizeError(f"{name}_kernel must be ({c}, {2 * c})")
            if getattr(self, f"{name}_bias").shape != (c,):
                raise SizeError(f"{name}_bias must be ({c},)")

    @property
    def channels(self) -> int:
        return self.w_q.shape[0]

    @property
    def attention_scale(self) -> float:
        return 1.0 / np.sqrt(self.channels) if self.ms_scale is None else self.ms_scale

    @classmethod
    def identity(cls, c: int) -> "AttentionWeights":
        """Identity projections; every kernel passes the first ``C`` input channels."""
        eye = np.eye(c)
        passthrough = np.hstack([eye, np.zeros((c, c))])
        zero = np.zeros(c)
        return cls(eye, eye.copy(), eye.copy(), passthrough, zero, passthrough.copy(),
                   zero.copy(), passthrough.copy(), zero.copy())

    @classmethod
    def random(cls, c: int, seed: int = 0) -> "AttentionWeights":
        """Identity projections with seeded random refinement/fusion kernels."""
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(2 * c)
        eye = np.eye(c)
        kernels = [rng.normal(0.0, scale, size=(c, 2 * c)) for _ in range(3)]
        biases = [rng.normal(0.0, 0.1, size=c) for _ in range(3)]
        return cls(eye, eye.copy(), eye.copy(), kernels[0], biases[0], kernels[1],
                   biases[1], kernels[2], biases[2])

    def pack(self) -> tuple[np.ndarray, np.ndarray]:
        """``(3, C, C)`` q/k/v stack and ``(3, C, 2C+1)`` kernel stack (bias last column)."""
        qkv = np.stack([self.w_q, self.w_k, self.w_v])
        kern = np.stack([
            np.hstack([k, b[:, None]])
            for k, b in ((self.dyna_kernel, self.dyna_bias),
                         (self.static_kernel, self.static_bias),
                         (self.fuse_kernel, self.fuse_bias))
        ])
        return qkv, kern

    @classmethod
    def unpack(cls, qkv: np.ndarray, kern: np.ndarray) -> "AttentionWeights":
        qkv = np.asarray(qkv, dtype=np.float64)
        kern = np.asarray(kern, dtype=np.float64)
        if qkv.ndim != 3 or qkv.shape[0] != 3 or qkv.shape[1] != qkv.shape[2]:
            raise SizeError(f"q/k/v stack must be (3, C, C), got {qkv.shape}")
        c = qkv.shape[1]
        if kern.shape != (3, c, 2 * c + 1):
            raise SizeError(f"kernel stack must be (3, {c}, {2 * c + 1}), got {kern.shape}")
        return cls(qkv[0], qkv[1], qkv[2], kern[0, :, :-1], kern[0, :, -1],
                   kern[1, :, :-1], kern[1, :, -1], kern[2, :, :-1], kern[2, :, -1])


def _grid(z: np.ndarray, name: str) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3:
        raise SizeError(f"{name} must be (C, h, w), got {z.shape}")
    return z


def flatten(z: np.ndarray) -> np.ndarray:
    """``(C, h, w)`` -> ``(h*w, C)``."""
    return z.reshape(z.shape[0], -1).T


def unflatten(rows: np.ndarray, h: int, w: int) -> np.ndarray:
    return rows.T.reshape(-1, h, w)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def pointwise_conv(z: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """1x1 convolution: ``out[o] = sum_i kernel[o, i] * z[i] + bias[o]``."""
    z = _grid(z, "input")
    if kernel.shape[1] != z.shape[0]:
        raise SizeError(f"kernel expects {kernel.shape[1]} channels, got {z.shape[0]}")
    return np.einsum("oi,ihw->ohw", kernel, z) + bias[:, None, None]


def max_pool_mask(mask: np.ndarray, stride: int) -> np.ndarray:
    """Downsample a full-resolution mask: a patch is dynamic if any pixel in it is."""
    mask = np.asarray(mask)
    h, w = mask.shape
    if h % stride or w % stride:
        raise SizeError(f"mask {mask.shape} not divisible by stride {stride}")
    return mask.reshape(h // stride, stride, w // stride, stride).max(axis=(1, 3))


def _patches(grid: np.ndarray, stride: int) -> np.ndarray:
    """``(C, H, W)`` -> ``(h*w, C*stride*stride)`` flattened non-overlapping patches."""
    c, hh, ww = grid.shape
    h, w = hh // stride, ww // stride
    p = grid.reshape(c, h, stride, w, stride).transpose(1, 3, 0, 2, 4)
    return p.reshape(h * w, c * stride * stride)


def toy_feature_extractor(
    depth: np.ndarray,
    normals: np.ndarray,
    stride: int = 8,
    cd: int = 8,
    cn: int = 8,
    seed: int = 0,
    bias: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Patchify-and-project stand-in for a learned encoder.

    Each ``stride x stride`` patch is flattened and multiplied by a seeded
    Gaussian projection: depth patches to ``cd`` channels, normal patches to
    ``cn``. The projections depend only on ``seed``, so two frames of the
    same size always share them.
    """
    depth = np.asarray(depth, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if depth.ndim != 2 or normals.shape != (3, *depth.shape):
        raise SizeError(f"depth {depth.shape} and normals {normals.shape} are inconsistent")
    hh, ww = depth.shape
    if hh % stride or ww % stride:
        raise SizeError(f"frame {depth.shape} not divisible by stride {stride}")
    h, w = hh // stride, ww // stride

    rng = np.random.default_rng(seed)
    nd, nn = stride * stride, 3 * stride * stride
    proj_d = rng.normal(0.0, 1.0 / np.sqrt(nd), size=(nd, cd))
    proj_n = rng.normal(0.0, 1.0 / np.sqrt(nn), size=(nn, cn))
    bias_d = rng.normal(0.0, 0.1, size=cd) if bias else np.zeros(cd)
    bias_n = rng.normal(0.0, 0.1, size=cn) if bias else np.zeros(cn)

    zd = _patches(depth[None], stride) @ proj_d + bias_d
    zn = _patches(normals, stride) @ proj_n + bias_n
    return unflatten(zd, h, w), unflatten(zn, h, w)


def fuse_features(zd: np.ndarray, zn: np.ndarray) -> np.ndarray:
    """Channel concatenation, depth channels first."""
    zd, zn = _grid(zd, "zd"), _grid(zn, "zn")
    if zd.shape[1:] != zn.shape[1:]:
        raise SizeError(f"spatial mismatch: {zd.shape[1:]} vs {zn.shape[1:]}")
    return np.concatenate([zd, zn], axis=0)


def sns_similarity(
    zs_query: np.ndarray,
    zs_key: np.ndarray,
    mask: np.ndarray,
    scale: float = 1.0,
    normalize: bool = False,
) -> np.ndarray:
    """Row-softmax of ``(masked query) @ key^T`` as an ``(L0, L1)`` matrix.

    Query locations outside the mask become zero vectors, so their rows are
    exactly uniform.
    """
    q, k = _grid(zs_query, "zs_query"), _grid(zs_key, "zs_key")
    if q.shape != k.shape:
        raise SizeError(f"query {q.shape} and key {k.shape} differ")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != q.shape[1:]:
        raise SizeError(f"mask {mask.shape} is not at feature resolution {q.shape[1:]}")
    qf, kf = flatten(q), flatten(k)
    if normalize:
        qf = qf / np.maximum(np.linalg.norm(qf, axis=1, keepdims=True), 1e-12)
        kf = kf / np.maximum(np.linalg.norm(kf, axis=1, keepdims=True), 1e-12)
    qf = qf * mask.reshape(-1, 1)
    return softmax_rows(scale * (qf @ kf.T))


def sns_align(s: np.ndarray, zd_value: np.ndarray) -> np.ndarray:
    """Aligned value rows ``S @ flatten(value)``, shape ``(L0, Cd)``."""
    v = flatten(_grid(zd_value, "zd_value"))
    if s.ndim != 2 or s.shape[1] != v.shape[0]:
        raise SizeError(f"similarity {s.shape} does not match {v.shape[0]} value locations")
    return s @ v


def _check_pair(*grids) -> None:
    shapes = {np.shape(g) for g in grids}
    if len(shapes) != 1:
        raise SizeError(f"inconsistent feature grid shapes: {sorted(shapes)}")


@dataclass
class SNSDirection:
    similarity: np.ndarray
    aligned: np.ndarray  # (Cd, h, w)
    dyna: np.ndarray


def sns_direction(zd_a, zd_b, zn_a, zn_b, mask, weights: AttentionWeights) -> SNSDirection:
    """One direction: frame ``a`` queries frame ``b``."""
    zd_a, zd_b = _grid(zd_a, "zd"), _grid(zd_b, "zd")
    c, h, w = zd_a.shape
    if weights.channels != c:
        raise SizeError(f"weights are for {weights.channels} channels, features have {c}")
    s = sns_similarity(fuse_features(zd_a, zn_a), fuse_features(zd_b, zn_b), mask,
                       weights.sns_scale, weights.normalize_sns)
    aligned = unflatten(sns_align(s, zd_b), h, w)
    dyna = pointwise_conv(np.concatenate([zd_a, aligned]), weights.dyna_kernel, weights.dyna_bias)
    return SNSDirection(s, aligned, dyna)


def sns_forward(zd0, zd1, zn0, zn1, mask, weights: AttentionWeights) -> tuple[np.ndarray, np.ndarray]:
    """Bidirectional dynamic-area alignment, returns ``(Zdyna0, Zdyna1)``."""
    _check_pair(zd0, zd1)
    _check_pair(zn0, zn1)
    fwd = sns_direction(zd0, zd1, zn0, zn1, mask, weights)
    bwd = sns_direction(zd1, zd0, zn1, zn0, mask, weights)
    return fwd.dyna, bwd.dyna


@dataclass
class MSDirection:
    attention: np.ndarray
    value: np.ndarray  # (C, h, w) projected, masked key-side features
    aligned: np.ndarray  # (C, h, w)
    static: np.ndarray


def ms_direction(zd_a, zd_b, mask, weights: AttentionWeights) -> MSDirection:
    """Cross-attention restricted to the static area; ``a`` queries ``b``."""
    zd_a, zd_b = _grid(zd_a, "zd"), _grid(zd_b, "zd")
    c, h, w = zd_a.shape
    if weights.channels != c:
        raise SizeError(f"weights are for {weights.channels} channels, features have {c}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (h, w):
        raise SizeError(f"mask {mask.shape} is not at feature resolution {(h, w)}")
    keep = 1.0 - mask
    static_a = zd_a * keep
    static_b = zd_b * keep
    q = flatten(static_a) @ weights.w_q
    k = flatten(static_b) @ weights.w_k
    v = flatten(static_b) @ weights.w_v
    attn = softmax_rows(weights.attention_scale * (q @ k.T))
    aligned = unflatten(attn @ v, h, w)
    out = pointwise_conv(np.concatenate([aligned, static_a]), weights.static_kernel,
                         weights.static_bias)
    return MSDirection(attn, unflatten(v, h, w), aligned, out)


def ms_forward(zd0, zd1, mask, weights: AttentionWeights) -> tuple[np.ndarray, np.ndarray]:
    """Bidirectional static-area alignment, returns ``(Zstatic0, Zstatic1)``."""
    _check_pair(zd0, zd1)
    return (ms_direction(zd0, zd1, mask, weights).static,
            ms_direction(zd1, zd0, mask, weights).static)


def fuse_video_feature(zstatic: np.ndarray, zdyna: np.ndarray, weights: AttentionWeights) -> np.ndarray:
    zstatic, zdyna = _grid(zstatic, "zstatic"), _grid(zdyna, "zdyna")
    if zstatic.shape != zdyna.shape:
        raise SizeError(f"static {zstatic.shape} and dynamic {zdyna.shape} features differ")
    return pointwise_conv(np.concatenate([zstatic, zdyna]), weights.fuse_kernel, weights.fuse_bias)


def check_similarity(s: np.ndarray, tol: float = 1e-6) -> bool:
    """Row-stochastic, finite and nonnegative."""
    return bool(np.all(np.isfinite(s)) and np.all(s >= 0)
                and np.all(np.abs(s.sum(axis=1) - 1.0) <= tol))


def check_convex_hull(aligned: np.ndarray, value: np.ndarray, tol: float = 1e-6) -> bool:
    """Every aligned channel stays within ``[min, max]`` of the value channel."""
    a, v = flatten(_grid(aligned, "aligned")), flatten(_grid(value, "value"))
    lo, hi = v.min(axis=0), v.max(axis=0)
    return bool(np.all(a >= lo - tol) and np.all(a <= hi + tol))

