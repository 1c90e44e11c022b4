"""Analytic synthetic scenes: a slanted background plane plus moving objects.

Every frame carries exact depth, analytic normals, the sampling flow back to
the previous frame and the set of pixels whose generating surface changed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .errors import PreconditionError, SizeError

SHAPES = ("box", "sphere-cap")


@dataclass
class SceneObject:
    """A moving object.

    ``position`` is the top-left corner for a box and the center for a
    sphere-cap; ``size`` is (width, height) for a box and (diameter, diameter)
    for a sphere-cap. ``velocity`` is motion relative to the background in
    pixels per frame. The object's flat face (box) or rim (cap) sits
    ``depth_offset`` meters in front of the background at its initial center.
    """

    shape: str = "box"
    position: tuple[float, float] = (0.0, 0.0)
    size: tuple[float, float] = (8.0, 8.0)
    depth_offset: float = 5.0
    velocity: tuple[float, float] = (0.0, 0.0)
    bulge: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise PreconditionError(f"unknown shape {self.shape!r}")
        self.position = tuple(float(v) for v in self.position)
        self.velocity = tuple(float(v) for v in self.velocity)
        if np.isscalar(self.size):
            self.size = (float(self.size), float(self.size))
        self.size = tuple(float(v) for v in self.size)
        if min(self.size) <= 0:
            raise PreconditionError("object size must be positive")

    @property
    def moving(self) -> bool:
        return self.velocity != (0.0, 0.0)


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    background: tuple[float, float, float] = (0.0, 0.0, 10.0)
    objects: list[SceneObject] = field(default_factory=list)
    camera_shift: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise SizeError("scene must be at least 3x3")
        self.background = tuple(float(v) for v in self.background)
        self.camera_shift = tuple(float(v) for v in self.camera_shift)
        self.objects = [o if isinstance(o, SceneObject) else SceneObject(**o) for o in self.objects]

    def plane(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        a, b, c = self.background
        return a * x + b * y + c

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SceneSpec":
        return cls(**data)


@dataclass
class FramePacket:
    depth: np.ndarray  # (H, W)
    normals_gt: np.ndarray  # (3, H, W)
    flow_to_prev: np.ndarray  # (2, H, W): p + flow(p) samples the previous frame
    changed_gt: np.ndarray  # (H, W) uint8
    object_ids: np.ndarray  # (H, W), -1 for background
    warnings: list[str] = field(default_factory=list)


def _object_depth(obj: SceneObject, z_ref: float, xs, ys, ox: float, oy: float):
    """Depth, normal field and silhouette of one object placed at offset (ox, oy)."""
    h, w = xs.shape
    normals = np.zeros((3, h, w))
    if obj.shape == "box":
        x0, y0 = obj.position[0] + ox, obj.position[1] + oy
        inside = (xs >= x0) & (xs < x0 + obj.size[0]) & (ys >= y0) & (ys < y0 + obj.size[1])
        depth = np.full((h, w), z_ref)
        normals[2] = 1.0
        return depth, normals, inside

    cx, cy = obj.position[0] + ox, obj.position[1] + oy
    radius = obj.size[0] / 2.0
    dx, dy = xs - cx, ys - cy
    q = 1.0 - (dx * dx + dy * dy) / radius**2
    inside = q > 0
    root = np.sqrt(np.maximum(q, 1e-6))
    depth = z_ref - obj.bulge * root
    gx = obj.bulge * dx / (radius**2 * root)
    gy = obj.bulge * dy / (radius**2 * root)
    norm = np.sqrt(gx * gx + gy * gy + 1.0)
    normals[0], normals[1], normals[2] = -gx / norm, -gy / norm, 1.0 / norm
    return depth, normals, inside


def _object_center(obj: SceneObject) -> tuple[float, float]:
    if obj.shape == "box":
        return obj.position[0] + (obj.size[0] - 1) / 2.0, obj.position[1] + (obj.size[1] - 1) / 2.0
    return obj.position


def render_frame(spec: SceneSpec, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Depth, analytic normals and object ids at continuous time ``t`` (frames)."""
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    sx, sy = spec.camera_shift
    a, b, _ = spec.background
    depth = spec.plane(xs - t * sx, ys - t * sy)
    if not np.all(depth > 0):
        raise PreconditionError("background depth must be positive over the grid")
    normals = np.empty((3, spec.height, spec.width))
    n_bg = np.array([-a, -b, 1.0]) / np.sqrt(a * a + b * b + 1.0)
    normals[:] = n_bg[:, None, None]
    ids = np.full((spec.height, spec.width), -1, dtype=np.int32)

    for i, obj in enumerate(spec.objects):
        cx, cy = _object_center(obj)
        z_ref = float(spec.plane(np.float64(cx), np.float64(cy))) - obj.depth_offset
        ox = t * (obj.velocity[0] + sx)
        oy = t * (obj.velocity[1] + sy)
        d_obj, n_obj, inside = _object_depth(obj, z_ref, xs, ys, ox, oy)
        if np.any(d_obj[inside] <= 0):
            raise PreconditionError(f"object {i} has nonpositive depth")
        front = inside & (d_obj < depth)
        depth[front] = d_obj[front]
        normals[:, front] = n_obj[:, front]
        ids[front] = i
    return depth, normals, ids


def render_sequence(spec: SceneSpec, n_frames: int, frame_stride: int = 1) -> list[FramePacket]:
    """Render ``n_frames`` frames sampled every ``frame_stride`` time steps."""
    if n_frames < 1:
        raise PreconditionError("n_frames must be >= 1")
    if frame_stride < 1:
        raise PreconditionError("frame_stride must be >= 1")
    moving = np.array([o.moving for o in spec.objects] + [False])  # index -1 -> background
    sx, sy = spec.camera_shift
    packets: list[FramePacket] = []
    prev_ids = None
    for k in range(n_frames):
        t = k * frame_stride
        depth, normals, ids = render_frame(spec, t)
        flow = np.zeros((2, spec.height, spec.width))
        changed = np.zeros((spec.height, spec.width), dtype=np.uint8)
        if prev_ids is not None:
            flow[0], flow[1] = -frame_stride * sx, -frame_stride * sy
            for i, obj in enumerate(spec.objects):
                sel = ids == i
                flow[0][sel] = -frame_stride * (obj.velocity[0] + sx)
                flow[1][sel] = -frame_stride * (obj.velocity[1] + sy)
            changed = (moving[ids] | moving[prev_ids]).astype(np.uint8)
        warnings = [
            f"object {i} is outside the grid at frame {k}"
            for i in range(len(spec.objects))
            if not np.any(ids == i)
        ]
        packets.append(FramePacket(depth, normals, flow, changed, ids, warnings))
        prev_ids = ids
    return packets


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise SizeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def random_box_scene(
    seed: int, width: int = 64, height: int = 64, max_stride: int = 3
) -> SceneSpec:
    """One fronto-parallel box translating over a slanted ground-like plane.

    The box stays fully inside the grid for ``max_stride`` frames of motion.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(-0.3, 0.3)
    b = rng.uniform(0.6, 1.0)
    c = 40.0 + max(0.0, -a * (width - 1)) + rng.uniform(0.0, 10.0)
    bw, bh = (int(v) for v in rng.integers(8, 15, size=2))
    while True:
        vx, vy = (int(v) for v in rng.integers(-3, 4, size=2))
        if (vx, vy) != (0, 0):
            break
    reach_x, reach_y = max_stride * vx, max_stride * vy
    lo_x, hi_x = 2 + max(0, -reach_x), width - 2 - bw - max(0, reach_x)
    lo_y, hi_y = 2 + max(0, -reach_y), height - 2 - bh - max(0, reach_y)
    px = int(rng.integers(lo_x, hi_x + 1))
    py = int(rng.integers(lo_y, hi_y + 1))
    box = SceneObject(
        shape="box",
        position=(px, py),
        size=(bw, bh),
        depth_offset=float(rng.uniform(20.0, 30.0)),
        velocity=(vx, vy),
    )
    return SceneSpec(width, height, (a, b, c), [box], (0.0, 0.0), seed)


def random_camera_shift_scene(seed: int, width: int = 64, height: int = 64) -> SceneSpec:
    """A textureless slanted plane under pure global translation."""
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1.0, 1.0, size=2)
    c = 10.0 + abs(a) * (width + 10) + abs(b) * (height + 10)
    while True:
        sx, sy = (int(v) for v in rng.integers(-3, 4, size=2))
        if (sx, sy) != (0, 0):
            break
    return SceneSpec(width, height, (float(a), float(b), float(c)), [], (sx, sy), seed)
