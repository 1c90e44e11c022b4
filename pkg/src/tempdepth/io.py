"""Readers and writers for on-disk rasters, masks, feature grids and reports.

In memory every grid is top-to-bottom and channel-first:
depth ``(H, W)``, normals ``(3, H, W)``, flow ``(2, H, W)``, features ``(C, H, W)``.
PFM stores rows bottom-to-top and pixels interleaved; the flip happens here only.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from .errors import FormatError, PreconditionError, TruncationError

FGRID_MAGIC = b"FGRD"
FGRID_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class RasterHeader:
    width: int
    height: int
    channels: int
    scale_endianness: float

    @property
    def little_endian(self) -> bool:
        return self.scale_endianness < 0

    @property
    def payload_bytes(self) -> int:
        return self.width * self.height * self.channels * 4


def _read_exact(f: BinaryIO, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncationError(f"expected {n} payload bytes, got {len(buf)}")
    return buf


def _header_line(f: BinaryIO) -> str:
    line = f.readline(256)
    if not line.endswith(b"\n"):
        raise FormatError("unterminated header line")
    try:
        return line.decode("ascii").strip()
    except UnicodeDecodeError as exc:
        raise FormatError("non-ASCII header") from exc


def read_pfm_header(f: BinaryIO) -> RasterHeader:
    magic = _header_line(f)
    if magic == "Pf":
        channels = 1
    elif magic == "PF":
        channels = 3
    else:
        raise FormatError(f"bad PFM magic {magic!r}")
    dims = _header_line(f).split()
    if len(dims) != 2:
        raise FormatError(f"bad PFM dimension line {dims!r}")
    try:
        width, height = int(dims[0]), int(dims[1])
        scale = float(_header_line(f))
    except ValueError as exc:
        raise FormatError("unparsable PFM header") from exc
    if width < 1 or height < 1:
        raise FormatError(f"PFM dimensions must be positive, got {width}x{height}")
    if scale == 0.0 or not np.isfinite(scale):
        raise FormatError(f"bad PFM scale {scale}")
    return RasterHeader(width, height, channels, scale)


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into a float32 array, ``(H, W)`` or ``(3, H, W)``."""
    with open(path, "rb") as f:
        hdr = read_pfm_header(f)
        payload = _read_exact(f, hdr.payload_bytes)
    dtype = np.dtype("<f4") if hdr.little_endian else np.dtype(">f4")
    data = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    data = data.reshape(hdr.height, hdr.width, hdr.channels)[::-1]
    if hdr.channels == 1:
        return np.ascontiguousarray(data[..., 0])
    return np.ascontiguousarray(data.transpose(2, 0, 1))


def write_pfm(grid: np.ndarray, path: str | Path) -> None:
    """Write a ``(H, W)`` or ``(3, H, W)`` grid as little-endian PFM."""
    grid = np.asarray(grid)
    if grid.ndim == 2:
        hwc = grid[..., None]
        magic = b"Pf"
    elif grid.ndim == 3 and grid.shape[0] == 3:
        hwc = grid.transpose(1, 2, 0)
        magic = b"PF"
    else:
        raise PreconditionError(f"PFM needs 1 or 3 channels, got shape {grid.shape}")
    height, width = hwc.shape[:2]
    if height < 1 or width < 1:
        raise PreconditionError("cannot write an empty grid")
    payload = np.ascontiguousarray(hwc[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(magic + b"\n" + f"{width} {height}\n".encode() + b"-1.0\n")
        f.write(payload)


def read_flow(path: str | Path) -> np.ndarray:
    """Flow is a 3-channel PFM whose third channel is ignored."""
    grid = read_pfm(path)
    if grid.ndim != 3:
        raise FormatError("flow PFM must have 3 channels")
    return grid[:2].copy()


def write_flow(flow: np.ndarray, path: str | Path) -> None:
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise PreconditionError(f"flow must be (2, H, W), got {flow.shape}")
    write_pfm(np.concatenate([flow, np.zeros_like(flow[:1])]), path)


def _pgm_tokens(f: BinaryIO, count: int) -> list[bytes]:
    tokens: list[bytes] = []
    tok = b""
    while len(tokens) < count:
        c = f.read(1)
        if not c:
            raise FormatError("truncated PGM header")
        if c == b"#" and not tok:
            f.readline()
            continue
        if c.isspace():
            if tok:
                tokens.append(tok)
                tok = b""
        else:
            tok += c
    return tokens


def read_mask_pgm(path: str | Path) -> np.ndarray:
    """Read a binary P5 PGM as a uint8 {0,1} mask (pixel > 127 is 1)."""
    with open(path, "rb") as f:
        magic, w, h, maxval = _pgm_tokens(f, 4)
        if magic != b"P5":
            raise FormatError(f"bad PGM magic {magic!r}")
        try:
            width, height, maxv = int(w), int(h), int(maxval)
        except ValueError as exc:
            raise FormatError("unparsable PGM header") from exc
        if maxv != 255:
            raise FormatError(f"PGM maxval must be 255, got {maxv}")
        if width < 1 or height < 1:
            raise FormatError("PGM dimensions must be positive")
        payload = _read_exact(f, width * height)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return (pixels > 127).astype(np.uint8)


def write_mask_pgm(mask: np.ndarray, path: str | Path) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.size == 0:
        raise PreconditionError(f"mask must be a non-empty 2-D grid, got {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise PreconditionError("mask values must be 0 or 1")
    height, width = mask.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode())
        f.write((mask.astype(np.uint8) * 255).tobytes())


def read_fgrid(path: str | Path) -> np.ndarray:
    """Read a feature grid file into a float32 ``(C, H, W)`` array."""
    with open(path, "rb") as f:
        head = f.read(FGRID_HEADER.size)
        if len(head) < FGRID_HEADER.size:
            raise TruncationError("FGRID header shorter than 16 bytes")
        magic, c, h, w = FGRID_HEADER.unpack(head)
        if magic != FGRID_MAGIC:
            raise FormatError(f"bad FGRID magic {magic!r}")
        payload = _read_exact(f, c * h * w * 4)
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(c, h, w)


def write_fgrid(grid: np.ndarray, path: str | Path) -> None:
    grid = np.asarray(grid)
    if grid.ndim != 3:
        raise PreconditionError(f"feature grid must be (C, H, W), got {grid.shape}")
    c, h, w = grid.shape
    with open(path, "wb") as f:
        f.write(FGRID_HEADER.pack(FGRID_MAGIC, c, h, w))
        f.write(np.ascontiguousarray(grid, dtype="<f4").tobytes())


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_report(report: dict[str, Any], path: str | Path | None = None) -> str:
    """Serialize a flat name -> number report; optionally also write it to ``path``."""
    text = json.dumps({k: _jsonable(v) for k, v in report.items()}, indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def read_report(path: str | Path) -> dict[str, Any]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise FormatError("report must be a JSON object")
    return data
