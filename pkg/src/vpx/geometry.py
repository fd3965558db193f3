"""Pinhole camera model and depth-bin discretization.

Pixel ``i`` covers ``[i, i + 1)`` in continuous image coordinates, so its
center is at ``i + 0.5``. Depths and world coordinates are in millimeters.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

OUT_OF_RANGE = -1
DEFAULT_FOCAL = 285.71
DEFAULT_BIN_SIZE = 15.0
DEFAULT_NUM_BINS = 40


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @classmethod
    def centered(cls, width: int, height: int, focal: float = DEFAULT_FOCAL) -> "CameraIntrinsics":
        return cls(focal, focal, width / 2.0, height / 2.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


def project(point, cam: CameraIntrinsics):
    """World point(s) ``(..., 3)`` in mm -> continuous pixel coordinates ``(..., 2)``."""
    p = np.asarray(point, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project points with z <= 0")
    u = p[..., 0] * cam.fx / z + cam.cx
    v = p[..., 1] * cam.fy / z + cam.cy
    return np.stack([u, v], axis=-1)


def backproject(u, v, z, cam: CameraIntrinsics):
    """Pixel ``(u, v)`` at depth ``z`` mm -> world ``(x, y, z)`` mm. Broadcasts."""
    u, v, z = (np.asarray(a, dtype=np.float64) for a in (u, v, z))
    if np.any(z <= 0):
        raise ValueError("backproject needs z > 0")
    x = (u - cam.cx) * z / cam.fx
    y = (v - cam.cy) * z / cam.fy
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


@dataclass(frozen=True)
class DepthDiscretization:
    """A ``num_bins``-bin depth window; ``reference_z`` falls at the start of ``center_bin``."""

    reference_z: float
    bin_size: float = DEFAULT_BIN_SIZE
    num_bins: int = DEFAULT_NUM_BINS

    def __post_init__(self):
        if not self.bin_size > 0:
            raise ValueError(f"bin_size must be positive, got {self.bin_size}")
        if self.num_bins < 1:
            raise ValueError(f"num_bins must be >= 1, got {self.num_bins}")

    @property
    def center_bin(self) -> int:
        return self.num_bins // 2

    @property
    def z_min(self) -> float:
        return self.reference_z - self.center_bin * self.bin_size

    @property
    def z_max(self) -> float:
        return self.z_min + self.num_bins * self.bin_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DepthDiscretization":
        return cls(float(d["reference_z"]), float(d["bin_size"]), int(d["num_bins"]))


def discretize_depth(z: float, d: DepthDiscretization) -> int:
    """``floor((z - reference_z) / bin_size) + center_bin``, or ``OUT_OF_RANGE``."""
    b = math.floor((z - d.reference_z) / d.bin_size) + d.center_bin
    return b if 0 <= b < d.num_bins else OUT_OF_RANGE


def discretize_depths(z: np.ndarray, d: DepthDiscretization) -> np.ndarray:
    """Array form of :func:`discretize_depth`; non-finite depths map to ``OUT_OF_RANGE``."""
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        f = np.floor((z - d.reference_z) / d.bin_size) + d.center_bin
    ok = np.isfinite(f) & (f >= 0) & (f < d.num_bins)
    return np.where(ok, np.nan_to_num(f), OUT_OF_RANGE).astype(np.int64)


def continuous_bin(z, d: DepthDiscretization):
    """Fractional bin coordinate whose integer part is the bin and whose center is ``b + 0.5``."""
    return (np.asarray(z, dtype=np.float64) - d.reference_z) / d.bin_size + d.center_bin


def bin_to_depth(b, d: DepthDiscretization):
    """Depth at the center of bin ``b``: ``reference_z + (b - center_bin + 0.5) * bin_size``."""
    arr = np.asarray(b)
    if np.any((arr < 0) | (arr >= d.num_bins)):
        raise ValueError(f"bin {b} outside [0, {d.num_bins})")
    z = d.reference_z + (arr - d.center_bin + 0.5) * d.bin_size
    return float(z) if np.ndim(z) == 0 else z
