"""Local occupancy ("hit") grids around a 2D joint estimate.

A grid column ``(x, y)`` holds the pixel ``(origin_u + x, origin_v + y)``;
one voxel spans one pixel. Along depth, the voxel whose bin contains the
pixel's depth is +1 and every other voxel is -1. Invalid or out-of-image
pixels give all -1 columns, so unknown space looks like free space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import CameraIntrinsics, DepthDiscretization

REFERENCE_WINDOW = 5


class UnanchorableJoint(ValueError):
    """No valid depth near a joint estimate, so its depth window cannot be placed."""


@dataclass
class DepthMap:
    """Depth image ``[v, u]`` in mm. Invalid pixels are stored as 0."""

    depth: np.ndarray
    valid: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depth.ndim != 2 or self.valid.shape != self.depth.shape:
            raise ValueError(f"depth {self.depth.shape} and valid {self.valid.shape} must be equal 2D shapes")
        if np.any(self.depth[~self.valid] != 0):
            self.depth = np.where(self.valid, self.depth, 0).astype(np.float32)

    @classmethod
    def from_depth(cls, depth: np.ndarray, intrinsics: CameraIntrinsics) -> "DepthMap":
        """Treat non-positive or non-finite depths as invalid."""
        depth = np.asarray(depth, dtype=np.float32)
        valid = np.isfinite(depth) & (depth > 0)
        return cls(np.where(valid, depth, 0), valid, intrinsics)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


@dataclass(frozen=True)
class CropMeta:
    joint: int
    center: tuple[int, int]                 # (u, v) pixel indices
    reference_z: float
    dims: tuple[int, int, int] = (32, 32, 40)
    bin_size: float = geometry.DEFAULT_BIN_SIZE

    @property
    def origin(self) -> tuple[int, int]:
        return (int(self.center[0]) - self.dims[0] // 2, int(self.center[1]) - self.dims[1] // 2)

    @property
    def discretization(self) -> DepthDiscretization:
        return DepthDiscretization(self.reference_z, self.bin_size, self.dims[2])

    def to_dict(self) -> dict:
        return {"joint": self.joint, "center": [int(c) for c in self.center], "reference_z": float(self.reference_z),
                "dims": list(self.dims), "bin_size": float(self.bin_size), "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d: dict) -> "CropMeta":
        return cls(int(d["joint"]), tuple(int(c) for c in d["center"]), float(d["reference_z"]),
                   tuple(int(x) for x in d["dims"]), float(d["bin_size"]))


@dataclass
class OccupancyGrid:
    values: np.ndarray                      # (X, Y, D), entries in {+1, -1}
    crop: CropMeta
    intrinsics: CameraIntrinsics
    extra: dict = field(default_factory=dict)

    @property
    def discretization(self) -> DepthDiscretization:
        return self.crop.discretization


def estimate_reference_depth(dm: DepthMap, center, window: int = REFERENCE_WINDOW) -> float:
    """Median valid depth in a ``window x window`` neighborhood of pixel ``center = (u, v)``."""
    u, v = int(center[0]), int(center[1])
    if not (0 <= u < dm.width and 0 <= v < dm.height):
        raise ValueError(f"center {(u, v)} lies outside the {dm.width}x{dm.height} image")
    r = window // 2
    sl = (slice(max(v - r, 0), v + r + 1), slice(max(u - r, 0), u + r + 1))
    vals = dm.depth[sl][dm.valid[sl]]
    if vals.size == 0:
        raise UnanchorableJoint(f"unanchorable joint: no valid depth within {window}x{window} of pixel {(u, v)}")
    return float(np.median(vals))


def patch_depth(dm: DepthMap, crop: CropMeta) -> tuple[np.ndarray, np.ndarray]:
    """The ``X x Y`` source pixels of a crop as ``[x, y]`` arrays ``(depth, valid)``."""
    X, Y, _ = crop.dims
    ou, ov = crop.origin
    depth = np.zeros((X, Y), dtype=np.float32)
    valid = np.zeros((X, Y), dtype=bool)
    u0, u1 = max(ou, 0), min(ou + X, dm.width)
    v0, v1 = max(ov, 0), min(ov + Y, dm.height)
    if u0 < u1 and v0 < v1:
        depth[u0 - ou:u1 - ou, v0 - ov:v1 - ov] = dm.depth[v0:v1, u0:u1].T
        valid[u0 - ou:u1 - ou, v0 - ov:v1 - ov] = dm.valid[v0:v1, u0:u1].T
    return depth, valid


def build_local_grid(dm: DepthMap, crop: CropMeta) -> OccupancyGrid:
    depth, valid = patch_depth(dm, crop)
    X, Y, D = crop.dims
    bins = geometry.discretize_depths(np.where(valid, depth, np.nan), crop.discretization)
    values = np.full((X, Y, D), -1.0, dtype=np.float32)
    xs, ys = np.nonzero(bins != geometry.OUT_OF_RANGE)
    values[xs, ys, bins[xs, ys]] = 1.0
    return OccupancyGrid(values, crop, dm.intrinsics)


def normalized_patch(dm: DepthMap, crop: CropMeta) -> np.ndarray:
    """2D counterpart of the grid: ``(z - reference) / half_window`` clipped to [-1, 1], holes at +1."""
    depth, valid = patch_depth(dm, crop)
    half = crop.dims[2] * crop.bin_size / 2.0
    z = np.clip((depth - crop.reference_z) / half, -1.0, 1.0)
    return np.where(valid, z, 1.0).astype(np.float32)


def voxel_to_world(grid: OccupancyGrid | CropMeta, voxel, intrinsics: CameraIntrinsics | None = None) -> np.ndarray:
    """World point (mm) at the center of voxel ``(x, y, z)``."""
    crop = grid.crop if isinstance(grid, OccupancyGrid) else grid
    cam = grid.intrinsics if isinstance(grid, OccupancyGrid) else intrinsics
    if cam is None:
        raise ValueError("voxel_to_world on a CropMeta needs intrinsics")
    x, y, z = (int(c) for c in voxel)
    X, Y, D = crop.dims
    if not (0 <= x < X and 0 <= y < Y and 0 <= z < D):
        raise ValueError(f"voxel {(x, y, z)} outside grid {crop.dims}")
    ou, ov = crop.origin
    depth = geometry.bin_to_depth(z, crop.discretization)
    return geometry.backproject(ou + x + 0.5, ov + y + 0.5, depth, cam)


def continuous_voxel_to_world(crop: CropMeta, voxel, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Inverse of :func:`world_to_voxel`; agrees with :func:`voxel_to_world` at voxel centers."""
    x, y, z = (float(c) for c in voxel)
    ou, ov = crop.origin
    d = crop.discretization
    depth = d.reference_z + (z - d.center_bin + 0.5) * d.bin_size
    return geometry.backproject(ou + x + 0.5, ov + y + 0.5, depth, intrinsics)


def world_to_voxel(crop: CropMeta, point, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Continuous voxel coordinates of a world point; voxel centers are integers."""
    u, v = geometry.project(point, intrinsics)
    ou, ov = crop.origin
    zc = geometry.continuous_bin(np.asarray(point, dtype=np.float64)[2], crop.discretization) - 0.5
    return np.array([u - 0.5 - ou, v - 0.5 - ov, zc])


def in_window(voxel, dims) -> bool:
    """Whether a continuous voxel coordinate rounds to a cell inside ``dims``."""
    idx = np.floor(np.asarray(voxel, dtype=np.float64) + 0.5)
    return bool(np.all((idx >= 0) & (idx < np.asarray(dims))))
