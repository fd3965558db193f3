"""Network inputs and targets: P-Net crops, local grids, depth-axis augmentation, crop datasets."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .. import heatmaps, profiles, voxelizer
from ..engine import tdf
from ..geometry import CameraIntrinsics
from ..synthdata import DatasetManifest, Frame
from ..voxelizer import CropMeta, DepthMap

TORSO = "torso"
CROP_MODES = ("pnet", "gt", "gt_jitter")


def normalize_depth(depth: np.ndarray, valid: np.ndarray, z_window) -> np.ndarray:
    """Linear map of ``[z_min, z_max]`` onto ``[+1, -1]`` (near is +1); invalid pixels -> -1."""
    z0, z1 = z_window
    n = 1.0 - 2.0 * (depth.astype(np.float64) - z0) / (z1 - z0)
    return np.where(valid, np.clip(n, -1.0, 1.0), -1.0).astype(np.float32)


def pixel_index(uv) -> np.ndarray:
    """Continuous image coordinates -> pixel-index coordinates (pixel ``i`` centered at ``i``)."""
    return np.asarray(uv, dtype=np.float64) - 0.5


# -- P-Net ----------------------------------------------------------------

def pnet_input(frame: Frame, offset, prof: profiles.Profile, z_window) -> np.ndarray:
    ox, oy = (int(o) for o in offset)
    S = prof.input_size
    dm = frame.depth
    img = normalize_depth(dm.depth[oy:oy + S, ox:ox + S], dm.valid[oy:oy + S, ox:ox + S], z_window)
    if img.shape != (S, S):
        raise ValueError(f"frame {frame.frame_id}: {dm.width}x{dm.height} too small for a {S}px crop at {offset}")
    return img[None]


def pnet_target(frame: Frame, offset, prof: profiles.Profile) -> np.ndarray:
    cells = (pixel_index(frame.uv) - np.asarray(offset, dtype=np.float64)) / prof.heatmap_stride
    h = prof.heatmap_size
    return heatmaps.make_targets_2d(cells, (h, h), prof.sigma_2d)


def augment_pnet(frame: Frame, rng: np.random.Generator, prof: profiles.Profile, z_window, offset=None):
    """Random ``input_size`` crop of the full frame plus its stride-reduced targets.

    Returns ``(input (1, S, S), target (J, h, h), offset (ox, oy))``.
    """
    m = prof.crop_margin
    if offset is None:
        offset = tuple(int(o) for o in rng.integers(0, m + 1, size=2))
    return pnet_input(frame, offset, prof, z_window), pnet_target(frame, offset, prof), offset


def center_offset(prof: profiles.Profile) -> tuple[int, int]:
    return (prof.crop_margin // 2, prof.crop_margin // 2)


def decode_pnet(maps: np.ndarray, offset, prof: profiles.Profile) -> tuple[np.ndarray, np.ndarray]:
    """Heatmaps ``(J, h, h)`` -> full-frame pixel indices ``(J, 2)`` as ``(u, v)`` and peak values."""
    idx, peak = heatmaps.decode_all(maps)
    uv = idx[:, ::-1] * prof.heatmap_stride + np.asarray(offset, dtype=np.int64)
    return uv.astype(np.int64), peak


# -- V-Net crops ----------------------------------------------------------

@dataclass
class CropSet:
    """Local grids for every (frame, joint) pair plus ground truth in crop coordinates.

    ``voxels[i, k]`` is joint ``k`` of crop ``i``'s frame in continuous voxel
    coordinates of crop ``i`` (voxel centers are integers).
    """

    grids: np.ndarray                       # (N, X, Y, D) float32 in {+1, -1}
    patches: np.ndarray                     # (N, X, Y) raw depth, 0 = invalid
    voxels: np.ndarray                      # (N, J, 3)
    crops: list[CropMeta]
    frame_index: np.ndarray                 # (N,)
    flags: dict[str, np.ndarray]            # each (N,) bool
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.crops)

    @property
    def joint(self) -> np.ndarray:
        return np.array([c.joint for c in self.crops], dtype=np.int64)

    def subset(self, idx) -> "CropSet":
        idx = np.asarray(idx, dtype=np.int64)
        return CropSet(self.grids[idx], self.patches[idx], self.voxels[idx], [self.crops[i] for i in idx],
                       self.frame_index[idx], {k: v[idx] for k, v in self.flags.items()}, dict(self.meta))

    def flag_rates(self, num_joints: int) -> dict[str, list[float]]:
        j = self.joint
        out = {}
        for name, f in self.flags.items():
            out[name] = [float(f[j == k].mean()) if np.any(j == k) else 0.0 for k in range(num_joints)]
        return out

    def save(self, path: str | os.PathLike) -> None:
        header = {"format": "vpx-crops", "version": 1, "crops": [c.to_dict() for c in self.crops], "meta": self.meta,
                  "flags": sorted(self.flags)}
        entries = {
            "grids": (self.grids > 0).astype(np.uint8),
            "patches": self.patches.astype(np.float32),
            "voxels": self.voxels.astype(np.float32),
            "frame_index": self.frame_index.astype(np.float32),
        }
        for k, v in self.flags.items():
            entries["flag:" + k] = v.astype(np.uint8)
        tdf.save_archive(path, entries, header=header)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CropSet":
        header, e = tdf.load_archive(path)
        if not header or header.get("format") != "vpx-crops":
            raise tdf.TDFError(f"{path}: not a crop dataset")
        grids = np.where(e["grids"] > 0, 1.0, -1.0).astype(np.float32)
        crops = [CropMeta.from_dict(c) for c in header["crops"]]
        flags = {k: e["flag:" + k].astype(bool) for k in header["flags"]}
        return cls(grids, e["patches"], e["voxels"].astype(np.float64), crops,
                   e["frame_index"].astype(np.int64), flags, header.get("meta", {}))


def crop_voxels(crop: CropMeta, frame: Frame, cam: CameraIntrinsics) -> np.ndarray:
    """All joints of ``frame`` in continuous voxel coordinates of ``crop``."""
    ou, ov = crop.origin
    p = pixel_index(frame.uv)
    d = crop.discretization
    zc = (frame.xyz[:, 2] - d.reference_z) / d.bin_size + d.center_bin - 0.5
    return np.stack([p[:, 0] - ou, p[:, 1] - ov, zc], axis=1)


def anchor_depths(dm: DepthMap, centers: np.ndarray, torso: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Reference depth per joint, falling back to the torso's, then to the frame median.

    Returns ``(depths, unanchored flags)``.
    """
    J = len(centers)
    ref = np.full(J, np.nan)
    bad = np.zeros(J, dtype=bool)
    for k in range(J):
        u = int(np.clip(centers[k, 0], 0, dm.width - 1))
        v = int(np.clip(centers[k, 1], 0, dm.height - 1))
        try:
            ref[k] = voxelizer.estimate_reference_depth(dm, (u, v))
        except voxelizer.UnanchorableJoint:
            bad[k] = True
    if bad.any():
        fallback = ref[torso] if torso is not None and not bad[torso] else np.nan
        if not np.isfinite(fallback):
            fallback = float(np.median(dm.depth[dm.valid])) if dm.valid.any() else 2500.0
        ref[bad] = fallback
    return ref, bad


def frame_crops(frame: Frame, centers: np.ndarray, prof: profiles.Profile, torso: int | None,
                grid=None) -> tuple[list[CropMeta], np.ndarray, np.ndarray, np.ndarray]:
    """Grids for one frame given per-joint crop centers ``(J, 2)`` pixel indices."""
    dims = tuple(grid or prof.grid)
    ref, unanchored = anchor_depths(frame.depth, centers, torso)
    metas, grids, patches = [], [], []
    for k in range(len(centers)):
        meta = CropMeta(k, (int(centers[k, 0]), int(centers[k, 1])), float(ref[k]), dims, prof.bin_size)
        metas.append(meta)
        grids.append(voxelizer.build_local_grid(frame.depth, meta).values)
        patches.append(voxelizer.patch_depth(frame.depth, meta)[0])
    return metas, np.stack(grids), np.stack(patches), unanchored


def build_cropset(ds: DatasetManifest, centers_per_frame, prof: profiles.Profile, meta: dict | None = None,
                  grid=None) -> CropSet:
    """Crop every joint of every frame; ``centers_per_frame[i]`` is ``(J, 2)`` pixel indices."""
    torso = ds.joint_names.index(TORSO) if TORSO in ds.joint_names else None
    grids, patches, voxels, crops, fidx = [], [], [], [], []
    unanchored, out_window, occluded = [], [], []
    dims = tuple(grid or prof.grid)
    for i, (frame, centers) in enumerate(zip(ds.frames, centers_per_frame)):
        metas, g, p, bad = frame_crops(frame, np.asarray(centers), prof, torso, dims)
        for k, m in enumerate(metas):
            vox = crop_voxels(m, frame, ds.intrinsics)
            grids.append(g[k])
            patches.append(p[k])
            voxels.append(vox)
            crops.append(m)
            fidx.append(i)
            unanchored.append(bad[k])
            out_window.append(not voxelizer.in_window(vox[k], dims))
            occluded.append(bool(frame.occluded[k]))
    flags = {
        "unanchored": np.array(unanchored, dtype=bool),
        "out_of_window": np.array(out_window, dtype=bool),
        "occluded": np.array(occluded, dtype=bool),
    }
    return CropSet(np.stack(grids).astype(np.float32), np.stack(patches).astype(np.float32),
                   np.stack(voxels), crops, np.array(fidx, dtype=np.int64), flags, dict(meta or {}))


def gt_centers(frame: Frame, width: int, height: int) -> np.ndarray:
    """Ground-truth pixel indices, clamped into the image."""
    p = np.floor(frame.uv).astype(np.int64)
    p[:, 0] = np.clip(p[:, 0], 0, width - 1)
    p[:, 1] = np.clip(p[:, 1], 0, height - 1)
    return p


def augment_vnet(grid: np.ndarray, voxels: np.ndarray, rng: np.random.Generator, depth_crop: int,
                 offset: int | None = None):
    """Random depth-axis window of ``depth_crop`` bins; joint z shifted by ``-offset``.

    Returns ``(grid (X, Y, depth_crop), voxels (J, 3), offset)``.
    """
    D = grid.shape[-1]
    if depth_crop > D:
        raise ValueError(f"depth crop {depth_crop} exceeds grid depth {D}")
    if offset is None:
        offset = int(rng.integers(0, D - depth_crop + 1))
    if not 0 <= offset <= D - depth_crop:
        raise ValueError(f"depth offset {offset} outside [0, {D - depth_crop}]")
    v = np.array(voxels, dtype=np.float64, copy=True)
    v[..., 2] -= offset
    return grid[..., offset:offset + depth_crop], v, offset


def vnet_target(voxels: np.ndarray, dims, sigma: float) -> np.ndarray:
    return heatmaps.make_targets_3d(voxels, dims, sigma)


def window_patch(patch: np.ndarray, crop: CropMeta, offset: int, depth_crop: int) -> np.ndarray:
    """2D input for the depth-window ``[offset, offset + depth_crop)``: [-1, 1] across it, holes at +1."""
    d = crop.discretization
    z0 = d.z_min + offset * d.bin_size
    z1 = z0 + depth_crop * d.bin_size
    valid = patch > 0
    z = np.clip(2.0 * (patch - z0) / (z1 - z0) - 1.0, -1.0, 1.0)
    return np.where(valid, z, 1.0).astype(np.float32)
