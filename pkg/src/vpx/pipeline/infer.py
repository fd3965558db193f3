"""Two-stage inference: 2D heatmaps -> local grids -> 3D heatmaps -> world joints.

Each stage is an object with a small interface so trained networks and
ground-truth oracles plug into the same code path:

* a 2D stage maps a frame to ``(J, h, h)`` heatmaps over the centered input crop;
* a 3D stage maps a frame plus its ``J`` crops and depth windows to one
  output per crop, and ``decode(output, k)`` turns crop ``k``'s output into
  a window voxel coordinate and a confidence.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import geometry, heatmaps, profiles, voxelizer
from ..geometry import CameraIntrinsics
from ..networks import Network
from ..synthdata import DatasetManifest, Frame
from ..voxelizer import CropMeta
from . import data


# -- stages ---------------------------------------------------------------

class NetworkStage2D:
    def __init__(self, net: Network, prof: profiles.Profile, z_window):
        self.net, self.prof, self.z_window = net, prof, tuple(z_window)

    def __call__(self, frames: list[Frame]) -> np.ndarray:
        off = data.center_offset(self.prof)
        x = np.stack([data.pnet_input(f, off, self.prof, self.z_window) for f in frames])
        return self.net.forward(x, train=False)


class OracleStage2D:
    """Emits the exact training target of every frame."""

    def __init__(self, prof: profiles.Profile):
        self.prof = prof

    def __call__(self, frames: list[Frame]) -> np.ndarray:
        off = data.center_offset(self.prof)
        return np.stack([data.pnet_target(f, off, self.prof) for f in frames])


class HeatmapDecoder:
    """Crop ``k`` is read from channel ``k`` of its ``(J, X, Y, Dc)`` output."""

    def decode(self, out: np.ndarray, k: int):
        idx, peak = heatmaps.decode_argmax(out[k])
        return idx, peak


class NetworkStage3D(HeatmapDecoder):
    def __init__(self, net: Network, prof: profiles.Profile):
        self.net, self.prof = net, prof

    def __call__(self, frame: Frame, crops: list[CropMeta], windows: np.ndarray, offset: int) -> np.ndarray:
        return self.net.forward(windows[:, None], train=False)


class OracleStage3D(HeatmapDecoder):
    """Exact 3D targets built from the frame's ground-truth joints."""

    def __init__(self, prof: profiles.Profile, intrinsics: CameraIntrinsics):
        self.prof, self.cam = prof, intrinsics

    def __call__(self, frame: Frame, crops: list[CropMeta], windows: np.ndarray, offset: int) -> np.ndarray:
        dims = windows.shape[1:]
        out = []
        for c in crops:
            v = data.crop_voxels(c, frame, self.cam)
            v[:, 2] -= offset
            out.append(heatmaps.make_targets_3d(v, dims, self.prof.sigma_3d))
        return np.stack(out)


# -- results --------------------------------------------------------------

@dataclass
class FramePrediction:
    frame_id: str
    uv: np.ndarray                          # (J, 2) pixel indices of the 3D estimate
    xyz: np.ndarray                         # (J, 3) mm
    confidence: np.ndarray                  # (J,)
    flagged: np.ndarray                     # (J,) bool
    uv2d: np.ndarray                        # (J, 2) first-stage pixel indices
    seconds: float = 0.0

    def to_record(self) -> dict:
        joints = []
        for k in range(len(self.xyz)):
            joints.append({
                "id": k, "u": float(self.uv[k, 0]), "v": float(self.uv[k, 1]),
                "z_mm": float(self.xyz[k, 2]), "x_mm": float(self.xyz[k, 0]), "y_mm": float(self.xyz[k, 1]),
                "confidence": float(self.confidence[k]), "flagged": bool(self.flagged[k]),
            })
        # wall time stays out of the record so repeated runs write identical files
        return {"frame_id": self.frame_id, "joints": joints}


@dataclass
class Predictions:
    frames: list[FramePrediction]
    joint_names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    @property
    def xyz(self) -> np.ndarray:
        return np.stack([p.xyz for p in self.frames])

    @property
    def uv2d(self) -> np.ndarray:
        return np.stack([p.uv2d for p in self.frames])

    @property
    def seconds_per_frame(self) -> float:
        return float(np.mean([p.seconds for p in self.frames])) if self.frames else 0.0

    def write_jsonl(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for p in self.frames:
                fh.write(json.dumps(p.to_record(), sort_keys=True) + "\n")


def read_jsonl(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def records_to_xyz(records: list[dict]) -> tuple[list[str], np.ndarray]:
    ids = [r["frame_id"] for r in records]
    xyz = np.array([[[j["x_mm"], j["y_mm"], j["z_mm"]] for j in r["joints"]] for r in records], dtype=np.float64)
    return ids, xyz


# -- pipeline -------------------------------------------------------------

def predict_2d(stage2d, frames: list[Frame], prof: profiles.Profile, batch: int = 8):
    """First-stage pixel indices ``(N, J, 2)`` and peak values ``(N, J)``."""
    uvs, peaks = [], []
    off = data.center_offset(prof)
    for s in range(0, len(frames), batch):
        for maps in stage2d(frames[s:s + batch]):
            uv, pk = data.decode_pnet(maps, off, prof)
            uvs.append(uv)
            peaks.append(pk)
    return np.stack(uvs), np.stack(peaks)


def jitter_centers(centers: np.ndarray, rng: np.random.Generator, max_shift: int, width: int, height: int) -> np.ndarray:
    """Integer shifts uniform in ``[-max_shift, max_shift]`` per axis, clamped into the image."""
    c = centers + rng.integers(-max_shift, max_shift + 1, size=centers.shape)
    c[..., 0] = np.clip(c[..., 0], 0, width - 1)
    c[..., 1] = np.clip(c[..., 1], 0, height - 1)
    return c


def generate_vnet_crops(ds: DatasetManifest, prof: profiles.Profile, mode: str = "pnet", stage2d=None,
                        jitter: int = 5, seed: int = 0, grid=None) -> data.CropSet:
    """Crop datasets for V-Net training.

    ``pnet`` centers crops on first-stage estimates, ``gt`` on ground truth,
    ``gt_jitter`` on ground truth shifted by up to ``jitter`` pixels per axis.
    """
    if mode not in data.CROP_MODES:
        raise ValueError(f"unknown crop mode {mode!r}; choose from {data.CROP_MODES}")
    gt = np.stack([data.gt_centers(f, ds.width, ds.height) for f in ds.frames])
    if mode == "pnet":
        if stage2d is None:
            raise ValueError("crop mode 'pnet' needs a first-stage model")
        centers, _ = predict_2d(stage2d, ds.frames, prof)
    elif mode == "gt":
        centers = gt
    else:
        centers = jitter_centers(gt, np.random.default_rng([seed, 3]), jitter, ds.width, ds.height)
    return data.build_cropset(ds, list(centers), prof, meta={"mode": mode, "seed": seed}, grid=grid)


def quantization_bound(uv, z, cam: CameraIntrinsics, bin_size: float) -> float:
    """Largest 3D error from snapping ``(u, v, z)`` to its pixel center and depth-bin center.

    ``uv`` are continuous image coordinates of the true joint. Error per axis
    is bounded by its worst case over the corners of the cell, since each
    back-projected coordinate is bilinear in (u, z) or (v, z).
    """
    u, v = float(uv[0]), float(uv[1])
    true = geometry.backproject(u, v, z, cam)
    corners = np.array([[u + a, v + b, z + c] for a in (-0.5, 0.5) for b in (-0.5, 0.5)
                        for c in (-bin_size / 2, bin_size / 2)])
    pts = geometry.backproject(corners[:, 0], corners[:, 1], corners[:, 2], cam)
    dx = np.max(np.abs(pts[:, 0] - true[0]))
    dy = np.max(np.abs(pts[:, 1] - true[1]))
    return float(np.sqrt(dx * dx + dy * dy + (bin_size / 2) ** 2))


def infer_frame(frame: Frame, stage2d, stage3d, prof: profiles.Profile, cam: CameraIntrinsics,
                torso: int | None = None, grid=None, uv2d: np.ndarray | None = None) -> FramePrediction:
    t0 = time.perf_counter()
    if uv2d is None:
        uv2d, _ = predict_2d(stage2d, [frame], prof)
        uv2d = uv2d[0]
    dims = tuple(grid or prof.grid)
    metas, grids, _, unanchored = data.frame_crops(frame, uv2d, prof, torso, dims)
    offset = (dims[2] - prof.depth_crop) // 2
    windows = grids[..., offset:offset + prof.depth_crop]
    out = stage3d(frame, metas, windows, offset)
    J = len(metas)
    xyz = np.zeros((J, 3))
    uv = np.zeros((J, 2))
    conf = np.zeros(J)
    for k, m in enumerate(metas):
        if unanchored[k]:
            # fallback: the first-stage pixel on the ray at the fallback reference depth
            u, v = uv2d[k]
            xyz[k] = geometry.backproject(u + 0.5, v + 0.5, m.reference_z, cam)
            uv[k] = (u, v)
            continue
        (x, y, z), peak = stage3d.decode(out[k], k)
        if all(isinstance(c, (int, np.integer)) for c in (x, y, z)):
            xyz[k] = voxelizer.voxel_to_world(m, (x, y, z + offset), cam)
        else:
            xyz[k] = voxelizer.continuous_voxel_to_world(m, (x, y, z + offset), cam)
        uv[k] = (m.origin[0] + x, m.origin[1] + y)
        conf[k] = peak
    return FramePrediction(frame.frame_id, uv, xyz, conf, unanchored.copy(), np.asarray(uv2d),
                           time.perf_counter() - t0)


def infer_dataset(ds: DatasetManifest, stage2d, stage3d, prof: profiles.Profile, grid=None,
                  uv2d: np.ndarray | None = None, log=None) -> Predictions:
    """Run both stages over every frame; ``uv2d`` overrides the first stage (e.g. ground truth)."""
    torso = ds.joint_names.index(data.TORSO) if data.TORSO in ds.joint_names else None
    if uv2d is None:
        t0 = time.perf_counter()
        uv2d, _ = predict_2d(stage2d, ds.frames, prof)
        per2d = (time.perf_counter() - t0) / max(len(ds), 1)
    else:
        per2d = 0.0
    preds = []
    for i, fr in enumerate(ds.frames):
        p = infer_frame(fr, stage2d, stage3d, prof, ds.intrinsics, torso, grid, uv2d[i])
        p.seconds += per2d
        preds.append(p)
        if log is not None:
            log("frame", frame_id=fr.frame_id, seconds=round(p.seconds, 4), flagged=int(p.flagged.sum()))
    return Predictions(preds, tuple(ds.joint_names), {"profile": prof.name})


def network_stages(pnet: Network | None, vnet: Network | None, prof: profiles.Profile, z_window):
    s2 = NetworkStage2D(pnet, prof, z_window) if pnet is not None else None
    s3 = NetworkStage3D(vnet, prof) if vnet is not None else None
    return s2, s3


def oracle_stages(prof: profiles.Profile, cam: CameraIntrinsics):
    return OracleStage2D(prof), OracleStage3D(prof, cam)
