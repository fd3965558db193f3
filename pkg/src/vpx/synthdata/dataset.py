"""Dataset container: a JSON manifest plus one TDF depth file per frame.

Other depth datasets can be used by writing the same manifest layout
(:func:`write_dataset` with frames built from their own poses and maps).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import profiles
from ..engine import tdf
from ..geometry import CameraIntrinsics, project
from ..voxelizer import DepthMap
from .render import joint_visibility, render_depth
from .skeleton import default_skeleton, sample_pose

FORMAT = "vpx-dataset"
VERSION = 1


@dataclass
class Frame:
    frame_id: str
    depth: DepthMap
    xyz: np.ndarray                         # (J, 3) mm
    uv: np.ndarray                          # (J, 2) continuous pixel coordinates
    occluded: np.ndarray                    # (J,) bool; True also for joints outside the image

    @property
    def num_joints(self) -> int:
        return self.xyz.shape[0]


@dataclass
class DatasetManifest:
    intrinsics: CameraIntrinsics
    width: int
    height: int
    z_window: tuple[float, float]
    joint_names: tuple[str, ...]
    frames: list[Frame]
    meta: dict

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    def __len__(self) -> int:
        return len(self.frames)

    def subset(self, indices) -> "DatasetManifest":
        return DatasetManifest(self.intrinsics, self.width, self.height, self.z_window, self.joint_names,
                               [self.frames[i] for i in indices], dict(self.meta))

    def head_neck(self) -> tuple[int, int]:
        return self.joint_names.index("head"), self.joint_names.index("neck")


def frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def synth_frame(index: int, seed: int, profile="tiny", joint_set: str = "itop15",
                noise_sigma: float | None = None) -> Frame:
    prof = profiles.get(profile)
    skel = default_skeleton(joint_set)
    cam = CameraIntrinsics.centered(prof.full_size, prof.full_size, prof.focal)
    rng = frame_rng(seed, index)
    sample = sample_pose(skel, rng)
    sigma = prof.noise_sigma if noise_sigma is None else noise_sigma
    dm = render_depth(sample, cam, prof.full_size, prof.full_size, noise_sigma=sigma, rng=rng)
    uv, _, occluded = joint_visibility(sample, dm)
    return Frame(f"{index:06d}", dm, sample.pose.xyz, uv, occluded)


def generate(num_frames: int, seed: int, profile="tiny", joint_set: str = "itop15",
             noise_sigma: float | None = None) -> DatasetManifest:
    """Frames are independent; frame ``i`` depends only on ``(seed, i)``."""
    prof = profiles.get(profile)
    skel = default_skeleton(joint_set)
    cam = CameraIntrinsics.centered(prof.full_size, prof.full_size, prof.focal)
    frames = [synth_frame(i, seed, prof, joint_set, noise_sigma) for i in range(num_frames)]
    meta = {"generator": "capsule-figure", "seed": int(seed), "profile": prof.name, "joint_set": joint_set,
            "noise_sigma": float(prof.noise_sigma if noise_sigma is None else noise_sigma)}
    return DatasetManifest(cam, prof.full_size, prof.full_size, tuple(prof.z_window), skel.output_names, frames, meta)


def _frame_record(fr: Frame, rel: str) -> dict:
    return {
        "id": fr.frame_id,
        "depth": rel,
        "xyz": [[float(c) for c in p] for p in fr.xyz],
        "uv": [[float(c) for c in p] for p in fr.uv],
        "occluded": [bool(o) for o in fr.occluded],
    }


def write_dataset(ds: DatasetManifest, out_dir: str | os.PathLike) -> Path:
    """Write ``manifest.json`` and ``depth/<id>.tdf``; returns the manifest path."""
    out = Path(out_dir)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    records = []
    for fr in ds.frames:
        rel = f"depth/{fr.frame_id}.tdf"
        tdf.save_tdf(out / rel, fr.depth.depth.astype(np.float32))
        records.append(_frame_record(fr, rel))
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "intrinsics": ds.intrinsics.to_dict(),
        "width": ds.width,
        "height": ds.height,
        "z_window": list(ds.z_window),
        "joint_names": list(ds.joint_names),
        "meta": ds.meta,
        "frames": records,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def read_dataset(path: str | os.PathLike) -> DatasetManifest:
    """Load a manifest (file or directory). Problems name the offending frame."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        m = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"{path}: cannot read manifest: {e}") from e
    if m.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} manifest")
    cam = CameraIntrinsics.from_dict(m["intrinsics"])
    W, H = int(m["width"]), int(m["height"])
    names = tuple(m["joint_names"])
    frames = []
    for rec in m["frames"]:
        fid = rec["id"]
        fpath = path.parent / rec["depth"]
        try:
            depth = tdf.load_tdf(fpath)
        except FileNotFoundError as e:
            raise ValueError(f"frame {fid}: depth file {fpath} is missing") from e
        except tdf.TDFError as e:
            raise ValueError(f"frame {fid}: {e}") from e
        if depth.shape != (H, W):
            raise ValueError(f"frame {fid}: depth map is {depth.shape}, manifest says {(H, W)}")
        xyz = np.asarray(rec["xyz"], dtype=np.float64)
        if xyz.shape != (len(names), 3):
            raise ValueError(f"frame {fid}: {xyz.shape[0]} joints, manifest names {len(names)}")
        if np.any(xyz[:, 2] <= 0):
            raise ValueError(f"frame {fid}: joint with non-positive depth")
        uv = np.asarray(rec.get("uv") or project(xyz, cam), dtype=np.float64)
        occ = np.asarray(rec.get("occluded", [False] * len(names)), dtype=bool)
        dm = DepthMap(depth, depth > 0, cam)
        frames.append(Frame(fid, dm, xyz, uv, occ))
    return DatasetManifest(cam, W, H, tuple(m["z_window"]), names, frames, dict(m.get("meta", {})))
