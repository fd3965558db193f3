"""Component-analysis variants: 2D-input models, the holistic 3D view, the patch-size sweep."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import heatmaps, metrics, profiles, voxelizer
from ..geometry import DepthDiscretization, backproject, discretize_depths
from ..networks import Network, build_holistic, vnet_loss
from ..synthdata import DatasetManifest, Frame
from . import data, infer, train
from .config import TrainConfig


# -- 2D-input stages ------------------------------------------------------

def _window_patches(frame: Frame, crops, offset: int, depth_crop: int) -> np.ndarray:
    return np.stack([data.window_patch(voxelizer.patch_depth(frame.depth, c)[0], c, offset, depth_crop)
                     for c in crops])[:, None]


class PatchVLStage(infer.HeatmapDecoder):
    """2D_VL: ``J*D`` output channels regrouped into per-joint ``(X, Y, D)`` likelihoods."""

    def __init__(self, net: Network, prof: profiles.Profile):
        self.net, self.prof = net, prof

    def __call__(self, frame, crops, windows, offset):
        x = _window_patches(frame, crops, offset, windows.shape[-1])
        out = self.net.forward(x, train=False)
        N, C, X, Y = out.shape
        D = windows.shape[-1]
        return out.reshape(N, C // D, D, X, Y).transpose(0, 1, 3, 4, 2)


class PatchCOStage:
    """2D_CO: direct regression of normalized window coordinates."""

    def __init__(self, net: Network, prof: profiles.Profile):
        self.net, self.prof = net, prof
        self.dims = None

    def __call__(self, frame, crops, windows, offset):
        self.dims = windows.shape[1:]
        x = _window_patches(frame, crops, offset, windows.shape[-1])
        return self.net.forward(x, train=False)

    def decode(self, out: np.ndarray, k: int):
        coords = out.reshape(-1, 3)[k]
        v = train.denormalize_coords(coords, self.dims)
        return tuple(float(c) for c in v), 1.0


def patch_stage(net: Network, prof: profiles.Profile):
    kind = net.spec.meta.get("kind")
    if kind == "2d_vl":
        return PatchVLStage(net, prof)
    if kind == "2d_co":
        return PatchCOStage(net, prof)
    raise ValueError(f"network kind {kind!r} is not a 2D-input variant")


# -- holistic 3D view -----------------------------------------------------

HOLISTIC_MARGIN = 0.15


@dataclass
class HolisticBox:
    """Square image window resampled to ``size`` cells and its depth discretization."""

    origin: tuple[float, float]             # pixel-index coordinate of the box corner
    scale: float                            # pixels per grid cell
    size: int
    discretization: DepthDiscretization

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "scale": self.scale, "size": self.size,
                "discretization": self.discretization.to_dict()}

    def cell_to_pixel(self, c):
        return np.asarray(self.origin) + (np.asarray(c, dtype=np.float64) + 0.5) * self.scale - 0.5

    def pixel_to_cell(self, p):
        return (np.asarray(p, dtype=np.float64) + 0.5 - np.asarray(self.origin)) / self.scale - 0.5


def holistic_box(frame: Frame, uv2d: np.ndarray, prof: profiles.Profile, torso: int | None) -> HolisticBox:
    """Box around the first-stage estimates, padded by a margin, depth centered on the body."""
    lo, hi = uv2d.min(axis=0).astype(np.float64), uv2d.max(axis=0).astype(np.float64) + 1
    side = max(float(np.max(hi - lo)) * (1 + 2 * HOLISTIC_MARGIN), float(prof.holistic_size) / 4)
    center = (lo + hi) / 2
    ref, _ = data.anchor_depths(frame.depth, uv2d, torso)
    disc = DepthDiscretization(float(np.median(ref)), prof.bin_size, prof.grid[2])
    return HolisticBox(tuple(center - side / 2), side / prof.holistic_size, prof.holistic_size, disc)


def holistic_grid(frame: Frame, box: HolisticBox) -> np.ndarray:
    """Nearest-pixel resampling of the box, then the usual one-hit-per-column occupancy."""
    S, D = box.size, box.discretization.num_bins
    px = np.floor(box.cell_to_pixel(np.arange(S)[:, None].repeat(2, 1)) + 0.5).astype(np.int64)
    u, v = px[:, 0], px[:, 1]
    dm = frame.depth
    inside_u = (u >= 0) & (u < dm.width)
    inside_v = (v >= 0) & (v < dm.height)
    uu, vv = np.clip(u, 0, dm.width - 1), np.clip(v, 0, dm.height - 1)
    depth = dm.depth[vv[None, :], uu[:, None]]                      # [x, y]
    valid = dm.valid[vv[None, :], uu[:, None]] & inside_u[:, None] & inside_v[None, :]
    bins = discretize_depths(np.where(valid, depth, np.nan), box.discretization)
    grid = np.full((S, S, D), -1.0, dtype=np.float32)
    xs, ys = np.nonzero(bins >= 0)
    grid[xs, ys, bins[xs, ys]] = 1.0
    return grid


def holistic_voxels(frame: Frame, box: HolisticBox) -> np.ndarray:
    p = data.pixel_index(frame.uv)
    c = box.pixel_to_cell(p)
    d = box.discretization
    z = (frame.xyz[:, 2] - d.reference_z) / d.bin_size + d.center_bin - 0.5
    return np.concatenate([c, z[:, None]], axis=1)


@dataclass
class HolisticSet:
    grids: np.ndarray                       # (N, S, S, D)
    voxels: np.ndarray                      # (N, J, 3) in full-resolution grid coordinates
    boxes: list[HolisticBox]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.boxes)


def build_holistic_set(ds: DatasetManifest, uv2d: np.ndarray, prof: profiles.Profile) -> HolisticSet:
    torso = ds.joint_names.index(data.TORSO) if data.TORSO in ds.joint_names else None
    grids, vox, boxes = [], [], []
    for fr, c in zip(ds.frames, uv2d):
        box = holistic_box(fr, np.asarray(c), prof, torso)
        boxes.append(box)
        grids.append(holistic_grid(fr, box))
        vox.append(holistic_voxels(fr, box))
    return HolisticSet(np.stack(grids), np.stack(vox), boxes)


def _downsample_voxels(v: np.ndarray, factor: int) -> np.ndarray:
    """Full-resolution voxel coordinates -> output cells after ``factor``-fold pooling."""
    return (v + 0.5) / factor - 0.5


class HolisticTask(train.Task):
    name = "holistic"

    def __init__(self, hs: HolisticSet, prof: profiles.Profile, factor: int = 4):
        self.hs, self.prof, self.factor = hs, prof, factor
        S = hs.grids.shape[1]
        self.out_dims = (S // factor, S // factor, prof.depth_crop // factor)

    def __len__(self):
        return len(self.hs)

    def _batch(self, idx, offsets):
        xs, ts = [], []
        for i, off in zip(idx, offsets):
            g, v, _ = data.augment_vnet(self.hs.grids[i], self.hs.voxels[i], None, self.prof.depth_crop, off)
            xs.append(g[None])
            ts.append(heatmaps.make_targets_3d(_downsample_voxels(v, self.factor), self.out_dims, self.prof.sigma_3d))
        return np.stack(xs), np.stack(ts)

    def train_batch(self, idx, rng):
        span = self.hs.grids.shape[-1] - self.prof.depth_crop
        return self._batch(idx, [int(rng.integers(0, span + 1)) for _ in idx])

    def eval_batch(self, idx):
        span = self.hs.grids.shape[-1] - self.prof.depth_crop
        return self._batch(idx, [span // 2] * len(idx))

    def loss(self, pred, target):
        return vnet_loss(pred, target)


def train_holistic(hs: HolisticSet, config: TrainConfig, profile="tiny", log=None) -> train.TrainResult:
    prof = profiles.get(profile)
    net = build_holistic(hs.voxels.shape[1], prof, seed=config.seed, init_std=config.init_std)
    return train.fit(net, HolisticTask(hs, prof, net.spec.meta.get("downsample", 4)), config, log)


def infer_holistic(net: Network, ds: DatasetManifest, uv2d: np.ndarray, prof: profiles.Profile) -> np.ndarray:
    """World joints ``(N, J, 3)`` decoded from the pooled holistic output."""
    hs = build_holistic_set(ds, uv2d, prof)
    task = HolisticTask(hs, prof, net.spec.meta.get("downsample", 4))
    offset = (hs.grids.shape[-1] - prof.depth_crop) // 2
    out = np.zeros((len(hs), hs.voxels.shape[1], 3))
    for s in range(0, len(hs), 4):
        idx = np.arange(s, min(s + 4, len(hs)))
        x, _ = task.eval_batch(idx)
        pred = net.forward(x, train=False)
        for i, maps in zip(idx, pred):
            box = hs.boxes[i]
            d = box.discretization
            for k in range(maps.shape[0]):
                cell, _ = heatmaps.decode_argmax(maps[k])
                full = (np.asarray(cell, dtype=np.float64) + 0.5) * task.factor - 0.5
                u, v = box.cell_to_pixel(full[:2])
                z = d.reference_z + (full[2] + offset - d.center_bin + 0.5) * d.bin_size
                out[i, k] = backproject(u + 0.5, v + 0.5, z, ds.intrinsics)
    return out


# -- experiment runners ---------------------------------------------------

def evaluate_predictions(pred3d: np.ndarray, ds: DatasetManifest, pred2d=None) -> metrics.EvalReport:
    gt2d = np.stack([data.pixel_index(f.uv) for f in ds.frames]) if pred2d is not None else None
    gt3d = np.stack([f.xyz for f in ds.frames])
    return metrics.evaluate(pred3d, gt3d, ds.joint_names, pred2d, gt2d)


def patch_size_sweep(train_ds: DatasetManifest, test_ds: DatasetManifest, stage2d, sizes, config: TrainConfig,
                     prof: profiles.Profile, log=None) -> list[dict]:
    """Train and evaluate one V-Net per local patch size (grid X = Y = size)."""
    uv_train, _ = infer.predict_2d(stage2d, train_ds.frames, prof)
    uv_test, _ = infer.predict_2d(stage2d, test_ds.frames, prof)
    rows = []
    for s in sizes:
        dims = (int(s), int(s), prof.grid[2])
        crops = data.build_cropset(train_ds, list(uv_train), prof, grid=dims)
        res = train.train_vnet(crops, config, prof, log)
        _, s3 = infer.network_stages(None, res.best, prof, train_ds.z_window)
        pred = infer.infer_dataset(test_ds, None, s3, prof, grid=dims, uv2d=uv_test)
        rep = evaluate_predictions(pred.xyz, test_ds)
        rows.append({"patch_size": int(s), "map": rep.full_body})
        if log is not None:
            log("sweep", patch_size=int(s), map=rep.full_body)
    return rows
