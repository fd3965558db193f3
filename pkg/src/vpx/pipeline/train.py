"""Mini-batch SGD training with a step schedule, validation tracking and checkpoints."""
from __future__ import annotations

import copy
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from .. import heatmaps, profiles
from ..engine import OptimizerState, mse_loss, sgd_step
from ..networks import Network, build_ablation, build_pnet, build_vnet, vnet_loss, pnet_loss
from ..synthdata import DatasetManifest
from . import data
from .config import TrainConfig


class TrainingDiverged(RuntimeError):
    """Loss became NaN or infinite."""


class JsonLog:
    """JSON-lines event log; ``None`` stream discards events."""

    def __init__(self, stream: TextIO | None = None, echo: bool = False):
        self.stream = stream
        self.echo = echo
        self.events: list[dict] = []

    @classmethod
    def to_file(cls, path: str | os.PathLike, echo: bool = False) -> "JsonLog":
        return cls(open(path, "a", encoding="utf-8"), echo)

    def __call__(self, event: str, **fields) -> None:
        rec = {"event": event, **fields}
        self.events.append(rec)
        line = json.dumps(rec, sort_keys=True)
        if self.stream is not None:
            self.stream.write(line + "\n")
            self.stream.flush()
        if self.echo:
            print(line, file=sys.stderr)

    def close(self) -> None:
        if self.stream is not None and self.stream not in (sys.stdout, sys.stderr):
            self.stream.close()


# -- tasks ----------------------------------------------------------------

class Task:
    """Supplies batches and the loss for one model family."""

    name = "task"

    def __len__(self) -> int:
        raise NotImplementedError

    def groups(self) -> np.ndarray:
        """Group id per sample; validation splits never separate a group."""
        return np.arange(len(self))

    def train_batch(self, idx: np.ndarray, rng: np.random.Generator):
        raise NotImplementedError

    def eval_batch(self, idx: np.ndarray):
        raise NotImplementedError

    def loss(self, pred: np.ndarray, target: np.ndarray):
        raise NotImplementedError


class PNetTask(Task):
    name = "pnet"

    def __init__(self, ds: DatasetManifest, prof: profiles.Profile):
        self.ds = ds
        self.prof = prof

    def __len__(self):
        return len(self.ds)

    def _batch(self, idx, offsets):
        xs, ts = [], []
        for i, off in zip(idx, offsets):
            x, t, _ = data.augment_pnet(self.ds.frames[i], None, self.prof, self.ds.z_window, offset=off)
            xs.append(x)
            ts.append(t)
        return np.stack(xs), np.stack(ts)

    def train_batch(self, idx, rng):
        m = self.prof.crop_margin
        offsets = [tuple(int(o) for o in rng.integers(0, m + 1, size=2)) for _ in idx]
        return self._batch(idx, offsets)

    def eval_batch(self, idx):
        return self._batch(idx, [data.center_offset(self.prof)] * len(idx))

    def loss(self, pred, target):
        return pnet_loss(pred, target)


class VNetTask(Task):
    name = "vnet"

    def __init__(self, crops: data.CropSet, prof: profiles.Profile):
        self.crops = crops
        self.prof = prof
        self.dims = crops.grids.shape[1:3] + (prof.depth_crop,)

    def __len__(self):
        return len(self.crops)

    def groups(self):
        return self.crops.frame_index

    def _batch(self, idx, offsets):
        xs, ts = [], []
        for i, off in zip(idx, offsets):
            g, v, _ = data.augment_vnet(self.crops.grids[i], self.crops.voxels[i], None, self.prof.depth_crop, off)
            xs.append(g[None])
            ts.append(data.vnet_target(v, self.dims, self.prof.sigma_3d))
        return np.stack(xs), np.stack(ts)

    def train_batch(self, idx, rng):
        span = self.crops.grids.shape[-1] - self.prof.depth_crop
        return self._batch(idx, [int(rng.integers(0, span + 1)) for _ in idx])

    def eval_batch(self, idx):
        span = self.crops.grids.shape[-1] - self.prof.depth_crop
        return self._batch(idx, [span // 2] * len(idx))

    def loss(self, pred, target):
        return vnet_loss(pred, target)


class PatchTask(VNetTask):
    """2D depth-patch inputs for the ``2d_co`` / ``2d_vl`` variants."""

    def __init__(self, crops: data.CropSet, prof: profiles.Profile, kind: str):
        super().__init__(crops, prof)
        self.kind = kind
        self.name = kind

    def _batch(self, idx, offsets):
        xs, ts = [], []
        J = self.crops.voxels.shape[1]
        X, Y, D = self.dims
        for i, off in zip(idx, offsets):
            crop = self.crops.crops[i]
            xs.append(data.window_patch(self.crops.patches[i], crop, off, D)[None])
            v = self.crops.voxels[i].copy()
            v[:, 2] -= off
            if self.kind == "2d_vl":
                t = data.vnet_target(v, self.dims, self.prof.sigma_3d)          # (J, X, Y, D)
                ts.append(t.transpose(0, 3, 1, 2).reshape(J * D, X, Y))
            else:
                ts.append(normalize_coords(v, self.dims).reshape(-1).astype(np.float32))
        return np.stack(xs), np.stack(ts)

    def loss(self, pred, target):
        return mse_loss(pred, target, num_joints=self.crops.voxels.shape[1], batch_size=pred.shape[0])


def normalize_coords(voxels: np.ndarray, dims) -> np.ndarray:
    """Voxel coordinates -> roughly [-1, 1] across the window (grid center at 0)."""
    d = np.asarray(dims, dtype=np.float64)
    return (voxels - (d - 1) / 2.0) / (d / 2.0)


def denormalize_coords(coords: np.ndarray, dims) -> np.ndarray:
    d = np.asarray(dims, dtype=np.float64)
    return coords * (d / 2.0) + (d - 1) / 2.0


# -- loop -----------------------------------------------------------------

@dataclass
class TrainResult:
    network: Network
    best: Network
    history: list[dict] = field(default_factory=list)
    best_iteration: int = -1
    best_val: float = float("inf")
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None
    seconds: float = 0.0


def split_indices(task: Task, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Hold out ``fraction`` of the groups (frames), chosen by ``seed``."""
    groups = np.asarray(task.groups())
    uniq = np.unique(groups)
    n_val = int(round(fraction * len(uniq)))
    if fraction > 0 and len(uniq) > 1:
        n_val = max(1, min(n_val, len(uniq) - 1))
    else:
        n_val = 0
    perm = np.random.default_rng([seed, 7]).permutation(uniq)
    val_groups = np.sort(perm[:n_val])
    is_val = np.isin(groups, val_groups)
    return np.nonzero(~is_val)[0], np.nonzero(is_val)[0]


def _batches(n_items: np.ndarray, batch: int, rng: np.random.Generator):
    while True:
        perm = rng.permutation(n_items)
        for s in range(0, len(perm) - batch + 1, batch):
            yield perm[s:s + batch]
        if len(perm) < batch:
            yield perm


def evaluate_loss(net: Network, task: Task, idx: np.ndarray, batch: int = 8) -> float:
    total, count = 0.0, 0
    for s in range(0, len(idx), batch):
        b = idx[s:s + batch]
        x, t = task.eval_batch(b)
        loss, _ = task.loss(net.forward(x, train=False), t)
        total += loss * len(b)
        count += len(b)
    return total / max(count, 1)


def own_joint_errors(net: Network, crops: data.CropSet, prof: profiles.Profile, batch: int = 8) -> np.ndarray:
    """Per-crop Chebyshev distance (voxels) from the decoded own-joint peak to the rounded ground truth.

    Uses the centered depth window, as at inference.
    """
    task = VNetTask(crops, prof)
    span = crops.grids.shape[-1] - prof.depth_crop
    out = np.zeros(len(crops), dtype=np.int64)
    for s in range(0, len(crops), batch):
        idx = np.arange(s, min(s + batch, len(crops)))
        x, _ = task.eval_batch(idx)
        pred = net.forward(x, train=False)
        for i, maps in zip(idx, pred):
            k = crops.crops[i].joint
            got, _ = heatmaps.decode_argmax(maps[k])
            want = np.floor(crops.voxels[i, k] + 0.5) - (0, 0, span // 2)
            out[i] = int(np.max(np.abs(np.asarray(got) - want)))
    return out


def _snapshot(net: Network) -> Network:
    return copy.deepcopy(net)


def fit(net: Network, task: Task, config: TrainConfig, log: Callable | None = None,
        val_limit: int = 64) -> TrainResult:
    """Train ``net`` in place. Deterministic in ``config.seed``."""
    log = log or JsonLog()
    train_idx, val_idx = split_indices(task, config.val_fraction, config.seed)
    if len(train_idx) == 0:
        raise ValueError("training set is empty")
    val_idx = val_idx[:val_limit]
    rng = np.random.default_rng([config.seed, 1])
    batches = _batches(train_idx, config.batch_size, rng)
    opt = OptimizerState(config.learning_rate, config.momentum, config.weight_decay)
    result = TrainResult(net, net, train_idx=train_idx, val_idx=val_idx)
    log("start", task=task.name, train=int(len(train_idx)), val=int(len(val_idx)), config=config.to_dict(),
        parameters=net.num_parameters())
    t0 = time.perf_counter()
    for it in range(config.iterations):
        idx = next(batches)
        x, t = task.train_batch(idx, rng)
        net.zero_grad()
        pred = net.forward(x, train=True)
        loss, grad = task.loss(pred, t)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"{task.name}: non-finite loss {loss} at iteration {it} (batch samples {idx.tolist()})")
        net.backward(grad)
        opt.learning_rate = config.lr_at(it)
        sgd_step(net.params, net.grads, opt)
        step = it + 1
        if step % config.log_every == 0 or step == 1 or step == config.iterations:
            rec = {"iteration": step, "loss": float(loss), "lr": opt.learning_rate,
                   "wall": round(time.perf_counter() - t0, 3)}
            result.history.append(rec)
            log("iter", **rec)
        if len(val_idx) and (step % config.eval_every == 0 or step == config.iterations):
            val = evaluate_loss(net, task, val_idx)
            log("val", iteration=step, val_loss=val)
            if val < result.best_val:
                result.best_val, result.best_iteration = val, step
                result.best = _snapshot(net)
    if not len(val_idx):
        result.best_iteration = config.iterations
    result.seconds = time.perf_counter() - t0
    log("done", task=task.name, iterations=config.iterations, best_iteration=result.best_iteration,
        best_val=None if not np.isfinite(result.best_val) else result.best_val, seconds=round(result.seconds, 3))
    return result


def _extra(config: TrainConfig, prof: profiles.Profile, result: TrainResult | None = None, **more) -> dict:
    d = {"config": config.to_dict(), "profile": prof.to_dict(), **more}
    if result is not None:
        d["best_iteration"] = result.best_iteration
    return d


def save_result(result: TrainResult, out_dir: str | os.PathLike, config: TrainConfig, prof: profiles.Profile,
                **more) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    final, best = out / "final.ckpt", out / "best.ckpt"
    result.network.save(final, _extra(config, prof, result, **more))
    result.best.save(best, _extra(config, prof, result, **more))
    return final, best


def train_pnet(ds: DatasetManifest, config: TrainConfig, profile="tiny", log=None) -> TrainResult:
    prof = profiles.get(profile)
    if len(ds) == 0:
        raise ValueError("train_pnet needs a non-empty dataset")
    net = build_pnet(ds.num_joints, prof, seed=config.seed, init_std=config.init_std)
    net.extra = {"joint_names": list(ds.joint_names), "z_window": list(ds.z_window)}
    return fit(net, PNetTask(ds, prof), config, log)


def train_vnet(crops: data.CropSet, config: TrainConfig, profile="tiny", log=None) -> TrainResult:
    prof = profiles.get(profile)
    if len(crops) == 0:
        raise ValueError("train_vnet needs a non-empty crop set")
    J = crops.voxels.shape[1]
    net = build_vnet(J, prof, seed=config.seed, grid=crops.grids.shape[1:3], init_std=config.init_std)
    return fit(net, VNetTask(crops, prof), config, log)


def train_patch_model(kind: str, crops: data.CropSet, config: TrainConfig, profile="tiny", log=None) -> TrainResult:
    prof = profiles.get(profile)
    J = crops.voxels.shape[1]
    net = build_ablation(kind, J, profile=prof, seed=config.seed, init_std=config.init_std)
    return fit(net, PatchTask(crops, prof, kind), config, log)
