"""PCKh@0.5 for 2D joints, the 10 cm rule and mAP for 3D joints, and report formatting.

All thresholds are inclusive. mAP is the unweighted mean over joints of the
per-joint fraction of frames within 10 cm.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

THRESHOLD_MM = 100.0

# Published full-body mAP of the two-stage model; documentation only, never a test target.
REFERENCE_FULL_BODY = {"itop15": 83.4, "eval12": 79.8}

_ROWS_ITOP = [
    ("Head", ["head"]), ("Neck", ["neck"]), ("Shoulders", ["r_shoulder", "l_shoulder"]),
    ("Elbows", ["r_elbow", "l_elbow"]), ("Hands", ["r_hand", "l_hand"]), ("Torso", ["torso"]),
    ("Hips", ["r_hip", "l_hip"]), ("Knees", ["r_knee", "l_knee"]), ("Feet", ["r_foot", "l_foot"]),
]
UPPER = ("head", "neck", "r_shoulder", "l_shoulder", "r_elbow", "l_elbow", "r_hand", "l_hand")


def group_rows(joint_names) -> list[tuple[str, list[int]]]:
    """Report rows for the given joint census; left and right joints are pooled."""
    names = list(joint_names)
    rows = []
    for label, members in _ROWS_ITOP:
        idx = [names.index(m) for m in members if m in names]
        if idx:
            rows.append((label, idx))
    upper = [i for i, n in enumerate(names) if n in UPPER]
    lower = [i for i, n in enumerate(names) if n not in UPPER]
    if upper and lower:
        rows.append(("Upper Body", upper))
        rows.append(("Lower Body", lower))
    rows.append(("Full Body", list(range(len(names)))))
    return rows


def pckh(pred2d, gt2d, head_joint: int, neck_joint: int, alpha: float = 0.5):
    """Per-joint PCKh rates and the number of skipped frames.

    ``pred2d`` and ``gt2d`` are ``(frames, J, 2)`` pixels. A frame whose
    head-neck segment has zero length is skipped.
    """
    pred = np.asarray(pred2d, dtype=np.float64)
    gt = np.asarray(gt2d, dtype=np.float64)
    if pred.size == 0 or pred.shape[0] == 0:
        raise ValueError("pckh needs at least one frame")
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 2:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} must both be (frames, J, 2)")
    seg = np.linalg.norm(gt[:, head_joint] - gt[:, neck_joint], axis=1)
    keep = seg > 0
    skipped = int((~keep).sum())
    if not keep.any():
        return np.full(pred.shape[1], np.nan), skipped
    err = np.linalg.norm(pred[keep] - gt[keep], axis=2)
    hit = err <= alpha * seg[keep][:, None]
    return hit.mean(axis=0), skipped


def rule_10cm(pred3d, gt3d, threshold: float = THRESHOLD_MM) -> np.ndarray:
    """Per-joint fraction of frames with 3D error <= ``threshold`` mm."""
    pred = np.asarray(pred3d, dtype=np.float64)
    gt = np.asarray(gt3d, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    if pred.shape[0] == 0:
        raise ValueError("rule_10cm needs at least one frame")
    err = np.linalg.norm(pred - gt, axis=-1)
    return (err <= threshold).mean(axis=0)


def map_full_body(per_joint) -> float:
    p = np.asarray(per_joint, dtype=np.float64)
    if p.size == 0:
        raise ValueError("map_full_body needs at least one joint")
    return float(p.mean())


@dataclass
class EvalReport:
    joint_names: tuple[str, ...]
    precision: np.ndarray                   # per joint, 10 cm rule
    frames: int
    pckh: np.ndarray | None = None          # per joint, optional
    skipped_pckh: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def groups(self) -> dict[str, float]:
        return {label: float(self.precision[idx].mean()) for label, idx in group_rows(self.joint_names)}

    @property
    def full_body(self) -> float:
        return map_full_body(self.precision)

    def to_dict(self) -> dict:
        d = {
            "frames": self.frames,
            "joints": {n: float(p) for n, p in zip(self.joint_names, self.precision)},
            "groups": self.groups,
            "map": self.full_body,
        }
        if self.pckh is not None:
            d["pckh"] = {n: float(p) for n, p in zip(self.joint_names, self.pckh)}
            d["pckh_mean"] = float(np.nanmean(self.pckh))
            d["pckh_skipped_frames"] = self.skipped_pckh
        d.update(self.extra)
        return d

    def table(self) -> str:
        """Aligned text table: one row per body part, values in percent."""
        rows = group_rows(self.joint_names)
        has_p = self.pckh is not None
        head = f"{'Body Part':<12} {'mAP@10cm':>9}" + (f" {'PCKh@0.5':>9}" if has_p else "")
        lines = [head, "-" * len(head)]
        for label, idx in rows:
            if label == "Upper Body":
                lines.append("-" * len(head))
            line = f"{label:<12} {100 * self.precision[idx].mean():>9.1f}"
            if has_p:
                line += f" {100 * np.nanmean(self.pckh[idx]):>9.1f}"
            lines.append(line)
        lines.append(f"({self.frames} frames)")
        return "\n".join(lines)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["joint", "map_10cm"] + (["pckh"] if self.pckh is not None else []))
        for i, n in enumerate(self.joint_names):
            w.writerow([n, f"{self.precision[i]:.6f}"] + ([f"{self.pckh[i]:.6f}"] if self.pckh is not None else []))
        return buf.getvalue()


def evaluate(pred3d, gt3d, joint_names, pred2d=None, gt2d=None) -> EvalReport:
    names = tuple(joint_names)
    prec = rule_10cm(pred3d, gt3d)
    frames = int(np.asarray(gt3d).shape[0])
    p2 = None
    skipped = 0
    if pred2d is not None and gt2d is not None:
        p2, skipped = pckh(pred2d, gt2d, names.index("head"), names.index("neck"))
    return EvalReport(names, prec, frames, p2, skipped)
