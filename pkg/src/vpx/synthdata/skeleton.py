"""Articulated capsule figure: joint tree, rest offsets, angle limits, forward kinematics.

Camera coordinates: x to the image right, y down, z away from the camera.
The figure faces the camera, so its right side appears on the image left.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ITOP15 = ("head", "neck", "r_shoulder", "l_shoulder", "r_elbow", "l_elbow", "r_hand", "l_hand",
          "torso", "r_hip", "l_hip", "r_knee", "l_knee", "r_foot", "l_foot")
EVAL12 = ("head", "neck", "r_shoulder", "l_shoulder", "r_elbow", "l_elbow", "r_hand", "l_hand",
          "r_knee", "l_knee", "r_foot", "l_foot")
JOINT_SETS = {"itop15": ITOP15, "eval12": EVAL12}

# name: (parent, rest offset from parent in mm, joint sphere radius)
_JOINTS = {
    "torso": (None, (0.0, 0.0, 0.0), 120.0),
    "neck": ("torso", (0.0, -260.0, 0.0), 60.0),
    "head": ("neck", (0.0, -240.0, 0.0), 100.0),
    "r_shoulder": ("neck", (-170.0, 30.0, 0.0), 55.0),
    "l_shoulder": ("neck", (170.0, 30.0, 0.0), 55.0),
    "r_elbow": ("r_shoulder", (-280.0, 0.0, 0.0), 48.0),
    "l_elbow": ("l_shoulder", (280.0, 0.0, 0.0), 48.0),
    "r_hand": ("r_elbow", (-250.0, 0.0, 0.0), 45.0),
    "l_hand": ("l_elbow", (250.0, 0.0, 0.0), 45.0),
    "r_hip": ("torso", (-100.0, 220.0, 0.0), 90.0),
    "l_hip": ("torso", (100.0, 220.0, 0.0), 90.0),
    "r_knee": ("r_hip", (0.0, 420.0, 0.0), 62.0),
    "l_knee": ("l_hip", (0.0, 420.0, 0.0), 62.0),
    "r_foot": ("r_knee", (0.0, 420.0, 0.0), 55.0),
    "l_foot": ("l_knee", (0.0, 420.0, 0.0), 55.0),
}

# capsule radius of the bone ending at each joint
_BONE_RADIUS = {
    "neck": 120.0, "head": 55.0, "r_shoulder": 55.0, "l_shoulder": 55.0, "r_elbow": 48.0, "l_elbow": 48.0,
    "r_hand": 40.0, "l_hand": 40.0, "r_hip": 90.0, "l_hip": 90.0, "r_knee": 62.0, "l_knee": 62.0,
    "r_foot": 52.0, "l_foot": 52.0,
}

# per-joint (rx, ry, rz) limits in radians for the rotation of the bone ending there
_LIMITS = {
    "neck": ((-0.2, 0.2), (-0.2, 0.2), (-0.15, 0.15)),
    "head": ((-0.3, 0.3), (0.0, 0.0), (-0.3, 0.3)),
    "r_shoulder": ((-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1)),
    "l_shoulder": ((-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1)),
    "r_elbow": ((0.0, 0.0), (-0.9, 0.6), (-1.4, 0.8)),
    "l_elbow": ((0.0, 0.0), (-0.6, 0.9), (-0.8, 1.4)),
    "r_hand": ((0.0, 0.0), (-1.0, 0.2), (-1.4, 0.3)),
    "l_hand": ((0.0, 0.0), (-0.2, 1.0), (-0.3, 1.4)),
    "r_hip": ((-0.1, 0.1), (0.0, 0.0), (-0.1, 0.1)),
    "l_hip": ((-0.1, 0.1), (0.0, 0.0), (-0.1, 0.1)),
    "r_knee": ((-0.8, 0.3), (0.0, 0.0), (-0.1, 0.35)),
    "l_knee": ((-0.8, 0.3), (0.0, 0.0), (-0.35, 0.1)),
    "r_foot": ((0.0, 0.8), (0.0, 0.0), (-0.1, 0.1)),
    "l_foot": ((0.0, 0.8), (0.0, 0.0), (-0.1, 0.1)),
}
_ROOT_LIMITS = ((-0.15, 0.15), (-0.5, 0.5), (-0.15, 0.15))

# torso joint sits this far above the vertical middle of the figure
ROOT_CENTER_OFFSET = 257.0


@dataclass(frozen=True)
class SkeletonModel:
    names: tuple[str, ...]
    parents: tuple[int, ...]                # -1 for the root
    offsets: np.ndarray                     # (J, 3) rest offsets, mm
    joint_radius: np.ndarray                # (J,)
    bone_radius: np.ndarray                 # (J,) radius of the bone parent->j (0 for the root)
    limits: np.ndarray                      # (J, 3, 2) local rotation limits
    root_limits: np.ndarray                 # (3, 2)
    output: tuple[int, ...] = field(default=())

    @property
    def num_joints(self) -> int:
        return len(self.output)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.output)

    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets, axis=1)

    def children(self, j: int) -> list[int]:
        return [i for i, p in enumerate(self.parents) if p == j]

    def surface_radius(self) -> np.ndarray:
        """Largest primitive radius touching each joint (joint sphere or adjoining capsule)."""
        r = self.joint_radius.copy()
        for j, p in enumerate(self.parents):
            if p >= 0:
                r[j] = max(r[j], self.bone_radius[j])
                r[p] = max(r[p], self.bone_radius[j])
        return r


def default_skeleton(joint_set: str = "itop15") -> SkeletonModel:
    if joint_set not in JOINT_SETS:
        raise ValueError(f"unknown joint set {joint_set!r}; choose from {sorted(JOINT_SETS)}")
    # parents must precede children; ITOP order does not, so FK order is kept separately
    order = ["torso", "neck", "head", "r_shoulder", "l_shoulder", "r_elbow", "l_elbow", "r_hand", "l_hand",
             "r_hip", "l_hip", "r_knee", "l_knee", "r_foot", "l_foot"]
    index = {n: i for i, n in enumerate(order)}
    parents = tuple(-1 if _JOINTS[n][0] is None else index[_JOINTS[n][0]] for n in order)
    offsets = np.array([_JOINTS[n][1] for n in order], dtype=np.float64)
    jr = np.array([_JOINTS[n][2] for n in order])
    br = np.array([_BONE_RADIUS.get(n, 0.0) for n in order])
    lim = np.array([_LIMITS.get(n, ((0, 0), (0, 0), (0, 0))) for n in order], dtype=np.float64)
    out = tuple(index[n] for n in JOINT_SETS[joint_set])
    return SkeletonModel(tuple(order), parents, offsets, jr, br, lim, np.array(_ROOT_LIMITS), out)


def rotation(rx: float, ry: float, rz: float) -> np.ndarray:
    """``Rz @ Ry @ Rx``."""
    cx, sx, cy, sy, cz, sz = np.cos(rx), np.sin(rx), np.cos(ry), np.sin(ry), np.cos(rz), np.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def forward_kinematics(skel: SkeletonModel, angles: np.ndarray, root_position, root_angles=(0.0, 0.0, 0.0)) -> np.ndarray:
    """World positions ``(J_all, 3)`` in skeleton order."""
    angles = np.asarray(angles, dtype=np.float64).reshape(len(skel.names), 3)
    pos = np.zeros((len(skel.names), 3))
    rot = [None] * len(skel.names)
    for j, p in enumerate(skel.parents):
        if p < 0:
            rot[j] = rotation(*root_angles)
            pos[j] = np.asarray(root_position, dtype=np.float64)
        else:
            rot[j] = rot[p] @ rotation(*angles[j])
            pos[j] = pos[p] + rot[j] @ skel.offsets[j]
    return pos


@dataclass
class Pose:
    """Joint positions for the skeleton's output joints."""

    xyz: np.ndarray                         # (J, 3) mm, camera coordinates
    names: tuple[str, ...]

    @property
    def num_joints(self) -> int:
        return len(self.names)


@dataclass
class PoseSample:
    """A sampled figure: all-joint positions plus the parameters that produced them."""

    all_xyz: np.ndarray
    angles: np.ndarray
    root_angles: np.ndarray
    skeleton: SkeletonModel

    @property
    def pose(self) -> Pose:
        return Pose(self.all_xyz[list(self.skeleton.output)], self.skeleton.output_names)


def sample_pose(skel: SkeletonModel, rng: np.random.Generator, depth_range=(1500.0, 3500.0),
                jitter: float = 100.0) -> PoseSample:
    """Uniform angles within limits; torso placed so the figure is roughly centered on the optical axis."""
    lo, hi = skel.limits[..., 0], skel.limits[..., 1]
    angles = lo + (hi - lo) * rng.random(lo.shape)
    rl = skel.root_limits
    root_angles = rl[:, 0] + (rl[:, 1] - rl[:, 0]) * rng.random(3)
    z = rng.uniform(*depth_range)
    x, y = rng.uniform(-jitter, jitter, size=2)
    root = (x, y - ROOT_CENTER_OFFSET, z)
    return PoseSample(forward_kinematics(skel, angles, root, root_angles), angles, root_angles, skel)


def rest_pose(skel: SkeletonModel, root_depth: float = 2500.0) -> PoseSample:
    """Zero angles: arms horizontal (T-pose), torso on the optical axis at ``root_depth``."""
    angles = np.zeros((len(skel.names), 3))
    zero = np.zeros(3)
    return PoseSample(forward_kinematics(skel, angles, (0.0, 0.0, root_depth)), angles, zero, skel)
