"""Synthetic capsule-figure depth scenes and the dataset file format."""
from .dataset import (
    DatasetManifest,
    Frame,
    generate,
    read_dataset,
    synth_frame,
    write_dataset,
)
from .render import joint_visibility, render_depth
from .skeleton import (
    EVAL12,
    ITOP15,
    JOINT_SETS,
    Pose,
    PoseSample,
    SkeletonModel,
    default_skeleton,
    forward_kinematics,
    rest_pose,
    sample_pose,
)

__all__ = [
    "DatasetManifest", "EVAL12", "Frame", "ITOP15", "JOINT_SETS", "Pose", "PoseSample", "SkeletonModel",
    "default_skeleton", "forward_kinematics", "generate", "joint_visibility", "read_dataset", "render_depth",
    "rest_pose", "sample_pose", "synth_frame", "write_dataset",
]
