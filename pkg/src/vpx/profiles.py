"""Scale profiles.

``paper`` holds the published sizes (288->256 input, 64x64 heatmaps,
32x32x40 grids cropped to 36 bins, full V-Net channel widths). ``tiny`` keeps the
same topology at desk scale: channels divided by 8, 108->96 input, 24x24
heatmaps, 16x16x24 grids cropped to 20 bins.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class Profile:
    name: str
    full_size: int             # synthetic frame edge (px); P-Net crops input_size out of it
    input_size: int
    heatmap_stride: int
    sigma_2d: float            # heatmap cells
    sigma_3d: float            # voxels
    grid: tuple[int, int, int]
    depth_crop: int            # depth bins fed to the V-Net
    bin_size: float            # mm
    focal: float               # px
    channel_divisor: int
    pnet_width: int
    pnet_depth: int
    fc_width: int              # hidden width of the 2D_CO fully-connected tail
    holistic_size: int
    z_window: tuple[float, float]
    iterations: int
    lr_drop_at: int
    learning_rate: float
    noise_sigma: float         # synthetic depth noise, mm

    @property
    def heatmap_size(self) -> int:
        return self.input_size // self.heatmap_stride

    @property
    def crop_margin(self) -> int:
        return self.full_size - self.input_size

    @property
    def depth_offset_max(self) -> int:
        return self.grid[2] - self.depth_crop

    def to_dict(self) -> dict:
        return asdict(self)


PAPER = Profile(
    name="paper", full_size=288, input_size=256, heatmap_stride=4, sigma_2d=5.0, sigma_3d=1.0,
    grid=(32, 32, 40), depth_crop=36, bin_size=15.0, focal=285.71, channel_divisor=1,
    pnet_width=256, pnet_depth=4, fc_width=1536, holistic_size=128, z_window=(1000.0, 4500.0),
    iterations=30000, lr_drop_at=20000, learning_rate=1e-4, noise_sigma=0.0,
)

TINY = Profile(
    name="tiny", full_size=108, input_size=96, heatmap_stride=4, sigma_2d=2.0, sigma_3d=1.0,
    grid=(16, 16, 24), depth_crop=20, bin_size=25.0, focal=75.0, channel_divisor=8,
    pnet_width=32, pnet_depth=3, fc_width=192, holistic_size=64, z_window=(1000.0, 4500.0),
    iterations=800, lr_drop_at=600, learning_rate=1e-3, noise_sigma=0.0,
)

PROFILES = {"paper": PAPER, "tiny": TINY}


def get(name: str | Profile, **overrides) -> Profile:
    prof = name if isinstance(name, Profile) else PROFILES.get(name)
    if prof is None:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return replace(prof, **overrides) if overrides else prof


def from_dict(d: dict) -> Profile:
    d = dict(d)
    d["grid"] = tuple(d["grid"])
    d["z_window"] = tuple(d["z_window"])
    return Profile(**d)
