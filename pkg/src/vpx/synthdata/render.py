"""Analytic ray casting of capsule figures into depth maps."""
from __future__ import annotations

import numpy as np

from ..geometry import CameraIntrinsics, project
from ..voxelizer import DepthMap
from .skeleton import PoseSample

OCCLUSION_TOLERANCE = 20.0  # mm


def _pixel_rays(cam: CameraIntrinsics, width: int, height: int) -> np.ndarray:
    """Ray directions through pixel centers with unit z component, shape (H*W, 3)."""
    u = (np.arange(width) + 0.5 - cam.cx) / cam.fx
    v = (np.arange(height) + 0.5 - cam.cy) / cam.fy
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)], axis=1)


def _hit_spheres(d: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Nearest positive ray parameter per (ray, sphere); inf on a miss."""
    dd = np.einsum("ij,ij->i", d, d)[:, None]
    dc = d @ centers.T
    cc = np.einsum("ij,ij->i", centers, centers)[None, :] - radii[None, :] ** 2
    disc = dc * dc - dd * cc
    with np.errstate(invalid="ignore"):
        t = (dc - np.sqrt(disc)) / dd
    return np.where((disc >= 0) & (t > 0), t, np.inf)


def _hit_cylinders(d: np.ndarray, a: np.ndarray, b: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Nearest positive hit with the side of finite cylinders a->b (end caps come from spheres)."""
    axis = b - a
    length = np.linalg.norm(axis, axis=1)
    keep = length > 1e-9
    out = np.full((d.shape[0], a.shape[0]), np.inf)
    if not keep.any():
        return out
    a, axis, length, radii = a[keep], axis[keep], length[keep], radii[keep]
    n = axis / length[:, None]
    w = -a                                                   # ray origin (camera center) minus a
    dn = d @ n.T                                             # (R, K)
    wn = np.einsum("kj,kj->k", w, n)                         # (K,)
    dw = d @ w.T
    dd = np.einsum("ij,ij->i", d, d)[:, None]
    ww = np.einsum("kj,kj->k", w, w)
    qa = dd - dn * dn
    qb = 2.0 * (dw - dn * wn[None, :])
    qc = (ww - wn * wn - radii * radii)[None, :]
    disc = qb * qb - 4.0 * qa * qc
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (-qb - np.sqrt(disc)) / (2.0 * qa)
    s = wn[None, :] + t * dn
    ok = (disc >= 0) & (qa > 1e-12) & (t > 0) & (s >= 0) & (s <= length[None, :])
    out[:, keep] = np.where(ok, t, np.inf)
    return out


def render_depth(sample: PoseSample | None, cam: CameraIntrinsics, width: int, height: int,
                 noise_sigma: float = 0.0, rng: np.random.Generator | None = None) -> DepthMap:
    """Z-buffered depth of the figure's capsules and joint spheres; background is invalid.

    The stored value is the z coordinate of the nearest surface point along
    each pixel-center ray.
    """
    d = _pixel_rays(cam, width, height)
    depth = np.full(d.shape[0], np.inf)
    if sample is not None:
        skel = sample.skeleton
        xyz = sample.all_xyz
        if np.any(xyz[:, 2] - skel.surface_radius() <= 0):
            raise ValueError("figure intersects or lies behind the camera plane")
        depth = np.minimum(depth, _hit_spheres(d, xyz, skel.joint_radius).min(axis=1))
        bones = [j for j, p in enumerate(skel.parents) if p >= 0]
        parents = [skel.parents[j] for j in bones]
        r = skel.bone_radius[bones]
        depth = np.minimum(depth, _hit_spheres(d, xyz[bones], r).min(axis=1))
        depth = np.minimum(depth, _hit_spheres(d, xyz[parents], r).min(axis=1))
        depth = np.minimum(depth, _hit_cylinders(d, xyz[parents], xyz[bones], r).min(axis=1))
    valid = np.isfinite(depth)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("depth noise needs an rng")
        depth = depth + valid * rng.normal(0.0, noise_sigma, size=depth.shape)
    depth = np.where(valid, depth, 0.0).astype(np.float32).reshape(height, width)
    return DepthMap(depth, valid.reshape(height, width), cam)


def joint_visibility(sample: PoseSample, dm: DepthMap, tol: float = OCCLUSION_TOLERANCE):
    """Per output joint: (projected uv, in_image, occluded).

    A joint is occluded when the rendered depth at its pixel lies more than
    its surface radius plus ``tol`` in front of the joint center, or when the
    pixel is empty.
    """
    skel = sample.skeleton
    idx = list(skel.output)
    xyz = sample.all_xyz[idx]
    radius = skel.surface_radius()[idx]
    uv = project(xyz, dm.intrinsics)
    pu = np.floor(uv[:, 0]).astype(int)
    pv = np.floor(uv[:, 1]).astype(int)
    inside = (pu >= 0) & (pu < dm.width) & (pv >= 0) & (pv < dm.height)
    occluded = np.ones(len(idx), dtype=bool)
    for k in np.nonzero(inside)[0]:
        if dm.valid[pv[k], pu[k]]:
            occluded[k] = dm.depth[pv[k], pu[k]] < xyz[k, 2] - radius[k] - tol
    return uv, inside, occluded
