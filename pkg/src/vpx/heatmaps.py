"""Gaussian likelihood targets and argmax decoding in 2D and 3D.

Coordinates are continuous array indices: cell ``i`` is centered at ``i``.
2D maps are stored ``[y, x]``; 3D grids are stored ``[x, y, z]``.
"""
from __future__ import annotations

import os
import re

import numpy as np


def make_target(center, dims, sigma: float) -> np.ndarray:
    """Unnormalized separable Gaussian ``exp(-|p - center|^2 / (2 sigma^2))`` on a grid.

    ``center`` and ``dims`` are in array-axis order. Centers outside the grid
    give the (possibly vanishing) tail rather than an error.
    """
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (len(dims),):
        raise ValueError(f"center has {center.size} coordinates for a {len(dims)}-axis grid")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    out = np.ones((), dtype=np.float64)
    for c, n in zip(center, dims):
        g = np.exp(-((np.arange(n) - c) ** 2) / (2.0 * sigma * sigma))
        out = np.multiply.outer(out, g)
    return out.astype(np.float32)


def make_target_2d(joint, dims, sigma: float = 5.0) -> np.ndarray:
    """Channel of shape ``dims = (height, width)`` peaked at ``joint = (x, y)``."""
    x, y = joint
    return make_target((y, x), dims, sigma)


def make_target_3d(joint, dims, sigma: float = 1.0) -> np.ndarray:
    """Channel of shape ``dims = (X, Y, D)`` peaked at ``joint = (x, y, z)``."""
    return make_target(joint, dims, sigma)


def make_targets_2d(joints, dims, sigma: float = 5.0) -> np.ndarray:
    return np.stack([make_target_2d(j, dims, sigma) for j in np.asarray(joints, dtype=np.float64)])


def make_targets_3d(joints, dims, sigma: float = 1.0) -> np.ndarray:
    return np.stack([make_target_3d(j, dims, sigma) for j in np.asarray(joints, dtype=np.float64)])


def decode_argmax(channel: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Index of the maximum (lowest linear index on ties) and the peak value."""
    channel = np.asarray(channel)
    if channel.size == 0:
        raise ValueError("cannot decode an empty heatmap")
    flat = int(np.argmax(channel))
    idx = tuple(int(i) for i in np.unravel_index(flat, channel.shape))
    return idx, float(channel.reshape(-1)[flat])


def decode_all(maps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decode every channel of ``(J, *dims)``; returns ``(J, rank)`` indices and ``(J,)`` peaks."""
    maps = np.asarray(maps)
    flat = maps.reshape(maps.shape[0], -1)
    arg = np.argmax(flat, axis=1)
    idx = np.stack(np.unravel_index(arg, maps.shape[1:]), axis=1)
    return idx.astype(np.int64), flat[np.arange(len(arg)), arg].astype(np.float64)


# -- image export ---------------------------------------------------------

def to_gray(channel: np.ndarray) -> np.ndarray:
    """``value * 255`` clamped to 8 bits."""
    return np.clip(np.rint(np.asarray(channel, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: str | os.PathLike, channel: np.ndarray) -> None:
    """Binary (P5) 8-bit PGM of a 2D channel stored ``[row, col]``."""
    img = to_gray(channel)
    if img.ndim != 2:
        raise ValueError(f"PGM export needs a 2D channel, got shape {img.shape}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+255\s", data)
    if m is None:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    pix = np.frombuffer(data[m.end():], dtype=np.uint8)
    if pix.size != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, found {pix.size}")
    return pix.reshape(h, w)
