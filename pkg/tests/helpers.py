"""Independent oracles shared by the test modules."""
from __future__ import annotations

import numpy as np

from vpx.engine import (
    LayerSpec,
    batchnorm_backward,
    batchnorm_forward,
    conv_backward,
    conv_forward,
    maxpool_backward,
    maxpool_forward,
    mse_loss,
    relu_backward,
    relu_forward,
)

EPS = 1e-3


def numeric_grad(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Largest elementwise ``|a - b| / max(|a| + |b|, 1e-8)``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-8)))


def check_conv(rng, rank: int, n, ci, co, size, kernel, stride=1, pad=None) -> float:
    pad = kernel // 2 if pad is None else pad
    spec = LayerSpec.conv(ci, co, kernel, rank=rank, stride=stride, padding=pad)
    x = rng.standard_normal((n, ci) + (size,) * rank)
    w = rng.standard_normal((co, ci) + (kernel,) * rank)
    b = rng.standard_normal(co)
    y = conv_forward(x, spec, w, b)
    r = rng.standard_normal(y.shape)
    loss = lambda: float(np.sum(conv_forward(x, spec, w, b) * r))
    cache: dict = {}
    conv_forward(x, spec, w, b, cache=cache)
    gx, gw, gb = conv_backward(r, x, spec, w, cache)
    return max(rel_error(gx, numeric_grad(loss, x)), rel_error(gw, numeric_grad(loss, w)),
               rel_error(gb, numeric_grad(loss, b)))


def check_batchnorm(rng, shape) -> float:
    C = shape[1]
    x = rng.standard_normal(shape) * 2 + 0.5
    gamma = rng.standard_normal(C)
    beta = rng.standard_normal(C)
    r = rng.standard_normal(shape)

    def fwd(cache=None):
        return batchnorm_forward(x, gamma, beta, np.zeros(C), np.ones(C), "train", cache=cache)

    loss = lambda: float(np.sum(fwd() * r))
    cache: dict = {}
    fwd(cache)
    gx, gg, gb = batchnorm_backward(r, cache, gamma)
    return max(rel_error(gx, numeric_grad(loss, x)), rel_error(gg, numeric_grad(loss, gamma)),
               rel_error(gb, numeric_grad(loss, beta)))


def check_maxpool(rng, shape, window) -> float:
    # distinct values spaced well beyond 2*eps so no perturbation changes a window's winner
    n = int(np.prod(shape))
    x = (rng.permutation(n).astype(np.float64) * 0.01).reshape(shape)
    y, arg = maxpool_forward(x, window)
    r = rng.standard_normal(y.shape)
    loss = lambda: float(np.sum(maxpool_forward(x, window)[0] * r))
    gx = maxpool_backward(r, arg, x.shape)
    return rel_error(gx, numeric_grad(loss, x))


def check_relu(rng, shape) -> float:
    x = rng.standard_normal(shape)
    x[np.abs(x) < 10 * EPS] = 0.5           # keep the kink out of the stencil
    r = rng.standard_normal(shape)
    loss = lambda: float(np.sum(relu_forward(x) * r))
    return rel_error(relu_backward(r, x), numeric_grad(loss, x))


def check_mse(rng, shape) -> float:
    pred = rng.standard_normal(shape)
    target = rng.random(shape)
    J = shape[1]
    loss = lambda: mse_loss(pred, target, J, shape[0])[0]
    _, g = mse_loss(pred, target, J, shape[0])
    return rel_error(g, numeric_grad(loss, pred))


GRADIENT_CASES = {
    "conv2d": [
        lambda r: check_conv(r, 2, 2, 2, 3, 5, 3),
        lambda r: check_conv(r, 2, 1, 3, 2, 6, 3, stride=2),
        lambda r: check_conv(r, 2, 2, 1, 2, 7, 5),
        lambda r: check_conv(r, 2, 1, 2, 2, 5, 1, pad=0),
        lambda r: check_conv(r, 2, 1, 2, 3, 6, 7),
    ],
    "conv3d": [
        lambda r: check_conv(r, 3, 1, 2, 2, 4, 3),
        lambda r: check_conv(r, 3, 2, 1, 2, 5, 5),
        lambda r: check_conv(r, 3, 1, 2, 1, 5, 3, stride=2),
        lambda r: check_conv(r, 3, 1, 1, 2, 6, 7),
        lambda r: check_conv(r, 3, 1, 3, 2, 3, 1, pad=0),
    ],
    "batchnorm2d": [lambda r, s=s: check_batchnorm(r, s) for s in
                    [(2, 3, 4, 4), (3, 2, 3, 5), (4, 1, 2, 2), (2, 4, 3, 3), (1, 2, 5, 4)]],
    "batchnorm3d": [lambda r, s=s: check_batchnorm(r, s) for s in
                    [(2, 2, 3, 3, 3), (1, 3, 2, 4, 3), (3, 1, 2, 2, 2), (2, 2, 2, 3, 4), (1, 2, 4, 4, 2)]],
    "maxpool": [
        lambda r: check_maxpool(r, (2, 2, 4, 4), 2),
        lambda r: check_maxpool(r, (1, 3, 6, 6), 3),
        lambda r: check_maxpool(r, (1, 2, 4, 4, 4), 2),
        lambda r: check_maxpool(r, (2, 1, 5, 4), (2, 2)),
        lambda r: check_maxpool(r, (1, 2, 6, 4, 2), (2, 2, 2)),
    ],
    "relu": [lambda r, s=s: check_relu(r, s) for s in
             [(2, 3, 4), (1, 2, 3, 3), (2, 2, 2, 2, 2), (3, 5), (1, 1, 7, 7)]],
    "mse": [lambda r, s=s: check_mse(r, s) for s in
            [(1, 1, 4, 4), (2, 3, 5, 5), (4, 2, 3, 3, 3), (3, 15, 2, 2), (2, 1, 6)]],
}


def brute_conv(x, w, b, stride, pad):
    """Loop-nest cross-correlation reference for any rank."""
    r = x.ndim - 2
    xp = np.pad(x, [(0, 0), (0, 0)] + [(pad, pad)] * r)
    k = w.shape[2:]
    out = [(xp.shape[2 + i] - k[i]) // stride + 1 for i in range(r)]
    y = np.zeros((x.shape[0], w.shape[0]) + tuple(out))
    for idx in np.ndindex(*out):
        sl = tuple(slice(o * stride, o * stride + kk) for o, kk in zip(idx, k))
        patch = xp[(slice(None), slice(None)) + sl]                     # (N, Ci, *k)
        y[(slice(None), slice(None)) + idx] = np.tensordot(patch, w, axes=(list(range(1, r + 2)),
                                                                           list(range(1, r + 2))))
    return y + b.reshape((1, -1) + (1,) * r)


# -- acceptance reporting ---------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    """Remember one criterion's outcome for the end-of-session summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return bool(ok)
