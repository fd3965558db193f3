"""Batch norm, ReLU, max-pool, linear, upsample and the heatmap MSE loss."""
from __future__ import annotations

import numpy as np

from . import backend
from .spec import LayerSpec, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


# -- batch normalization --------------------------------------------------

def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode="train", spec: LayerSpec | None = None,
                      momentum=BN_MOMENTUM, eps=BN_EPS, cache: dict | None = None):
    """Per-channel normalization over the batch and all spatial axes.

    In ``train`` mode batch statistics are used and the running statistics are
    updated in place (unbiased variance); ``eval`` mode uses the running ones.
    """
    if x.ndim < 2 or x.shape[0] == 0:
        raise ShapeError(f"batchnorm needs a non-empty batch, got shape {x.shape}")
    C = x.shape[1]
    if spec is not None and spec.in_channels != C:
        raise ShapeError(f"batchnorm input axis 1 (channels) has {C}, expected {spec.in_channels}")
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"batchnorm gamma/beta must have shape ({C},)")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, C) + (1,) * (x.ndim - 2)
    if mode == "train":
        m = x.size // C
        mean = x.mean(axis=axes, dtype=x.dtype)
        centered = x - mean.reshape(bshape)
        var = (centered * centered).mean(axis=axes, dtype=x.dtype)
        inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        xhat = centered * inv_std.reshape(bshape)
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    elif mode == "eval":
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
        xhat = (x - running_mean.reshape(bshape)) * inv_std.reshape(bshape)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if cache is not None:
        cache.update(mode=mode, xhat=xhat, inv_std=inv_std)
    return xhat * gamma.reshape(bshape) + beta.reshape(bshape)


def batchnorm_backward(grad_out, cache: dict, gamma):
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    C = grad_out.shape[1]
    axes = (0,) + tuple(range(2, grad_out.ndim))
    bshape = (1, C) + (1,) * (grad_out.ndim - 2)
    ggamma = (grad_out * xhat).sum(axis=axes)
    gbeta = grad_out.sum(axis=axes)
    scale = (gamma * inv_std).reshape(bshape)
    if cache["mode"] == "eval":
        return grad_out * scale, ggamma, gbeta
    m = grad_out.size // C
    gx = scale / m * (m * grad_out - gbeta.reshape(bshape) - xhat * ggamma.reshape(bshape))
    return gx.astype(grad_out.dtype, copy=False), ggamma, gbeta


# -- ReLU -----------------------------------------------------------------

def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


# -- max pooling ----------------------------------------------------------

def _lift(t, fill=1):
    return (fill,) * (3 - len(t)) + tuple(t)


def maxpool_forward(x, window, stride=None):
    """Max over windows; returns ``(y, argmax)`` with flat input indices.

    Ties go to the lowest linear index in the window.
    """
    r = x.ndim - 2
    window = tuple(window) if not isinstance(window, int) else (window,) * r
    stride = window if stride is None else (tuple(stride) if not isinstance(stride, int) else (stride,) * r)
    if len(window) != r or len(stride) != r:
        raise ShapeError(f"maxpool window {window} / stride {stride} do not match input rank {r}")
    if any(w < 1 for w in window) or any(s < 1 for s in stride):
        raise ValueError("maxpool window and stride must be positive")
    out = []
    for i, (s, w, st) in enumerate(zip(x.shape[2:], window, stride)):
        if w > s:
            raise ShapeError(f"maxpool window {w} larger than input axis {2 + i} (extent {s})")
        out.append((s - w) // st + 1)
    x5 = np.ascontiguousarray(x.reshape(x.shape[:2] + (1,) * (3 - r) + x.shape[2:]))
    o5 = _lift(out)
    y = np.empty(x.shape[:2] + o5, dtype=x.dtype)
    arg = np.empty(x.shape[:2] + o5, dtype=np.int64)
    backend.kernels.maxpool_forward(x5, _lift(window), _lift(stride), o5, y, arg)
    shape = x.shape[:2] + tuple(out)
    return y.reshape(shape), arg.reshape(shape)


def maxpool_backward(grad_out, argmax, input_shape):
    if grad_out.shape != argmax.shape:
        raise ShapeError(f"maxpool grad_out shape {grad_out.shape} != forward output shape {argmax.shape}")
    gx = np.zeros(int(np.prod(input_shape)), dtype=grad_out.dtype)
    backend.kernels.maxpool_backward(np.ascontiguousarray(grad_out).ravel(), np.ascontiguousarray(argmax).ravel(), gx)
    return gx.reshape(input_shape)


# -- linear ----------------------------------------------------------------

def linear_forward(x, weights, bias):
    if x.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ShapeError(f"linear input axis 1 has {x.shape[-1]}, expected {weights.shape[1]}")
    return x @ weights.T + bias


def linear_backward(grad_out, x, weights):
    return grad_out @ weights, grad_out.T @ x, grad_out.sum(axis=0)


# -- nearest-neighbour upsampling -----------------------------------------

def upsample_forward(x, factor):
    y = x
    for i, f in enumerate(factor):
        if f != 1:
            y = np.repeat(y, f, axis=2 + i)
    return y


def upsample_backward(grad_out, factor):
    g = grad_out
    for i, f in enumerate(factor):
        if f != 1:
            ax = 2 + i
            shape = g.shape[:ax] + (g.shape[ax] // f, f) + g.shape[ax + 1:]
            g = g.reshape(shape).sum(axis=ax + 1)
    return g


# -- loss -------------------------------------------------------------------

def mse_loss(pred, target, num_joints: int, batch_size: int = 1):
    """Heatmap loss ``(1/J) * sum (pred - target)^2``, averaged over ``batch_size``.

    Returns ``(loss, grad_pred)`` with ``grad_pred = 2 (pred - target) / (J * batch_size)``.
    """
    if pred.shape != target.shape:
        axis = next((i for i, (a, b) in enumerate(zip(pred.shape, target.shape)) if a != b), None)
        raise ShapeError(f"mse_loss shape mismatch at axis {axis}: pred {pred.shape}, target {target.shape}")
    if num_joints < 1 or batch_size < 1:
        raise ValueError("num_joints and batch_size must be positive")
    diff = pred - target
    scale = num_joints * batch_size
    loss = float(np.sum(diff * diff, dtype=pred.dtype)) / scale
    return loss, (diff * (2.0 / scale)).astype(pred.dtype, copy=False)
