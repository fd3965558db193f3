"""Mini-batch SGD with momentum and L2 weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spec import ShapeError


@dataclass
class OptimizerState:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    velocity: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    """In-place update, Torch7 ``optim.sgd`` ordering::

        v <- momentum * v + (grad + weight_decay * param)
        param <- param - lr * v

    Velocities are created lazily (zeros) and keyed like ``params``.
    """
    lr, mom, wd = state.learning_rate, state.momentum, state.weight_decay
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(p)
        elif v.shape != p.shape:
            raise ShapeError(f"velocity for {name!r} has shape {v.shape}, parameter has {p.shape}")
        d = g + wd * p if wd else g
        v *= mom
        v += d
        p -= lr * v
