"""A small DAG executor over :class:`LayerSpec` lists, with parameters and backward."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import engine
from ..engine import LayerSpec, ShapeError
from ..engine import tdf

INIT_STD = 0.001


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    profile: str
    num_joints: int
    input_shape: tuple[int, ...]        # (C, *spatial), batch excluded
    layers: tuple[LayerSpec, ...]
    meta: dict = field(default_factory=dict)

    def blocks(self) -> list[list[int]]:
        """Layer indices grouped into building blocks, one per conv/linear layer."""
        groups: list[list[int]] = []
        for i, layer in enumerate(self.layers):
            if layer.kind in ("conv", "linear") or not groups:
                groups.append([i])
            else:
                groups[-1].append(i)
        return groups

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "profile": self.profile,
            "num_joints": self.num_joints,
            "input_shape": list(self.input_shape),
            "layers": [layer.to_dict() for layer in self.layers],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            name=d["name"], profile=d["profile"], num_joints=int(d["num_joints"]),
            input_shape=tuple(d["input_shape"]),
            layers=tuple(LayerSpec.from_dict(x) for x in d["layers"]),
            meta=dict(d.get("meta", {})),
        )


def _input_index(spec: LayerSpec, i: int) -> int:
    return i - 1 if spec.input is None else spec.input


class Network:
    """Parameters, running statistics and forward/backward for a :class:`NetworkSpec`.

    Weights are drawn from N(0, 0.001^2), biases start at zero, batch-norm
    scale/shift at one/zero.
    """

    def __init__(self, spec: NetworkSpec, seed: int = 0, init_std: float = INIT_STD):
        self.spec = spec
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._caches: list | None = None
        self.extra: dict = {}
        rng = np.random.default_rng(seed)
        for i, layer in enumerate(spec.layers):
            p = self._prefix(i)
            if layer.kind == "conv":
                shape = (layer.out_channels, layer.in_channels) + layer.kernel
                self.params[p + "weight"] = (rng.standard_normal(shape) * init_std).astype(np.float32)
                self.params[p + "bias"] = np.zeros(layer.out_channels, np.float32)
            elif layer.kind == "linear":
                shape = (layer.out_channels, layer.in_channels)
                self.params[p + "weight"] = (rng.standard_normal(shape) * init_std).astype(np.float32)
                self.params[p + "bias"] = np.zeros(layer.out_channels, np.float32)
            elif layer.kind == "batchnorm":
                self.params[p + "gamma"] = np.ones(layer.in_channels, np.float32)
                self.params[p + "beta"] = np.zeros(layer.in_channels, np.float32)
                self.buffers[p + "running_mean"] = np.zeros(layer.in_channels, np.float32)
                self.buffers[p + "running_var"] = np.ones(layer.in_channels, np.float32)
        self.zero_grad()

    def _prefix(self, i: int) -> str:
        return f"{i:02d}.{self.spec.layers[i].kind}."

    @property
    def num_joints(self) -> int:
        return self.spec.num_joints

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- forward / backward ----------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, record: bool | None = None) -> np.ndarray:
        """Run the network on ``x`` of shape ``(N, *input_shape)``.

        ``train`` selects batch statistics for batch norm; ``record`` (default:
        ``train``) keeps the intermediates needed by :meth:`backward`.
        """
        if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(f"{self.spec.name} expects input (N, {', '.join(map(str, self.spec.input_shape))}), "
                             f"got {x.shape}")
        record = train if record is None else record
        outs: list[np.ndarray] = []
        caches: list = []
        mode = "train" if train else "eval"
        for i, layer in enumerate(self.spec.layers):
            j = _input_index(layer, i)
            h = x if j < 0 else outs[j]
            p = self._prefix(i)
            cache = None
            kind = layer.kind
            if kind == "conv":
                cache = {} if record else None
                y = engine.conv_forward(h, layer, self.params[p + "weight"], self.params[p + "bias"], cache=cache)
            elif kind == "batchnorm":
                cache = {} if record else None
                y = engine.batchnorm_forward(h, self.params[p + "gamma"], self.params[p + "beta"],
                                             self.buffers[p + "running_mean"], self.buffers[p + "running_var"],
                                             mode=mode, spec=layer, cache=cache)
            elif kind == "relu":
                y = engine.relu_forward(h)
            elif kind == "maxpool":
                y, cache = engine.maxpool_forward(h, layer.kernel, layer.stride)
            elif kind == "linear":
                y = engine.linear_forward(h, self.params[p + "weight"], self.params[p + "bias"])
            elif kind == "flatten":
                y = h.reshape(h.shape[0], -1)
            elif kind == "upsample":
                y = engine.upsample_forward(h, layer.stride)
            elif kind == "add":
                other = x if layer.source < 0 else outs[layer.source]
                if other.shape != h.shape:
                    raise ShapeError(f"add layer {i}: operand shapes {h.shape} and {other.shape} differ")
                y = h + other
            else:  # pragma: no cover - LayerSpec validates kinds
                raise ValueError(kind)
            outs.append(y)
            caches.append(cache)
        if record:
            self._caches = [x, outs, caches]
        else:
            self._caches = None
        return outs[-1]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients into ``self.grads``; return the input gradient."""
        if self._caches is None:
            raise RuntimeError("backward() needs a preceding forward(..., record=True)")
        x, outs, caches = self._caches
        layers = self.spec.layers
        if grad.shape != outs[-1].shape:
            raise ShapeError(f"grad shape {grad.shape} != output shape {outs[-1].shape}")
        g_out: list[np.ndarray | None] = [None] * len(layers)
        g_out[-1] = grad
        g_in = np.zeros_like(x)

        def push(idx: int, g: np.ndarray) -> None:
            nonlocal g_in
            if idx < 0:
                g_in = g_in + g
            elif g_out[idx] is None:
                g_out[idx] = g
            else:
                g_out[idx] = g_out[idx] + g

        for i in range(len(layers) - 1, -1, -1):
            g = g_out[i]
            if g is None:
                continue
            g_out[i] = None
            layer = layers[i]
            j = _input_index(layer, i)
            h = x if j < 0 else outs[j]
            p = self._prefix(i)
            kind = layer.kind
            if kind == "conv":
                gx, gw, gb = engine.conv_backward(g, h, layer, self.params[p + "weight"], cache=caches[i])
                self.grads[p + "weight"] += gw
                self.grads[p + "bias"] += gb
            elif kind == "batchnorm":
                gx, gg, gbeta = engine.batchnorm_backward(g, caches[i], self.params[p + "gamma"])
                self.grads[p + "gamma"] += gg
                self.grads[p + "beta"] += gbeta
            elif kind == "relu":
                gx = engine.relu_backward(g, h)
            elif kind == "maxpool":
                gx = engine.maxpool_backward(g, caches[i], h.shape)
            elif kind == "linear":
                gx, gw, gb = engine.linear_backward(g, h, self.params[p + "weight"])
                self.grads[p + "weight"] += gw
                self.grads[p + "bias"] += gb
            elif kind == "flatten":
                gx = g.reshape(h.shape)
            elif kind == "upsample":
                gx = engine.upsample_backward(g, layer.stride)
            elif kind == "add":
                push(layer.source, g)
                gx = g
            push(j, gx)
        self._caches = None
        return g_in

    def output_shape(self) -> tuple[int, ...]:
        """Per-sample output shape, computed by shape propagation."""
        shapes: list[tuple[int, ...]] = []
        inp = tuple(self.spec.input_shape)
        for i, layer in enumerate(self.spec.layers):
            j = _input_index(layer, i)
            s = inp if j < 0 else shapes[j]
            if layer.kind == "conv":
                s = (layer.out_channels,) + tuple(
                    engine.output_extent(e, k, st, pd)
                    for e, k, st, pd in zip(s[1:], layer.kernel, layer.stride, layer.padding))
            elif layer.kind == "maxpool":
                s = (s[0],) + tuple((e - w) // st + 1 for e, w, st in zip(s[1:], layer.kernel, layer.stride))
            elif layer.kind == "linear":
                s = (layer.out_channels,)
            elif layer.kind == "flatten":
                s = (int(np.prod(s)),)
            elif layer.kind == "upsample":
                s = (s[0],) + tuple(e * f for e, f in zip(s[1:], layer.stride))
            shapes.append(s)
        return shapes[-1]

    # -- persistence -----------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        return {**self.params, **{"buffer:" + k: v for k, v in self.buffers.items()}}

    def save(self, path, extra: dict | None = None) -> None:
        header = {"format": "vpx-checkpoint", "version": 1, "network": self.spec.to_dict(), "extra": extra or {}}
        tdf.save_archive(path, self.state(), header=header)

    @classmethod
    def load(cls, path) -> "Network":
        header, entries = tdf.load_archive(path)
        if not header or header.get("format") != "vpx-checkpoint":
            raise tdf.TDFError(f"{path}: not a vpx checkpoint (missing header)")
        net = cls(NetworkSpec.from_dict(header["network"]), init_std=0.0)
        for name, arr in entries.items():
            target = net.buffers if name.startswith("buffer:") else net.params
            key = name.removeprefix("buffer:")
            if key not in target or target[key].shape != arr.shape:
                raise tdf.TDFError(f"{path}: entry {name!r} does not match network {net.spec.name}")
            target[key] = arr.copy()
        missing = [k for k in net.params if k not in entries] + [
            k for k in net.buffers if "buffer:" + k not in entries]
        if missing:
            raise tdf.TDFError(f"{path}: missing entries {missing[:3]}")
        net.extra = header.get("extra", {})
        return net
