"""Network definitions: V-Net, P-Net stand-in, and the component-analysis variants."""
from __future__ import annotations

import numpy as np

from .. import profiles
from ..engine import LayerSpec, conv_method, mse_loss
from .model import INIT_STD, Network, NetworkSpec

# V-Net layout: (channels, cubic kernel extent) for blocks 1-10; block 11 is a 1x1x1 conv to J.
VNET_BLOCKS = [(64, 7), (64, 5), (128, 5), (128, 5), (128, 5), (256, 5), (256, 5), (256, 5), (256, 1), (256, 1)]

ABLATION_KINDS = ("2d_co", "2d_vl")


class _Builder:
    def __init__(self, rank: int):
        self.rank = rank
        self.layers: list[LayerSpec] = []

    @property
    def last(self) -> int:
        return len(self.layers) - 1

    def add(self, spec: LayerSpec) -> int:
        self.layers.append(spec)
        return self.last

    def block(self, cin, cout, k, *, input=None, stride=1, bn_relu=True) -> int:
        self.add(LayerSpec.conv(cin, cout, k, rank=self.rank, stride=stride, input=input))
        if bn_relu:
            self.add(LayerSpec.batchnorm(cout, rank=self.rank))
            self.add(LayerSpec.relu(rank=self.rank))
        return self.last

    def residual(self, c, x: int) -> int:
        self.block(c, c, 3, input=x)
        self.add(LayerSpec.conv(c, c, 3, rank=self.rank))
        self.add(LayerSpec.batchnorm(c, rank=self.rank))
        self.add(LayerSpec("add", self.rank, source=x))
        return self.add(LayerSpec.relu(rank=self.rank))


def _scaled(channels: int, prof: profiles.Profile) -> int:
    return max(1, channels // prof.channel_divisor)


def _vnet_body(b: _Builder, prof, upto: int = 10) -> int:
    cin = 1
    for c, k in VNET_BLOCKS[:upto]:
        c = _scaled(c, prof)
        b.block(cin, c, k)
        cin = c
    return cin


def build_vnet(num_joints: int, profile="paper", seed: int = 0, grid: tuple[int, int] | None = None,
               init_std: float = INIT_STD) -> Network:
    """V-Net: eleven stride-1 3D blocks with "same" padding; the last is conv only.

    ``grid`` overrides the (X, Y) extent of the local view; the network is
    fully convolutional, so only the declared input shape changes.
    """
    if num_joints < 1:
        raise ValueError("num_joints must be >= 1")
    prof = profiles.get(profile)
    b = _Builder(rank=3)
    cin = _vnet_body(b, prof)
    b.block(cin, num_joints, 1, bn_relu=False)
    X, Y = grid or prof.grid[:2]
    spec = NetworkSpec("vnet", prof.name, num_joints, (1, X, Y, prof.depth_crop), tuple(b.layers),
                       meta={"kind": "3d_vl"})
    return Network(spec, seed=seed, init_std=init_std)


def build_pnet(num_joints: int, profile="paper", seed: int = 0, init_std: float = INIT_STD) -> Network:
    """Single-hourglass encoder-decoder with residual skips; 1-channel depth input.

    Output is J heatmaps at 1/4 of the input resolution.
    """
    if num_joints < 1:
        raise ValueError("num_joints must be >= 1")
    prof = profiles.get(profile)
    c = prof.pnet_width
    b = _Builder(rank=2)
    b.block(1, max(1, c // 2), 7, stride=2)
    b.block(max(1, c // 2), c, 3)
    b.add(LayerSpec.maxpool(2, rank=2))
    x = b.residual(c, b.last)

    def hourglass(n: int, x: int) -> int:
        up1 = b.residual(c, x)
        low = b.add(LayerSpec.maxpool(2, rank=2, input=x))
        low = b.residual(c, low)
        low = hourglass(n - 1, low) if n > 1 else b.residual(c, low)
        low = b.residual(c, low)
        b.add(LayerSpec.upsample(2, rank=2))
        return b.add(LayerSpec("add", 2, source=up1))

    x = hourglass(prof.pnet_depth, x)
    x = b.residual(c, x)
    b.block(c, c, 1)
    b.block(c, num_joints, 1, bn_relu=False)
    spec = NetworkSpec("pnet", prof.name, num_joints, (1, prof.input_size, prof.input_size), tuple(b.layers),
                       meta={"stride": prof.heatmap_stride})
    return Network(spec, seed=seed, init_std=init_std)


def build_ablation(kind: str, num_joints: int, depth_bins: int | None = None, profile="paper",
                   seed: int = 0, init_std: float = INIT_STD) -> Network:
    """2D-input variants of the V-Net layout on the local depth patch.

    ``2d_vl``: blocks 9-11 become 1x1 convs with J*D outputs (per-voxel
    likelihood packed in channels). ``2d_co``: blocks 9-11 become
    fully-connected layers ending in 3J coordinates.
    """
    kind = kind.lower().replace("-", "_")
    if kind not in ABLATION_KINDS:
        raise ValueError(f"unknown ablation {kind!r}; choose from {ABLATION_KINDS}")
    prof = profiles.get(profile)
    D = prof.depth_crop if depth_bins is None else depth_bins
    X, Y, _ = prof.grid
    b = _Builder(rank=2)
    cin = _vnet_body(b, prof, upto=8)
    J = num_joints
    if kind == "2d_vl":
        b.block(cin, J * D, 1)
        b.block(J * D, J * D, 1)
        b.block(J * D, J * D, 1, bn_relu=False)
    else:
        H = prof.fc_width
        b.add(LayerSpec("flatten", 2))
        for fin, fout in ((cin * X * Y, H), (H, H)):
            b.add(LayerSpec.linear(fin, fout))
            b.add(LayerSpec.batchnorm(fout, rank=1))
            b.add(LayerSpec.relu(rank=1))
        b.add(LayerSpec.linear(H, 3 * J))
    spec = NetworkSpec(kind, prof.name, J, (1, X, Y), tuple(b.layers), meta={"kind": kind, "depth_bins": D})
    return Network(spec, seed=seed, init_std=init_std)


def build_holistic(num_joints: int, profile="paper", seed: int = 0, init_std: float = INIT_STD) -> Network:
    """Whole-body 3D view: V-Net blocks with a 2x2x2 max-pool after blocks 1 and 2."""
    prof = profiles.get(profile)
    b = _Builder(rank=3)
    cin = 1
    for i, (c, k) in enumerate(VNET_BLOCKS):
        c = _scaled(c, prof)
        b.block(cin, c, k)
        if i < 2:
            b.add(LayerSpec.maxpool(2, rank=3))
        cin = c
    b.block(cin, num_joints, 1, bn_relu=False)
    s = prof.holistic_size
    spec = NetworkSpec("holistic", prof.name, num_joints, (1, s, s, prof.depth_crop), tuple(b.layers),
                       meta={"kind": "holistic", "downsample": 4})
    return Network(spec, seed=seed, init_std=init_std)


def receptive_field(spec: NetworkSpec) -> tuple[int, ...]:
    """Per-axis receptive field of a feed-forward chain: ``r += (k - 1) * jump``."""
    rank = len(spec.input_shape) - 1
    r = [1] * rank
    jump = [1] * rank
    for i, layer in enumerate(spec.layers):
        if layer.kind in ("add", "upsample", "flatten", "linear") or layer.input not in (None, i - 1):
            raise ValueError(f"receptive_field needs a plain conv/pool chain; layer {i} is {layer.kind}")
        if layer.kind in ("conv", "maxpool"):
            for a in range(rank):
                r[a] += (layer.kernel[a] - 1) * jump[a]
                jump[a] *= layer.stride[a]
    return tuple(r)


def measure_receptive_field(spec: NetworkSpec, size: int, seed: int = 0) -> tuple[int, ...]:
    """Per-axis extent of output cells that change when one central input cell is bumped.

    Weights and inputs are made positive so no ReLU can mask the change, and
    batch norm runs on its (identity) initial statistics. The direct conv route is
    forced because FFT rounding would touch every cell. ``size`` must leave
    the affected region clear of the borders.
    """
    rank = len(spec.input_shape) - 1
    probe = NetworkSpec(spec.name, spec.profile, spec.num_joints, (spec.input_shape[0],) + (size,) * rank,
                        spec.layers, dict(spec.meta))
    net = Network(probe, seed=seed, init_std=1.0)
    for k, v in net.params.items():
        net.params[k] = np.abs(v).astype(np.float64) + 0.1
    rng = np.random.default_rng(seed)
    x = rng.random((1,) + probe.input_shape) + 0.5
    c = size // 2
    with conv_method("direct"):
        base = net.forward(x, train=False)
        x[(0, slice(None)) + (c,) * rank] += 1.0
        changed = np.any(net.forward(x, train=False)[0] != base[0], axis=0)
    hit = np.nonzero(changed)
    return tuple(int(h.max() - h.min() + 1) for h in hit)


def count_parameters(spec: NetworkSpec) -> int:
    """Closed-form count: conv/linear ``C_in*C_out*prod(k) + C_out``, batch norm ``2*C``."""
    total = 0
    for layer in spec.layers:
        if layer.kind == "conv":
            total += layer.in_channels * layer.out_channels * int(np.prod(layer.kernel)) + layer.out_channels
        elif layer.kind == "linear":
            total += layer.in_channels * layer.out_channels + layer.out_channels
        elif layer.kind == "batchnorm":
            total += 2 * layer.in_channels
    return total


def pnet_loss(pred, target):
    """Heatmap MSE over a batch ``(N, J, H, W)``; 1/J per sample, mean over the batch."""
    return mse_loss(pred, target, num_joints=pred.shape[1], batch_size=pred.shape[0])


def vnet_loss(pred, target):
    """Per-voxel MSE over a batch ``(N, J, X, Y, D)``; 1/J per sample, mean over the batch."""
    return mse_loss(pred, target, num_joints=pred.shape[1], batch_size=pred.shape[0])


def build(name: str, num_joints: int, profile="paper", seed: int = 0) -> Network:
    name = name.lower().replace("-", "_")
    if name == "vnet":
        return build_vnet(num_joints, profile, seed)
    if name == "pnet":
        return build_pnet(num_joints, profile, seed)
    if name == "holistic":
        return build_holistic(num_joints, profile, seed)
    return build_ablation(name, num_joints, profile=profile, seed=seed)
