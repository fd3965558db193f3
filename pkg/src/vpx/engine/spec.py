"""Layer descriptions shared by the engine and the network builders."""
from __future__ import annotations

from dataclasses import asdict, dataclass

KINDS = ("conv", "batchnorm", "relu", "maxpool", "linear", "flatten", "upsample", "add")


class ShapeError(ValueError):
    """An operand's shape does not match what the layer expects."""


def _tup(value, rank: int) -> tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * rank
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward network.

    ``input`` names the layer whose output feeds this one (``None`` means the
    previous layer, ``-1`` the network input); ``source`` is the second operand
    of an ``add``. For ``upsample`` the ``stride`` field holds the scale factor,
    for ``maxpool`` ``kernel`` is the window.
    """

    kind: str
    rank: int = 3
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple[int, ...] = ()
    stride: tuple[int, ...] = ()
    padding: tuple[int, ...] = ()
    input: int | None = None
    source: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.rank not in (1, 2, 3):
            raise ValueError(f"rank must be 1, 2 or 3, got {self.rank}")
        for field in ("kernel", "stride", "padding"):
            object.__setattr__(self, field, tuple(int(v) for v in getattr(self, field)))
        if self.kind == "conv":
            if self.in_channels < 1 or self.out_channels < 1:
                raise ValueError("conv channel counts must be positive")
            if len(self.kernel) != self.rank:
                raise ValueError(f"conv kernel {self.kernel} does not have rank {self.rank}")
            if any(k % 2 == 0 for k in self.kernel):
                raise ValueError(f"conv kernel extents must be odd, got {self.kernel}")
            if any(s < 1 for s in self.stride) or any(p < 0 for p in self.padding):
                raise ValueError("conv strides must be positive and paddings non-negative")
        if self.kind == "maxpool" and (any(k < 1 for k in self.kernel) or any(s < 1 for s in self.stride)):
            raise ValueError("maxpool window and stride must be positive")
        if self.kind == "add" and self.source is None:
            raise ValueError("add layers need a source")

    @classmethod
    def conv(cls, in_channels, out_channels, kernel, rank=3, stride=1, padding="same", **kw) -> "LayerSpec":
        k = _tup(kernel, rank)
        pad = tuple(kk // 2 for kk in k) if padding == "same" else _tup(padding, rank)
        return cls("conv", rank, in_channels, out_channels, k, _tup(stride, rank), pad, **kw)

    @classmethod
    def batchnorm(cls, channels, rank=3, **kw) -> "LayerSpec":
        return cls("batchnorm", rank, channels, channels, **kw)

    @classmethod
    def relu(cls, rank=3, **kw) -> "LayerSpec":
        return cls("relu", rank, **kw)

    @classmethod
    def maxpool(cls, window, stride=None, rank=3, **kw) -> "LayerSpec":
        w = _tup(window, rank)
        return cls("maxpool", rank, kernel=w, stride=w if stride is None else _tup(stride, rank), **kw)

    @classmethod
    def linear(cls, in_features, out_features, **kw) -> "LayerSpec":
        return cls("linear", 1, in_features, out_features, **kw)

    @classmethod
    def upsample(cls, factor, rank=3, **kw) -> "LayerSpec":
        return cls("upsample", rank, stride=_tup(factor, rank), **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})
