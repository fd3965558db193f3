"""Training hyperparameters and the step learning-rate schedule."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .. import profiles


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    learning_rate: float = 1e-4
    weight_decay: float = 5e-4
    momentum: float = 0.9
    iterations: int = 30000
    lr_drop_at: int = 20000
    lr_drop_factor: float = 10.0
    seed: int = 0
    log_every: int = 10
    eval_every: int = 100
    val_fraction: float = 0.1
    init_std: float = 0.001

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0 or self.lr_drop_at < 0:
            raise ValueError("iterations and lr_drop_at must be non-negative")
        if self.learning_rate < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ValueError("learning_rate and weight_decay must be >= 0 and momentum in [0, 1)")
        if self.lr_drop_factor <= 0:
            raise ValueError("lr_drop_factor must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.log_every < 1 or self.eval_every < 1:
            raise ValueError("log_every and eval_every must be >= 1")

    def lr_at(self, iteration: int) -> float:
        """Learning rate for 0-based ``iteration``."""
        if iteration >= self.lr_drop_at:
            return self.learning_rate / self.lr_drop_factor
        return self.learning_rate

    @classmethod
    def for_profile(cls, profile="paper", **overrides) -> "TrainConfig":
        prof = profiles.get(profile)
        base = cls(learning_rate=prof.learning_rate, iterations=prof.iterations, lr_drop_at=prof.lr_drop_at)
        return base.with_overrides(overrides) if overrides else base

    def with_overrides(self, overrides: dict) -> "TrainConfig":
        known = {f.name: f.type for f in fields(self)}
        bad = sorted(set(overrides) - set(known))
        if bad:
            raise KeyError(f"unknown training option(s): {', '.join(bad)}")
        cast = {}
        for k, v in overrides.items():
            cur = getattr(self, k)
            cast[k] = type(cur)(v)
        return replace(self, **cast)

    def to_dict(self) -> dict:
        return asdict(self)
