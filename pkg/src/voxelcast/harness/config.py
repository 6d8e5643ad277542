"""Experiment configuration: one JSON-serializable object per run.

A single root seed fans out to data generation, parameter init, and batch
sampling, so two runs with the same config are bit-for-bit comparable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..dynamics.former import ConditioningSource, FormerHparams
from ..tokenizer.model import TokenizerHparams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 12
    warmup_frac: float = 0.05
    grad_clip: float = 1.0
    samples_per_epoch: int | None = None  # None = one pass over the split

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("lr, batch_size, epochs must be positive")
        if not 0 <= self.warmup_frac < 1:
            raise ConfigError("warmup_frac must be in [0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str = "data/manifest.json"
    tokenizer: TokenizerHparams = field(default_factory=TokenizerHparams)
    former: FormerHparams = field(default_factory=FormerHparams)
    tokenizer_optim: OptimConfig = field(default_factory=OptimConfig)
    former_optim: OptimConfig = field(default_factory=lambda: OptimConfig(epochs=18))
    seed: int = 0
    conditioning: str = ConditioningSource.GROUND_TRUTH.value
    horizons_s: tuple[float, ...] = (1.0, 2.0, 3.0)
    vq_weight: float = 1e-3
    transform_loss_weight: float = 1.0

    def __post_init__(self) -> None:
        ConditioningSource(self.conditioning)
        if any(h <= 0 for h in self.horizons_s):
            raise ConfigError("horizons must be positive")
        if self.tokenizer.latent_channels != self.former.latent_channels:
            raise ConfigError("tokenizer and former latent widths differ")
        if self.tokenizer.latent_hw != tuple(self.former.latent_hw):
            raise ConfigError("tokenizer and former latent resolutions differ")

    def require_horizons(self, rate_hz: float) -> list[int]:
        """Horizon steps at a given rate; all must fit the rollout length."""
        steps = [int(round(h * rate_hz)) for h in self.horizons_s]
        if any(s < 1 for s in steps):
            raise ConfigError(f"horizons {self.horizons_s} too short for {rate_hz} Hz")
        return steps

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "tokenizer" in d:
            d["tokenizer"] = TokenizerHparams.from_dict(d["tokenizer"])
        if "former" in d:
            d["former"] = FormerHparams.from_dict(d["former"])
        for key in ("tokenizer_optim", "former_optim"):
            if key in d and isinstance(d[key], dict):
                d[key] = OptimConfig(**d[key])
        if "horizons_s" in d:
            d["horizons_s"] = tuple(d["horizons_s"])
        return cls(**d)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
