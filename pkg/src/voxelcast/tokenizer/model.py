"""Full scene tokenizer: encoder, residual quantizer, decoder.

Hyperparameters live in one frozen dataclass so checkpoints can round-trip
the exact architecture. The quantizer's metric cell size is derived from the
voxel size and the encoder's downsampling factor.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..core.grid import OccupancyGrid
from ..core.se3 import SE3Transform
from .codebook import Codebook
from .nets import DecoderNet, EncoderNet
from .quantize import (
    HistoryItem,
    PoseArg,
    QuantizerConfig,
    ResidualQuantizer,
    TokenizationResult,
)


class TokenizerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TokenizerHparams:
    dims: tuple[int, int, int] = (64, 64, 8)
    num_classes: int = 5
    voxel_size_m: float = 0.5
    embed_dim: int = 4
    widths: tuple[int, ...] = (32, 48, 64)
    latent_channels: int = 32
    codebook_size: int = 64
    scales: tuple[tuple[int, int], ...] = ((2, 2), (4, 4), (8, 8), (16, 16))
    history_length: int = 4
    align: bool = True
    passthrough: bool = False

    def __post_init__(self) -> None:
        d = self.downsample
        h, w, _ = self.dims
        if h % d or w % d:
            raise TokenizerConfigError(f"dims {self.dims[:2]} not divisible by downsample {d}")
        if (h // d, w // d) != tuple(self.scales[-1]):
            raise TokenizerConfigError(
                f"latent is {(h // d, w // d)} but the scale ladder ends at {self.scales[-1]}"
            )

    @property
    def downsample(self) -> int:
        return 2 ** (len(self.widths) - 1)

    @property
    def latent_hw(self) -> tuple[int, int]:
        h, w, _ = self.dims
        return h // self.downsample, w // self.downsample

    @property
    def cell_size_m(self) -> float:
        return self.voxel_size_m * self.downsample

    def quantizer_config(self) -> QuantizerConfig:
        return QuantizerConfig(
            scales=tuple(tuple(s) for s in self.scales),
            history_length=self.history_length,
            align=self.align,
            passthrough=self.passthrough,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerHparams":
        d = dict(d)
        d["dims"] = tuple(d["dims"])
        d["widths"] = tuple(d["widths"])
        d["scales"] = tuple(tuple(s) for s in d["scales"])
        return cls(**d)


class SceneTokenizer(nn.Module):
    def __init__(self, hparams: TokenizerHparams) -> None:
        super().__init__()
        self.hparams = hparams
        self.encoder = EncoderNet(
            num_classes=hparams.num_classes,
            grid_z=hparams.dims[2],
            embed_dim=hparams.embed_dim,
            widths=hparams.widths,
            latent_channels=hparams.latent_channels,
        )
        self.decoder = DecoderNet(
            num_classes=hparams.num_classes,
            grid_z=hparams.dims[2],
            widths=hparams.widths,
            latent_channels=hparams.latent_channels,
        )
        self.codebook = Codebook(hparams.codebook_size, hparams.latent_channels)
        self.quantizer = ResidualQuantizer(
            hparams.quantizer_config(), self.codebook, hparams.cell_size_m
        )

    def encode_scene(self, labels: torch.Tensor) -> torch.Tensor:
        """(B, H, W, Z) labels -> raw (B, h, w, C) latent, pre-quantization."""
        return self.encoder(labels)

    def decode_scene(self, latent: torch.Tensor) -> torch.Tensor:
        """(B, h, w, C) quantized aggregate -> (B, H, W, Z, num_classes) logits."""
        return self.decoder(latent)

    def forward(
        self,
        labels: torch.Tensor,
        history: Sequence[HistoryItem] = (),
        pose: PoseArg | None = None,
    ) -> tuple[TokenizationResult, torch.Tensor]:
        """Tokenize a batch of grids and decode the aggregate to logits."""
        feats = self.encode_scene(labels)
        result = self.quantizer(feats, history, pose)
        logits = self.decode_scene(result.latent)
        return result, logits

    @torch.no_grad()
    def reconstruct_labels(
        self,
        labels: torch.Tensor,
        history: Sequence[HistoryItem] = (),
        pose: PoseArg | None = None,
    ) -> torch.Tensor:
        """Argmax reconstruction of a batch, as (B, H, W, Z) uint8 labels."""
        _, logits = self.forward(labels, history, pose)
        return logits.argmax(dim=-1).to(torch.uint8)

    @torch.no_grad()
    def reconstruct_grid(
        self,
        grid: OccupancyGrid,
        history: Sequence[HistoryItem] = (),
        pose: SE3Transform | None = None,
    ) -> OccupancyGrid:
        labels = torch.from_numpy(np.ascontiguousarray(grid.labels)).unsqueeze(0)
        out = self.reconstruct_labels(labels, history, pose)[0].numpy()
        return grid.with_labels(out)
