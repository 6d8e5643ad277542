"""Conditioning and future-scene decoding half of the dynamics model.

The condition fuser collapses the encoder pyramid top-down and adds a
broadcast embedding of the ego transform (12 values of [R | t]); its last
layer starts at zero so an identity transform is a no-op at initialization.
The inter decoder then predicts the next latent, fusing a fixed-length queue
of past latents by channel concatenation through a single linear layer.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .attention import DeformableAttention, FeedForward


class ConditionFuser(nn.Module):
    def __init__(self, dim: int, pyramid_levels: int = 3, cond_hidden: int = 64) -> None:
        super().__init__()
        self.laterals = nn.ModuleList(nn.Conv2d(dim, dim, 1) for _ in range(pyramid_levels))
        self.smooth = nn.Conv2d(dim, dim, 3, padding=1)
        self.cond_fc1 = nn.Linear(12, cond_hidden)
        self.cond_fc2 = nn.Linear(cond_hidden, dim)
        nn.init.zeros_(self.cond_fc2.weight)
        nn.init.zeros_(self.cond_fc2.bias)

    def forward(self, pyramid: list[torch.Tensor], cond12: torch.Tensor | None) -> torch.Tensor:
        """cond12 is (B, 12) or None; None skips conditioning entirely."""
        if len(pyramid) != len(self.laterals):
            raise ValueError(f"{len(pyramid)} pyramid levels, expected {len(self.laterals)}")
        maps = [lat(p.permute(0, 3, 1, 2)) for lat, p in zip(self.laterals, pyramid)]
        top = maps[-1]
        for lower in reversed(maps[:-1]):
            top = lower + F.interpolate(top, size=lower.shape[-2:], mode="nearest")
        fused = self.smooth(top).permute(0, 2, 3, 1)
        if cond12 is None:
            return fused
        cond = self.cond_fc2(F.silu(self.cond_fc1(cond12)))
        return fused + cond.unsqueeze(1).unsqueeze(1)


class TemporalFusion(nn.Module):
    """Channel-concat the queue onto each cell, mix with one linear layer."""

    def __init__(self, dim: int, queue_len: int) -> None:
        super().__init__()
        self.queue_len = queue_len
        self.mix = nn.Linear(dim * (queue_len + 1), dim)

    def forward(self, x: torch.Tensor, queue: list[torch.Tensor]) -> torch.Tensor:
        if len(queue) != self.queue_len:
            raise ValueError(f"queue has {len(queue)} entries, expected {self.queue_len}")
        return x + self.mix(torch.cat([x, *queue], dim=-1))


class InterDecoderLayer(nn.Module):
    def __init__(
        self, dim: int, queue_len: int, n_heads: int, n_points: int, temporal_fusion: bool
    ) -> None:
        super().__init__()
        self.ssa = DeformableAttention(dim, n_heads, n_points)
        self.temporal = TemporalFusion(dim, queue_len) if temporal_fusion else None
        self.ffn = FeedForward(dim)

    def forward(self, x: torch.Tensor, queue: list[torch.Tensor]) -> torch.Tensor:
        x = self.ssa(x)
        if self.temporal is not None:
            x = self.temporal(x, queue)
        return self.ffn(x)


class InterDecoder(nn.Module):
    """Conditioned features + zero-padded latent queue -> next-scene features."""

    def __init__(
        self,
        dim: int,
        depth: int = 3,
        queue_len: int = 4,
        n_heads: int = 4,
        n_points: int = 4,
        temporal_fusion: bool = True,
    ) -> None:
        super().__init__()
        self.queue_len = queue_len
        self.layers = nn.ModuleList(
            InterDecoderLayer(dim, queue_len, n_heads, n_points, temporal_fusion)
            for _ in range(depth)
        )

    def forward(self, x: torch.Tensor, queue: list[torch.Tensor]) -> torch.Tensor:
        if len(queue) > self.queue_len:
            raise ValueError(f"queue has {len(queue)} entries, capacity {self.queue_len}")
        padded = list(queue) + [torch.zeros_like(x)] * (self.queue_len - len(queue))
        for layer in self.layers:
            x = layer(x, padded)
        return x
