"""BEV encoder and decoder for semantic occupancy grids.

The encoder embeds voxel class labels, folds the height axis into channels,
and runs a strided 2D residual stack down to the latent resolution, with one
self-attention block at the bottom. The decoder mirrors it and unfolds the
head back into per-voxel class logits. All operations are deterministic on
CPU given fixed parameters.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


def _gn(channels: int) -> nn.GroupNorm:
    groups = 8
    while channels % groups:
        groups //= 2
    return nn.GroupNorm(groups, channels)


class ResBlock(nn.Module):
    def __init__(self, channels: int) -> None:
        super().__init__()
        self.norm1 = _gn(channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = _gn(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class AttentionBlock(nn.Module):
    """Single-head full self-attention over the spatial grid."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.norm = _gn(channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(dim=1)
        attn = torch.softmax(torch.einsum("bci,bcj->bij", q, k) / c**0.5, dim=-1)
        out = torch.einsum("bcj,bij->bci", v, attn).reshape(b, c, h, w)
        return x + self.proj(out)


class EncoderNet(nn.Module):
    """(B, H, W, Z) class labels -> (B, h, w, C) latent, h = H / 2^(len(widths)-1)."""

    def __init__(
        self,
        num_classes: int,
        grid_z: int,
        embed_dim: int = 4,
        widths: tuple[int, ...] = (32, 48, 64),
        latent_channels: int = 32,
    ) -> None:
        super().__init__()
        self.num_classes = num_classes
        self.grid_z = grid_z
        self.embed = nn.Embedding(num_classes, embed_dim)
        self.stem = nn.Conv2d(grid_z * embed_dim, widths[0], 3, padding=1)
        stages = []
        for i, width in enumerate(widths):
            stages.append(ResBlock(width))
            if i + 1 < len(widths):
                stages.append(nn.Conv2d(width, widths[i + 1], 3, stride=2, padding=1))
        self.stages = nn.Sequential(*stages)
        self.attn = AttentionBlock(widths[-1])
        self.out_norm = _gn(widths[-1])
        self.out_proj = nn.Conv2d(widths[-1], latent_channels, 1)

    def forward(self, labels: torch.Tensor) -> torch.Tensor:
        if labels.dim() != 4:
            raise ValueError(f"expected (B, H, W, Z) labels, got {tuple(labels.shape)}")
        b, h, w, z = labels.shape
        if z != self.grid_z:
            raise ValueError(f"grid has {z} layers, encoder expects {self.grid_z}")
        x = self.embed(labels.long())  # (B, H, W, Z, e)
        x = x.reshape(b, h, w, -1).permute(0, 3, 1, 2)
        x = self.stages(self.stem(x))
        x = self.attn(x)
        x = self.out_proj(F.silu(self.out_norm(x)))
        return x.permute(0, 2, 3, 1)


class DecoderNet(nn.Module):
    """(B, h, w, C) latent -> (B, H, W, Z, num_classes) logits."""

    def __init__(
        self,
        num_classes: int,
        grid_z: int,
        widths: tuple[int, ...] = (32, 48, 64),
        latent_channels: int = 32,
    ) -> None:
        super().__init__()
        self.num_classes = num_classes
        self.grid_z = grid_z
        self.in_proj = nn.Conv2d(latent_channels, widths[-1], 1)
        self.attn = AttentionBlock(widths[-1])
        stages = []
        for i in range(len(widths) - 1, -1, -1):
            stages.append(ResBlock(widths[i]))
            if i > 0:
                stages.append(nn.Upsample(scale_factor=2, mode="nearest"))
                stages.append(nn.Conv2d(widths[i], widths[i - 1], 3, padding=1))
        self.stages = nn.Sequential(*stages)
        self.out_norm = _gn(widths[0])
        self.head = nn.Conv2d(widths[0], grid_z * num_classes, 3, padding=1)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        if latent.dim() != 4:
            raise ValueError(f"expected (B, h, w, C) latent, got {tuple(latent.shape)}")
        x = latent.permute(0, 3, 1, 2)
        x = self.attn(self.in_proj(x))
        x = self.stages(x)
        x = self.head(F.silu(self.out_norm(x)))
        b, _, h, w = x.shape
        return x.permute(0, 2, 3, 1).reshape(b, h, w, self.grid_z, self.num_classes)
