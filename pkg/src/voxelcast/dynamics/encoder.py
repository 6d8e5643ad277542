"""Scene encoding half of the dynamics model.

The intra encoder refines the current scene latent with sparse attention
while a plan embedding repeatedly queries it, after which a zero-initialized
head regresses the ego transform to the next frame. A strided pyramid of the
refined map feeds the conditioning stage.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..core.plan import Command, PlanSignal
from .attention import DeformableAttention, FeedForward, PlanCrossAttention

_COMMANDS = tuple(Command)


def plan_features(plan: PlanSignal, rate_hz: float) -> np.ndarray:
    """Flat float64 features: speed, command one-hot, past relative offsets.

    Speed enters as meters per frame interval (speed_mps / rate_hz) so that
    every temporal feature shares the model's native per-step time unit; the
    past offsets are already realized per-frame motion in meters.
    """
    if rate_hz <= 0:
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    onehot = np.zeros(len(_COMMANDS))
    onehot[_COMMANDS.index(plan.command)] = 1.0
    return np.concatenate(
        [[plan.speed_mps / rate_hz], onehot, plan.past_rel_translations.reshape(-1)]
    )


def plan_feature_dim(history_length: int) -> int:
    return 1 + len(_COMMANDS) + 3 * history_length


class PlanEmbed(nn.Module):
    """Raw plan features -> a plan embedding vector."""

    def __init__(self, in_dim: int, dim: int = 128) -> None:
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return self.net(feats)


class IntraEncoderLayer(nn.Module):
    def __init__(self, dim: int, n_heads: int, n_points: int) -> None:
        super().__init__()
        self.ssa = DeformableAttention(dim, n_heads, n_points)
        self.plan_attn = PlanCrossAttention(dim, n_heads)
        self.ffn = FeedForward(dim)

    def forward(self, x: torch.Tensor, plan: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.ssa(x)
        plan = self.plan_attn(plan, x)
        x = self.ffn(x)
        return x, plan


class IntraEncoder(nn.Module):
    """Refined map, feature pyramid, and plan context for one scene.

    The pyramid holds `pyramid_levels` maps, full resolution first, each
    further level halved by a strided conv.
    """

    def __init__(
        self,
        dim: int,
        plan_dim: int,
        depth: int = 3,
        n_heads: int = 4,
        n_points: int = 4,
        pyramid_levels: int = 3,
    ) -> None:
        super().__init__()
        self.plan_proj = nn.Linear(plan_dim, dim)
        self.layers = nn.ModuleList(
            IntraEncoderLayer(dim, n_heads, n_points) for _ in range(depth)
        )
        self.downs = nn.ModuleList(
            nn.Conv2d(dim, dim, 3, stride=2, padding=1) for _ in range(pyramid_levels - 1)
        )

    def forward(
        self, x: torch.Tensor, plan: torch.Tensor, refine: bool = True
    ) -> tuple[torch.Tensor, torch.Tensor, list[torch.Tensor]]:
        """Set refine=False to bypass the attention layers (ablation), keeping
        the plan projection and pyramid so downstream shapes are unchanged."""
        p = self.plan_proj(plan)
        if refine:
            for layer in self.layers:
                x, p = layer(x, p)
        pyramid = [x]
        level = x.permute(0, 3, 1, 2)
        for down in self.downs:
            level = down(level)
            pyramid.append(level.permute(0, 2, 3, 1))
        return x, p, pyramid


class TransformHead(nn.Module):
    """Pooled scene features + plan context -> raw 7-value ego transform.

    The last layer starts at zero, so the untrained head emits the raw zero
    vector, which decodes to the identity motion.
    """

    def __init__(self, dim: int, hidden: int = 128) -> None:
        super().__init__()
        self.fc1 = nn.Linear(dim * 2, hidden)
        self.act = nn.SiLU()
        self.fc2 = nn.Linear(hidden, 7)
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, x: torch.Tensor, plan_ctx: torch.Tensor) -> torch.Tensor:
        pooled = x.mean(dim=(1, 2))
        return self.fc2(self.act(self.fc1(torch.cat([pooled, plan_ctx], dim=-1))))
