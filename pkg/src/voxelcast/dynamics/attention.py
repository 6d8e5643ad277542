"""Attention primitives for the scene dynamics model.

Deformable attention samples the value map at a handful of learned offsets
per query cell instead of attending densely, which keeps rollout cost linear
in the number of cells. Offsets and mixing weights are zero-initialized, so
an untrained layer samples its own location with uniform point weights.
"""

from __future__ import annotations

import torch
from torch import nn


def bilinear_sample(fm: torch.Tensor, px: torch.Tensor, py: torch.Tensor) -> torch.Tensor:
    """Sample (N, h, w, C) maps at fractional coords px/py of shape (N, Q).

    Returns (N, Q, C). Out-of-grid mass contributes zero. Differentiable in
    both the map and the coordinates.
    """
    n, h, w, c = fm.shape
    x0 = torch.floor(px)
    y0 = torch.floor(py)
    fx = px - x0
    fy = py - y0
    nidx = torch.arange(n, device=fm.device).unsqueeze(1).expand_as(px)
    out = fm.new_zeros((n, px.shape[1], c))
    for dx_i in (0, 1):
        for dy_i in (0, 1):
            xs = x0.long() + dx_i
            ys = y0.long() + dy_i
            wgt = ((1 - fx) if dx_i == 0 else fx) * ((1 - fy) if dy_i == 0 else fy)
            valid = (xs >= 0) & (xs < h) & (ys >= 0) & (ys < w)
            gathered = fm[nidx, xs.clamp(0, h - 1), ys.clamp(0, w - 1)]
            out = out + gathered * (wgt * valid.to(fm.dtype)).unsqueeze(-1)
    return out


class DeformableAttention(nn.Module):
    """Per-cell sparse attention over the cell's own map, with residual."""

    def __init__(self, dim: int, n_heads: int = 4, n_points: int = 4) -> None:
        super().__init__()
        if dim % n_heads:
            raise ValueError(f"dim {dim} not divisible by {n_heads} heads")
        self.dim = dim
        self.n_heads = n_heads
        self.n_points = n_points
        self.head_dim = dim // n_heads
        self.offset_proj = nn.Linear(dim, n_heads * n_points * 2)
        self.weight_proj = nn.Linear(dim, n_heads * n_points)
        self.value_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        nn.init.zeros_(self.offset_proj.weight)
        nn.init.zeros_(self.offset_proj.bias)
        nn.init.zeros_(self.weight_proj.weight)
        nn.init.zeros_(self.weight_proj.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, h, w, d = x.shape
        hd, nh, np_ = self.head_dim, self.n_heads, self.n_points
        offsets = self.offset_proj(x).reshape(b, h, w, nh, np_, 2)
        weights = torch.softmax(self.weight_proj(x).reshape(b, h, w, nh, np_), dim=-1)
        ii = torch.arange(h, device=x.device, dtype=x.dtype).view(1, h, 1, 1, 1)
        jj = torch.arange(w, device=x.device, dtype=x.dtype).view(1, 1, w, 1, 1)
        px = (ii + offsets[..., 0]).permute(0, 3, 1, 2, 4).reshape(b * nh, h * w * np_)
        py = (jj + offsets[..., 1]).permute(0, 3, 1, 2, 4).reshape(b * nh, h * w * np_)
        v = self.value_proj(x).reshape(b, h, w, nh, hd)
        v = v.permute(0, 3, 1, 2, 4).reshape(b * nh, h, w, hd)
        sampled = bilinear_sample(v, px, py).reshape(b, nh, h, w, np_, hd)
        mixed = (sampled * weights.permute(0, 3, 1, 2, 4).unsqueeze(-1)).sum(dim=4)
        mixed = mixed.permute(0, 2, 3, 1, 4).reshape(b, h, w, d)
        return x + self.out_proj(mixed)


class PlanCrossAttention(nn.Module):
    """The plan vector queries the scene map; the map is untouched."""

    def __init__(self, dim: int, n_heads: int = 4) -> None:
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)

    def forward(self, plan: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        b, h, w, d = x.shape
        kv = x.reshape(b, h * w, d)
        out, _ = self.attn(plan.unsqueeze(1), kv, kv, need_weights=False)
        return plan + out.squeeze(1)


class FeedForward(nn.Module):
    def __init__(self, dim: int, expand: int = 2) -> None:
        super().__init__()
        self.net = nn.Sequential(
            nn.LayerNorm(dim),
            nn.Linear(dim, dim * expand),
            nn.SiLU(),
            nn.Linear(dim * expand, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.net(x)
