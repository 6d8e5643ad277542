"""Autoregressive scene forecaster over tokenizer latents.

One step consumes the current scene latent, a queue of earlier latents, and
the driving plan; it emits the next latent plus the ego transform carrying
the scene into it. The transform used for conditioning can come from the
model's own head, from ground truth, or from an external caller steering the
rollout. Multi-step forecasts feed each prediction back in; nothing is
recomputed from ground truth unless the caller says so.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .decoder import ConditionFuser, InterDecoder
from .encoder import IntraEncoder, PlanEmbed, TransformHead, plan_feature_dim
from .transform import transform_cond12


class ConditioningSource(str, Enum):
    PREDICTED = "predicted"
    GROUND_TRUTH = "ground_truth"
    USER = "user"


class ConditionMode(str, Enum):
    """How much of the ego transform reaches the conditioning MLP."""

    NONE = "none"
    TRANSLATION = "translation"
    FULL = "full"


@dataclass(frozen=True)
class FormerHparams:
    latent_channels: int = 32
    latent_hw: tuple[int, int] = (16, 16)
    dim: int = 64
    plan_dim: int = 128
    history_length: int = 4
    depth_intra: int = 3
    depth_inter: int = 3
    n_heads: int = 4
    n_points: int = 4
    queue_len: int = 4
    pyramid_levels: int = 3
    horizon: int = 6
    decay: float = 0.9
    use_intra_encoder: bool = True
    condition_mode: str = "full"
    temporal_fusion: bool = True

    def __post_init__(self) -> None:
        ConditionMode(self.condition_mode)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FormerHparams":
        d = dict(d)
        d["latent_hw"] = tuple(d["latent_hw"])
        return cls(**d)


class TransformFormer(nn.Module):
    def __init__(self, hparams: FormerHparams) -> None:
        super().__init__()
        self.hparams = hparams
        hp = hparams
        self.in_proj = nn.Linear(hp.latent_channels, hp.dim)
        self.plan_embed = PlanEmbed(plan_feature_dim(hp.history_length), hp.plan_dim)
        self.encoder = IntraEncoder(
            hp.dim, hp.plan_dim, hp.depth_intra, hp.n_heads, hp.n_points, hp.pyramid_levels
        )
        self.transform_head = TransformHead(hp.dim)
        self.fuser = ConditionFuser(hp.dim, hp.pyramid_levels)
        self.decoder = InterDecoder(
            hp.dim,
            hp.depth_inter,
            hp.queue_len,
            hp.n_heads,
            hp.n_points,
            temporal_fusion=hp.temporal_fusion,
        )
        self.out_proj = nn.Linear(hp.dim, hp.latent_channels)

    @staticmethod
    def _mask_condition(cond12: torch.Tensor, mode: ConditionMode) -> torch.Tensor | None:
        if mode is ConditionMode.NONE:
            return None
        if mode is ConditionMode.FULL:
            return cond12
        # Translation only: identity rotation block, translations kept.
        out = torch.zeros_like(cond12)
        out[..., 0] = 1.0
        out[..., 5] = 1.0
        out[..., 10] = 1.0
        for col in (3, 7, 11):
            out[..., col] = cond12[..., col]
        return out

    def step(
        self,
        latent: torch.Tensor,
        queue: Sequence[torch.Tensor],
        plan_feats: torch.Tensor,
        cond12: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """One forecast step.

        `latent` is (B, h, w, C); `queue` holds earlier latents of the same
        shape, most recent first, at most `queue_len` of them. `cond12` is an
        explicit [R | t] conditioning row per batch element; None means
        condition on the model's own (detached) transform prediction.
        Returns (next latent, raw 7-value transform).
        """
        hp = self.hparams
        x = self.in_proj(latent)
        p = self.plan_embed(plan_feats)
        x, plan_ctx, pyramid = self.encoder(x, p, refine=hp.use_intra_encoder)
        raw7 = self.transform_head(x, plan_ctx)
        if cond12 is None:
            cond12 = transform_cond12(raw7).detach()
        fused = self.fuser(pyramid, self._mask_condition(cond12, ConditionMode(hp.condition_mode)))
        projected = [self.in_proj(q) for q in queue]
        y = self.decoder(fused, projected)
        return self.out_proj(y), raw7


@dataclass
class RolloutState:
    """Mutable rollout cursor: the current latent plus the recency queue."""

    latent: torch.Tensor
    queue: deque[torch.Tensor]
    steps_taken: int = 0

    @classmethod
    def fresh(
        cls, latent: torch.Tensor, history: Sequence[torch.Tensor], queue_len: int
    ) -> "RolloutState":
        """Start a rollout at `latent`, with observed history most-recent-first."""
        q: deque[torch.Tensor] = deque(maxlen=queue_len)
        for item in reversed(list(history)[:queue_len]):
            q.appendleft(item)
        return cls(latent=latent, queue=q)

    def advance(self, next_latent: torch.Tensor) -> None:
        self.queue.appendleft(self.latent)
        self.latent = next_latent
        self.steps_taken += 1


def rollout(
    former: TransformFormer,
    state: RolloutState,
    plan_feats: torch.Tensor,
    steps: int,
    source: ConditioningSource = ConditioningSource.PREDICTED,
    cond12_seq: torch.Tensor | None = None,
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Advance `state` by `steps`, returning (latent, raw transform) per step.

    Predictions feed back autoregressively. With GROUND_TRUTH or USER
    conditioning, `cond12_seq` must hold one (B, 12) row per step.
    """
    if source != ConditioningSource.PREDICTED:
        if cond12_seq is None:
            raise ValueError(f"{source.value} conditioning requires cond12_seq")
        if cond12_seq.shape[-2] < steps:
            raise ValueError(f"cond12_seq covers {cond12_seq.shape[-2]} steps, need {steps}")
    outputs: list[tuple[torch.Tensor, torch.Tensor]] = []
    for k in range(steps):
        cond = None if source == ConditioningSource.PREDICTED else cond12_seq[..., k, :]
        next_latent, raw7 = former.step(state.latent, list(state.queue), plan_feats, cond)
        state.advance(next_latent)
        outputs.append((next_latent, raw7))
    return outputs


def step_weights(steps: int, decay: float = 0.9) -> list[float]:
    """w_k = decay^(k-1) for k = 1..steps."""
    return [decay ** k for k in range(steps)]


def gen_loss(
    preds: Sequence[torch.Tensor],
    targets: Sequence[torch.Tensor],
    decay: float = 0.9,
) -> tuple[torch.Tensor, list[float]]:
    """Decay-weighted sum of per-step latent MSEs, nearest step weighted 1."""
    if len(preds) != len(targets):
        raise ValueError(f"{len(preds)} predictions vs {len(targets)} targets")
    if not preds:
        raise ValueError("empty horizon")
    per_step = [F.mse_loss(p, t) for p, t in zip(preds, targets)]
    weights = step_weights(len(per_step), decay)
    total = sum(w * l for w, l in zip(weights, per_step))
    return total, [float(l.detach()) for l in per_step]
