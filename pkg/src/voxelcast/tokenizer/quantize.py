"""Decoupled residual quantization of BEV scene latents.

A scene latent is absorbed in two phases sharing one codebook. The spatial
phase walks a coarse-to-fine ladder of resolutions: at each rung the running
residual is resized down, quantized, and the upsampled quantized map is both
subtracted from the residual and (after a learnable identity-initialized
refinement conv) added to the aggregate. The temporal phase then runs one
quantization step per history slot: each step adds a pose-aligned previous
latent to the residual before quantizing, so codes describe scene change
rather than scene content.

In passthrough mode quantization is the identity and the refinement convs are
skipped, which makes the aggregate-plus-residual telescope back to the input
exactly. That mode exists to let tests separate plumbing errors from
quantization error.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from ..core.se3 import SE3Transform, se3_relative
from ..core.warp import warp_bev
from .codebook import Codebook, quantize_map


class QuantizerConfigError(ValueError):
    pass


PoseArg = SE3Transform | Sequence[SE3Transform]
HistoryItem = tuple[torch.Tensor, PoseArg]


@dataclass(frozen=True)
class QuantizerConfig:
    """Shape and behavior of the two quantization phases.

    `scales` is the spatial ladder, strictly increasing and ending at the
    working latent resolution. `history_length` is the number of temporal
    steps; missing history is zero-padded so every scene yields the same
    token layout. `align` disables pose warping of history latents when
    False. `passthrough` replaces quantization with the identity.
    """

    scales: tuple[tuple[int, int], ...] = ((2, 2), (4, 4), (8, 8), (16, 16))
    history_length: int = 4
    align: bool = True
    passthrough: bool = False

    def __post_init__(self) -> None:
        if not self.scales:
            raise QuantizerConfigError("at least one scale required")
        for (h0, w0), (h1, w1) in zip(self.scales, self.scales[1:]):
            if h1 <= h0 and w1 <= w0:
                raise QuantizerConfigError(f"scales must increase: {(h0, w0)} -> {(h1, w1)}")
        if any(h < 1 or w < 1 for h, w in self.scales):
            raise QuantizerConfigError("scales must be positive")
        if self.history_length < 0:
            raise QuantizerConfigError("history_length must be >= 0")

    @property
    def latent_hw(self) -> tuple[int, int]:
        return self.scales[-1]


@dataclass
class TokenizationResult:
    """Everything one tokenization pass produced.

    `latent` is the quantized aggregate handed to the decoder; `residual` is
    the part no stage absorbed. Index grids and post-stage residual snapshots
    are kept per stage (empty in passthrough mode, where no codes exist).
    The squared-error sums cover the spatial stages only.
    """

    latent: torch.Tensor
    residual: torch.Tensor
    intra_indices: list[torch.Tensor] = field(default_factory=list)
    inter_indices: list[torch.Tensor] = field(default_factory=list)
    intra_residuals: list[torch.Tensor] = field(default_factory=list)
    inter_residuals: list[torch.Tensor] = field(default_factory=list)
    codebook_sq: torch.Tensor | None = None
    commit_sq: torch.Tensor | None = None


class HistoryQueue:
    """Most-recent-first buffer of (latent, pose) pairs with fixed capacity."""

    def __init__(self, capacity: int) -> None:
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self._items: deque[HistoryItem] = deque(maxlen=capacity)

    def push(self, latent: torch.Tensor, pose: PoseArg) -> None:
        self._items.appendleft((latent, pose))

    def items(self) -> tuple[HistoryItem, ...]:
        return tuple(self._items)

    def clear(self) -> None:
        self._items.clear()

    def __len__(self) -> int:
        return len(self._items)


def resize_map(x: torch.Tensor, hw: tuple[int, int]) -> torch.Tensor:
    """Bilinear resize of a channels-last (h, w, C) or (B, h, w, C) map."""
    squeeze = x.dim() == 3
    xb = x.unsqueeze(0) if squeeze else x
    if xb.shape[-3:-1] == hw:
        y = xb
    else:
        y = F.interpolate(xb.permute(0, 3, 1, 2), size=hw, mode="bilinear", align_corners=False)
        y = y.permute(0, 2, 3, 1)
    return y.squeeze(0) if squeeze else y


def _identity_conv(channels: int) -> nn.Conv2d:
    conv = nn.Conv2d(channels, channels, 3, padding=1)
    with torch.no_grad():
        conv.weight.zero_()
        for c in range(channels):
            conv.weight[c, c, 1, 1] = 1.0
        conv.bias.zero_()
    return conv


def _relative_poses(hist_pose: PoseArg, pose: PoseArg) -> PoseArg:
    if isinstance(hist_pose, SE3Transform) and isinstance(pose, SE3Transform):
        return se3_relative(hist_pose, pose)
    hp = [hist_pose] if isinstance(hist_pose, SE3Transform) else list(hist_pose)
    cp = [pose] if isinstance(pose, SE3Transform) else list(pose)
    if len(hp) == 1:
        hp = hp * len(cp)
    if len(cp) == 1:
        cp = cp * len(hp)
    if len(hp) != len(cp):
        raise ValueError(f"pose count mismatch: {len(hp)} history vs {len(cp)} current")
    return [se3_relative(a, b) for a, b in zip(hp, cp)]


class ResidualQuantizer(nn.Module):
    """Both quantization phases plus their refinement convolutions.

    `cell_size_m` is the metric size of one latent cell (voxel size times the
    encoder's downsampling factor); it scales pose translations when history
    latents are warped into the current frame.
    """

    def __init__(self, config: QuantizerConfig, codebook: Codebook, cell_size_m: float) -> None:
        super().__init__()
        if cell_size_m <= 0:
            raise QuantizerConfigError("cell_size_m must be positive")
        self.config = config
        self.codebook = codebook
        self.cell_size_m = float(cell_size_m)
        ch = codebook.dim
        self.phi = nn.ModuleList(_identity_conv(ch) for _ in config.scales)
        self.psi = nn.ModuleList(_identity_conv(ch) for _ in range(config.history_length))

    def _conv(self, conv: nn.Conv2d, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        xb = x.unsqueeze(0) if squeeze else x
        y = conv(xb.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
        return y.squeeze(0) if squeeze else y

    def _check_hw(self, feats: torch.Tensor) -> None:
        if feats.dim() not in (3, 4) or feats.shape[-1] != self.codebook.dim:
            raise ValueError(f"expected (.., h, w, {self.codebook.dim}) map, got {tuple(feats.shape)}")
        if tuple(feats.shape[-3:-1]) != self.config.latent_hw:
            raise ValueError(
                f"map is {tuple(feats.shape[-3:-1])}, ladder ends at {self.config.latent_hw}"
            )

    def intra_tokenize(self, feats: torch.Tensor) -> TokenizationResult:
        """Run the spatial ladder over one latent map."""
        self._check_hw(feats)
        cfg = self.config
        hw = cfg.latent_hw
        residual = feats
        latent = torch.zeros_like(feats)
        indices: list[torch.Tensor] = []
        snapshots: list[torch.Tensor] = []
        cb_sq = feats.new_zeros(())
        cm_sq = feats.new_zeros(())
        for s, scale in enumerate(cfg.scales):
            b = resize_map(residual, scale)
            if cfg.passthrough:
                b_hat = b
            else:
                b_hat, idx, c_sq, m_sq = quantize_map(b, self.codebook, track_usage=self.training)
                indices.append(idx)
                cb_sq = cb_sq + c_sq
                cm_sq = cm_sq + m_sq
            up = resize_map(b_hat, hw)
            residual = residual - up
            latent = latent + (up if cfg.passthrough else self._conv(self.phi[s], up))
            snapshots.append(residual)
        return TokenizationResult(
            latent=latent,
            residual=residual,
            intra_indices=indices,
            intra_residuals=snapshots,
            codebook_sq=cb_sq,
            commit_sq=cm_sq,
        )

    def inter_tokenize(
        self,
        intra: TokenizationResult,
        history: Sequence[HistoryItem] = (),
        pose: PoseArg | None = None,
    ) -> TokenizationResult:
        """Extend an intra result with the temporal steps.

        `history` is most-recent-first and may be shorter than the configured
        length; missing slots contribute zeros. Each item pairs a latent map
        with the ego pose it was captured at, used to warp it into the frame
        of `pose` unless alignment is disabled.
        """
        cfg = self.config
        items = list(history)
        if len(items) > cfg.history_length:
            raise ValueError(f"{len(items)} history items exceed capacity {cfg.history_length}")
        if items and cfg.align and pose is None:
            raise ValueError("aligning history requires the current pose")
        residual = intra.residual
        latent = intra.latent
        indices: list[torch.Tensor] = []
        snapshots: list[torch.Tensor] = []
        for g in range(cfg.history_length):
            if g < len(items):
                feat, hist_pose = items[g]
                if cfg.align:
                    rel = _relative_poses(hist_pose, pose)
                    aligned = warp_bev(feat, rel, self.cell_size_m)
                else:
                    aligned = feat
            else:
                aligned = None
            b = residual if aligned is None else residual + aligned
            if cfg.passthrough:
                b_hat = b
            else:
                b_hat, idx, _, _ = quantize_map(b, self.codebook, track_usage=self.training)
                indices.append(idx)
            latent = latent + (b_hat if cfg.passthrough else self._conv(self.psi[g], b_hat))
            residual = residual - b_hat
            snapshots.append(residual)
        return replace(
            intra,
            latent=latent,
            residual=residual,
            inter_indices=indices,
            inter_residuals=snapshots,
        )

    def forward(
        self,
        feats: torch.Tensor,
        history: Sequence[HistoryItem] = (),
        pose: PoseArg | None = None,
    ) -> TokenizationResult:
        result = self.intra_tokenize(feats)
        if self.config.history_length > 0:
            result = self.inter_tokenize(result, history, pose)
        return result
