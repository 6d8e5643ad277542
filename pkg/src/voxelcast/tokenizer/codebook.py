"""Shared vector codebook and nearest-code quantization.

One codebook serves every quantization stage, spatial and temporal alike.
Distances are plain squared Euclidean sums computed directly (no expansion
tricks), so the selected index matches an exhaustive per-code scan exactly,
ties resolving to the lowest index.
"""

from __future__ import annotations

import torch
from torch import nn


class CodebookError(ValueError):
    pass


class Codebook(nn.Module):
    """N learnable code vectors of width C, with per-code usage counters.

    Usage counters accumulate how many vectors each code absorbed since the
    last `reset_usage()`; their sum equals the number of quantized vectors.
    """

    def __init__(self, num_codes: int, dim: int) -> None:
        super().__init__()
        if num_codes < 1 or dim < 1:
            raise CodebookError(f"bad codebook shape ({num_codes}, {dim})")
        self.num_codes = num_codes
        self.dim = dim
        weight = torch.randn(num_codes, dim) * 0.1
        self.weight = nn.Parameter(weight)
        self.register_buffer("usage", torch.zeros(num_codes, dtype=torch.long))

    def reset_usage(self) -> None:
        self.usage.zero_()

    @torch.no_grad()
    def _count(self, indices: torch.Tensor) -> None:
        self.usage += torch.bincount(indices.reshape(-1), minlength=self.num_codes)

    def reinit_dead(self, batch: torch.Tensor, generator: torch.Generator | None = None) -> int:
        """Re-seed unused codes from random rows of `batch` ((M, C) vectors).

        Returns how many codes were replaced. Counters are left untouched so
        the caller can decide when an epoch's bookkeeping resets.
        """
        if batch.dim() != 2 or batch.shape[1] != self.dim:
            raise CodebookError(f"expected (M, {self.dim}) batch, got {tuple(batch.shape)}")
        dead = (self.usage == 0).nonzero(as_tuple=True)[0]
        if dead.numel() == 0:
            return 0
        picks = torch.randint(0, batch.shape[0], (dead.numel(),), generator=generator)
        with torch.no_grad():
            self.weight[dead] = batch[picks].to(self.weight.dtype)
        return int(dead.numel())


def quantize_vector(v: torch.Tensor, codebook: Codebook) -> tuple[int, torch.Tensor]:
    """Nearest code to a single vector: (index, code row).

    Squared L2 over channels; the lowest index wins ties.
    """
    if v.dim() != 1 or v.shape[0] != codebook.dim:
        raise CodebookError(f"expected ({codebook.dim},) vector, got {tuple(v.shape)}")
    d = ((v.unsqueeze(0) - codebook.weight) ** 2).sum(dim=1)
    idx = int(torch.argmin(d).item())
    return idx, codebook.weight[idx]


def quantize_map(
    feats: torch.Tensor,
    codebook: Codebook,
    track_usage: bool = True,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Quantize every cell of a (..., C) map against the codebook.

    Returns (quantized, indices, codebook_sq, commit_sq) where `quantized`
    carries straight-through gradients (identity Jacobian w.r.t. `feats`),
    `indices` has the map's leading shape, and the two scalars are the
    squared-error sums over all cells: ||sg(b) - code||^2 and
    ||b - sg(code)||^2.
    """
    if feats.shape[-1] != codebook.dim:
        raise CodebookError(f"expected trailing dim {codebook.dim}, got {feats.shape[-1]}")
    lead = feats.shape[:-1]
    flat = feats.reshape(-1, codebook.dim)
    # Direct squared differences, same arithmetic as the per-vector scan.
    # Distances feed only the argmin, so no graph; chunked to bound memory.
    with torch.no_grad():
        pieces = []
        for chunk in flat.split(1024):
            d = ((chunk.unsqueeze(1) - codebook.weight.unsqueeze(0)) ** 2).sum(dim=2)
            pieces.append(torch.argmin(d, dim=1))
        indices = torch.cat(pieces)
    codes = codebook.weight[indices]
    codebook_sq = ((flat.detach() - codes) ** 2).sum()
    commit_sq = ((flat - codes.detach()) ** 2).sum()
    quantized = flat + (codes - flat).detach()
    if track_usage:
        codebook._count(indices)
    return quantized.reshape(feats.shape), indices.reshape(lead), codebook_sq, commit_sq


def perplexity(counts: torch.Tensor) -> float:
    """exp(entropy) of a code-usage histogram; 0 if the histogram is empty."""
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts.double() / total
    nz = p[p > 0]
    return float(torch.exp(-(nz * nz.log()).sum()))


def codebook_stats(codebook: Codebook) -> dict:
    """Usage summary for logging: counts, live fraction, perplexity."""
    counts = codebook.usage
    total = int(counts.sum())
    live = int((counts > 0).sum())
    return {
        "total": total,
        "live_codes": live,
        "live_fraction": live / codebook.num_codes,
        "perplexity": perplexity(counts),
    }
