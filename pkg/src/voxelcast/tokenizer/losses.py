"""Reconstruction and quantization losses for the scene tokenizer.

The semantic term is a class-weighted focal loss plus Lovász-softmax; the
quantization term is the pair of squared-error sums the spatial ladder
produced (codebook pull and commitment, the latter scaled by beta). Sums are
over cells, not means, so a single-cell case is directly checkable by hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .quantize import TokenizationResult


def class_weights_from_counts(counts: torch.Tensor, delta: float = 1.02) -> torch.Tensor:
    """Inverse-log-frequency weights, normalized to mean 1.

    `counts` is a per-class voxel histogram; classes never observed get the
    weight of the rarest observed class.
    """
    counts = counts.double()
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty class histogram")
    w = 1.0 / torch.log(delta + counts / total)
    seen = counts > 0
    w[~seen] = w[seen].max()
    return w / w.mean()


def focal_loss(
    logits: torch.Tensor,
    target: torch.Tensor,
    class_weights: torch.Tensor | None = None,
    gamma: float = 2.0,
) -> torch.Tensor:
    """Mean over voxels of w_c * (1 - p_t)^gamma * (-log p_t)."""
    flat = logits.reshape(-1, logits.shape[-1])
    tgt = target.reshape(-1).long()
    logp = F.log_softmax(flat, dim=-1)
    logp_t = logp.gather(1, tgt.unsqueeze(1)).squeeze(1)
    p_t = logp_t.exp()
    loss = (1.0 - p_t) ** gamma * (-logp_t)
    if class_weights is not None:
        loss = loss * class_weights.to(loss.dtype)[tgt]
    return loss.mean()


def _lovasz_grad(gt_sorted: torch.Tensor) -> torch.Tensor:
    gts = gt_sorted.sum()
    intersection = gts - gt_sorted.cumsum(0)
    union = gts + (1.0 - gt_sorted).cumsum(0)
    jaccard = 1.0 - intersection / union
    if gt_sorted.numel() > 1:
        jaccard = torch.cat([jaccard[:1], jaccard[1:] - jaccard[:-1]])
    return jaccard


def lovasz_softmax(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Lovász extension of the Jaccard loss, averaged over present classes."""
    probs = F.softmax(logits.reshape(-1, logits.shape[-1]), dim=-1)
    tgt = target.reshape(-1).long()
    losses = []
    for c in range(probs.shape[1]):
        fg = (tgt == c).to(probs.dtype)
        if fg.sum() == 0:
            continue
        errors = (fg - probs[:, c]).abs()
        errors_sorted, order = torch.sort(errors, descending=True)
        losses.append(torch.dot(errors_sorted, _lovasz_grad(fg[order])))
    if not losses:
        return probs.new_zeros(())
    return torch.stack(losses).mean()


@dataclass(frozen=True)
class LossWeights:
    focal: float = 1.0
    lovasz: float = 1.0
    vq: float = 1.0
    beta: float = 1.0


def tokenizer_loss(
    logits: torch.Tensor,
    target: torch.Tensor,
    result: TokenizationResult,
    class_weights: torch.Tensor | None = None,
    weights: LossWeights = LossWeights(),
    gamma: float = 2.0,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Total training loss and its unweighted parts.

    The vq part is codebook_sq + beta * commit_sq from the spatial stages; a
    passthrough result (no quantization) contributes zero.
    """
    fl = focal_loss(logits, target, class_weights, gamma)
    lv = lovasz_softmax(logits, target)
    zero = logits.new_zeros(())
    cb = result.codebook_sq if result.codebook_sq is not None else zero
    cm = result.commit_sq if result.commit_sq is not None else zero
    vq = cb + weights.beta * cm
    total = weights.focal * fl + weights.lovasz * lv + weights.vq * vq
    parts = {
        "focal": float(fl.detach()),
        "lovasz": float(lv.detach()),
        "vq": float(vq.detach()),
        "codebook_sq": float(cb.detach()),
        "commit_sq": float(cm.detach()),
    }
    return total, parts
