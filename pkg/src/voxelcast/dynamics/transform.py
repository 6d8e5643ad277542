"""Differentiable ego-motion parameterization for the dynamics model.

A predicted transform is 7 raw values: an unnormalized quaternion (w, x, y, z)
followed by a translation in meters. A raw quaternion too small to normalize
decodes to the identity rotation, which together with zero-initialized heads
makes an untrained model predict "no motion" rather than garbage.
"""

from __future__ import annotations

import numpy as np
import torch

from ..core.se3 import SE3Transform

_EPS = 1e-8


def decode_transform(raw: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(.., 7) raw values -> normalized quaternion (.., 4) and translation (.., 3)."""
    if raw.shape[-1] != 7:
        raise ValueError(f"expected trailing dim 7, got {raw.shape[-1]}")
    q = raw[..., :4]
    t = raw[..., 4:]
    n = q.norm(dim=-1, keepdim=True)
    identity = torch.zeros_like(q)
    identity[..., 0] = 1.0
    q = torch.where(n < _EPS, identity, q / n.clamp_min(_EPS))
    return q, t


def quat_to_matrix_t(q: torch.Tensor) -> torch.Tensor:
    """Batched unit quaternion (.., 4) -> rotation matrix (.., 3, 3)."""
    w, x, y, z = q.unbind(dim=-1)
    row0 = torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], dim=-1)
    row1 = torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], dim=-1)
    row2 = torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], dim=-1)
    return torch.stack([row0, row1, row2], dim=-2)


def transform_cond12(raw: torch.Tensor) -> torch.Tensor:
    """Raw (.., 7) -> the decoded [R | t] top 3x4 block, row-major (.., 12)."""
    q, t = decode_transform(raw)
    block = torch.cat([quat_to_matrix_t(q), t.unsqueeze(-1)], dim=-1)
    return block.flatten(start_dim=-2)


def se3_cond12(t: SE3Transform) -> np.ndarray:
    """The same 12-value layout for an exact transform."""
    return t.matrix[:3, :4].reshape(12).copy()


def raw_to_se3(raw: torch.Tensor) -> SE3Transform:
    """Decode one raw (7,) prediction to an exact pose object."""
    q, t = decode_transform(raw.detach().double())
    return SE3Transform.from_parts(t.numpy(), q.numpy())


def rotation_loss(q_pred: torch.Tensor, q_gt: torch.Tensor) -> torch.Tensor:
    """1 - |<q_pred, q_gt>| per pair, mean over leading dims; sign-invariant."""
    qp = q_pred / q_pred.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    qg = q_gt / q_gt.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    return (1.0 - (qp * qg).sum(dim=-1).abs()).mean()


def transform_loss(
    raw: torch.Tensor, gt_quat: torch.Tensor, gt_trans: torch.Tensor
) -> torch.Tensor:
    """Squared translation error plus rotation alignment error, both means."""
    q, t = decode_transform(raw)
    trans = ((t - gt_trans) ** 2).sum(dim=-1).mean()
    return trans + rotation_loss(q, gt_quat)


def se3_to_quat_trans(t: SE3Transform) -> tuple[np.ndarray, np.ndarray]:
    return t.rotation_quat, t.translation


__all__ = [
    "decode_transform",
    "quat_to_matrix_t",
    "transform_cond12",
    "se3_cond12",
    "raw_to_se3",
    "rotation_loss",
    "transform_loss",
    "se3_to_quat_trans",
]
