"""In-plane (yaw + x/y) warping of BEV feature maps and label grids.

Only the planar components of an SE(3) transform are used: BEV latents carry
no height axis, so z/pitch/roll are ignored. Each output cell samples the
input at its inverse-mapped location; rotation pivots about the grid center.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .se3 import SE3Transform


def planar_components(t: SE3Transform) -> tuple[float, float, float]:
    """(yaw, tx_m, ty_m) of the transform's in-plane action."""
    tr = t.translation
    return t.yaw, float(tr[0]), float(tr[1])


def _source_coords(h: int, w: int, t: SE3Transform, cell_size_m: float):
    """Inverse-mapped fractional source coordinates for every output cell."""
    yaw, tx_m, ty_m = planar_components(t)
    tx, ty = tx_m / cell_size_m, ty_m / cell_size_m
    cx, cy = (h - 1) / 2.0, (w - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    qx, qy = ii - cx, jj - cy
    c, s = np.cos(-yaw), np.sin(-yaw)
    # p = R(-yaw) @ (q - t)
    dx, dy = qx - tx, qy - ty
    px = c * dx - s * dy + cx
    py = s * dx + c * dy + cy
    return px, py


def warp_bev(
    feature_map: torch.Tensor,
    t: SE3Transform | Sequence[SE3Transform],
    cell_size_m: float,
    fill: float = 0.0,
) -> torch.Tensor:
    """Warp a (h, w, C) or (B, h, w, C) feature map by the in-plane part of `t`.

    Bilinear sampling; out-of-grid samples receive `fill`. Differentiable in
    the feature map. `t` may be a sequence of B transforms, one per batch
    element.
    """
    squeeze = feature_map.dim() == 3
    fm = feature_map.unsqueeze(0) if squeeze else feature_map
    if fm.dim() != 4:
        raise ValueError(f"expected (h, w, C) or (B, h, w, C), got {tuple(feature_map.shape)}")
    b, h, w, c = fm.shape
    if isinstance(t, SE3Transform):
        transforms = [t] * b
    else:
        transforms = list(t)
        if len(transforms) != b:
            raise ValueError(f"{len(transforms)} transforms for batch of {b}")
    coords = [_source_coords(h, w, ti, cell_size_m) for ti in transforms]
    px = torch.as_tensor(np.stack([cc[0] for cc in coords]), dtype=fm.dtype, device=fm.device)
    py = torch.as_tensor(np.stack([cc[1] for cc in coords]), dtype=fm.dtype, device=fm.device)

    x0 = torch.floor(px)
    y0 = torch.floor(py)
    fx = px - x0
    fy = py - y0
    bidx = torch.arange(b).view(b, 1, 1).expand(b, h, w)
    out = fm.new_zeros((b, h, w, c))
    fill_weight = fm.new_zeros((b, h, w))
    for dx_i in (0, 1):
        for dy_i in (0, 1):
            xs = x0.long() + dx_i
            ys = y0.long() + dy_i
            wgt = ((1 - fx) if dx_i == 0 else fx) * ((1 - fy) if dy_i == 0 else fy)
            valid = (xs >= 0) & (xs < h) & (ys >= 0) & (ys < w)
            xs_c = xs.clamp(0, h - 1)
            ys_c = ys.clamp(0, w - 1)
            gathered = fm[bidx, xs_c, ys_c, :]  # (B, h, w, C)
            out = out + gathered * (wgt * valid.to(fm.dtype)).unsqueeze(-1)
            fill_weight = fill_weight + wgt * (~valid).to(fm.dtype)
    if fill != 0.0:
        out = out + float(fill) * fill_weight.unsqueeze(-1)
    return out.squeeze(0) if squeeze else out


def warp_labels_nearest(
    labels: np.ndarray,
    t: SE3Transform,
    voxel_size_m: float,
    fill: int = 0,
) -> np.ndarray:
    """Warp (H, W, Z) labels by the in-plane part of `t`, nearest-neighbor."""
    h, w, _ = labels.shape
    px, py = _source_coords(h, w, t, voxel_size_m)
    xi = np.rint(px).astype(np.int64)
    yi = np.rint(py).astype(np.int64)
    valid = (xi >= 0) & (xi < h) & (yi >= 0) & (yi < w)
    xi_c = np.clip(xi, 0, h - 1)
    yi_c = np.clip(yi, 0, w - 1)
    out = labels[xi_c, yi_c, :].copy()
    out[~valid] = fill
    return out
