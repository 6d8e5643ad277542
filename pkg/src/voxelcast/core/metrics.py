"""Semantic and binary IoU with mergeable confusion accumulators.

mIoU averages per-class IoU over non-free classes present in pred or gt;
classes absent from both are dropped from the mean (not counted as 1.0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import FREE_CLASS, OccupancyGrid


class MetricError(ValueError):
    pass


@dataclass
class ConfusionAccumulator:
    num_classes: int
    tp: np.ndarray = field(init=False)
    fp: np.ndarray = field(init=False)
    fn: np.ndarray = field(init=False)

    def __post_init__(self):
        self.tp = np.zeros(self.num_classes, dtype=np.int64)
        self.fp = np.zeros(self.num_classes, dtype=np.int64)
        self.fn = np.zeros(self.num_classes, dtype=np.int64)

    @property
    def intersection(self) -> np.ndarray:
        return self.tp.copy()

    @property
    def union(self) -> np.ndarray:
        return self.tp + self.fp + self.fn

    def update(self, pred: np.ndarray, gt: np.ndarray) -> None:
        if pred.shape != gt.shape:
            raise MetricError(f"shape mismatch: {pred.shape} vs {gt.shape}")
        p = pred.reshape(-1).astype(np.int64)
        g = gt.reshape(-1).astype(np.int64)
        n = self.num_classes
        if p.max(initial=0) >= n or g.max(initial=0) >= n:
            raise MetricError("label out of range for accumulator")
        # joint histogram over (gt, pred)
        joint = np.bincount(g * n + p, minlength=n * n).reshape(n, n)
        diag = np.diag(joint)
        self.tp += diag
        self.fp += joint.sum(axis=0) - diag
        self.fn += joint.sum(axis=1) - diag

    def merge(self, other: "ConfusionAccumulator") -> "ConfusionAccumulator":
        if other.num_classes != self.num_classes:
            raise MetricError("cannot merge accumulators with different class counts")
        out = ConfusionAccumulator(self.num_classes)
        out.tp = self.tp + other.tp
        out.fp = self.fp + other.fp
        out.fn = self.fn + other.fn
        return out

    def per_class_iou(self) -> np.ndarray:
        """IoU per class; NaN where a class appears in neither pred nor gt."""
        union = self.union.astype(np.float64)
        iou = np.full(self.num_classes, np.nan)
        present = union > 0
        iou[present] = self.tp[present] / union[present]
        return iou

    def miou(self) -> float:
        """Mean IoU over non-free classes present in pred or gt."""
        iou = self.per_class_iou()[FREE_CLASS + 1 :]
        valid = ~np.isnan(iou)
        if not valid.any():
            return float("nan")
        return float(iou[valid].mean())


def _as_labels(x) -> np.ndarray:
    return x.labels if isinstance(x, OccupancyGrid) else np.asarray(x)


def miou(pred, gt, acc: ConfusionAccumulator | None = None) -> tuple[np.ndarray, float]:
    """Per-class IoU and mean over non-free classes.

    With `acc`, the pair is accumulated and metrics reflect everything seen
    so far; without it, a fresh single-pair accumulator is used.
    """
    p, g = _as_labels(pred), _as_labels(gt)
    if acc is None:
        ncls = int(max(p.max(initial=0), g.max(initial=0))) + 1
        if isinstance(pred, OccupancyGrid):
            ncls = pred.num_classes
        acc = ConfusionAccumulator(ncls)
    acc.update(p, g)
    return acc.per_class_iou(), acc.miou()


def binary_iou(pred, gt) -> float:
    """IoU of the occupied (label != 0) vs free partition."""
    p, g = _as_labels(pred), _as_labels(gt)
    if p.shape != g.shape:
        raise MetricError(f"shape mismatch: {p.shape} vs {g.shape}")
    po, go = p != FREE_CLASS, g != FREE_CLASS
    union = np.logical_or(po, go).sum()
    if union == 0:
        return float("nan")
    return float(np.logical_and(po, go).sum() / union)
