"""Dense semantic occupancy grids.

Labels are (H, W, Z) uint8 with axis order (x, y, z); class 0 is free space.
The grid lives in the ego frame: ego at the grid center, heading +x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FREE_CLASS = 0


class GridValidationError(ValueError):
    pass


def ego_origin_m(shape: tuple[int, int, int], voxel_size_m: float) -> np.ndarray:
    """World offset of voxel (0,0,0)'s corner for an ego-centered grid."""
    h, w, _ = shape
    return np.array([-h * voxel_size_m / 2.0, -w * voxel_size_m / 2.0, 0.0])


@dataclass(frozen=True)
class OccupancyGrid:
    labels: np.ndarray
    num_classes: int
    voxel_size_m: float
    origin_m: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise GridValidationError(f"labels must be (H, W, Z) nonempty, got {labels.shape}")
        if self.num_classes < 2:
            raise GridValidationError("num_classes must be >= 2")
        if self.num_classes > 256:
            raise GridValidationError("num_classes must fit in uint8")
        if labels.max(initial=0) >= self.num_classes:
            raise GridValidationError("label value out of range")
        if self.voxel_size_m <= 0:
            raise GridValidationError("voxel_size_m must be positive")
        origin = self.origin_m
        if origin is None:
            origin = ego_origin_m(labels.shape, self.voxel_size_m)
        origin = np.asarray(origin, dtype=np.float64)
        if origin.shape != (3,):
            raise GridValidationError("origin_m must be a 3-vector")
        labels.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "origin_m", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.labels.shape  # type: ignore[return-value]

    def with_labels(self, labels: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(labels, self.num_classes, self.voxel_size_m, self.origin_m)

    def occupancy_mask(self) -> np.ndarray:
        return self.labels != FREE_CLASS

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.voxel_size_m == other.voxel_size_m
            and np.array_equal(self.origin_m, other.origin_m)
            and np.array_equal(self.labels, other.labels)
        )
