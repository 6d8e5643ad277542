"""Ego plan signals and on-disk sequence samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import GridValidationError, OccupancyGrid
from .se3 import SE3Transform


class Command(str, Enum):
    STRAIGHT = "STRAIGHT"
    TURN_LEFT = "TURN_LEFT"
    TURN_RIGHT = "TURN_RIGHT"
    STOP = "STOP"


@dataclass(frozen=True)
class PlanSignal:
    """Past ego motion summary: speed, high-level command, relative track."""

    speed_mps: float
    command: Command
    past_rel_translations: np.ndarray  # (G, 3), ego frame, oldest first

    def __post_init__(self):
        rel = np.asarray(self.past_rel_translations, dtype=np.float64)
        if rel.ndim != 2 or rel.shape[1] != 3:
            raise GridValidationError("past_rel_translations must be (G, 3)")
        if not np.all(np.isfinite(rel)) or not np.isfinite(self.speed_mps):
            raise GridValidationError("plan signal must be finite")
        if self.speed_mps < 0:
            raise GridValidationError("speed_mps must be >= 0")
        rel.flags.writeable = False
        object.__setattr__(self, "past_rel_translations", rel)
        object.__setattr__(self, "command", Command(self.command))

    @property
    def history_length(self) -> int:
        return self.past_rel_translations.shape[0]

    def to_dict(self) -> dict:
        return {
            "speed_mps": float(self.speed_mps),
            "command": self.command.value,
            "past_rel_translations": self.past_rel_translations.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "PlanSignal":
        return PlanSignal(
            speed_mps=float(d["speed_mps"]),
            command=Command(d["command"]),
            past_rel_translations=np.asarray(d["past_rel_translations"], dtype=np.float64),
        )


@dataclass(frozen=True)
class Frame:
    grid: OccupancyGrid
    ego_pose: SE3Transform  # ego -> world
    plan: PlanSignal


@dataclass(frozen=True)
class SequenceSample:
    frames: tuple[Frame, ...]
    rate_hz: float
    seed: int
    history_length: int = 4  # G

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise GridValidationError("sequence must be nonempty")
        first = frames[0].grid
        for f in frames:
            g = f.grid
            if (
                g.shape != first.shape
                or g.num_classes != first.num_classes
                or g.voxel_size_m != first.voxel_size_m
            ):
                raise GridValidationError("all grids must share dims/classes/voxel size")
            if f.plan.history_length != self.history_length:
                raise GridValidationError("plan history length mismatch")
        if self.rate_hz <= 0:
            raise GridValidationError("rate_hz must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return self.frames[0].grid.shape

    @property
    def num_classes(self) -> int:
        return self.frames[0].grid.num_classes

    @property
    def voxel_size_m(self) -> float:
        return self.frames[0].grid.voxel_size_m

    def require_length(self, g: int, k: int) -> None:
        if len(self.frames) < g + 1 + k:
            raise GridValidationError(
                f"sequence length {len(self.frames)} < G+1+K = {g + 1 + k}"
            )

    def prefix(self, n: int) -> "SequenceSample":
        """The first n frames as a sequence of their own."""
        if not 0 < n <= len(self.frames):
            raise GridValidationError(f"prefix length {n} outside 1..{len(self.frames)}")
        return SequenceSample(
            frames=self.frames[:n],
            rate_hz=self.rate_hz,
            seed=self.seed,
            history_length=self.history_length,
        )
