"""Deterministic procedural driving world.

Flat road plane plus axis-aligned buildings and constant-velocity vehicles,
rasterized per frame into an ego-centered grid (ego at grid center, heading
+x). All content is a pure function of (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..core.grid import OccupancyGrid, ego_origin_m
from ..core.plan import Command, Frame, PlanSignal, SequenceSample
from ..core.se3 import SE3Transform, se3_relative

ROAD, BUILDING, CAR, TRUCK = 1, 2, 3, 4

SUPPORTED_RATES = (2.0, 10.0)

# fixed yaw rates per command, rad/s
_YAW_RATE = {
    Command.STRAIGHT: 0.0,
    Command.TURN_LEFT: 0.35,
    Command.TURN_RIGHT: -0.35,
    Command.STOP: 0.0,
}


class WorldConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    dims: tuple[int, int, int] = (64, 64, 8)
    voxel_size_m: float = 0.5
    num_classes: int = 5
    n_static_buildings: int = 6
    n_moving_agents: int = 3
    rate_hz: float = 2.0
    sequence_length: int = 11
    seed: int = 0
    command: Command | None = None  # None: drawn from the seed
    ego_speed_mps: float | None = None  # None: drawn from the seed
    ego_speed_range: tuple[float, float] = (0.3, 4.5)  # sampling range when not fixed
    agent_speed_range: tuple[float, float] = (0.2, 3.0)
    world_extent_m: float = 60.0  # half-size of the road square

    def __post_init__(self):
        if min(self.dims) <= 0:
            raise WorldConfigError("grid dims must be positive")
        if self.rate_hz not in SUPPORTED_RATES:
            raise WorldConfigError(f"rate_hz must be one of {SUPPORTED_RATES}")
        if self.n_static_buildings < 0 or self.n_moving_agents < 0:
            raise WorldConfigError("object counts must be >= 0")
        if self.sequence_length < 1:
            raise WorldConfigError("sequence_length must be >= 1")
        for name in ("ego_speed_range", "agent_speed_range"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise WorldConfigError(f"{name} must satisfy 0 < low <= high")
        if self.command is not None:
            object.__setattr__(self, "command", Command(self.command))

    def require_length(self, g: int, k: int) -> None:
        if self.sequence_length < g + 1 + k:
            raise WorldConfigError(
                f"sequence_length {self.sequence_length} too short for G={g}, K={k}"
            )


@dataclass(frozen=True)
class AgentState:
    label: int  # CAR or TRUCK
    footprint_m: tuple[float, float]  # (length x, width y), snapped to voxels
    center_m: np.ndarray  # (x, y) world position at t=0
    velocity_mps: np.ndarray  # (vx, vy), constant
    height_vox: int

    def center_at(self, t_s: float) -> np.ndarray:
        return self.center_m + self.velocity_mps * t_s


@dataclass(frozen=True)
class Building:
    footprint_m: tuple[float, float]
    center_m: np.ndarray
    height_vox: int


@dataclass(frozen=True)
class WorldState:
    buildings: tuple[Building, ...]
    agents: tuple[AgentState, ...]
    extent_m: float


def _snap(v: float, cell: float) -> float:
    return max(cell, round(v / cell) * cell)


def _sample_world(cfg: WorldConfig, rng: np.random.Generator) -> WorldState:
    cell = cfg.voxel_size_m
    z_max = cfg.dims[2]
    buildings = []
    for _ in range(cfg.n_static_buildings):
        side = 1 if rng.random() < 0.5 else -1
        center = np.array(
            [rng.uniform(-14.0, 32.0), side * rng.uniform(6.0, 14.0)]
        )
        size = (_snap(rng.uniform(3.0, 7.0), cell), _snap(rng.uniform(3.0, 7.0), cell))
        height = int(rng.integers(3, min(6, z_max) + 1))
        buildings.append(Building(size, center, height))
    agents = []
    for _ in range(cfg.n_moving_agents):
        is_truck = rng.random() < 0.35
        label = TRUCK if is_truck else CAR
        size = (6.5, 2.5) if is_truck else (4.0, 2.0)
        size = (_snap(size[0], cell), _snap(size[1], cell))
        height = 3 if is_truck else 2
        lane = rng.uniform(-4.5, 4.5)
        center = np.array([rng.uniform(-8.0, 22.0), lane])
        direction = 1.0 if rng.random() < 0.7 else -1.0
        speed = rng.uniform(*cfg.agent_speed_range)
        velocity = np.array([direction * speed, 0.0])
        agents.append(AgentState(label, size, center, velocity, height))
    return WorldState(tuple(buildings), tuple(agents), cfg.world_extent_m)


def _paint_box(
    labels: np.ndarray,
    xw: np.ndarray,
    yw: np.ndarray,
    center: np.ndarray,
    size: tuple[float, float],
    height: int,
    label: int,
) -> None:
    hx, hy = size[0] / 2.0, size[1] / 2.0
    mask = (
        (xw >= center[0] - hx)
        & (xw < center[0] + hx)
        & (yw >= center[1] - hy)
        & (yw < center[1] + hy)
    )
    labels[mask, : min(height, labels.shape[2])] = label


def rasterize_frame(
    state: WorldState,
    ego_pose: SE3Transform,
    t_s: float,
    cfg: WorldConfig,
) -> OccupancyGrid:
    """Rasterize the world at time t_s into the ego frame.

    Overlap priority (painted last wins): truck > car > building > road.
    """
    h, w, z = cfg.dims
    cell = cfg.voxel_size_m
    labels = np.zeros((h, w, z), dtype=np.uint8)
    # ego-frame cell centers
    xi = (np.arange(h) + 0.5 - h / 2.0) * cell
    yi = (np.arange(w) + 0.5 - w / 2.0) * cell
    xe, ye = np.meshgrid(xi, yi, indexing="ij")
    rot = ego_pose.rotation
    tr = ego_pose.translation
    xw = rot[0, 0] * xe + rot[0, 1] * ye + tr[0]
    yw = rot[1, 0] * xe + rot[1, 1] * ye + tr[1]

    on_road = (np.abs(xw) < state.extent_m) & (np.abs(yw) < state.extent_m)
    labels[:, :, 0][on_road] = ROAD
    for b in state.buildings:
        _paint_box(labels, xw, yw, b.center_m, b.footprint_m, b.height_vox, BUILDING)
    for a in state.agents:
        if a.label == CAR:
            _paint_box(labels, xw, yw, a.center_at(t_s), a.footprint_m, a.height_vox, CAR)
    for a in state.agents:
        if a.label == TRUCK:
            _paint_box(labels, xw, yw, a.center_at(t_s), a.footprint_m, a.height_vox, TRUCK)
    return OccupancyGrid(labels, cfg.num_classes, cell, ego_origin_m((h, w, z), cell))


def _ego_trajectory(
    cfg: WorldConfig, command: Command, speed: float
) -> list[SE3Transform]:
    dt = 1.0 / cfg.rate_hz
    yaw_rate = _YAW_RATE[command]
    poses = []
    x = y = yaw = 0.0
    for _ in range(cfg.sequence_length):
        poses.append(SE3Transform.from_xyz_yaw(x, y, 0.0, yaw))
        x += speed * dt * np.cos(yaw)
        y += speed * dt * np.sin(yaw)
        yaw += yaw_rate * dt
    return poses


def generate_sequence(cfg: WorldConfig, history_length: int = 4) -> SequenceSample:
    """Deterministic sequence of rasterized frames with consistent poses."""
    rng = np.random.default_rng(cfg.seed)
    command = cfg.command
    if command is None:
        choices = [Command.STRAIGHT, Command.TURN_LEFT, Command.TURN_RIGHT, Command.STOP]
        command = choices[int(rng.choice(len(choices), p=[0.5, 0.2, 0.2, 0.1]))]
    speed = cfg.ego_speed_mps
    if speed is None:
        speed = float(rng.uniform(*cfg.ego_speed_range))
    if command is Command.STOP:
        speed = 0.0
    state = _sample_world(cfg, rng)
    poses = _ego_trajectory(cfg, command, speed)
    dt = 1.0 / cfg.rate_hz
    frames = []
    for t, pose in enumerate(poses):
        rel = []
        for g in range(history_length, 0, -1):
            past = poses[max(t - g, 0)]
            rel.append(se3_relative(past, pose).translation)
        plan = PlanSignal(
            speed_mps=speed,
            command=command,
            past_rel_translations=np.stack(rel) if rel else np.zeros((0, 3)),
        )
        grid = rasterize_frame(state, pose, t * dt, cfg)
        frames.append(Frame(grid=grid, ego_pose=pose, plan=plan))
    return SequenceSample(
        frames=tuple(frames),
        rate_hz=cfg.rate_hz,
        seed=cfg.seed,
        history_length=history_length,
    )


def sequence_config(base: WorldConfig, seed: int, command: Command | None = None) -> WorldConfig:
    return replace(base, seed=seed, command=command if command is not None else base.command)
