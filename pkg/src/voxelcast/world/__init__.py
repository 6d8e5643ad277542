from .dataset import generate_dataset, load_manifest, load_split
from .synth import (
    BUILDING,
    CAR,
    ROAD,
    TRUCK,
    AgentState,
    Building,
    WorldConfig,
    WorldConfigError,
    WorldState,
    generate_sequence,
    rasterize_frame,
)

__all__ = [
    "generate_dataset",
    "load_manifest",
    "load_split",
    "BUILDING",
    "CAR",
    "ROAD",
    "TRUCK",
    "AgentState",
    "Building",
    "WorldConfig",
    "WorldConfigError",
    "WorldState",
    "generate_sequence",
    "rasterize_frame",
]
