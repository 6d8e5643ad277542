from .grid import FREE_CLASS, GridValidationError, OccupancyGrid, ego_origin_m
from .metrics import ConfusionAccumulator, MetricError, binary_iou, miou
from .occseq import (
    OccSeqChecksumError,
    OccSeqError,
    OccSeqFormatError,
    OccSeqTruncationError,
    decode_occseq,
    encode_occseq,
)
from .plan import Command, Frame, PlanSignal, SequenceSample
from .se3 import (
    SE3Transform,
    SE3ValidationError,
    matrix_to_quat,
    quat_rotation_loss,
    quat_to_matrix,
    se3_relative,
)
from .warp import planar_components, warp_bev, warp_labels_nearest

__all__ = [
    "FREE_CLASS",
    "GridValidationError",
    "OccupancyGrid",
    "ego_origin_m",
    "ConfusionAccumulator",
    "MetricError",
    "binary_iou",
    "miou",
    "OccSeqChecksumError",
    "OccSeqError",
    "OccSeqFormatError",
    "OccSeqTruncationError",
    "decode_occseq",
    "encode_occseq",
    "Command",
    "Frame",
    "PlanSignal",
    "SequenceSample",
    "SE3Transform",
    "SE3ValidationError",
    "matrix_to_quat",
    "quat_rotation_loss",
    "quat_to_matrix",
    "se3_relative",
    "planar_components",
    "warp_bev",
    "warp_labels_nearest",
]
