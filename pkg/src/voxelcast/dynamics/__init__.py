"""Transformation-conditioned autoregressive forecasting over scene latents."""

from .attention import DeformableAttention, FeedForward, PlanCrossAttention, bilinear_sample
from .decoder import ConditionFuser, InterDecoder, TemporalFusion
from .encoder import IntraEncoder, PlanEmbed, TransformHead, plan_feature_dim, plan_features
from .former import (
    ConditioningSource,
    ConditionMode,
    FormerHparams,
    RolloutState,
    TransformFormer,
    gen_loss,
    rollout,
    step_weights,
)
from .transform import (
    decode_transform,
    quat_to_matrix_t,
    raw_to_se3,
    rotation_loss,
    se3_cond12,
    transform_cond12,
    transform_loss,
)

__all__ = [
    "DeformableAttention",
    "FeedForward",
    "PlanCrossAttention",
    "bilinear_sample",
    "ConditionFuser",
    "InterDecoder",
    "TemporalFusion",
    "IntraEncoder",
    "PlanEmbed",
    "TransformHead",
    "plan_feature_dim",
    "plan_features",
    "ConditioningSource",
    "ConditionMode",
    "FormerHparams",
    "RolloutState",
    "TransformFormer",
    "gen_loss",
    "rollout",
    "step_weights",
    "decode_transform",
    "quat_to_matrix_t",
    "raw_to_se3",
    "rotation_loss",
    "se3_cond12",
    "transform_cond12",
    "transform_loss",
]
