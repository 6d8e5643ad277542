"""Ablation switches: one named toggle per architecture decision under study.

A switch set maps onto a modified experiment config; the runner trains both
stages from scratch per variant (same seed, same data) and evaluates on the
val split, so rows differ only in the toggled component.
"""

from __future__ import annotations

import logging
from dataclasses import replace

from ..dynamics.former import ConditioningSource
from .config import ConfigError, ExperimentConfig
from .data import SequenceStore
from .evaluate import EvalReport, evaluate
from .train import train_former, train_tokenizer

log = logging.getLogger("voxelcast.ablate")

SWITCH_NAMES = (
    "inter_scene",  # temporal quantization stage on/off (tokenizer)
    "align",  # pose-warp history latents (tokenizer)
    "multi_scale",  # coarse-to-fine ladder vs single full-res stage (tokenizer)
    "condition",  # "none" | "translation" | "full" (former)
    "temporal_fusion",  # latent queue fusion (former)
    "intra_encoder",  # scene refinement layers (former)
    "multi_scale_encoder",  # condition pyramid depth > 1 (former)
)


def apply_switches(config: ExperimentConfig, switches: dict) -> ExperimentConfig:
    """A new config with the named toggles applied; unknown names fail."""
    unknown = set(switches) - set(SWITCH_NAMES)
    if unknown:
        raise ConfigError(f"unknown ablation switches: {sorted(unknown)}")
    tok = config.tokenizer
    former = config.former
    if "inter_scene" in switches and not switches["inter_scene"]:
        tok = replace(tok, history_length=0)
    if "align" in switches:
        tok = replace(tok, align=bool(switches["align"]))
    if "multi_scale" in switches and not switches["multi_scale"]:
        tok = replace(tok, scales=(tok.scales[-1],))
    if "condition" in switches:
        former = replace(former, condition_mode=str(switches["condition"]))
    if "temporal_fusion" in switches:
        former = replace(former, temporal_fusion=bool(switches["temporal_fusion"]))
    if "intra_encoder" in switches:
        former = replace(former, use_intra_encoder=bool(switches["intra_encoder"]))
    if "multi_scale_encoder" in switches and not switches["multi_scale_encoder"]:
        former = replace(former, pyramid_levels=1)
    return replace(config, tokenizer=tok, former=former)


def ablation_run(
    config: ExperimentConfig,
    variants: dict[str, dict],
    train_store: SequenceStore,
    val_store: SequenceStore,
    source: ConditioningSource | str | None = None,
) -> dict[str, EvalReport]:
    """Train and evaluate one row per named switch set."""
    reports: dict[str, EvalReport] = {}
    for name, switches in variants.items():
        log.info("ablation %s: %s", name, switches)
        variant = apply_switches(config, switches)
        tokenizer, _ = train_tokenizer(variant, train_store)
        former, _ = train_former(variant, tokenizer, train_store)
        reports[name] = evaluate(tokenizer, former, val_store, variant, source)
    return reports
