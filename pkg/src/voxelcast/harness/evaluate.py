"""Horizon evaluation of a trained tokenizer + forecaster pair.

Protocol per sequence: tokenize the G+1 observed frames in arrival order,
roll the forecaster out far enough to cover every requested horizon, decode,
and score mIoU (free class excluded) and binary occupied IoU at each horizon
plus a reconstruction row for the last observed frame. The copy-paste
baseline (last observed reconstruction, pose-warped into each future frame)
runs through the same scoring path.
"""

from __future__ import annotations

import json
import resource
from dataclasses import dataclass, field

import numpy as np
import torch

from ..core.metrics import ConfusionAccumulator
from ..core.plan import SequenceSample
from ..core.se3 import se3_relative
from ..core.warp import warp_labels_nearest
from ..dynamics.former import ConditioningSource, RolloutState, TransformFormer, rollout
from ..dynamics.transform import se3_cond12
from ..tokenizer.model import SceneTokenizer
from .config import ExperimentConfig
from .data import SequenceStore, sequence_latents


class EvalError(ValueError):
    pass


def peak_memory_mb() -> float:
    """Peak resident set size of this process so far, in MiB."""
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


class _RowAccum:
    """Confusion counts plus binary occupied-vs-free sums for one table row."""

    def __init__(self, num_classes: int) -> None:
        self.confusion = ConfusionAccumulator(num_classes)
        self.inter = 0
        self.union = 0

    def update(self, pred: np.ndarray, gt: np.ndarray) -> None:
        self.confusion.update(pred, gt)
        occ_p = pred > 0
        occ_g = gt > 0
        self.inter += int(np.sum(occ_p & occ_g))
        self.union += int(np.sum(occ_p | occ_g))

    def score(self) -> dict[str, float]:
        iou = self.inter / self.union if self.union else float("nan")
        return {"miou": self.confusion.miou(), "iou": iou}


@dataclass
class EvalReport:
    """Scores per horizon for the model and the copy-paste baseline."""

    rows: dict[str, dict[str, float]]
    baseline_rows: dict[str, dict[str, float]]
    steps: dict[str, int]
    rate_hz: float
    conditioning: str
    n_sequences: int
    config_hash: str = ""
    fps: float | None = None
    peak_memory_mb: float | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "baseline_rows": self.baseline_rows,
            "steps": self.steps,
            "rate_hz": self.rate_hz,
            "conditioning": self.conditioning,
            "n_sequences": self.n_sequences,
            "config_hash": self.config_hash,
            "fps": self.fps,
            "peak_memory_mb": self.peak_memory_mb,
            "extras": self.extras,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def table(self) -> str:
        """Fixed-width text rendering of the score rows."""
        labels = list(self.rows)
        lines = [f"{'':12s} {'mIoU':>8s} {'IoU':>8s} {'base mIoU':>10s} {'base IoU':>9s}"]
        for label in labels:
            row = self.rows[label]
            base = self.baseline_rows.get(label, {})
            lines.append(
                f"{label:12s} {row['miou']:8.4f} {row['iou']:8.4f} "
                f"{base.get('miou', float('nan')):10.4f} {base.get('iou', float('nan')):9.4f}"
            )
        lines.append(
            f"rate {self.rate_hz:g} Hz, {self.n_sequences} sequences, "
            f"conditioning {self.conditioning}"
        )
        return "\n".join(lines)


def _horizon_label(seconds: float) -> str:
    return f"{seconds:g}s"


def _with_average(rows: dict[str, dict[str, float]], horizon_labels: list[str]) -> None:
    rows["avg"] = {
        key: float(np.mean([rows[lab][key] for lab in horizon_labels]))
        for key in ("miou", "iou")
    }


def copy_paste_baseline(
    tokenizer: SceneTokenizer, sample: SequenceSample, steps: int
) -> list[np.ndarray]:
    """Forecast frames for the copy-paste baseline.

    Every future step re-emits the tokenizer reconstruction of the last
    observed frame, warped into that step's ego frame by the ground-truth
    relative pose (nearest-neighbor label warp).
    """
    g_len = sample.history_length
    sample.require_length(g_len, steps)
    store = SequenceStore.from_samples([sample])
    latents = sequence_latents(tokenizer, store, 0)[: g_len + 1]
    logits = tokenizer.decode_scene(latents[g_len].unsqueeze(0))
    recon = logits.argmax(dim=-1)[0].numpy().astype(np.uint8)
    poses = [f.ego_pose for f in sample.frames]
    voxel = sample.voxel_size_m
    out = []
    for k in range(1, steps + 1):
        rel = se3_relative(poses[g_len], poses[g_len + k])
        out.append(warp_labels_nearest(recon, rel, voxel))
    return out


@torch.no_grad()
def evaluate(
    tokenizer: SceneTokenizer,
    former: TransformFormer,
    store: SequenceStore,
    config: ExperimentConfig,
    source: ConditioningSource | str | None = None,
    fps: float | None = None,
) -> EvalReport:
    tokenizer.eval()
    former.eval()
    source = ConditioningSource(source or config.conditioning)
    if source is ConditioningSource.USER:
        raise EvalError("batch evaluation supports predicted or ground-truth conditioning")
    rate = store.rate_hz
    steps = config.require_horizons(rate)
    labels_by_step = {_horizon_label(h): s for h, s in zip(config.horizons_s, steps)}
    k_needed = max(steps)
    g_len = store.history_length
    hp = former.hparams
    num_classes = tokenizer.hparams.num_classes
    voxel = tokenizer.hparams.voxel_size_m

    accum = {label: _RowAccum(num_classes) for label in ["recon", *labels_by_step]}
    base_accum = {label: _RowAccum(num_classes) for label in labels_by_step}

    for s in range(len(store)):
        seq_labels = store.labels[s]
        if seq_labels.shape[0] < g_len + 1 + k_needed:
            raise EvalError(
                f"sequence {s} has {seq_labels.shape[0]} frames, "
                f"need {g_len + 1 + k_needed} for a {k_needed}-step horizon"
            )
        poses = store.poses[s]
        latents = sequence_latents(tokenizer, store, s)

        recon_logits = tokenizer.decode_scene(latents[g_len].unsqueeze(0))
        recon = recon_logits.argmax(dim=-1)[0].numpy().astype(np.uint8)
        gt_now = seq_labels[g_len].numpy().astype(np.uint8)
        accum["recon"].update(recon, gt_now)

        state = RolloutState.fresh(
            latents[g_len].unsqueeze(0),
            [latents[g_len - 1 - i].unsqueeze(0) for i in range(min(g_len, hp.queue_len))],
            hp.queue_len,
        )
        plan = store.plans[s][g_len].unsqueeze(0)
        cond_seq = None
        if source is ConditioningSource.GROUND_TRUTH:
            rel = [
                se3_cond12(se3_relative(poses[g_len + k], poses[g_len + k + 1]))
                for k in range(k_needed)
            ]
            cond_seq = torch.as_tensor(np.stack(rel), dtype=torch.float32).unsqueeze(0)
        outs = rollout(former, state, plan, k_needed, source, cond_seq)

        for label, step in labels_by_step.items():
            gt = seq_labels[g_len + step].numpy().astype(np.uint8)
            pred_logits = tokenizer.decode_scene(outs[step - 1][0])
            pred = pred_logits.argmax(dim=-1)[0].numpy().astype(np.uint8)
            accum[label].update(pred, gt)
            rel = se3_relative(poses[g_len], poses[g_len + step])
            base = warp_labels_nearest(recon, rel, voxel)
            base_accum[label].update(base, gt)

    rows = {label: acc.score() for label, acc in accum.items()}
    baseline_rows = {label: acc.score() for label, acc in base_accum.items()}
    horizon_labels = list(labels_by_step)
    _with_average(rows, horizon_labels)
    _with_average(baseline_rows, horizon_labels)
    return EvalReport(
        rows=rows,
        baseline_rows=baseline_rows,
        steps=labels_by_step,
        rate_hz=rate,
        conditioning=source.value,
        n_sequences=len(store),
        config_hash=config.config_hash(),
        fps=fps,
        peak_memory_mb=peak_memory_mb(),
    )
