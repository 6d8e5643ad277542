"""Two-stage training: scene tokenizer first, forecaster against it frozen.

Both stages share the optimizer recipe (decoupled weight decay, cosine decay
with linear warmup) and a divergence detector that dumps state and aborts on
a non-finite loss. All sampling goes through generators derived from the
config seed, so a rerun with the same config reproduces every batch.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..checkpoint import save_former, save_tokenizer, state_hash
from ..dynamics.former import (
    ConditioningSource,
    RolloutState,
    TransformFormer,
    gen_loss,
    rollout,
)
from ..dynamics.transform import transform_loss
from ..tokenizer.codebook import codebook_stats
from ..tokenizer.losses import LossWeights, class_weights_from_counts, tokenizer_loss
from ..tokenizer.model import SceneTokenizer
from .config import ExperimentConfig, OptimConfig
from .data import FormerDataset, SequenceStore, tokenizer_batch

log = logging.getLogger("voxelcast.train")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, dump_path: Path | None = None) -> None:
        super().__init__(message + (f" (state dumped to {dump_path})" if dump_path else ""))
        self.dump_path = dump_path


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)
    final_loss: float = float("nan")
    wall_time_s: float = 0.0
    weight_hash: str = ""
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "final_loss": self.final_loss,
            "wall_time_s": self.wall_time_s,
            "weight_hash": self.weight_hash,
            "checkpoint": self.checkpoint,
        }


def _cosine_warmup(optimizer: torch.optim.Optimizer, total_steps: int, warmup_frac: float):
    warmup = max(1, int(round(total_steps * warmup_frac)))

    def factor(step: int) -> float:
        if step < warmup:
            return (step + 1) / warmup
        progress = (step - warmup) / max(1, total_steps - warmup)
        return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))

    return torch.optim.lr_scheduler.LambdaLR(optimizer, factor)


def _check_finite(loss: torch.Tensor, module: nn.Module, where: str, dump_dir: Path | None):
    if torch.isfinite(loss):
        return
    dump_path = None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)
        dump_path = dump_dir / "diverged_state.pt"
        torch.save({"state": module.state_dict(), "loss": float(loss)}, dump_path)
    raise TrainingDiverged(f"non-finite loss at {where}: {float(loss)}", dump_path)


def _epoch_picks(rng: np.random.Generator, index: list, optim: OptimConfig) -> list:
    order = rng.permutation(len(index))
    if optim.samples_per_epoch is not None:
        order = order[: optim.samples_per_epoch]
    return [index[i] for i in order]


def train_tokenizer(
    config: ExperimentConfig,
    store: SequenceStore | None = None,
    out: str | Path | None = None,
    dump_dir: str | Path | None = None,
) -> tuple[SceneTokenizer, TrainLog]:
    """Fit the scene tokenizer on the train split; optionally checkpoint it."""
    t_start = time.perf_counter()
    torch.manual_seed(config.seed)
    if store is None:
        store = SequenceStore.from_manifest(config.manifest, "train")
    tokenizer = SceneTokenizer(config.tokenizer)
    tokenizer.train()

    optim_cfg = config.tokenizer_optim
    class_weights = class_weights_from_counts(
        store.class_counts(config.tokenizer.num_classes)
    ).float()
    weights = LossWeights(vq=config.vq_weight)
    opt = torch.optim.AdamW(
        tokenizer.parameters(), lr=optim_cfg.lr, weight_decay=optim_cfg.weight_decay
    )
    index = store.frame_index()
    per_epoch = optim_cfg.samples_per_epoch or len(index)
    steps_per_epoch = max(1, math.ceil(per_epoch / optim_cfg.batch_size))
    sched = _cosine_warmup(opt, steps_per_epoch * optim_cfg.epochs, optim_cfg.warmup_frac)
    rng = np.random.default_rng(config.seed + 1)
    dump = Path(dump_dir) if dump_dir is not None else None

    result = TrainLog()
    last_feats: torch.Tensor | None = None
    for epoch in range(optim_cfg.epochs):
        e_start = time.perf_counter()
        tokenizer.codebook.reset_usage()
        picks = _epoch_picks(rng, index, optim_cfg)
        sums: dict[str, float] = {}
        n_batches = 0
        for i in range(0, len(picks), optim_cfg.batch_size):
            chunk = picks[i : i + optim_cfg.batch_size]
            target, history, poses = tokenizer_batch(tokenizer, store, chunk)
            feats = tokenizer.encode_scene(target)
            res = tokenizer.quantizer(feats, history, poses)
            logits = tokenizer.decode_scene(res.latent)
            loss, parts = tokenizer_loss(logits, target, res, class_weights, weights)
            _check_finite(loss, tokenizer, f"epoch {epoch} batch {n_batches}", dump)
            opt.zero_grad()
            loss.backward()
            if optim_cfg.grad_clip:
                nn.utils.clip_grad_norm_(tokenizer.parameters(), optim_cfg.grad_clip)
            opt.step()
            sched.step()
            last_feats = feats.detach()
            parts["loss"] = float(loss.detach())
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1

        stats = codebook_stats(tokenizer.codebook)
        reinit = 0
        if last_feats is not None and epoch + 1 < optim_cfg.epochs:
            gen = torch.Generator().manual_seed(config.seed * 997 + epoch)
            reinit = tokenizer.codebook.reinit_dead(last_feats.reshape(-1, tokenizer.codebook.dim), gen)
        entry = {k: v / n_batches for k, v in sums.items()}
        entry.update(
            epoch=epoch,
            perplexity=stats["perplexity"],
            live_codes=stats["live_codes"],
            reinit=reinit,
            lr=sched.get_last_lr()[0],
            seconds=time.perf_counter() - e_start,
        )
        result.epochs.append(entry)
        log.info(
            "tokenizer epoch %d loss %.4f focal %.4f lovasz %.4f vq %.1f ppl %.1f (%.1fs)",
            epoch, entry["loss"], entry["focal"], entry["lovasz"], entry["vq"],
            entry["perplexity"], entry["seconds"],
        )

    tokenizer.eval()
    result.final_loss = result.epochs[-1]["loss"]
    result.wall_time_s = time.perf_counter() - t_start
    result.weight_hash = state_hash(tokenizer)
    if out is not None:
        save_tokenizer(out, tokenizer, {"config_hash": config.config_hash()})
        result.checkpoint = str(out)
    return tokenizer, result


def train_former(
    config: ExperimentConfig,
    tokenizer: SceneTokenizer,
    store: SequenceStore | None = None,
    out: str | Path | None = None,
    dump_dir: str | Path | None = None,
    dataset: FormerDataset | None = None,
) -> tuple[TransformFormer, TrainLog]:
    """Fit the forecaster against a frozen tokenizer.

    Target latents come from the tokenizer applied to ground-truth future
    frames, precomputed once since the tokenizer never changes. Rollouts are
    autoregressive: each step consumes the previous prediction.
    """
    t_start = time.perf_counter()
    torch.manual_seed(config.seed + 7)
    if store is None:
        store = SequenceStore.from_manifest(config.manifest, "train")
    tokenizer.eval()
    for p in tokenizer.parameters():
        p.requires_grad_(False)
    tokenizer_digest = state_hash(tokenizer)

    if dataset is None:
        dataset = FormerDataset.build(tokenizer, store)
    former = TransformFormer(config.former)
    former.train()
    hp = config.former
    source = ConditioningSource(config.conditioning)

    optim_cfg = config.former_optim
    opt = torch.optim.AdamW(former.parameters(), lr=optim_cfg.lr, weight_decay=optim_cfg.weight_decay)
    index = dataset.rollout_index(hp.queue_len, hp.horizon)
    if not index:
        raise ValueError("no rollout windows fit: sequences shorter than queue+horizon+1")
    per_epoch = optim_cfg.samples_per_epoch or len(index)
    steps_per_epoch = max(1, math.ceil(per_epoch / optim_cfg.batch_size))
    sched = _cosine_warmup(opt, steps_per_epoch * optim_cfg.epochs, optim_cfg.warmup_frac)
    rng = np.random.default_rng(config.seed + 11)
    dump = Path(dump_dir) if dump_dir is not None else None

    result = TrainLog()
    for epoch in range(optim_cfg.epochs):
        e_start = time.perf_counter()
        picks = _epoch_picks(rng, index, optim_cfg)
        sums: dict[str, float] = {}
        n_batches = 0
        for i in range(0, len(picks), optim_cfg.batch_size):
            batch = dataset.batch(picks[i : i + optim_cfg.batch_size], hp.queue_len, hp.horizon)
            state = RolloutState.fresh(batch["latent"], batch["queue"], hp.queue_len)
            cond_seq = None if source is ConditioningSource.PREDICTED else batch["cond12"]
            outs = rollout(former, state, batch["plan"], hp.horizon, source, cond_seq)
            gen, per_step = gen_loss([o[0] for o in outs], batch["targets"], hp.decay)
            raw7 = torch.stack([o[1] for o in outs], dim=1)
            t_loss = transform_loss(raw7, batch["gt_quat"], batch["gt_trans"])
            loss = gen + config.transform_loss_weight * t_loss
            _check_finite(loss, former, f"epoch {epoch} batch {n_batches}", dump)
            opt.zero_grad()
            loss.backward()
            if optim_cfg.grad_clip:
                nn.utils.clip_grad_norm_(former.parameters(), optim_cfg.grad_clip)
            opt.step()
            sched.step()
            for k, v in {
                "loss": float(loss.detach()),
                "gen": float(gen.detach()),
                "transform": float(t_loss.detach()),
                "gen_first": per_step[0],
                "gen_last": per_step[-1],
            }.items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1

        entry = {k: v / n_batches for k, v in sums.items()}
        entry.update(epoch=epoch, lr=sched.get_last_lr()[0], seconds=time.perf_counter() - e_start)
        result.epochs.append(entry)
        log.info(
            "former epoch %d loss %.4f gen %.4f (first %.4f last %.4f) transform %.4f (%.1fs)",
            epoch, entry["loss"], entry["gen"], entry["gen_first"], entry["gen_last"],
            entry["transform"], entry["seconds"],
        )

    former.eval()
    assert state_hash(tokenizer) == tokenizer_digest, "tokenizer changed during former training"
    result.final_loss = result.epochs[-1]["loss"]
    result.wall_time_s = time.perf_counter() - t_start
    result.weight_hash = state_hash(former)
    if out is not None:
        save_former(out, former, tokenizer_digest, {"config_hash": config.config_hash()})
        result.checkpoint = str(out)
    return former, result
