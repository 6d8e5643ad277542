"""In-memory training data: sequences, batches, and precomputed latents.

The synthetic corpus is small enough to hold fully in RAM, so there is no
loader machinery: a store keeps label tensors, poses, and plans per sequence,
and batch assembly is plain indexing. History for the tokenizer's temporal
stage is padded per sample with zero features and identity poses, which the
quantizer treats identically to an absent slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..core.plan import SequenceSample
from ..core.se3 import SE3Transform, se3_relative
from ..dynamics.encoder import plan_feature_dim, plan_features
from ..dynamics.transform import se3_cond12
from ..tokenizer.model import SceneTokenizer
from ..world.dataset import load_split


@dataclass
class SequenceStore:
    """One split's sequences unpacked into tensors."""

    labels: list[torch.Tensor]  # per sequence (T, H, W, Z) long
    poses: list[list[SE3Transform]]
    plans: list[torch.Tensor]  # per sequence (T, P) float32 plan features
    samples: list[SequenceSample]
    rate_hz: float
    history_length: int

    @classmethod
    def from_manifest(cls, manifest: str | Path, split: str) -> "SequenceStore":
        samples = load_split(manifest, split)
        if not samples:
            raise ValueError(f"split {split!r} is empty in {manifest}")
        return cls.from_samples(samples)

    @classmethod
    def from_samples(cls, samples: list[SequenceSample]) -> "SequenceStore":
        labels, poses, plans = [], [], []
        for s in samples:
            labels.append(
                torch.from_numpy(
                    np.stack([np.asarray(f.grid.labels) for f in s.frames])
                ).long()
            )
            poses.append([f.ego_pose for f in s.frames])
            plans.append(
                torch.as_tensor(
                    np.stack([plan_features(f.plan, s.rate_hz) for f in s.frames]),
                    dtype=torch.float32,
                )
            )
        first = samples[0]
        return cls(
            labels=labels,
            poses=poses,
            plans=plans,
            samples=samples,
            rate_hz=first.rate_hz,
            history_length=first.history_length,
        )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def plan_dim(self) -> int:
        return plan_feature_dim(self.history_length)

    def class_counts(self, num_classes: int) -> torch.Tensor:
        counts = torch.zeros(num_classes, dtype=torch.long)
        for lab in self.labels:
            counts += torch.bincount(lab.reshape(-1), minlength=num_classes)
        return counts

    def frame_index(self, min_t: int = 0, max_tail: int = 0) -> list[tuple[int, int]]:
        """All (sequence, t) pairs with t >= min_t and t <= T-1-max_tail."""
        picks = []
        for s, lab in enumerate(self.labels):
            for t in range(min_t, lab.shape[0] - max_tail):
                picks.append((s, t))
        return picks


def tokenizer_batch(
    tokenizer: SceneTokenizer,
    store: SequenceStore,
    picks: list[tuple[int, int]],
) -> tuple[torch.Tensor, list, list[SE3Transform]]:
    """Assemble (target labels, history items, current poses) for a batch.

    History features are encoded under no_grad with the current encoder
    weights; only the target frame's encode participates in autograd.
    """
    g_len = tokenizer.hparams.history_length
    target = torch.stack([store.labels[s][t] for s, t in picks])
    cur_poses = [store.poses[s][t] for s, t in picks]
    if g_len == 0:
        return target, [], cur_poses

    keys: list[tuple[int, int]] = []
    for s, t in picks:
        for g in range(1, g_len + 1):
            if t - g >= 0:
                keys.append((s, t - g))
    keys = sorted(set(keys))
    feats_by_key: dict[tuple[int, int], torch.Tensor] = {}
    if keys:
        stacked = torch.stack([store.labels[s][t] for s, t in keys])
        with torch.no_grad():
            encoded = tokenizer.encode_scene(stacked)
        feats_by_key = {k: encoded[i] for i, k in enumerate(keys)}

    hw = tokenizer.hparams.latent_hw
    c = tokenizer.hparams.latent_channels
    history = []
    for g in range(1, g_len + 1):
        feats = torch.zeros(len(picks), hw[0], hw[1], c)
        poses: list[SE3Transform] = []
        for b, (s, t) in enumerate(picks):
            if t - g >= 0:
                feats[b] = feats_by_key[(s, t - g)]
                poses.append(store.poses[s][t - g])
            else:
                poses.append(cur_poses[b])  # zero features; pose is irrelevant
        history.append((feats, poses))
    return target, history, cur_poses


@torch.no_grad()
def sequence_latents(tokenizer: SceneTokenizer, store: SequenceStore, s: int) -> torch.Tensor:
    """Quantized aggregates for every frame of one sequence, (T, h, w, C).

    Each frame is tokenized with the history actually available before it,
    matching what the service sees when frames arrive in order.
    """
    labels = store.labels[s]
    t_len = labels.shape[0]
    feats = tokenizer.encode_scene(labels)
    g_len = tokenizer.hparams.history_length
    out = []
    for t in range(t_len):
        history = [
            (feats[t - g].unsqueeze(0), store.poses[s][t - g])
            for g in range(1, min(t, g_len) + 1)
        ]
        result = tokenizer.quantizer(feats[t].unsqueeze(0), history, store.poses[s][t])
        out.append(result.latent[0])
    return torch.stack(out)


@dataclass
class FormerDataset:
    """Frozen-tokenizer latents plus per-step supervision for every sequence."""

    latents: list[torch.Tensor]  # (T, h, w, C) per sequence
    cond12: list[torch.Tensor]  # (T-1, 12) float32, step t -> t+1
    gt_quat: list[torch.Tensor]  # (T-1, 4)
    gt_trans: list[torch.Tensor]  # (T-1, 3)
    store: SequenceStore

    @classmethod
    def build(cls, tokenizer: SceneTokenizer, store: SequenceStore) -> "FormerDataset":
        tokenizer.eval()
        latents, cond12, quats, trans = [], [], [], []
        for s in range(len(store)):
            latents.append(sequence_latents(tokenizer, store, s))
            poses = store.poses[s]
            rel = [se3_relative(poses[t], poses[t + 1]) for t in range(len(poses) - 1)]
            cond12.append(
                torch.as_tensor(np.stack([se3_cond12(r) for r in rel]), dtype=torch.float32)
            )
            quats.append(
                torch.as_tensor(np.stack([r.rotation_quat for r in rel]), dtype=torch.float32)
            )
            trans.append(
                torch.as_tensor(np.stack([r.translation for r in rel]), dtype=torch.float32)
            )
        return cls(latents=latents, cond12=cond12, gt_quat=quats, gt_trans=trans, store=store)

    def rollout_index(self, queue_len: int, horizon: int) -> list[tuple[int, int]]:
        """(sequence, t0) pairs with full context and a full horizon ahead."""
        picks = []
        for s, lat in enumerate(self.latents):
            for t0 in range(queue_len, lat.shape[0] - horizon):
                picks.append((s, t0))
        return picks

    def batch(self, picks: list[tuple[int, int]], queue_len: int, horizon: int) -> dict:
        """Stack one training batch of rollout windows."""
        latent = torch.stack([self.latents[s][t0] for s, t0 in picks])
        queue = [
            torch.stack([self.latents[s][t0 - 1 - i] for s, t0 in picks])
            for i in range(queue_len)
        ]
        targets = [
            torch.stack([self.latents[s][t0 + 1 + k] for s, t0 in picks])
            for k in range(horizon)
        ]
        cond12 = torch.stack([self.cond12[s][t0 : t0 + horizon] for s, t0 in picks])
        gt_quat = torch.stack([self.gt_quat[s][t0 : t0 + horizon] for s, t0 in picks])
        gt_trans = torch.stack([self.gt_trans[s][t0 : t0 + horizon] for s, t0 in picks])
        plan = torch.stack([self.store.plans[s][t0] for s, t0 in picks])
        return {
            "latent": latent,
            "queue": queue,
            "targets": targets,
            "cond12": cond12,
            "gt_quat": gt_quat,
            "gt_trans": gt_trans,
            "plan": plan,
        }
