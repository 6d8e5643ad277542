"""Throughput benchmarking and cross-rate evaluation.

FPS counts the full inference path per sequence: tokenize the observed
frames, roll the forecaster out K steps, decode every step. The rate
transfer check regenerates validation worlds at the target rate and reuses
the standard evaluation, so a model trained at one rate is scored zero-shot
at another with real-time (not step-count) horizons.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import replace

import torch

from ..dynamics.former import ConditioningSource, RolloutState, TransformFormer, rollout
from ..tokenizer.model import SceneTokenizer
from ..world.synth import WorldConfig, generate_sequence
from .config import ExperimentConfig
from .data import SequenceStore, sequence_latents
from .evaluate import EvalReport, evaluate, peak_memory_mb


@torch.no_grad()
def _forecast_once(
    tokenizer: SceneTokenizer,
    former: TransformFormer,
    store: SequenceStore,
    s: int,
    steps: int,
) -> None:
    g_len = store.history_length
    hp = former.hparams
    latents = sequence_latents(tokenizer, store, s)[: g_len + 1]
    state = RolloutState.fresh(
        latents[g_len].unsqueeze(0),
        [latents[g_len - 1 - i].unsqueeze(0) for i in range(min(g_len, hp.queue_len))],
        hp.queue_len,
    )
    plan = store.plans[s][g_len].unsqueeze(0)
    outs = rollout(former, state, plan, steps)
    for latent, _ in outs:
        tokenizer.decode_scene(latent)


def fps_bench(
    tokenizer: SceneTokenizer,
    former: TransformFormer,
    store: SequenceStore,
    steps: int | None = None,
    n_warmup: int = 2,
    n_iter: int = 8,
) -> dict:
    """Median-of-n wall-clock throughput for single-sequence forecasting.

    Returns frames per second (= steps / median seconds per forecast) along
    with the raw per-iteration timings and the process peak memory.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    tokenizer.eval()
    former.eval()
    steps = steps or former.hparams.horizon
    timings = []
    for i in range(n_warmup + n_iter):
        s = i % len(store)
        t0 = time.perf_counter()
        _forecast_once(tokenizer, former, store, s, steps)
        elapsed = time.perf_counter() - t0
        if i >= n_warmup:
            timings.append(elapsed)
    median_s = statistics.median(timings)
    return {
        "fps": steps / median_s,
        "median_s": median_s,
        "per_iter_s": timings,
        "steps": steps,
        "n_iter": n_iter,
        "peak_memory_mb": peak_memory_mb(),
    }


def rate_transfer_store(
    base: WorldConfig,
    rate_hz: float,
    horizons_s: tuple[float, ...],
    history_length: int,
    n_sequences: int,
    seed: int,
) -> SequenceStore:
    """Fresh validation sequences at a target rate, long enough for the
    real-time horizons at that rate."""
    k_needed = max(int(round(h * rate_hz)) for h in horizons_s)
    length = history_length + 1 + k_needed
    samples = []
    for i in range(n_sequences):
        cfg = replace(base, rate_hz=rate_hz, sequence_length=length, seed=seed + i)
        samples.append(generate_sequence(cfg, history_length=history_length))
    return SequenceStore.from_samples(samples)


def rate_transfer_eval(
    tokenizer: SceneTokenizer,
    former: TransformFormer,
    config: ExperimentConfig,
    rate_hz: float,
    base_world: WorldConfig,
    n_sequences: int = 12,
    seed: int = 9000,
) -> EvalReport:
    """Score the trained pair at an arbitrary frame rate with GT conditioning."""
    store = rate_transfer_store(
        base_world, rate_hz, config.horizons_s, config.former.history_length, n_sequences, seed
    )
    return evaluate(tokenizer, former, store, config, ConditioningSource.GROUND_TRUTH)
