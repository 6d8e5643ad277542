"""Training, evaluation, baselines, ablations, and benchmarking."""

from .ablate import SWITCH_NAMES, ablation_run, apply_switches
from .bench import fps_bench, rate_transfer_eval, rate_transfer_store
from .config import ConfigError, ExperimentConfig, OptimConfig
from .data import FormerDataset, SequenceStore, sequence_latents, tokenizer_batch
from .evaluate import EvalError, EvalReport, copy_paste_baseline, evaluate, peak_memory_mb
from .train import TrainingDiverged, TrainLog, train_former, train_tokenizer

__all__ = [
    "SWITCH_NAMES",
    "ablation_run",
    "apply_switches",
    "fps_bench",
    "rate_transfer_eval",
    "rate_transfer_store",
    "ConfigError",
    "ExperimentConfig",
    "OptimConfig",
    "FormerDataset",
    "SequenceStore",
    "sequence_latents",
    "tokenizer_batch",
    "EvalError",
    "EvalReport",
    "copy_paste_baseline",
    "evaluate",
    "peak_memory_mb",
    "TrainingDiverged",
    "TrainLog",
    "train_former",
    "train_tokenizer",
]
