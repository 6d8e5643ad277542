"""Dataset emission: OCCSEQ files plus a JSON manifest with split tags."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from ..core.occseq import decode_occseq, encode_occseq
from ..core.plan import SequenceSample
from .synth import WorldConfig, generate_sequence, sequence_config

MANIFEST_NAME = "manifest.json"


def generate_dataset(
    base: WorldConfig,
    out_dir: str | Path,
    count: int,
    seed: int,
    val_fraction: float = 0.1,
    history_length: int = 4,
) -> Path:
    """Write `count` sequences (seeds seed..seed+count-1) and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_val = max(1, int(round(count * val_fraction))) if count > 1 else 0
    entries = []
    for i in range(count):
        cfg = sequence_config(base, seed=seed + i)
        sample = generate_sequence(cfg, history_length=history_length)
        name = f"seq_{seed + i:06d}.occseq"
        encode_occseq(sample, out / name)
        entries.append(
            {
                "path": name,
                "seed": seed + i,
                "split": "val" if i >= count - n_val else "train",
                "command": sample.frames[0].plan.command.value,
            }
        )
    manifest = {
        "config": {**asdict(base), "command": base.command.value if base.command else None},
        "history_length": history_length,
        "files": entries,
    }
    manifest_path = out / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def load_manifest(manifest_path: str | Path) -> dict:
    return json.loads(Path(manifest_path).read_text())


def load_split(manifest_path: str | Path, split: str) -> list[SequenceSample]:
    manifest = load_manifest(manifest_path)
    root = Path(manifest_path).parent
    return [
        decode_occseq(root / e["path"]) for e in manifest["files"] if e["split"] == split
    ]
