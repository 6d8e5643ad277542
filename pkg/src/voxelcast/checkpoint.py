"""Model checkpoints: architecture config plus weights in one archive.

A forecaster checkpoint pins the exact tokenizer it was trained against by a
content hash of the tokenizer's weights; loading it against a different
tokenizer fails unless explicitly forced, since latents from a different
tokenizer are a different coordinate system.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch
from torch import nn

from .dynamics.former import FormerHparams, TransformFormer
from .tokenizer.model import SceneTokenizer, TokenizerHparams

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def state_hash(module: nn.Module) -> str:
    """sha256 over the module's state dict, order-independent."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        t = tensor.detach().cpu().contiguous()
        h.update(str(t.dtype).encode())
        h.update(str(tuple(t.shape)).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def _save(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def _load(path: str | Path, expected_kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "kind" not in payload:
        raise CheckpointError(f"{path} is not a model checkpoint")
    if payload["kind"] != expected_kind:
        raise CheckpointError(f"{path} holds a {payload['kind']!r}, expected {expected_kind!r}")
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('format_version')}")
    return payload


def save_tokenizer(path: str | Path, tokenizer: SceneTokenizer, meta: dict | None = None) -> str:
    """Write a tokenizer checkpoint; returns its weight hash."""
    digest = state_hash(tokenizer)
    _save(
        path,
        {
            "kind": "tokenizer",
            "format_version": FORMAT_VERSION,
            "hparams": tokenizer.hparams.to_dict(),
            "state": tokenizer.state_dict(),
            "weight_hash": digest,
            "meta": dict(meta or {}),
        },
    )
    return digest


def load_tokenizer(path: str | Path) -> tuple[SceneTokenizer, dict]:
    payload = _load(path, "tokenizer")
    tokenizer = SceneTokenizer(TokenizerHparams.from_dict(payload["hparams"]))
    tokenizer.load_state_dict(payload["state"])
    tokenizer.eval()
    return tokenizer, payload.get("meta", {})


def save_former(
    path: str | Path,
    former: TransformFormer,
    tokenizer_hash: str,
    meta: dict | None = None,
) -> str:
    digest = state_hash(former)
    _save(
        path,
        {
            "kind": "former",
            "format_version": FORMAT_VERSION,
            "hparams": former.hparams.to_dict(),
            "state": former.state_dict(),
            "weight_hash": digest,
            "tokenizer_hash": tokenizer_hash,
            "meta": dict(meta or {}),
        },
    )
    return digest


def load_former(
    path: str | Path,
    tokenizer: SceneTokenizer | None = None,
    allow_tokenizer_mismatch: bool = False,
) -> tuple[TransformFormer, dict]:
    """Load a forecaster; verify it was trained for `tokenizer` if given."""
    payload = _load(path, "former")
    if tokenizer is not None and not allow_tokenizer_mismatch:
        actual = state_hash(tokenizer)
        pinned = payload.get("tokenizer_hash")
        if actual != pinned:
            raise CheckpointError(
                f"forecaster was trained against tokenizer {pinned}, got {actual}; "
                "pass allow_tokenizer_mismatch=True to override"
            )
    former = TransformFormer(FormerHparams.from_dict(payload["hparams"]))
    former.load_state_dict(payload["state"])
    former.eval()
    meta = dict(payload.get("meta", {}))
    meta["tokenizer_hash"] = payload.get("tokenizer_hash")
    return former, meta
