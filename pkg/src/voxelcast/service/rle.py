"""Run-length encoding of label grids for the JSON wire format.

Runs walk the grid in row-major (x, y, z) order with z fastest, the same
layout the binary container uses. Decode(encode(grid)) is bit-exact.
"""

from __future__ import annotations

import numpy as np


class RLEError(ValueError):
    pass


def encode_rle(labels: np.ndarray) -> dict:
    """{"dims": [H, W, Z], "runs": [[value, count], ...]}."""
    labels = np.asarray(labels)
    if labels.ndim != 3:
        raise RLEError(f"expected a 3D label grid, got shape {tuple(labels.shape)}")
    flat = np.ascontiguousarray(labels, dtype=np.uint8).reshape(-1)
    if flat.size == 0:
        raise RLEError("empty grid")
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [flat.size]])
    runs = [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]
    return {"dims": [int(d) for d in labels.shape], "runs": runs}


def decode_rle(payload: dict) -> np.ndarray:
    """Inverse of encode_rle; validates counts against dims."""
    try:
        dims = tuple(int(d) for d in payload["dims"])
        runs = payload["runs"]
    except (KeyError, TypeError, ValueError) as exc:
        raise RLEError(f"malformed RLE payload: {exc}") from exc
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise RLEError(f"bad dims {dims}")
    total = dims[0] * dims[1] * dims[2]
    values = []
    counts = []
    for run in runs:
        if len(run) != 2:
            raise RLEError(f"bad run {run!r}")
        value, count = int(run[0]), int(run[1])
        if not 0 <= value <= 255 or count < 1:
            raise RLEError(f"bad run {run!r}")
        values.append(value)
        counts.append(count)
    if sum(counts) != total:
        raise RLEError(f"runs cover {sum(counts)} cells, grid has {total}")
    flat = np.repeat(np.asarray(values, dtype=np.uint8), counts)
    return flat.reshape(dims)
