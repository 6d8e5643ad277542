"""OCCSEQ binary container for occupancy sequences.

Layout: 8-byte magic "OCCSEQ01"; uint32-LE length + UTF-8 JSON header
{H, W, Z, num_classes, voxel_size_m, rate_hz, frame_count, G, seed}; per
frame a 16xfloat64-LE row-major pose matrix, a uint32-LE-length-prefixed
PlanSignal JSON, and a uint32-LE compressed length + deflate-compressed
uint8 label tensor in row-major (x, y, z) order (z fastest); trailing
CRC32-LE over all frame payload bytes.

Grids are stored in the ego-centered origin convention; encoding a grid
with a different origin is rejected rather than silently dropped.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .grid import OccupancyGrid, ego_origin_m
from .plan import Frame, PlanSignal, SequenceSample
from .se3 import SE3Transform

MAGIC = b"OCCSEQ01"


class OccSeqError(Exception):
    pass


class OccSeqFormatError(OccSeqError):
    """Bad magic or malformed header/frame structure."""


class OccSeqTruncationError(OccSeqError):
    """File ends before the declared payload is complete."""


class OccSeqChecksumError(OccSeqError):
    """Trailing CRC32 does not match the frame payloads."""


def encode_occseq(sample: SequenceSample, path: str | Path) -> None:
    first = sample.frames[0].grid
    expected_origin = ego_origin_m(first.shape, first.voxel_size_m)
    h, w, z = first.shape
    header = {
        "H": h,
        "W": w,
        "Z": z,
        "num_classes": first.num_classes,
        "voxel_size_m": first.voxel_size_m,
        "rate_hz": sample.rate_hz,
        "frame_count": len(sample),
        "G": sample.history_length,
        "seed": sample.seed,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    payload = bytearray()
    for frame in sample.frames:
        if not np.array_equal(frame.grid.origin_m, expected_origin):
            raise OccSeqFormatError("OCCSEQ stores ego-centered grids only")
        payload += frame.ego_pose.matrix.astype("<f8").tobytes()
        plan_bytes = json.dumps(frame.plan.to_dict()).encode("utf-8")
        payload += struct.pack("<I", len(plan_bytes)) + plan_bytes
        compressed = zlib.compress(frame.grid.labels.tobytes(), level=6)
        payload += struct.pack("<I", len(compressed)) + compressed
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
        f.write(struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise OccSeqTruncationError(f"truncated while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def decode_occseq(path: str | Path) -> SequenceSample:
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise OccSeqFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack("<I", r.take(4, "header length"))
    try:
        header = json.loads(r.take(header_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise OccSeqFormatError(f"malformed header JSON: {e}") from e
    try:
        h, w, z = header["H"], header["W"], header["Z"]
        num_classes = header["num_classes"]
        voxel_size = header["voxel_size_m"]
        rate_hz = header["rate_hz"]
        frame_count = header["frame_count"]
        g = header["G"]
        seed = header["seed"]
    except KeyError as e:
        raise OccSeqFormatError(f"header missing key {e}") from e

    payload_start = r.pos
    frames = []
    for idx in range(frame_count):
        try:
            pose_raw = r.take(128, f"pose matrix of frame {idx}")
            pose = SE3Transform(np.frombuffer(pose_raw, dtype="<f8").reshape(4, 4).copy())
            (plan_len,) = struct.unpack("<I", r.take(4, f"plan length of frame {idx}"))
            plan = PlanSignal.from_dict(
                json.loads(r.take(plan_len, f"plan of frame {idx}").decode("utf-8"))
            )
            (comp_len,) = struct.unpack("<I", r.take(4, f"label length of frame {idx}"))
            comp = r.take(comp_len, f"labels of frame {idx}")
        except OccSeqTruncationError as e:
            raise OccSeqTruncationError(f"frame {idx}: {e}") from None
        try:
            raw = zlib.decompress(comp)
        except zlib.error as e:
            raise OccSeqFormatError(f"frame {idx}: bad deflate stream: {e}") from e
        if len(raw) != h * w * z:
            raise OccSeqFormatError(
                f"frame {idx}: label payload is {len(raw)} bytes, expected {h * w * z}"
            )
        labels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, z).copy()
        frames.append(
            Frame(grid=OccupancyGrid(labels, num_classes, voxel_size), ego_pose=pose, plan=plan)
        )
    payload = data[payload_start : r.pos]
    (stored_crc,) = struct.unpack("<I", r.take(4, "checksum"))
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise OccSeqChecksumError(
            f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    return SequenceSample(frames=tuple(frames), rate_hz=rate_hz, seed=seed, history_length=g)
