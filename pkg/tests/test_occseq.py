import struct

import numpy as np
import pytest

from voxelcast.core.occseq import (
    MAGIC,
    OccSeqChecksumError,
    OccSeqFormatError,
    OccSeqTruncationError,
    decode_occseq,
    encode_occseq,
)
from voxelcast.world.synth import WorldConfig, generate_sequence


@pytest.fixture(scope="module")
def sample():
    cfg = WorldConfig(dims=(16, 16, 4), sequence_length=6, n_static_buildings=3,
                      n_moving_agents=2, seed=42)
    return generate_sequence(cfg, history_length=2)


@pytest.fixture()
def encoded(sample, tmp_path):
    path = tmp_path / "seq.occseq"
    encode_occseq(sample, path)
    return path


class TestRoundTrip:
    def test_labels_bit_identical(self, sample, encoded):
        loaded = decode_occseq(encoded)
        assert len(loaded) == len(sample)
        for a, b in zip(loaded.frames, sample.frames):
            assert np.array_equal(a.grid.labels, b.grid.labels)

    def test_poses_exact_float64(self, sample, encoded):
        loaded = decode_occseq(encoded)
        for a, b in zip(loaded.frames, sample.frames):
            assert np.array_equal(a.ego_pose.matrix, b.ego_pose.matrix)

    def test_plans_preserved(self, sample, encoded):
        loaded = decode_occseq(encoded)
        for a, b in zip(loaded.frames, sample.frames):
            assert a.plan.command == b.plan.command
            assert a.plan.speed_mps == b.plan.speed_mps
            assert np.array_equal(a.plan.past_rel_translations, b.plan.past_rel_translations)

    def test_header_metadata(self, sample, encoded):
        loaded = decode_occseq(encoded)
        assert loaded.rate_hz == sample.rate_hz
        assert loaded.seed == sample.seed
        assert loaded.history_length == sample.history_length
        assert loaded.grid_shape == sample.grid_shape


class TestNegatives:
    def test_bad_magic(self, encoded, tmp_path):
        data = encoded.read_bytes()
        bad = tmp_path / "bad_magic.occseq"
        bad.write_bytes(b"NOTOCCSQ" + data[len(MAGIC):])
        with pytest.raises(OccSeqFormatError, match="magic"):
            decode_occseq(bad)

    def test_truncation_names_frame(self, encoded, tmp_path):
        data = encoded.read_bytes()
        # cut inside the last frame's payload (checksum tail is 4 bytes)
        cut = tmp_path / "cut.occseq"
        cut.write_bytes(data[: len(data) - 40])
        with pytest.raises(OccSeqTruncationError, match=r"frame \d+"):
            decode_occseq(cut)

    def test_truncated_header(self, encoded, tmp_path):
        data = encoded.read_bytes()
        cut = tmp_path / "hdr.occseq"
        cut.write_bytes(data[: len(MAGIC) + 6])
        with pytest.raises(OccSeqTruncationError):
            decode_occseq(cut)

    def test_checksum_corruption(self, encoded, tmp_path):
        data = bytearray(encoded.read_bytes())
        # flip one bit deep inside the frame payloads
        data[len(data) // 2] ^= 0xFF
        bad = tmp_path / "crc.occseq"
        bad.write_bytes(bytes(data))
        with pytest.raises((OccSeqChecksumError, OccSeqFormatError)):
            decode_occseq(bad)

    def test_malformed_header_json(self, tmp_path):
        payload = b"{not json"
        bad = tmp_path / "json.occseq"
        bad.write_bytes(MAGIC + struct.pack("<I", len(payload)) + payload)
        with pytest.raises(OccSeqFormatError, match="JSON"):
            decode_occseq(bad)

    def test_missing_header_key(self, tmp_path):
        payload = b'{"H": 4}'
        bad = tmp_path / "key.occseq"
        bad.write_bytes(MAGIC + struct.pack("<I", len(payload)) + payload)
        with pytest.raises(OccSeqFormatError, match="missing key"):
            decode_occseq(bad)

    def test_non_ego_origin_rejected_on_encode(self, sample, tmp_path):
        from voxelcast.core.grid import OccupancyGrid
        from voxelcast.core.plan import Frame, SequenceSample

        f = sample.frames[0]
        shifted = OccupancyGrid(
            f.grid.labels, f.grid.num_classes, f.grid.voxel_size_m, origin_m=np.zeros(3)
        )
        bad = SequenceSample(
            frames=(Frame(shifted, f.ego_pose, f.plan),),
            rate_hz=sample.rate_hz,
            seed=0,
            history_length=sample.history_length,
        )
        with pytest.raises(OccSeqFormatError, match="ego-centered"):
            encode_occseq(bad, tmp_path / "x.occseq")
