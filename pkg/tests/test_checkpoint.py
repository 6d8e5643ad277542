"""Checkpoint archive round-trips, tokenizer pinning, and weight hashing."""

import pytest
import torch

from voxelcast.checkpoint import (
    CheckpointError,
    FORMAT_VERSION,
    load_former,
    load_tokenizer,
    save_former,
    save_tokenizer,
    state_hash,
)
from voxelcast.dynamics.former import FormerHparams, TransformFormer
from voxelcast.tokenizer.model import SceneTokenizer, TokenizerHparams

TOK_HP = TokenizerHparams(
    dims=(32, 32, 4),
    widths=(16, 24),
    latent_channels=16,
    scales=((2, 2), (4, 4), (8, 8), (16, 16)),
    codebook_size=32,
    history_length=2,
)

FORMER_HP = FormerHparams(
    latent_channels=16,
    latent_hw=(16, 16),
    dim=32,
    plan_dim=32,
    history_length=2,
    depth_intra=1,
    depth_inter=1,
    n_heads=2,
    n_points=2,
    queue_len=2,
    pyramid_levels=2,
    horizon=2,
)


@pytest.fixture()
def tokenizer():
    torch.manual_seed(21)
    return SceneTokenizer(TOK_HP)


@pytest.fixture()
def former():
    torch.manual_seed(22)
    return TransformFormer(FORMER_HP)


class TestStateHash:
    def test_repeated_calls_agree(self, tokenizer):
        assert state_hash(tokenizer) == state_hash(tokenizer)

    def test_identically_seeded_models_agree(self):
        torch.manual_seed(33)
        a = SceneTokenizer(TOK_HP)
        torch.manual_seed(33)
        b = SceneTokenizer(TOK_HP)
        assert state_hash(a) == state_hash(b)

    def test_single_weight_nudge_changes_hash(self, tokenizer):
        before = state_hash(tokenizer)
        with torch.no_grad():
            tokenizer.codebook.weight[0, 0] += 1e-3
        assert state_hash(tokenizer) != before

    def test_hex_digest_shape(self, former):
        digest = state_hash(former)
        assert len(digest) == 64
        int(digest, 16)


class TestTokenizerRoundTrip:
    def test_weights_config_and_meta_survive(self, tokenizer, tmp_path):
        path = tmp_path / "tok.pt"
        digest = save_tokenizer(path, tokenizer, meta={"note": "fixture"})
        loaded, meta = load_tokenizer(path)
        assert digest == state_hash(tokenizer)
        assert state_hash(loaded) == digest
        assert loaded.hparams == tokenizer.hparams
        assert meta == {"note": "fixture"}
        assert not loaded.training

    def test_loaded_model_computes_identically(self, tokenizer, tmp_path):
        path = tmp_path / "tok.pt"
        save_tokenizer(path, tokenizer)
        loaded, _ = load_tokenizer(path)
        labels = torch.randint(0, 5, (2, 32, 32, 4))
        with torch.no_grad():
            a = tokenizer.encode_scene(labels)
            b = loaded.encode_scene(labels)
        assert torch.equal(a, b)


class TestFormerRoundTrip:
    def test_pin_accepts_the_training_tokenizer(self, tokenizer, former, tmp_path):
        path = tmp_path / "former.pt"
        digest = save_former(path, former, state_hash(tokenizer), meta={"k": 1})
        loaded, meta = load_former(path, tokenizer)
        assert state_hash(loaded) == digest
        assert loaded.hparams == former.hparams
        assert meta["k"] == 1
        assert meta["tokenizer_hash"] == state_hash(tokenizer)

    def test_pin_rejects_a_different_tokenizer(self, tokenizer, former, tmp_path):
        path = tmp_path / "former.pt"
        save_former(path, former, state_hash(tokenizer))
        torch.manual_seed(99)
        other = SceneTokenizer(TOK_HP)
        with pytest.raises(CheckpointError, match="trained against tokenizer"):
            load_former(path, other)

    def test_pin_override(self, tokenizer, former, tmp_path):
        path = tmp_path / "former.pt"
        save_former(path, former, state_hash(tokenizer))
        torch.manual_seed(99)
        other = SceneTokenizer(TOK_HP)
        loaded, _ = load_former(path, other, allow_tokenizer_mismatch=True)
        assert state_hash(loaded) == state_hash(former)

    def test_loading_without_tokenizer_skips_pin(self, tokenizer, former, tmp_path):
        path = tmp_path / "former.pt"
        save_former(path, former, state_hash(tokenizer))
        loaded, meta = load_former(path)
        assert state_hash(loaded) == state_hash(former)
        assert meta["tokenizer_hash"] == state_hash(tokenizer)


class TestMalformedArchives:
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="no checkpoint"):
            load_tokenizer(tmp_path / "absent.pt")

    def test_wrong_kind(self, tokenizer, former, tmp_path):
        tok_path = tmp_path / "tok.pt"
        save_tokenizer(tok_path, tokenizer)
        with pytest.raises(CheckpointError, match="holds a 'tokenizer'"):
            load_former(tok_path)
        former_path = tmp_path / "former.pt"
        save_former(former_path, former, state_hash(tokenizer))
        with pytest.raises(CheckpointError, match="holds a 'former'"):
            load_tokenizer(former_path)

    def test_non_checkpoint_dict(self, tmp_path):
        path = tmp_path / "junk.pt"
        torch.save({"weights": torch.zeros(3)}, path)
        with pytest.raises(CheckpointError, match="not a model checkpoint"):
            load_tokenizer(path)

    def test_non_dict_payload(self, tmp_path):
        path = tmp_path / "tensor.pt"
        torch.save(torch.zeros(3), path)
        with pytest.raises(CheckpointError, match="not a model checkpoint"):
            load_tokenizer(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "noise.pt"
        path.write_bytes(b"\x00\x01\x02 definitely not a torch archive")
        with pytest.raises(CheckpointError, match="unreadable"):
            load_tokenizer(path)

    def test_unsupported_version(self, tokenizer, tmp_path):
        path = tmp_path / "tok.pt"
        save_tokenizer(path, tokenizer)
        payload = torch.load(path, weights_only=False)
        assert payload["format_version"] == FORMAT_VERSION
        payload["format_version"] = FORMAT_VERSION + 1
        torch.save(payload, path)
        with pytest.raises(CheckpointError, match="unsupported checkpoint version"):
            load_tokenizer(path)
