"""Tests for the steering service: RLE wire format, session lifecycle, the
HTTP surface, control validation, concurrency rejection, and resume."""

import base64
import dataclasses
import time

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from voxelcast.core.occseq import encode_occseq
from voxelcast.core.plan import Command
from voxelcast.core.se3 import SE3Transform
from voxelcast.dynamics.former import FormerHparams, TransformFormer
from voxelcast.service.app import CLASS_PALETTE, create_app
from voxelcast.service.rle import RLEError, decode_rle, encode_rle
from voxelcast.service.sessions import SessionError, SessionManager, _plan_with_history
from voxelcast.tokenizer.model import SceneTokenizer, TokenizerHparams
from voxelcast.world.synth import WorldConfig, generate_sequence

G_LEN = 2

TOK_HP = TokenizerHparams(
    dims=(32, 32, 4),
    widths=(16, 24),
    latent_channels=16,
    scales=((2, 2), (4, 4), (8, 8), (16, 16)),
    codebook_size=32,
    history_length=G_LEN,
)

FORMER_HP = FormerHparams(
    latent_channels=16,
    latent_hw=(16, 16),
    dim=32,
    plan_dim=32,
    history_length=G_LEN,
    depth_intra=1,
    depth_inter=1,
    n_heads=2,
    n_points=2,
    queue_len=2,
    pyramid_levels=2,
    horizon=2,
)

WORLD = WorldConfig(
    dims=(32, 32, 4),
    n_static_buildings=4,
    n_moving_agents=2,
    rate_hz=2.0,
    sequence_length=5,
)

IDENTITY_16 = [
    1.0, 0.0, 0.0, 0.0,
    0.0, 1.0, 0.0, 0.0,
    0.0, 0.0, 1.0, 0.0,
    0.0, 0.0, 0.0, 1.0,
]


def build_models():
    torch.manual_seed(77)
    tokenizer = SceneTokenizer(TOK_HP)
    former = TransformFormer(FORMER_HP)
    tokenizer.eval()
    former.eval()
    return tokenizer, former


@pytest.fixture(scope="module")
def models():
    return build_models()


@pytest.fixture(scope="module")
def client(models):
    tokenizer, former = models
    app = create_app(
        tokenizer,
        former,
        world_config=WORLD,
        checkpoint_ids={"tokenizer": "tok-abc", "former": "fmr-def"},
    )
    return TestClient(app)


def make_session(client, seed=0, **extra):
    resp = client.post("/sessions", json={"source": "seed", "seed": seed, **extra})
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestRLE:
    def test_round_trip_random_grid(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 5, size=(8, 6, 3)).astype(np.uint8)
        decoded = decode_rle(encode_rle(labels))
        np.testing.assert_array_equal(decoded, labels)
        assert decoded.dtype == np.uint8

    def test_constant_grid_is_one_run(self):
        labels = np.full((4, 4, 2), 3, dtype=np.uint8)
        payload = encode_rle(labels)
        assert payload == {"dims": [4, 4, 2], "runs": [[3, 32]]}

    def test_runs_walk_z_fastest(self):
        labels = np.zeros((2, 2, 2), dtype=np.uint8)
        labels[0, 0, 0] = 1
        labels[0, 0, 1] = 2
        payload = encode_rle(labels)
        assert payload["runs"][:2] == [[1, 1], [2, 1]]
        assert payload["runs"][2] == [0, 6]

    @settings(max_examples=60, deadline=None)
    @given(
        arrays(
            dtype=np.uint8,
            shape=st.tuples(
                st.integers(1, 5), st.integers(1, 5), st.integers(1, 4)
            ),
        )
    )
    def test_round_trip_property(self, labels):
        np.testing.assert_array_equal(decode_rle(encode_rle(labels)), labels)

    def test_encode_rejects_non_3d(self):
        with pytest.raises(RLEError, match="3D"):
            encode_rle(np.zeros((2, 2), dtype=np.uint8))

    def test_encode_rejects_empty(self):
        with pytest.raises(RLEError, match="empty"):
            encode_rle(np.zeros((0, 2, 2), dtype=np.uint8))

    def test_decode_rejects_wrong_total(self):
        with pytest.raises(RLEError, match="cover"):
            decode_rle({"dims": [2, 2, 2], "runs": [[0, 7]]})

    def test_decode_rejects_bad_runs(self):
        with pytest.raises(RLEError, match="bad run"):
            decode_rle({"dims": [1, 1, 2], "runs": [[0]]})
        with pytest.raises(RLEError, match="bad run"):
            decode_rle({"dims": [1, 1, 2], "runs": [[300, 2]]})
        with pytest.raises(RLEError, match="bad run"):
            decode_rle({"dims": [1, 1, 2], "runs": [[0, 0], [0, 2]]})

    def test_decode_rejects_bad_dims(self):
        with pytest.raises(RLEError, match="bad dims"):
            decode_rle({"dims": [2, 2], "runs": [[0, 4]]})
        with pytest.raises(RLEError, match="bad dims"):
            decode_rle({"dims": [2, 0, 2], "runs": [[0, 0]]})

    def test_decode_rejects_missing_keys(self):
        with pytest.raises(RLEError, match="malformed"):
            decode_rle({"runs": [[0, 4]]})


class TestPlanWithHistory:
    def test_straight_track_offsets(self):
        poses = [SE3Transform.from_xyz_yaw(float(x), 0.0, 0.0, 0.0) for x in range(3)]
        plan = _plan_with_history(Command.STRAIGHT, 4.0, poses, g_len=2)
        np.testing.assert_allclose(
            plan.past_rel_translations,
            [[-2.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
            atol=1e-12,
        )
        assert plan.speed_mps == 4.0

    def test_short_history_clamps_to_first_pose(self):
        poses = [SE3Transform.from_xyz_yaw(float(x), 0.0, 0.0, 0.0) for x in range(2)]
        plan = _plan_with_history(Command.STOP, 0.0, poses, g_len=3)
        np.testing.assert_allclose(
            plan.past_rel_translations,
            [[-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
            atol=1e-12,
        )

    def test_matches_generated_world_plans(self):
        sample = generate_sequence(WORLD, history_length=G_LEN)
        poses = [f.ego_pose for f in sample.frames]
        for t in range(len(poses)):
            plan = sample.frames[t].plan
            rebuilt = _plan_with_history(
                plan.command, plan.speed_mps, poses[: t + 1], G_LEN
            )
            np.testing.assert_allclose(
                rebuilt.past_rel_translations, plan.past_rel_translations, atol=1e-9
            )


class TestSessionManagerDirect:
    def test_idle_sessions_expire(self, models):
        tokenizer, former = models
        manager = SessionManager(tokenizer, former, idle_expiry_s=0.05)
        sample = generate_sequence(WORLD, history_length=G_LEN)
        session = manager.create_from_sample(sample)
        assert manager.get(session.id) is session
        time.sleep(0.12)
        with pytest.raises(SessionError) as err:
            manager.get(session.id)
        assert err.value.status == 404
        assert err.value.code == "unknown_session"

    def test_matrix_step_extends_pose_chain(self, models):
        tokenizer, former = models
        manager = SessionManager(tokenizer, former)
        sample = generate_sequence(WORLD, history_length=G_LEN)
        session = manager.create_from_sample(sample)
        anchor = session.poses[-1]
        forward = SE3Transform.from_xyz_yaw(-1.5, 0.0, 0.0, 0.0)
        manager.step(
            session.id, {"mode": "matrix", "matrix": list(forward.matrix.reshape(-1))}
        )
        expected = anchor.compose(forward.inverse())
        assert session.poses[-1].almost_equal(expected, tol=1e-9)

    def test_command_persists_across_steps(self, models):
        tokenizer, former = models
        manager = SessionManager(tokenizer, former)
        sample = generate_sequence(WORLD, history_length=G_LEN)
        session = manager.create_from_sample(sample)
        manager.step(session.id, {"mode": "command", "command": "STOP", "speed_mps": 0.0})
        assert session.plan.command.value == "STOP"
        manager.step(session.id, {"mode": "command"})
        assert session.plan.command.value == "STOP"
        assert session.plan.speed_mps == 0.0


class TestHealthAndMeta:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert isinstance(body["sessions"], int)

    def test_meta_describes_model_and_world(self, client):
        body = client.get("/meta").json()
        assert body["dims"] == [32, 32, 4]
        assert body["num_classes"] == 5
        assert body["voxel_size_m"] == 0.5
        assert body["palette"] == CLASS_PALETTE[:5]
        assert body["horizon"] == FORMER_HP.horizon
        assert body["history_length"] == G_LEN
        assert body["queue_len"] == FORMER_HP.queue_len
        assert body["rate_hz"] == 2.0
        assert set(body["commands"]) == {"STRAIGHT", "TURN_LEFT", "TURN_RIGHT", "STOP"}
        assert body["checkpoints"] == {"tokenizer": "tok-abc", "former": "fmr-def"}


class TestSessionCreation:
    def test_seed_session_payload(self, client):
        body = make_session(client, seed=11)
        assert body["steps_taken"] == 0
        assert body["history"] == []
        assert body["rate_hz"] == 2.0
        assert body["grid"] == {"dims": [32, 32, 4], "num_classes": 5, "voxel_size_m": 0.5}
        observed = body["observed"]
        assert len(observed["payloads"]) == G_LEN + 1
        assert len(observed["poses"]) == G_LEN + 1
        for payload in observed["payloads"]:
            assert decode_rle(payload).shape == (32, 32, 4)
        for pose in observed["poses"]:
            assert len(pose) == 16
            SE3Transform(np.asarray(pose).reshape(4, 4))
        plan = observed["plan"]
        assert plan["command"] in {"STRAIGHT", "TURN_LEFT", "TURN_RIGHT", "STOP"}
        assert len(plan["past_rel_translations"]) == G_LEN

    def test_same_seed_is_reproducible(self, client):
        a = make_session(client, seed=21)
        b = make_session(client, seed=21)
        assert a["observed"]["payloads"] == b["observed"]["payloads"]
        assert a["observed"]["poses"] == b["observed"]["poses"]
        assert a["observed"]["plan"] == b["observed"]["plan"]
        assert a["session_id"] != b["session_id"]

    def test_different_seeds_differ(self, client):
        a = make_session(client, seed=1)
        b = make_session(client, seed=2)
        assert a["observed"]["payloads"] != b["observed"]["payloads"]

    def test_command_override(self, client):
        body = make_session(client, seed=3, command="TURN_LEFT", speed_mps=4.0)
        assert body["observed"]["plan"]["command"] == "TURN_LEFT"
        assert body["observed"]["plan"]["speed_mps"] == 4.0

    def test_bad_command_rejected(self, client):
        resp = client.post(
            "/sessions", json={"source": "seed", "seed": 0, "command": "WARP"}
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_command"

    def test_bad_seed_rejected(self, client):
        resp = client.post("/sessions", json={"source": "seed", "seed": "zero"})
        assert resp.status_code == 400
        err = resp.json()["error"]
        assert err["code"] == "bad_seed"
        assert "integer" in err["message"]

    def test_bad_source_rejected(self, client):
        resp = client.post("/sessions", json={"source": "telepathy"})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_source"

    def test_checkpoint_ids_validated(self, client):
        resp = client.post(
            "/sessions",
            json={"source": "seed", "seed": 0, "checkpoints": {"former": "fmr-def"}},
        )
        assert resp.status_code == 201
        resp = client.post(
            "/sessions",
            json={"source": "seed", "seed": 0, "checkpoints": {"former": "stale-id"}},
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "unknown_checkpoint"
        resp = client.post(
            "/sessions",
            json={"source": "seed", "seed": 0, "checkpoints": {"discriminator": "x"}},
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "unknown_checkpoint"


class TestOccseqUpload:
    def _upload(self, client, sample, tmp_path):
        path = tmp_path / "seq.occseq"
        encode_occseq(sample, path)
        encoded = base64.b64encode(path.read_bytes()).decode("ascii")
        return client.post("/sessions", json={"source": "occseq", "occseq_b64": encoded})

    def test_upload_round_trip(self, client, tmp_path):
        sample = generate_sequence(
            dataclasses.replace(WORLD, seed=5), history_length=G_LEN
        )
        resp = self._upload(client, sample, tmp_path)
        assert resp.status_code == 201, resp.text
        observed = resp.json()["observed"]
        for t, payload in enumerate(observed["payloads"]):
            np.testing.assert_array_equal(
                decode_rle(payload), np.asarray(sample.frames[t].grid.labels)
            )

    def test_truncated_file_rejected(self, client, tmp_path):
        sample = generate_sequence(
            dataclasses.replace(WORLD, seed=5), history_length=G_LEN
        )
        path = tmp_path / "seq.occseq"
        encode_occseq(sample, path)
        clipped = path.read_bytes()[:-50]
        encoded = base64.b64encode(clipped).decode("ascii")
        resp = client.post("/sessions", json={"source": "occseq", "occseq_b64": encoded})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_occseq"

    def test_invalid_base64_rejected(self, client):
        resp = client.post(
            "/sessions", json={"source": "occseq", "occseq_b64": "@@not-base64@@"}
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_occseq"
        resp = client.post("/sessions", json={"source": "occseq", "occseq_b64": 42})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_occseq"

    def test_grid_mismatch_rejected(self, client, tmp_path):
        small = dataclasses.replace(WORLD, dims=(16, 16, 4), seed=5)
        sample = generate_sequence(small, history_length=G_LEN)
        resp = self._upload(client, sample, tmp_path)
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "grid_mismatch"

    def test_plan_history_mismatch_rejected(self, client, tmp_path):
        sample = generate_sequence(
            dataclasses.replace(WORLD, seed=5), history_length=G_LEN + 2
        )
        resp = self._upload(client, sample, tmp_path)
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "history_mismatch"

    def test_short_sequence_rejected(self, client, tmp_path):
        short = dataclasses.replace(WORLD, sequence_length=G_LEN, seed=5)
        sample = generate_sequence(short, history_length=G_LEN)
        resp = self._upload(client, sample, tmp_path)
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "sequence_too_short"


class TestStepping:
    def test_command_step_record(self, client):
        sid = make_session(client, seed=8)["session_id"]
        resp = client.post(
            f"/sessions/{sid}/step",
            json={"mode": "command", "command": "STRAIGHT", "speed_mps": 5.0},
        )
        assert resp.status_code == 200, resp.text
        record = resp.json()
        assert record["step_index"] == 0
        assert record["control"] == {
            "mode": "command", "command": "STRAIGHT", "speed_mps": 5.0,
        }
        assert decode_rle(record["payload"]).shape == (32, 32, 4)
        # Untrained transform head predicts no motion; command mode applies
        # the prediction.
        assert record["predicted_transform"] == pytest.approx(IDENTITY_16)
        assert record["applied_transform"] == pytest.approx(IDENTITY_16)

    def test_step_indices_and_state_advance(self, client):
        sid = make_session(client, seed=8)["session_id"]
        first = client.post(f"/sessions/{sid}/step", json={"mode": "command"}).json()
        second = client.post(f"/sessions/{sid}/step", json={"mode": "command"}).json()
        assert (first["step_index"], second["step_index"]) == (0, 1)
        state = client.get(f"/sessions/{sid}").json()
        assert state["steps_taken"] == 2
        assert len(state["history"]) == 2
        assert len(state["observed"]["payloads"]) == G_LEN + 1  # unchanged
        assert state["history"][0] == first
        assert state["history"][1] == second

    def test_matrix_step_applies_user_transform(self, client):
        sid = make_session(client, seed=8)["session_id"]
        matrix = list(IDENTITY_16)
        matrix[3] = -1.5  # translate
        resp = client.post(f"/sessions/{sid}/step", json={"mode": "matrix", "matrix": matrix})
        assert resp.status_code == 200, resp.text
        record = resp.json()
        assert record["applied_transform"] == pytest.approx(matrix)
        assert record["predicted_transform"] == pytest.approx(IDENTITY_16)

    def test_non_orthonormal_matrix_rejected(self, client):
        sid = make_session(client, seed=8)["session_id"]
        matrix = list(IDENTITY_16)
        matrix[0] = 2.0  # scaled rotation block
        resp = client.post(f"/sessions/{sid}/step", json={"mode": "matrix", "matrix": matrix})
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "invalid_transform"

    def test_matrix_arity_and_type_checked(self, client):
        sid = make_session(client, seed=8)["session_id"]
        resp = client.post(
            f"/sessions/{sid}/step", json={"mode": "matrix", "matrix": [1.0] * 9}
        )
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "bad_matrix"
        resp = client.post(
            f"/sessions/{sid}/step", json={"mode": "matrix", "matrix": "eye"}
        )
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "bad_matrix"

    def test_bad_mode_rejected(self, client):
        sid = make_session(client, seed=8)["session_id"]
        resp = client.post(f"/sessions/{sid}/step", json={"mode": "teleport"})
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "bad_mode"

    def test_bad_command_and_speed_rejected(self, client):
        sid = make_session(client, seed=8)["session_id"]
        resp = client.post(
            f"/sessions/{sid}/step", json={"mode": "command", "command": "FLY"}
        )
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "bad_command"
        resp = client.post(
            f"/sessions/{sid}/step", json={"mode": "command", "speed_mps": -3.0}
        )
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "bad_speed"
        resp = client.post(
            f"/sessions/{sid}/step", json={"mode": "command", "speed_mps": "fast"}
        )
        assert resp.status_code == 422
        assert resp.json()["error"]["code"] == "bad_speed"

    def test_sessions_are_isolated(self, client):
        a = make_session(client, seed=30)["session_id"]
        b = make_session(client, seed=30)["session_id"]
        client.post(f"/sessions/{a}/step", json={"mode": "command"})
        assert client.get(f"/sessions/{a}").json()["steps_taken"] == 1
        assert client.get(f"/sessions/{b}").json()["steps_taken"] == 0

    def test_busy_session_returns_409(self, client):
        sid = make_session(client, seed=8)["session_id"]
        manager = client.app.state.manager
        session = manager.get(sid)
        assert session.lock.acquire(blocking=False)
        try:
            resp = client.post(f"/sessions/{sid}/step", json={"mode": "command"})
            assert resp.status_code == 409
            assert resp.json()["error"]["code"] == "step_in_flight"
        finally:
            session.lock.release()
        resp = client.post(f"/sessions/{sid}/step", json={"mode": "command"})
        assert resp.status_code == 200

    def test_concurrent_steps_one_winner_per_slot(self, client):
        import threading

        sid = make_session(client, seed=8)["session_id"]
        codes = []

        def hit():
            resp = client.post(f"/sessions/{sid}/step", json={"mode": "command"})
            codes.append(resp.status_code)

        threads = [threading.Thread(target=hit) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert set(codes) <= {200, 409}
        assert codes.count(200) >= 1
        state = client.get(f"/sessions/{sid}").json()
        assert state["steps_taken"] == codes.count(200)


class TestLifecycle:
    def test_unknown_session_is_404(self, client):
        for resp in (
            client.get("/sessions/nope"),
            client.post("/sessions/nope/step", json={"mode": "command"}),
            client.delete("/sessions/nope"),
        ):
            assert resp.status_code == 404
            assert resp.json()["error"]["code"] == "unknown_session"

    def test_delete_removes_session(self, client):
        sid = make_session(client, seed=1)["session_id"]
        assert client.delete(f"/sessions/{sid}").status_code == 204
        assert client.get(f"/sessions/{sid}").status_code == 404
        assert client.delete(f"/sessions/{sid}").status_code == 404


class TestResume:
    def test_resume_replays_to_identical_state(self, client):
        sid = make_session(client, seed=14)["session_id"]
        client.post(
            f"/sessions/{sid}/step",
            json={"mode": "command", "command": "TURN_LEFT", "speed_mps": 3.0},
        )
        matrix = list(IDENTITY_16)
        matrix[3] = -1.0
        client.post(f"/sessions/{sid}/step", json={"mode": "matrix", "matrix": matrix})
        exported = client.get(f"/sessions/{sid}").json()

        resp = client.post("/sessions", json={"source": "resume", "state": exported})
        assert resp.status_code == 201, resp.text
        resumed = resp.json()
        assert resumed["session_id"] != sid
        assert resumed["steps_taken"] == 2
        assert resumed["observed"]["payloads"] == exported["observed"]["payloads"]
        assert resumed["observed"]["poses"] == exported["observed"]["poses"]
        for orig, replay in zip(exported["history"], resumed["history"]):
            assert replay["payload"] == orig["payload"]
            assert replay["control"] == orig["control"]
            assert replay["applied_transform"] == pytest.approx(orig["applied_transform"])

        # Both timelines continue identically.
        nxt = {"mode": "command", "command": "STRAIGHT"}
        a = client.post(f"/sessions/{sid}/step", json=nxt).json()
        b = client.post(f"/sessions/{resumed['session_id']}/step", json=nxt).json()
        assert a["payload"] == b["payload"]

    def test_resume_requires_state_object(self, client):
        resp = client.post("/sessions", json={"source": "resume", "state": "yesterday"})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_resume_state"

    def test_resume_rejects_malformed_export(self, client):
        resp = client.post(
            "/sessions", json={"source": "resume", "state": {"observed": {}}}
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_resume_state"

    def test_resume_rejects_corrupt_payload(self, client):
        sid = make_session(client, seed=14)["session_id"]
        exported = client.get(f"/sessions/{sid}").json()
        exported["observed"]["payloads"][0]["runs"] = [[0, 1]]
        resp = client.post("/sessions", json={"source": "resume", "state": exported})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_resume_state"


class TestDefaultWorldConfig:
    def test_app_derives_world_from_tokenizer(self, models):
        tokenizer, former = models
        app = create_app(tokenizer, former)
        with TestClient(app) as local:
            meta = local.get("/meta").json()
            assert meta["dims"] == [32, 32, 4]
            body = make_session(local, seed=2)
            assert decode_rle(body["observed"]["payloads"][0]).shape == (32, 32, 4)
