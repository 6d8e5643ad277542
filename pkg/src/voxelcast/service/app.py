"""HTTP surface for interactive steering.

One tokenizer/former pair serves every session. Handlers are synchronous
(FastAPI runs them in a worker pool); ordering and exclusivity come from the
session manager's locks, so a second step on a busy session gets 409 instead
of queueing behind the first.
"""

from __future__ import annotations

import base64
import binascii
import tempfile
from dataclasses import replace

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from ..core.occseq import OccSeqError, decode_occseq
from ..core.plan import Command
from ..dynamics.former import TransformFormer
from ..tokenizer.model import SceneTokenizer
from ..world.synth import WorldConfig, generate_sequence
from .sessions import SessionError, SessionManager

# BEV display palette, one entry per class id.
CLASS_PALETTE = [
    {"id": 0, "name": "free", "color": "#14181d"},
    {"id": 1, "name": "road", "color": "#4a5058"},
    {"id": 2, "name": "building", "color": "#8d6e63"},
    {"id": 3, "name": "car", "color": "#42a5f5"},
    {"id": 4, "name": "truck", "color": "#ef6c00"},
]


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def create_app(
    tokenizer: SceneTokenizer,
    former: TransformFormer,
    world_config: WorldConfig | None = None,
    checkpoint_ids: dict | None = None,
    idle_expiry_s: float = 900.0,
) -> FastAPI:
    hp = tokenizer.hparams
    if world_config is None:
        world_config = WorldConfig(
            dims=hp.dims, voxel_size_m=hp.voxel_size_m, num_classes=hp.num_classes
        )
    checkpoint_ids = dict(checkpoint_ids or {})
    manager = SessionManager(tokenizer, former, idle_expiry_s=idle_expiry_s)
    app = FastAPI(title="voxelcast steering service")
    app.state.manager = manager
    # the browser client is served statically from another port
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(SessionError)
    def _session_error(_request: Request, exc: SessionError) -> JSONResponse:
        return _error(exc.status, exc.code, exc.message)

    def _check_checkpoints(requested: dict | None) -> None:
        if not requested:
            return
        if not isinstance(requested, dict):
            raise SessionError(400, "unknown_checkpoint", "checkpoints must be a mapping")
        for role, ckpt_id in requested.items():
            if checkpoint_ids.get(role) != ckpt_id:
                raise SessionError(
                    400, "unknown_checkpoint", f"no {role} checkpoint {ckpt_id!r} loaded"
                )

    def _session_payload(session_id: str) -> dict:
        state = manager.export_state(session_id)
        state["grid"] = {
            "dims": list(hp.dims),
            "num_classes": hp.num_classes,
            "voxel_size_m": hp.voxel_size_m,
        }
        return state

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "sessions": len(manager.ids())}

    @app.get("/meta")
    def meta() -> dict:
        fhp = former.hparams
        return {
            "dims": list(hp.dims),
            "num_classes": hp.num_classes,
            "voxel_size_m": hp.voxel_size_m,
            "palette": CLASS_PALETTE[: hp.num_classes],
            "horizon": fhp.horizon,
            "history_length": fhp.history_length,
            "queue_len": fhp.queue_len,
            "rate_hz": world_config.rate_hz,
            "commands": [c.value for c in Command],
            "checkpoints": checkpoint_ids,
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: dict) -> dict:
        _check_checkpoints(body.get("checkpoints"))
        source = body.get("source", "seed")
        if source == "seed":
            seed = body.get("seed", 0)
            if not isinstance(seed, int):
                raise SessionError(400, "bad_seed", "seed must be an integer")
            cfg = replace(
                world_config,
                seed=seed,
                sequence_length=max(world_config.sequence_length, manager.g_len + 1),
            )
            if body.get("command") is not None:
                try:
                    cfg = replace(cfg, command=Command(body["command"]))
                except ValueError as exc:
                    raise SessionError(400, "bad_command", str(exc)) from exc
            if body.get("speed_mps") is not None:
                cfg = replace(cfg, ego_speed_mps=float(body["speed_mps"]))
            sample = generate_sequence(cfg, history_length=manager.g_len)
            session = manager.create_from_sample(sample)
        elif source == "occseq":
            encoded = body.get("occseq_b64")
            if not isinstance(encoded, str):
                raise SessionError(400, "bad_occseq", "occseq_b64 must be a string")
            try:
                raw = base64.b64decode(encoded, validate=True)
            except (binascii.Error, ValueError) as exc:
                raise SessionError(400, "bad_occseq", f"invalid base64: {exc}") from exc
            with tempfile.NamedTemporaryFile(suffix=".occseq") as f:
                f.write(raw)
                f.flush()
                try:
                    sample = decode_occseq(f.name)
                except OccSeqError as exc:
                    raise SessionError(400, "bad_occseq", str(exc)) from exc
            session = manager.create_from_sample(sample)
        elif source == "resume":
            state = body.get("state")
            if not isinstance(state, dict):
                raise SessionError(400, "bad_resume_state", "state must be an object")
            session = manager.create_from_export(state)
        else:
            raise SessionError(
                400, "bad_source", f"source must be seed, occseq, or resume, got {source!r}"
            )
        return _session_payload(session.id)

    @app.post("/sessions/{session_id}/step")
    def step(session_id: str, body: dict) -> dict:
        record = manager.step(session_id, body)
        return record.to_dict()

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str) -> dict:
        return _session_payload(session_id)

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> Response:
        manager.delete(session_id)
        return Response(status_code=204)

    return app
