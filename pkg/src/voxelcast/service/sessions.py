"""Session bookkeeping for the interactive steering service.

A session owns a rollout cursor over one scene: the pose chain, the emitted
frame history, and the latent queue. Step execution is mutually exclusive
per session (a second concurrent request is rejected, not queued) and model
inference is serialized globally through one lock. Sessions expire after an
idle period and are swept opportunistically on access.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import torch

from ..core.grid import OccupancyGrid
from ..core.plan import Command, Frame, PlanSignal, SequenceSample
from ..core.se3 import SE3Transform, SE3ValidationError, se3_relative
from ..dynamics.encoder import plan_features
from ..dynamics.former import RolloutState, TransformFormer
from ..dynamics.transform import raw_to_se3, se3_cond12
from ..harness.data import SequenceStore, sequence_latents
from ..tokenizer.model import SceneTokenizer
from .rle import decode_rle, encode_rle


class SessionError(RuntimeError):
    """Carries a machine-readable code plus an HTTP status."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _matrix16(t: SE3Transform) -> list[float]:
    return [float(v) for v in t.matrix.reshape(-1)]


@dataclass
class StepRecord:
    step_index: int
    control: dict
    applied_transform: list[float]  # 16 values, row-major
    predicted_transform: list[float]
    payload: dict

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "control": self.control,
            "applied_transform": self.applied_transform,
            "predicted_transform": self.predicted_transform,
            "payload": self.payload,
        }


@dataclass
class Session:
    id: str
    state: RolloutState
    poses: list[SE3Transform]  # realized ego poses: G+1 observed, then stepped
    observed_payloads: list[dict]
    initial_plan: PlanSignal
    plan: PlanSignal  # rolls forward with the session
    rate_hz: float
    created_at: float = field(default_factory=time.monotonic)
    last_access: float = field(default_factory=time.monotonic)
    history: list[StepRecord] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def steps_taken(self) -> int:
        return len(self.history)


def _plan_with_history(
    command: Command, speed_mps: float, poses: list[SE3Transform], g_len: int
) -> PlanSignal:
    """Plan signal whose relative track reflects the session's realized poses.

    Mirrors the world generator: translation of the pose g steps back,
    expressed in the current ego frame, oldest first, clamped at the start.
    """
    t = len(poses) - 1
    rel = np.stack(
        [
            se3_relative(poses[max(t - g, 0)], poses[t]).translation
            for g in range(g_len, 0, -1)
        ]
    )
    return PlanSignal(speed_mps=speed_mps, command=command, past_rel_translations=rel)


class SessionManager:
    def __init__(
        self,
        tokenizer: SceneTokenizer,
        former: TransformFormer,
        idle_expiry_s: float = 900.0,
    ) -> None:
        self.tokenizer = tokenizer
        self.former = former
        self.idle_expiry_s = idle_expiry_s
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        self._model_lock = threading.Lock()
        self.g_len = former.hparams.history_length

    # -- registry ---------------------------------------------------------

    def _sweep(self) -> None:
        now = time.monotonic()
        stale = [
            sid
            for sid, s in self._sessions.items()
            if now - s.last_access > self.idle_expiry_s
        ]
        for sid in stale:
            self._sessions.pop(sid, None)

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            self._sweep()
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionError(404, "unknown_session", f"no session {session_id}")
        session.last_access = time.monotonic()
        return session

    def delete(self, session_id: str) -> None:
        with self._registry_lock:
            if self._sessions.pop(session_id, None) is None:
                raise SessionError(404, "unknown_session", f"no session {session_id}")

    def ids(self) -> list[str]:
        with self._registry_lock:
            self._sweep()
            return list(self._sessions)

    # -- creation ---------------------------------------------------------

    @torch.no_grad()
    def create_from_sample(self, sample: SequenceSample) -> Session:
        g_len = self.g_len
        if len(sample) < g_len + 1:
            raise SessionError(
                400, "sequence_too_short", f"need {g_len + 1} frames, got {len(sample)}"
            )
        hp = self.tokenizer.hparams
        if sample.grid_shape != tuple(hp.dims) or sample.num_classes != hp.num_classes:
            raise SessionError(
                400,
                "grid_mismatch",
                f"sequence grids are {sample.grid_shape} with {sample.num_classes} "
                f"classes, model expects {tuple(hp.dims)} with {hp.num_classes}",
            )
        if sample.history_length != g_len:
            raise SessionError(
                400,
                "history_mismatch",
                f"sequence plan history is {sample.history_length}, model expects {g_len}",
            )
        observed = sample.prefix(g_len + 1)
        store = SequenceStore.from_samples([observed])
        with self._model_lock:
            latents = sequence_latents(self.tokenizer, store, 0)  # (G+1, h, w, C)
        queue_len = self.former.hparams.queue_len
        state = RolloutState.fresh(
            latents[g_len].unsqueeze(0),
            [latents[g_len - 1 - i].unsqueeze(0) for i in range(min(g_len, queue_len))],
            queue_len,
        )
        frames = observed.frames
        session = Session(
            id=uuid.uuid4().hex,
            state=state,
            poses=[f.ego_pose for f in frames],
            observed_payloads=[encode_rle(np.asarray(f.grid.labels)) for f in frames],
            initial_plan=frames[g_len].plan,
            plan=frames[g_len].plan,
            rate_hz=sample.rate_hz,
        )
        with self._registry_lock:
            self._sweep()
            self._sessions[session.id] = session
        return session

    def create_from_export(self, exported: dict) -> Session:
        """Rebuild a session from a get_state export, replaying its controls."""
        try:
            observed = exported["observed"]
            payloads = observed["payloads"]
            poses = [
                SE3Transform(np.asarray(m, dtype=np.float64).reshape(4, 4))
                for m in observed["poses"]
            ]
            plan = PlanSignal.from_dict(observed["plan"])
            rate_hz = float(exported["rate_hz"])
            controls = [rec["control"] for rec in exported.get("history", [])]
        except (KeyError, TypeError, ValueError, SE3ValidationError) as exc:
            raise SessionError(400, "bad_resume_state", f"malformed export: {exc}") from exc
        if len(payloads) != len(poses):
            raise SessionError(
                400, "bad_resume_state", "observed payloads and poses disagree in length"
            )
        hp = self.tokenizer.hparams
        frames = []
        for payload, pose in zip(payloads, poses):
            try:
                labels = decode_rle(payload)
            except Exception as exc:
                raise SessionError(400, "bad_resume_state", f"bad payload: {exc}") from exc
            frames.append(
                Frame(
                    grid=OccupancyGrid(labels, hp.num_classes, hp.voxel_size_m),
                    ego_pose=pose,
                    plan=plan,
                )
            )
        try:
            sample = SequenceSample(
                frames=tuple(frames),
                rate_hz=rate_hz,
                seed=0,
                history_length=plan.history_length,
            )
        except Exception as exc:
            raise SessionError(400, "bad_resume_state", str(exc)) from exc
        session = self.create_from_sample(sample)
        for control in controls:
            self.step(session.id, control)
        return session

    # -- stepping ---------------------------------------------------------

    def _build_control(self, session: Session, control: dict):
        """Validated (plan, cond12 or None, user transform or None)."""
        mode = control.get("mode")
        if mode == "command":
            try:
                command = Command(control.get("command", session.plan.command.value))
            except ValueError as exc:
                raise SessionError(422, "bad_command", str(exc)) from exc
            speed = control.get("speed_mps", session.plan.speed_mps)
            try:
                speed = float(speed)
            except (TypeError, ValueError) as exc:
                raise SessionError(422, "bad_speed", f"speed_mps: {exc}") from exc
            if not np.isfinite(speed) or speed < 0:
                raise SessionError(422, "bad_speed", "speed_mps must be finite and >= 0")
            plan = _plan_with_history(command, speed, session.poses, self.g_len)
            return plan, None, None
        if mode == "matrix":
            raw = control.get("matrix")
            try:
                arr = np.asarray(raw, dtype=np.float64).reshape(-1)
            except (TypeError, ValueError) as exc:
                raise SessionError(422, "bad_matrix", f"matrix: {exc}") from exc
            if arr.size != 16:
                raise SessionError(422, "bad_matrix", "matrix must hold 16 numbers")
            try:
                transform = SE3Transform(arr.reshape(4, 4))
            except SE3ValidationError as exc:
                raise SessionError(422, "invalid_transform", str(exc)) from exc
            plan = _plan_with_history(
                session.plan.command, session.plan.speed_mps, session.poses, self.g_len
            )
            cond = torch.as_tensor(se3_cond12(transform), dtype=torch.float32)
            return plan, cond.unsqueeze(0), transform
        raise SessionError(
            422, "bad_mode", f"mode must be 'command' or 'matrix', got {mode!r}"
        )

    @torch.no_grad()
    def step(self, session_id: str, control: dict) -> StepRecord:
        session = self.get(session_id)
        if not session.lock.acquire(blocking=False):
            raise SessionError(409, "step_in_flight", "another step is already running")
        try:
            plan, cond12, user_transform = self._build_control(session, control)
            plan_feats = torch.as_tensor(
                plan_features(plan, session.rate_hz), dtype=torch.float32
            ).unsqueeze(0)
            with self._model_lock:
                next_latent, raw7 = self.former.step(
                    session.state.latent, list(session.state.queue), plan_feats, cond12
                )
                session.state.advance(next_latent)
                logits = self.tokenizer.decode_scene(next_latent)
            labels = logits.argmax(dim=-1)[0].numpy().astype(np.uint8)
            predicted = raw_to_se3(raw7[0])
            applied = user_transform if user_transform is not None else predicted
            session.poses.append(session.poses[-1].compose(applied.inverse()))
            session.plan = plan
            record = StepRecord(
                step_index=session.steps_taken,
                control=dict(control),
                applied_transform=_matrix16(applied),
                predicted_transform=_matrix16(predicted),
                payload=encode_rle(labels),
            )
            session.history.append(record)
            session.last_access = time.monotonic()
            return record
        finally:
            session.lock.release()

    # -- export -----------------------------------------------------------

    def export_state(self, session_id: str) -> dict:
        session = self.get(session_id)
        g1 = self.g_len + 1
        return {
            "session_id": session.id,
            "rate_hz": session.rate_hz,
            "steps_taken": session.steps_taken,
            "observed": {
                "payloads": session.observed_payloads,
                "poses": [_matrix16(p) for p in session.poses[:g1]],
                "plan": session.initial_plan.to_dict(),
            },
            "history": [rec.to_dict() for rec in session.history],
        }
