/**
 * View state for the steering UI, kept free of DOM so the state machine is
 * testable headless.
 *
 * The frame buffer holds every grid the session has shown, oldest first:
 * the observed context frames, then one predicted frame per step. Each entry
 * keeps the wire payload next to its decoded grid, so "what is on screen" is
 * always the run-length decode of what the server sent; nothing is redrawn
 * from any other source. The cursor indexes this buffer for scrubbing and
 * never triggers a server call. At most one step request is in flight; while
 * one is pending every further control is refused locally.
 */

import { Control, SessionState, StepRecord } from "./client.js";
import { validateMatrixDraft } from "./matrix.js";
import { decodeRle, LabelGrid, RlePayload } from "./rle.js";

export interface FrameEntry {
  kind: "observed" | "predicted";
  payload: RlePayload;
  grid: LabelGrid;
  /** Step index for predicted frames; observed context frames have none. */
  stepIndex?: number;
  appliedTransform?: number[];
}

export interface Notice {
  level: "info" | "error";
  text: string;
}

export interface ViewState {
  sessionId: string | null;
  rateHz: number;
  frames: FrameEntry[];
  cursor: number;
  inFlight: boolean;
  pendingControl: Control | null;
  notice: Notice | null;
}

export function createViewState(): ViewState {
  return {
    sessionId: null,
    rateHz: 0,
    frames: [],
    cursor: -1,
    inFlight: false,
    pendingControl: null,
    notice: null,
  };
}

/** Load a freshly created or re-fetched session into the buffer. */
export function loadSession(state: ViewState, session: SessionState): void {
  state.sessionId = session.session_id;
  state.rateHz = session.rate_hz;
  state.frames = session.observed.payloads.map((payload) => ({
    kind: "observed" as const,
    payload,
    grid: decodeRle(payload),
  }));
  for (const record of session.history) {
    state.frames.push(frameFromRecord(record));
  }
  state.cursor = state.frames.length - 1;
  state.inFlight = false;
  state.pendingControl = null;
  state.notice = null;
}

function frameFromRecord(record: StepRecord): FrameEntry {
  return {
    kind: "predicted",
    payload: record.payload,
    grid: decodeRle(record.payload),
    stepIndex: record.step_index,
    appliedTransform: record.applied_transform,
  };
}

export function currentFrame(state: ViewState): FrameEntry | null {
  if (state.cursor < 0 || state.cursor >= state.frames.length) {
    return null;
  }
  return state.frames[state.cursor]!;
}

/**
 * Move the playback cursor. Pure local navigation: clamps to the buffer and
 * never talks to the server.
 */
export function scrub(state: ViewState, index: number): number {
  const last = state.frames.length - 1;
  state.cursor = Math.max(0, Math.min(Math.floor(index), last));
  return state.cursor;
}

export type BeginStepResult = { ok: true } | { ok: false; reason: string };

/**
 * Gate a control before it may be sent. Refuses when a step is already in
 * flight or when a matrix draft fails the client-side orthonormality check;
 * on success marks the state busy so nothing else can be sent.
 */
export function beginStep(state: ViewState, control: Control): BeginStepResult {
  if (state.sessionId === null) {
    return { ok: false, reason: "no session" };
  }
  if (state.inFlight) {
    return { ok: false, reason: "a step is already in flight" };
  }
  if (control.mode === "matrix") {
    const check = validateMatrixDraft(control.matrix);
    if (!check.ok) {
      state.notice = { level: "error", text: `matrix rejected: ${check.message}` };
      return { ok: false, reason: check.message };
    }
  }
  state.inFlight = true;
  state.pendingControl = control;
  state.notice = null;
  return { ok: true };
}

/**
 * Append the step's frame after the latest entry (scrub position does not
 * matter) and move the cursor onto it.
 */
export function completeStep(state: ViewState, record: StepRecord): void {
  state.frames.push(frameFromRecord(record));
  state.cursor = state.frames.length - 1;
  state.inFlight = false;
  state.pendingControl = null;
}

/** Clear the in-flight mark and surface the failure; the buffer is untouched. */
export function failStep(
  state: ViewState,
  error: { status?: number; code?: string; message: string }
): void {
  state.inFlight = false;
  state.pendingControl = null;
  if (error.status === 409 || error.code === "step_in_flight") {
    state.notice = {
      level: "info",
      text: "the server is still running the previous step, try again",
    };
  } else {
    state.notice = { level: "error", text: error.message };
  }
}

/**
 * Full step round trip: gate, post, decode, append. Returns the new frame
 * or null when the control was refused or the request failed (the state's
 * notice then says why).
 */
export interface StepClient {
  step(sessionId: string, control: Control): Promise<StepRecord>;
}

export async function steerStep(
  state: ViewState,
  client: StepClient,
  control: Control
): Promise<FrameEntry | null> {
  const gate = beginStep(state, control);
  if (!gate.ok) {
    return null;
  }
  try {
    const record = await client.step(state.sessionId!, control);
    completeStep(state, record);
    return currentFrame(state);
  } catch (exc) {
    const err = exc as { status?: number; code?: string; message?: string };
    failStep(state, {
      status: err.status,
      code: err.code,
      message: err.message ?? String(exc),
    });
    return null;
  }
}
