import { describe, expect, it } from "vitest";

import { ApiError, Control, SessionState, StepRecord } from "../src/client.js";
import { composeYawTranslation, identityMatrix } from "../src/matrix.js";
import { encodeRle, decodeRle, LabelGrid, RlePayload } from "../src/rle.js";
import {
  beginStep,
  completeStep,
  createViewState,
  currentFrame,
  failStep,
  loadSession,
  scrub,
  steerStep,
  StepClient,
  ViewState,
} from "../src/state.js";

function gridPayload(fill: number, dims: [number, number, number] = [4, 4, 2]): RlePayload {
  const grid: LabelGrid = {
    dims,
    data: new Uint8Array(dims[0] * dims[1] * dims[2]).fill(fill),
  };
  return encodeRle(grid);
}

function sessionFixture(nObserved = 3): SessionState {
  return {
    session_id: "abc123",
    rate_hz: 2,
    steps_taken: 0,
    observed: {
      payloads: Array.from({ length: nObserved }, (_, i) => gridPayload(i % 3)),
      poses: Array.from({ length: nObserved }, () => identityMatrix()),
      plan: {},
    },
    history: [],
    grid: { dims: [4, 4, 2], num_classes: 5, voxel_size_m: 0.5 },
  };
}

function stepRecord(stepIndex: number, fill: number): StepRecord {
  return {
    step_index: stepIndex,
    control: { mode: "command", command: "STRAIGHT" },
    applied_transform: identityMatrix(),
    predicted_transform: identityMatrix(),
    payload: gridPayload(fill),
  };
}

/** Client stand-in that resolves or rejects on demand, counting calls. */
class FakeClient implements StepClient {
  calls: Control[] = [];
  private resolvers: Array<{
    resolve: (r: StepRecord) => void;
    reject: (e: unknown) => void;
  }> = [];

  step(_sessionId: string, control: Control): Promise<StepRecord> {
    this.calls.push(control);
    return new Promise((resolve, reject) => {
      this.resolvers.push({ resolve, reject });
    });
  }

  settle(record: StepRecord): void {
    this.resolvers.shift()!.resolve(record);
  }

  fail(error: unknown): void {
    this.resolvers.shift()!.reject(error);
  }
}

function loadedState(nObserved = 3): ViewState {
  const state = createViewState();
  loadSession(state, sessionFixture(nObserved));
  return state;
}

describe("loadSession", () => {
  it("decodes every observed payload and points the cursor at the latest", () => {
    const state = loadedState(3);
    expect(state.frames).toHaveLength(3);
    expect(state.cursor).toBe(2);
    expect(state.frames.every((f) => f.kind === "observed")).toBe(true);
  });

  it("keeps the displayed frame equal to the decode of its payload", () => {
    const state = loadedState(3);
    for (const frame of state.frames) {
      expect(Array.from(frame.grid.data)).toEqual(
        Array.from(decodeRle(frame.payload).data)
      );
    }
  });
});

describe("steer_step round trip", () => {
  it("posts the control, appends the decoded frame, and advances the cursor", async () => {
    const state = loadedState(3);
    const client = new FakeClient();
    const pending = steerStep(state, client, {
      mode: "command",
      command: "TURN_LEFT",
      speed_mps: 4,
    });
    expect(client.calls).toHaveLength(1);
    expect(state.inFlight).toBe(true);
    client.settle(stepRecord(0, 4));
    const frame = await pending;
    expect(frame).not.toBeNull();
    expect(state.frames).toHaveLength(4);
    expect(state.cursor).toBe(3);
    expect(state.inFlight).toBe(false);
    expect(frame!.kind).toBe("predicted");
    expect(Array.from(frame!.grid.data)).toEqual(
      Array.from(decodeRle(stepRecord(0, 4).payload).data)
    );
  });

  it("sends nothing while a step is in flight", async () => {
    const state = loadedState(3);
    const client = new FakeClient();
    const first = steerStep(state, client, { mode: "command", command: "STRAIGHT" });
    const second = await steerStep(state, client, {
      mode: "command",
      command: "STOP",
    });
    expect(second).toBeNull();
    expect(client.calls).toHaveLength(1); // the second control never reached the wire
    client.settle(stepRecord(0, 1));
    await first;
    expect(state.frames).toHaveLength(4);
  });

  it("rejects a non-orthonormal matrix draft before any request is made", async () => {
    const state = loadedState(3);
    const client = new FakeClient();
    const skewed = composeYawTranslation(0.3, 1, 0);
    skewed[0]! *= 1.1;
    const result = await steerStep(state, client, { mode: "matrix", matrix: skewed });
    expect(result).toBeNull();
    expect(client.calls).toHaveLength(0);
    expect(state.inFlight).toBe(false);
    expect(state.notice?.level).toBe("error");
    expect(state.notice?.text).toMatch(/matrix rejected/);
    expect(state.frames).toHaveLength(3); // buffer untouched
  });

  it("lets a valid matrix draft through unchanged", async () => {
    const state = loadedState(3);
    const client = new FakeClient();
    const matrix = composeYawTranslation(0.15, 1.2, -0.4);
    const pending = steerStep(state, client, { mode: "matrix", matrix });
    expect(client.calls).toEqual([{ mode: "matrix", matrix }]);
    client.settle(stepRecord(0, 2));
    await pending;
    expect(state.frames).toHaveLength(4);
  });

  it("surfaces a 409 as a retry notice without corrupting the buffer", async () => {
    const state = loadedState(3);
    const before = state.frames.map((f) => Array.from(f.grid.data));
    const client = new FakeClient();
    const pending = steerStep(state, client, { mode: "command", command: "STRAIGHT" });
    client.fail(new ApiError(409, "step_in_flight", "another step is already running"));
    const frame = await pending;
    expect(frame).toBeNull();
    expect(state.inFlight).toBe(false);
    expect(state.notice?.level).toBe("info");
    expect(state.notice?.text).toMatch(/try again/);
    expect(state.frames).toHaveLength(3);
    state.frames.forEach((f, i) => {
      expect(Array.from(f.grid.data)).toEqual(before[i]);
    });
    // the state machine recovered: the retry goes through
    const retry = steerStep(state, client, { mode: "command", command: "STRAIGHT" });
    client.settle(stepRecord(0, 1));
    await retry;
    expect(state.frames).toHaveLength(4);
  });

  it("surfaces server validation errors with their message", async () => {
    const state = loadedState(3);
    const client = new FakeClient();
    const pending = steerStep(state, client, {
      mode: "command",
      command: "STRAIGHT",
      speed_mps: -1,
    });
    client.fail(new ApiError(422, "bad_speed", "speed_mps must be finite and >= 0"));
    await pending;
    expect(state.notice?.level).toBe("error");
    expect(state.notice?.text).toMatch(/speed_mps/);
  });
});

describe("timeline_scrub", () => {
  it("moves the cursor without any server call", () => {
    const state = loadedState(3);
    expect(scrub(state, 0)).toBe(0);
    expect(currentFrame(state)).toBe(state.frames[0]);
  });

  it("clamps past either end of the buffer", () => {
    const state = loadedState(3);
    expect(scrub(state, 99)).toBe(2);
    expect(scrub(state, -5)).toBe(0);
    expect(scrub(state, 1.7)).toBe(1);
  });

  it("appends after the latest frame even when scrubbed back", async () => {
    const state = loadedState(3);
    scrub(state, 0);
    const client = new FakeClient();
    const pending = steerStep(state, client, { mode: "command", command: "STRAIGHT" });
    client.settle(stepRecord(0, 2));
    await pending;
    expect(state.frames).toHaveLength(4);
    expect(state.frames[3]!.kind).toBe("predicted");
    expect(state.cursor).toBe(3);
  });
});

describe("state machine primitives", () => {
  it("beginStep refuses without a session", () => {
    const state = createViewState();
    const gate = beginStep(state, { mode: "command", command: "STRAIGHT" });
    expect(gate.ok).toBe(false);
  });

  it("completeStep and failStep both clear the in-flight mark", () => {
    const state = loadedState(1);
    expect(beginStep(state, { mode: "command", command: "STRAIGHT" }).ok).toBe(true);
    completeStep(state, stepRecord(0, 1));
    expect(state.inFlight).toBe(false);
    expect(beginStep(state, { mode: "command", command: "STOP" }).ok).toBe(true);
    failStep(state, { status: 500, code: "boom", message: "server fell over" });
    expect(state.inFlight).toBe(false);
    expect(state.notice?.level).toBe("error");
  });
});
