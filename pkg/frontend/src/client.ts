/**
 * Typed HTTP client for the steering service. One base URL, plain fetch,
 * no sockets; every non-2xx response is unwrapped into an ApiError carrying
 * the server's machine-readable code so the UI can branch on it (409
 * step_in_flight gets a retry notice, 422 validation codes get surfaced).
 */

import { RlePayload } from "./rle.js";
import { PaletteEntry } from "./render.js";

export interface MetaResponse {
  dims: number[];
  num_classes: number;
  voxel_size_m: number;
  palette: PaletteEntry[];
  horizon: number;
  history_length: number;
  queue_len: number;
  rate_hz: number;
  commands: string[];
  checkpoints: Record<string, string>;
}

export type Control =
  | { mode: "command"; command: string; speed_mps?: number }
  | { mode: "matrix"; matrix: number[] };

export interface StepRecord {
  step_index: number;
  control: Control;
  applied_transform: number[];
  predicted_transform: number[];
  payload: RlePayload;
}

export interface SessionState {
  session_id: string;
  rate_hz: number;
  steps_taken: number;
  observed: {
    payloads: RlePayload[];
    poses: number[][];
    plan: Record<string, unknown>;
  };
  history: StepRecord[];
  grid: { dims: number[]; num_classes: number; voxel_size_m: number };
}

export interface CreateSessionRequest {
  source?: "seed";
  seed?: number;
  command?: string;
  speed_mps?: number;
  checkpoints?: Record<string, string>;
}

export class ApiError extends Error {
  override name = "ApiError";

  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string
  ) {
    super(message);
  }
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export class SteerClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchFn;

  constructor(baseUrl: string, fetchFn?: FetchFn) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (exc) {
      throw new ApiError(0, "unreachable", `service unreachable: ${String(exc)}`);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    let parsed: unknown = null;
    try {
      parsed = await response.json();
    } catch {
      // fall through: non-JSON body handled below
    }
    if (!response.ok) {
      const err = (parsed as { error?: { code?: string; message?: string } })?.error;
      throw new ApiError(
        response.status,
        err?.code ?? "http_error",
        err?.message ?? `HTTP ${response.status}`
      );
    }
    if (parsed === null) {
      throw new ApiError(response.status, "bad_response", "expected a JSON body");
    }
    return parsed as T;
  }

  health(): Promise<{ status: string; sessions: number }> {
    return this.request("GET", "/health");
  }

  meta(): Promise<MetaResponse> {
    return this.request("GET", "/meta");
  }

  createSession(body: CreateSessionRequest = {}): Promise<SessionState> {
    return this.request("POST", "/sessions", { source: "seed", ...body });
  }

  step(sessionId: string, control: Control): Promise<StepRecord> {
    return this.request("POST", `/sessions/${sessionId}/step`, control);
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  deleteSession(sessionId: string): Promise<void> {
    return this.request("DELETE", `/sessions/${sessionId}`);
  }
}
