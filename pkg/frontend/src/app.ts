/**
 * DOM wiring for the steering UI. All state transitions live in state.ts;
 * this file only reads inputs, calls the client, and repaints.
 */

import { ApiError, Control, MetaResponse, SteerClient } from "./client.js";
import {
  composeYawTranslation,
  formatMatrix,
  identityMatrix,
  parseMatrixText,
} from "./matrix.js";
import { PaletteEntry, renderBev, ViewMode } from "./render.js";
import {
  createViewState,
  currentFrame,
  loadSession,
  scrub,
  steerStep,
  ViewState,
} from "./state.js";

const FALLBACK_PALETTE: PaletteEntry[] = [
  { id: 0, name: "free", color: "#14181d" },
  { id: 1, name: "road", color: "#4a5058" },
  { id: 2, name: "building", color: "#8d6e63" },
  { id: 3, name: "car", color: "#42a5f5" },
  { id: 4, name: "truck", color: "#ef6c00" },
];

const BASE_URL_KEY = "steer-ui.base-url";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

class App {
  state: ViewState = createViewState();
  client: SteerClient | null = null;
  meta: MetaResponse | null = null;
  palette: PaletteEntry[] = FALLBACK_PALETTE;
  mode: ViewMode = { kind: "bev" };

  readonly baseUrlInput = el<HTMLInputElement>("base-url");
  readonly connectBtn = el<HTMLButtonElement>("connect");
  readonly metaLine = el<HTMLElement>("meta-line");
  readonly seedInput = el<HTMLInputElement>("seed");
  readonly newSessionBtn = el<HTMLButtonElement>("new-session");
  readonly sessionLine = el<HTMLElement>("session-line");
  readonly canvas = el<HTMLCanvasElement>("bev");
  readonly legend = el<HTMLElement>("legend");
  readonly viewSelect = el<HTMLSelectElement>("view-mode");
  readonly sliceRow = el<HTMLElement>("slice-row");
  readonly sliceInput = el<HTMLInputElement>("slice-z");
  readonly sliceLabel = el<HTMLElement>("slice-label");
  readonly speedInput = el<HTMLInputElement>("speed");
  readonly speedLabel = el<HTMLElement>("speed-label");
  readonly commandBtns = Array.from(
    document.querySelectorAll<HTMLButtonElement>("button[data-command]")
  );
  readonly matrixText = el<HTMLTextAreaElement>("matrix-text");
  readonly yawInput = el<HTMLInputElement>("yaw-deg");
  readonly dxInput = el<HTMLInputElement>("dx");
  readonly dyInput = el<HTMLInputElement>("dy");
  readonly composeBtn = el<HTMLButtonElement>("compose");
  readonly sendMatrixBtn = el<HTMLButtonElement>("send-matrix");
  readonly timeline = el<HTMLInputElement>("timeline");
  readonly frameLabel = el<HTMLElement>("frame-label");
  readonly noticeBox = el<HTMLElement>("notice");

  constructor() {
    this.baseUrlInput.value =
      localStorage.getItem(BASE_URL_KEY) ?? "http://127.0.0.1:8000";
    this.matrixText.value = formatMatrix(identityMatrix());
    this.connectBtn.addEventListener("click", () => void this.connect());
    this.newSessionBtn.addEventListener("click", () => void this.newSession());
    for (const btn of this.commandBtns) {
      btn.addEventListener("click", () =>
        void this.sendControl({
          mode: "command",
          command: btn.dataset.command!,
          speed_mps: Number(this.speedInput.value),
        })
      );
    }
    this.speedInput.addEventListener("input", () => {
      this.speedLabel.textContent = `${Number(this.speedInput.value).toFixed(1)} m/s`;
    });
    this.composeBtn.addEventListener("click", () => this.composeMatrix());
    this.sendMatrixBtn.addEventListener("click", () => void this.sendMatrixDraft());
    this.viewSelect.addEventListener("change", () => this.onViewModeChange());
    this.sliceInput.addEventListener("input", () => this.onViewModeChange());
    this.timeline.addEventListener("input", () => {
      scrub(this.state, Number(this.timeline.value));
      this.repaint();
    });
  }

  async connect(): Promise<void> {
    const base = this.baseUrlInput.value.trim();
    localStorage.setItem(BASE_URL_KEY, base);
    this.client = new SteerClient(base);
    try {
      this.meta = await this.client.meta();
    } catch (exc) {
      this.meta = null;
      this.showError(exc);
      return;
    }
    this.palette = this.meta.palette.length > 0 ? this.meta.palette : FALLBACK_PALETTE;
    const dims = this.meta.dims.join("x");
    this.metaLine.textContent =
      `grid ${dims}, ${this.meta.rate_hz} Hz, horizon ${this.meta.horizon}, ` +
      `checkpoints ${JSON.stringify(this.meta.checkpoints)}`;
    const depth = this.meta.dims[2] ?? 1;
    this.sliceInput.max = String(depth - 1);
    this.drawLegend();
    this.setNotice("connected", "info");
  }

  async newSession(): Promise<void> {
    if (!this.client) {
      this.setNotice("connect to a service first", "error");
      return;
    }
    const seed = Number(this.seedInput.value);
    try {
      const session = await this.client.createSession({
        seed: Number.isInteger(seed) ? seed : 0,
      });
      loadSession(this.state, session);
      this.sessionLine.textContent =
        `session ${session.session_id.slice(0, 8)}, ` +
        `${session.observed.payloads.length} observed frames`;
      this.repaint();
    } catch (exc) {
      this.showError(exc);
    }
  }

  async sendControl(control: Control): Promise<void> {
    if (!this.client) {
      this.setNotice("connect to a service first", "error");
      return;
    }
    this.setBusy(true);
    await steerStep(this.state, this.client, control);
    this.setBusy(false);
    this.repaint();
  }

  composeMatrix(): void {
    const yaw = (Number(this.yawInput.value) * Math.PI) / 180;
    const dx = Number(this.dxInput.value);
    const dy = Number(this.dyInput.value);
    this.matrixText.value = formatMatrix(composeYawTranslation(yaw, dx, dy), 6);
  }

  async sendMatrixDraft(): Promise<void> {
    const parsed = parseMatrixText(this.matrixText.value);
    if (!parsed.ok) {
      this.setNotice(`matrix rejected: ${parsed.message}`, "error");
      return;
    }
    await this.sendControl({ mode: "matrix", matrix: parsed.matrix });
  }

  onViewModeChange(): void {
    if (this.viewSelect.value === "slice") {
      this.mode = { kind: "slice", z: Number(this.sliceInput.value) };
      this.sliceRow.style.display = "";
      this.sliceLabel.textContent = `z = ${this.sliceInput.value}`;
    } else {
      this.mode = { kind: "bev" };
      this.sliceRow.style.display = "none";
    }
    this.repaint();
  }

  setBusy(busy: boolean): void {
    for (const btn of this.commandBtns) {
      btn.disabled = busy;
    }
    this.sendMatrixBtn.disabled = busy;
  }

  setNotice(text: string, level: "info" | "error"): void {
    this.noticeBox.textContent = text;
    this.noticeBox.className = `notice ${level}`;
  }

  showError(exc: unknown): void {
    if (exc instanceof ApiError) {
      this.setNotice(`${exc.code}: ${exc.message}`, "error");
    } else {
      this.setNotice(String(exc), "error");
    }
  }

  repaint(): void {
    const frame = currentFrame(this.state);
    this.timeline.max = String(Math.max(this.state.frames.length - 1, 0));
    this.timeline.value = String(Math.max(this.state.cursor, 0));
    if (this.state.notice) {
      this.setNotice(this.state.notice.text, this.state.notice.level);
    }
    if (!frame) {
      this.frameLabel.textContent = "no frames";
      return;
    }
    const tag =
      frame.kind === "observed" ? "observed" : `step ${frame.stepIndex}`;
    this.frameLabel.textContent =
      `frame ${this.state.cursor + 1}/${this.state.frames.length} (${tag})`;
    const raster = renderBev(frame.grid, this.palette, this.mode);
    const image = new ImageData(raster.rgba, raster.width, raster.height);
    const buffer = document.createElement("canvas");
    buffer.width = raster.width;
    buffer.height = raster.height;
    buffer.getContext("2d")!.putImageData(image, 0, 0);
    const scale = Math.max(
      1,
      Math.floor(
        Math.min(this.canvas.width / raster.width, this.canvas.height / raster.height)
      )
    );
    const ctx = this.canvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    ctx.fillStyle = "#0b0d10";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.drawImage(
      buffer,
      0,
      0,
      raster.width,
      raster.height,
      0,
      0,
      raster.width * scale,
      raster.height * scale
    );
  }

  drawLegend(): void {
    this.legend.replaceChildren(
      ...this.palette.map((entry) => {
        const item = document.createElement("span");
        item.className = "legend-item";
        const swatch = document.createElement("span");
        swatch.className = "swatch";
        swatch.style.background = entry.color;
        item.append(swatch, ` ${entry.name}`);
        return item;
      })
    );
  }
}

new App();
