/**
 * Run-length coding of label grids, mirroring the service wire format.
 *
 * A payload is {"dims": [H, W, Z], "runs": [[value, count], ...]} where runs
 * walk the grid in row-major (x, y, z) order with z fastest. Decoding is
 * strict: every malformed payload throws instead of producing a grid that
 * silently disagrees with the server's.
 */

export interface RlePayload {
  dims: number[];
  runs: number[][];
}

/** Dense decoded grid; data is laid out with z fastest, matching the wire. */
export interface LabelGrid {
  dims: [number, number, number];
  data: Uint8Array;
}

export class RleError extends Error {
  override name = "RleError";
}

function asDims(raw: unknown): [number, number, number] {
  if (!Array.isArray(raw) || raw.length !== 3) {
    throw new RleError(`dims must hold 3 entries, got ${JSON.stringify(raw)}`);
  }
  const dims = raw.map((d) => Number(d));
  if (dims.some((d) => !Number.isInteger(d) || d < 1)) {
    throw new RleError(`bad dims ${JSON.stringify(raw)}`);
  }
  return dims as [number, number, number];
}

export function decodeRle(payload: RlePayload): LabelGrid {
  if (payload === null || typeof payload !== "object") {
    throw new RleError("payload must be an object");
  }
  const dims = asDims(payload.dims);
  const total = dims[0] * dims[1] * dims[2];
  if (!Array.isArray(payload.runs)) {
    throw new RleError("runs must be an array");
  }
  const data = new Uint8Array(total);
  let at = 0;
  for (const run of payload.runs) {
    if (!Array.isArray(run) || run.length !== 2) {
      throw new RleError(`bad run ${JSON.stringify(run)}`);
    }
    const value = Number(run[0]);
    const count = Number(run[1]);
    if (!Number.isInteger(value) || value < 0 || value > 255) {
      throw new RleError(`bad run value ${JSON.stringify(run)}`);
    }
    if (!Number.isInteger(count) || count < 1) {
      throw new RleError(`bad run count ${JSON.stringify(run)}`);
    }
    if (at + count > total) {
      throw new RleError(`runs cover more than ${total} cells`);
    }
    data.fill(value, at, at + count);
    at += count;
  }
  if (at !== total) {
    throw new RleError(`runs cover ${at} cells, grid has ${total}`);
  }
  return { dims, data };
}

export function encodeRle(grid: LabelGrid): RlePayload {
  const [h, w, z] = grid.dims;
  const total = h * w * z;
  if (total < 1 || grid.data.length !== total) {
    throw new RleError(
      `grid data holds ${grid.data.length} cells, dims say ${total}`
    );
  }
  const runs: number[][] = [];
  let value = grid.data[0]!;
  let count = 1;
  for (let i = 1; i < total; i++) {
    const v = grid.data[i]!;
    if (v === value) {
      count += 1;
    } else {
      runs.push([value, count]);
      value = v;
      count = 1;
    }
  }
  runs.push([value, count]);
  return { dims: [h, w, z], runs };
}

/** Flat index of voxel (x, y, z) in a grid's data array. */
export function voxelIndex(grid: LabelGrid, x: number, y: number, z: number): number {
  const [, w, depth] = grid.dims;
  return (x * w + y) * depth + z;
}
