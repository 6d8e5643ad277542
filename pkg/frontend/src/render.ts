/**
 * Raster projection of a decoded label grid for the BEV canvas.
 *
 * Two view modes: "bev" colors each (x, y) column by the class of its highest
 * occupied voxel (class 0 is free space, so an all-free column shows the
 * background class), and "slice" shows one z level verbatim. The projection
 * reads straight from the decoded grid, so the raster's class indices are
 * bit-exact against the payload the server sent.
 */

import { LabelGrid, voxelIndex } from "./rle.js";

export interface PaletteEntry {
  id: number;
  name: string;
  color: string;
}

export type ViewMode = { kind: "bev" } | { kind: "slice"; z: number };

/** Raster in grid coordinates: row = x, column = y. */
export interface BevRaster {
  width: number;
  height: number;
  /** Class id per pixel, row-major (row * width + col). */
  classes: Uint8Array;
  /** RGBA bytes per pixel, ready for ImageData. */
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

export class RenderError extends Error {
  override name = "RenderError";
}

export function parseHexColor(color: string): [number, number, number] {
  const m = /^#([0-9a-fA-F]{6})$/.exec(color);
  if (!m) {
    throw new RenderError(`expected #rrggbb color, got ${JSON.stringify(color)}`);
  }
  const v = parseInt(m[1]!, 16);
  return [(v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff];
}

/** Class id shown for one (x, y) column under the given view mode. */
export function projectColumn(
  grid: LabelGrid,
  x: number,
  y: number,
  mode: ViewMode
): number {
  const depth = grid.dims[2];
  if (mode.kind === "slice") {
    if (!Number.isInteger(mode.z) || mode.z < 0 || mode.z >= depth) {
      throw new RenderError(`slice z=${mode.z} outside [0, ${depth})`);
    }
    return grid.data[voxelIndex(grid, x, y, mode.z)]!;
  }
  const base = voxelIndex(grid, x, y, 0);
  for (let z = depth - 1; z >= 0; z--) {
    const cls = grid.data[base + z]!;
    if (cls !== 0) {
      return cls;
    }
  }
  return 0;
}

export function renderBev(
  grid: LabelGrid,
  palette: PaletteEntry[],
  mode: ViewMode = { kind: "bev" }
): BevRaster {
  const [h, w] = grid.dims;
  const colors = new Map<number, [number, number, number]>();
  for (const entry of palette) {
    colors.set(entry.id, parseHexColor(entry.color));
  }
  const classes = new Uint8Array(h * w);
  const rgba = new Uint8ClampedArray(h * w * 4);
  for (let x = 0; x < h; x++) {
    for (let y = 0; y < w; y++) {
      const cls = projectColumn(grid, x, y, mode);
      const rgb = colors.get(cls);
      if (rgb === undefined) {
        throw new RenderError(`class ${cls} has no palette entry`);
      }
      const pixel = x * w + y;
      classes[pixel] = cls;
      const o = pixel * 4;
      rgba[o] = rgb[0];
      rgba[o + 1] = rgb[1];
      rgba[o + 2] = rgb[2];
      rgba[o + 3] = 255;
    }
  }
  return { width: w, height: h, classes, rgba };
}
