/**
 * Rigid-transform drafts for the matrix editor.
 *
 * A draft is 16 numbers, row-major 4x4. Before anything is sent to the
 * server the draft must pass the same shape the server enforces: finite
 * entries, bottom row (0, 0, 0, 1), and a proper orthonormal rotation block
 * (checked within ORTHONORMAL_TOL so hand-typed values survive rounding).
 */

export const ORTHONORMAL_TOL = 1e-3;

export type MatrixCheck =
  | { ok: true; matrix: number[] }
  | { ok: false; message: string };

export function identityMatrix(): number[] {
  return [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];
}

/**
 * Row-major rigid transform from a yaw about +z plus a translation, the
 * editor's "compose" helper for users who think in turn angle and offset.
 */
export function composeYawTranslation(
  yawRad: number,
  dx: number,
  dy: number,
  dz = 0
): number[] {
  const c = Math.cos(yawRad);
  const s = Math.sin(yawRad);
  return [c, -s, 0, dx, s, c, 0, dy, 0, 0, 1, dz, 0, 0, 0, 1];
}

export function validateMatrixDraft(
  values: readonly number[],
  tol = ORTHONORMAL_TOL
): MatrixCheck {
  if (values.length !== 16) {
    return { ok: false, message: `matrix needs 16 numbers, got ${values.length}` };
  }
  if (values.some((v) => typeof v !== "number" || !Number.isFinite(v))) {
    return { ok: false, message: "matrix entries must be finite numbers" };
  }
  const bottom = [values[12]!, values[13]!, values[14]!, values[15]!];
  const bottomTarget = [0, 0, 0, 1];
  for (let i = 0; i < 4; i++) {
    if (Math.abs(bottom[i]! - bottomTarget[i]!) > tol) {
      return { ok: false, message: "bottom row must be 0 0 0 1" };
    }
  }
  // R^T R == I within tol, entry by entry.
  const r = (i: number, j: number) => values[i * 4 + j]!;
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let dot = 0;
      for (let k = 0; k < 3; k++) {
        dot += r(k, i) * r(k, j);
      }
      const target = i === j ? 1 : 0;
      if (Math.abs(dot - target) > tol) {
        return {
          ok: false,
          message: `rotation block is not orthonormal (column ${i}.column ${j} = ${dot.toFixed(5)})`,
        };
      }
    }
  }
  const det =
    r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
    r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
    r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
  if (Math.abs(det - 1) > tol) {
    return { ok: false, message: `rotation block must have det 1, got ${det.toFixed(5)}` };
  }
  return { ok: true, matrix: [...values] };
}

/** Parse a whitespace/comma separated draft typed into the editor. */
export function parseMatrixText(text: string): MatrixCheck {
  const tokens = text.split(/[\s,;]+/).filter((t) => t.length > 0);
  if (tokens.length !== 16) {
    return { ok: false, message: `matrix needs 16 numbers, got ${tokens.length}` };
  }
  const values = tokens.map((t) => Number(t));
  if (values.some((v) => Number.isNaN(v))) {
    return { ok: false, message: "matrix entries must be numbers" };
  }
  return validateMatrixDraft(values);
}

export function formatMatrix(values: readonly number[], digits = 4): string {
  const rows: string[] = [];
  for (let i = 0; i < 4; i++) {
    rows.push(
      values
        .slice(i * 4, i * 4 + 4)
        .map((v) => Number(v.toFixed(digits)).toString())
        .join(" ")
    );
  }
  return rows.join("\n");
}

/** Max elementwise difference between two 16-entry matrices. */
export function matrixMaxDiff(a: readonly number[], b: readonly number[]): number {
  let worst = 0;
  for (let i = 0; i < 16; i++) {
    worst = Math.max(worst, Math.abs((a[i] ?? NaN) - (b[i] ?? NaN)));
  }
  return worst;
}
