import { describe, expect, it } from "vitest";

import {
  composeYawTranslation,
  formatMatrix,
  identityMatrix,
  matrixMaxDiff,
  ORTHONORMAL_TOL,
  parseMatrixText,
  validateMatrixDraft,
} from "../src/matrix.js";

describe("validateMatrixDraft", () => {
  it("accepts the identity and exact rotations", () => {
    expect(validateMatrixDraft(identityMatrix()).ok).toBe(true);
    expect(validateMatrixDraft(composeYawTranslation(0.7, 3, -2)).ok).toBe(true);
    expect(validateMatrixDraft(composeYawTranslation(Math.PI, 0, 0, 1.5)).ok).toBe(
      true
    );
  });

  it("accepts rounding noise inside the tolerance", () => {
    const m = composeYawTranslation(0.33, 1, 2);
    const noisy = m.map((v, i) => (i % 5 === 0 ? v + 2e-4 : v));
    expect(validateMatrixDraft(noisy).ok).toBe(true);
  });

  it("rejects a scaled rotation block", () => {
    const m = composeYawTranslation(0.4, 1, 0);
    for (const i of [0, 1, 4, 5]) {
      m[i]! *= 1.1; // 10% stretch, far outside 1e-3
    }
    const check = validateMatrixDraft(m);
    expect(check.ok).toBe(false);
    if (!check.ok) {
      expect(check.message).toMatch(/orthonormal/);
    }
  });

  it("rejects shear, reflection, bad bottom row, and non-finite entries", () => {
    const shear = identityMatrix();
    shear[1] = 0.2;
    expect(validateMatrixDraft(shear).ok).toBe(false);

    const reflection = identityMatrix();
    reflection[0] = -1; // det -1, columns still orthonormal
    expect(validateMatrixDraft(reflection).ok).toBe(false);

    const badBottom = identityMatrix();
    badBottom[12] = 0.5;
    expect(validateMatrixDraft(badBottom).ok).toBe(false);

    const nan = identityMatrix();
    nan[3] = Number.NaN;
    expect(validateMatrixDraft(nan).ok).toBe(false);

    expect(validateMatrixDraft([1, 0, 0]).ok).toBe(false);
  });

  it("draws the line at the advertised tolerance", () => {
    const inside = identityMatrix();
    inside[0] = 1 + 0.4 * ORTHONORMAL_TOL;
    expect(validateMatrixDraft(inside).ok).toBe(true);
    const outside = identityMatrix();
    outside[0] = 1 + 20 * ORTHONORMAL_TOL;
    expect(validateMatrixDraft(outside).ok).toBe(false);
  });
});

describe("composeYawTranslation", () => {
  it("builds the row-major rigid transform for yaw about +z", () => {
    const yaw = Math.PI / 2;
    const m = composeYawTranslation(yaw, 2, -1);
    // first basis vector rotates onto +y
    expect(m[0]!).toBeCloseTo(0, 12);
    expect(m[4]!).toBeCloseTo(1, 12);
    expect(m[1]!).toBeCloseTo(-1, 12);
    expect(m[5]!).toBeCloseTo(0, 12);
    expect(m[3]).toBe(2);
    expect(m[7]).toBe(-1);
    expect(m.slice(12)).toEqual([0, 0, 0, 1]);
  });

  it("is the identity at yaw 0 with no offset", () => {
    expect(matrixMaxDiff(composeYawTranslation(0, 0, 0), identityMatrix())).toBe(0);
  });
});

describe("parseMatrixText", () => {
  it("round-trips through formatMatrix", () => {
    const m = composeYawTranslation(0.25, 1.5, -0.5);
    const parsed = parseMatrixText(formatMatrix(m, 8));
    expect(parsed.ok).toBe(true);
    if (parsed.ok) {
      expect(matrixMaxDiff(parsed.matrix, m)).toBeLessThan(1e-7);
    }
  });

  it("reports wrong counts and junk tokens", () => {
    expect(parseMatrixText("1 2 3").ok).toBe(false);
    const junk = identityMatrix().join(" ").replace("1", "one");
    expect(parseMatrixText(junk).ok).toBe(false);
  });

  it("accepts commas and newlines as separators", () => {
    const text = identityMatrix().join(", ");
    expect(parseMatrixText(text).ok).toBe(true);
  });
});
