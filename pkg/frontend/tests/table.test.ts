import { describe, expect, it } from "vitest";

import { ResultsPayload } from "../src/api.js";
import { buildDashboard, columnConsistent, formatDashboard } from "../src/table.js";

const cell = (counts: number[], n: number, mean: number, std = 0.5) => ({
  counts: Object.fromEntries([0, -1, -2, -3, -4].map((g, i) => [String(g), counts[i]])),
  n,
  mean,
  std,
  std_population: std,
});

describe("buildDashboard", () => {
  it("maps counts onto the grade axis in order", () => {
    const payload: ResultsPayload = {
      rows: [{ dataset: "PIANO", model: "wgan", ...cell([0, 1, 20, 29, 0], 50, -2.56) }],
      overall: [{ model: "wgan", ...cell([0, 1, 20, 29, 0], 50, -2.56) }],
      n_grades: 50,
    };
    const model = buildDashboard(payload);
    expect(model.empty).toBe(false);
    expect(model.columns[0].label).toBe("wgan / PIANO");
    expect(model.columns[0].counts).toEqual([0, 1, 20, 29, 0]);
    expect(columnConsistent(model.columns[0])).toBe(true);
    expect(model.overall[0].mean).toBeCloseTo(-2.56, 10);
  });

  it("flags inconsistent columns", () => {
    const broken = { dataset: "d", model: "m", ...cell([1, 0, 0, 0, 0], 2, -1) };
    const model = buildDashboard({ rows: [broken], overall: [], n_grades: 2 });
    expect(columnConsistent(model.columns[0])).toBe(false);
  });

  it("renders an empty state", () => {
    const model = buildDashboard({ rows: [], overall: [], n_grades: 0 });
    expect(model.empty).toBe(true);
    expect(formatDashboard(model)).toMatch(/No grades/);
  });

  it("renders counts, means, and overall rows as text", () => {
    const payload: ResultsPayload = {
      rows: [
        { dataset: "PIANO", model: "wgan", ...cell([0, 1, 20, 29, 0], 50, -2.56) },
        { dataset: "SOLO", model: "wgan", ...cell([0, 6, 16, 23, 5], 50, -2.54) },
      ],
      overall: [{ model: "wgan", ...cell([0, 7, 36, 52, 5], 100, -2.55) }],
      n_grades: 100,
    };
    const text = formatDashboard(buildDashboard(payload));
    expect(text).toContain("wgan / PIANO");
    expect(text).toContain("-2.56");
    expect(text).toContain("Overall wgan: mean -2.55");
  });
});
