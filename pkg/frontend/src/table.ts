/**
 * Dashboard table model: turns the /v1/results payload into display rows
 * without touching the DOM, so the arithmetic is testable headless.
 */

import { ListenApi, OdgCell, ResultsPayload } from "./api.js";
import { ODG_GRADES } from "./flow.js";

export interface TableColumn {
  label: string;
  counts: number[]; // aligned with ODG_GRADES
  n: number;
  mean: number;
  std: number;
}

export interface DashboardModel {
  empty: boolean;
  nGrades: number;
  columns: TableColumn[];
  overall: TableColumn[];
}

function toColumn(label: string, cell: OdgCell): TableColumn {
  return {
    label,
    counts: ODG_GRADES.map((g) => cell.counts[String(g)] ?? 0),
    n: cell.n,
    mean: cell.mean,
    std: cell.std,
  };
}

export function buildDashboard(payload: ResultsPayload): DashboardModel {
  const columns = payload.rows.map((row) => toColumn(`${row.model} / ${row.dataset}`, row));
  const overall = payload.overall.map((row) => toColumn(row.model, row));
  return {
    empty: payload.n_grades === 0,
    nGrades: payload.n_grades,
    columns,
    overall,
  };
}

export async function fetchDashboard(api: ListenApi): Promise<DashboardModel> {
  return buildDashboard(await api.results());
}

/** Column count totals must equal n; used as a render-time sanity check. */
export function columnConsistent(col: TableColumn): boolean {
  return col.counts.reduce((a, b) => a + b, 0) === col.n;
}

export function formatMean(value: number): string {
  return value.toFixed(2);
}

/** Plain-text rendering, mirrored by the DOM renderer in main.ts. */
export function formatDashboard(model: DashboardModel): string {
  if (model.empty) return "No grades recorded yet.";
  const lines: string[] = [];
  const header = ["ODG".padEnd(10)].concat(model.columns.map((c) => c.label.padStart(20)));
  lines.push(header.join(""));
  ODG_GRADES.forEach((grade, i) => {
    const cells = model.columns.map((c) => String(c.counts[i]).padStart(20));
    lines.push(String(grade).padEnd(10) + cells.join(""));
  });
  lines.push("Mean".padEnd(10) + model.columns.map((c) => formatMean(c.mean).padStart(20)).join(""));
  lines.push("Std".padEnd(10) + model.columns.map((c) => formatMean(c.std).padStart(20)).join(""));
  for (const col of model.overall) {
    lines.push(`Overall ${col.label}: mean ${formatMean(col.mean)}, std ${formatMean(col.std)}, n ${col.n}`);
  }
  return lines.join("\n");
}
