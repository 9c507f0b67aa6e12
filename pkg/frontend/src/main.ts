/**
 * Browser entry point: wires the grading flow and the results dashboard
 * to the DOM. Keyboard keys 0-4 select the corresponding impairment
 * grade; a session draft persists in localStorage so a refresh resumes
 * at the server-side cursor.
 */

import { ListenApi } from "./api.js";
import { FlowDraft, FlowState, GradingFlow, ODG_GRADES, ODG_LABELS, OdgGrade } from "./flow.js";
import { buildDashboard, columnConsistent, formatMean } from "./table.js";

const DRAFT_KEY = "wavegap.session.draft";

const api = new ListenApi("");
const flow = new GradingFlow(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function saveDraft(): void {
  const draft = flow.draft();
  if (draft) localStorage.setItem(DRAFT_KEY, JSON.stringify(draft));
}

function clearDraft(): void {
  localStorage.removeItem(DRAFT_KEY);
}

function loadDraft(): FlowDraft | null {
  const raw = localStorage.getItem(DRAFT_KEY);
  if (!raw) return null;
  try {
    return JSON.parse(raw) as FlowDraft;
  } catch {
    return null;
  }
}

let currentAudioUrl: string | null = null;

function render(state: FlowState): void {
  el("start-view").hidden = state.phase !== "idle";
  el("grading-view").hidden = state.phase !== "grading";
  el("done-view").hidden = state.phase !== "completed";

  el("error-bar").textContent = state.lastError ?? "";
  el("error-bar").hidden = !state.lastError;

  if (state.phase === "grading" && state.current) {
    el("progress").textContent = `clip ${state.graded + 1} of ${state.total}`;
    const audio = el<HTMLAudioElement>("player");
    const url = URL.createObjectURL(new Blob([state.current.audio], { type: "audio/wav" }));
    if (audio.dataset.presentation !== state.current.presentationId) {
      if (currentAudioUrl) URL.revokeObjectURL(currentAudioUrl);
      currentAudioUrl = url;
      audio.src = url;
      audio.dataset.presentation = state.current.presentationId;
    } else {
      URL.revokeObjectURL(url);
    }
    for (const button of document.querySelectorAll<HTMLButtonElement>(".grade-button")) {
      const grade = Number(button.dataset.grade) as OdgGrade;
      button.disabled = !state.playbackStarted;
      button.classList.toggle("selected", state.selectedGrade === grade);
    }
    el<HTMLButtonElement>("submit-button").disabled = !flow.canSubmit;
    el("gate-hint").hidden = state.playbackStarted;
  }

  if (state.phase === "completed") {
    el("done-count").textContent = `${state.graded} of ${state.total} clips graded`;
    clearDraft();
  }
}

async function renderDashboard(): Promise<void> {
  const model = buildDashboard(await api.results());
  const host = el("dashboard");
  host.replaceChildren();
  if (model.empty) {
    const p = document.createElement("p");
    p.textContent = "No grades recorded yet.";
    host.appendChild(p);
    return;
  }
  const table = document.createElement("table");
  const head = table.insertRow();
  head.insertCell().textContent = "ODG";
  for (const col of model.columns) {
    if (!columnConsistent(col)) throw new Error(`inconsistent counts for ${col.label}`);
    head.insertCell().textContent = col.label;
  }
  ODG_GRADES.forEach((grade, i) => {
    const row = table.insertRow();
    row.insertCell().textContent = String(grade);
    for (const col of model.columns) row.insertCell().textContent = String(col.counts[i]);
  });
  for (const [label, value] of [
    ["Mean ODG", (c: typeof model.columns[number]) => formatMean(c.mean)],
    ["Std ODG", (c: typeof model.columns[number]) => formatMean(c.std)],
  ] as const) {
    const row = table.insertRow();
    row.insertCell().textContent = label;
    for (const col of model.columns) row.insertCell().textContent = value(col);
  }
  host.appendChild(table);
  const overall = document.createElement("p");
  overall.textContent = model.overall
    .map((c) => `Overall ${c.label}: mean ${formatMean(c.mean)} (std ${formatMean(c.std)}, n ${c.n})`)
    .join(" | ");
  host.appendChild(overall);
}

function buildGradeButtons(): void {
  const host = el("grade-buttons");
  for (const grade of ODG_GRADES) {
    const button = document.createElement("button");
    button.className = "grade-button";
    button.dataset.grade = String(grade);
    button.textContent = `${grade}  ${ODG_LABELS[grade]}`;
    button.disabled = true;
    button.addEventListener("click", () => flow.selectGrade(grade));
    host.appendChild(button);
  }
}

function wireEvents(): void {
  el<HTMLFormElement>("start-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    const grader = el<HTMLInputElement>("grader-id").value.trim();
    if (!grader) return;
    await flow.start(grader);
    saveDraft();
  });

  el<HTMLAudioElement>("player").addEventListener("play", () => flow.markPlaybackStarted());

  el<HTMLButtonElement>("submit-button").addEventListener("click", async () => {
    if (flow.canSubmit) await flow.submit();
  });

  document.addEventListener("keydown", (event) => {
    if (["0", "1", "2", "3", "4"].includes(event.key) && flow.getState().playbackStarted) {
      flow.selectGrade(-Number(event.key) as OdgGrade);
    }
  });

  el<HTMLButtonElement>("show-results").addEventListener("click", async () => {
    el("results-view").hidden = false;
    await renderDashboard();
  });
}

async function boot(): Promise<void> {
  buildGradeButtons();
  wireEvents();
  flow.onChange(render);
  const draft = loadDraft();
  if (draft) {
    try {
      await flow.resume(draft);
    } catch {
      clearDraft();
      render(flow.getState());
    }
  } else {
    render(flow.getState());
  }
}

boot().catch((err) => {
  el("error-bar").hidden = false;
  el("error-bar").textContent = String(err);
});
