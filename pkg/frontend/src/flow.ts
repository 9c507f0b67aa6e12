/**
 * Grading-flow state machine, framework-free so it can run headless.
 *
 * Rules it enforces:
 *  - a grade can only be submitted after playback started at least once
 *  - exactly the five ODG grades are selectable
 *  - network failures keep local state so the action can be retried
 */

import { ApiError, ListenApi, NextPresentation, SessionInfo } from "./api.js";

export const ODG_GRADES = [0, -1, -2, -3, -4] as const;
export type OdgGrade = (typeof ODG_GRADES)[number];

export const ODG_LABELS: Record<OdgGrade, string> = {
  0: "Imperceptible",
  [-1]: "Perceptible, but not annoying",
  [-2]: "Slightly annoying",
  [-3]: "Annoying",
  [-4]: "Very annoying",
};

export type FlowPhase = "idle" | "grading" | "completed";

export interface FlowState {
  phase: FlowPhase;
  sessionId: string | null;
  graderId: string | null;
  total: number;
  graded: number;
  current: NextPresentation | null;
  playbackStarted: boolean;
  selectedGrade: OdgGrade | null;
  lastError: string | null;
}

export interface FlowDraft {
  sessionId: string;
  graderId: string;
}

export class GradingFlow {
  private state: FlowState = {
    phase: "idle",
    sessionId: null,
    graderId: null,
    total: 0,
    graded: 0,
    current: null,
    playbackStarted: false,
    selectedGrade: null,
    lastError: null,
  };

  private listeners: Array<(s: FlowState) => void> = [];

  constructor(private readonly api: ListenApi) {}

  getState(): FlowState {
    return { ...this.state };
  }

  onChange(listener: (s: FlowState) => void): void {
    this.listeners.push(listener);
  }

  private update(partial: Partial<FlowState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.getState());
  }

  /** Serializable pointer for resuming after a page refresh. */
  draft(): FlowDraft | null {
    if (!this.state.sessionId || !this.state.graderId) return null;
    return { sessionId: this.state.sessionId, graderId: this.state.graderId };
  }

  async start(graderId: string, seed?: number): Promise<void> {
    const info = await this.api.createSession(graderId, seed);
    this.adoptSession(info, graderId);
    await this.loadCurrent();
  }

  /** Resume an existing session, e.g. from a persisted draft. */
  async resume(draft: FlowDraft): Promise<void> {
    const info = await this.api.sessionInfo(draft.sessionId);
    this.adoptSession(info, draft.graderId);
    await this.loadCurrent();
  }

  private adoptSession(info: SessionInfo, graderId: string): void {
    this.update({
      phase: info.completed ? "completed" : "grading",
      sessionId: info.session_id,
      graderId,
      total: info.total,
      graded: info.position,
      lastError: null,
    });
  }

  async loadCurrent(): Promise<void> {
    if (!this.state.sessionId) throw new Error("no active session");
    try {
      const current = await this.api.nextPresentation(this.state.sessionId);
      if (current === null) {
        this.update({ phase: "completed", current: null, playbackStarted: false, selectedGrade: null });
        return;
      }
      this.update({
        phase: "grading",
        current,
        playbackStarted: false,
        selectedGrade: null,
        lastError: null,
      });
    } catch (err) {
      this.update({ lastError: describe(err) });
      throw err;
    }
  }

  markPlaybackStarted(): void {
    if (this.state.current) this.update({ playbackStarted: true });
  }

  selectGrade(grade: OdgGrade): void {
    if (!ODG_GRADES.includes(grade)) throw new Error(`invalid grade ${grade}`);
    this.update({ selectedGrade: grade });
  }

  get canSubmit(): boolean {
    return (
      this.state.phase === "grading" &&
      this.state.current !== null &&
      this.state.playbackStarted &&
      this.state.selectedGrade !== null
    );
  }

  /** Submit the selected grade and advance; keeps state on failure. */
  async submit(): Promise<void> {
    if (!this.canSubmit || !this.state.current || !this.state.sessionId) {
      throw new Error("grade entry is locked until playback starts and a grade is selected");
    }
    const { sessionId, current, selectedGrade } = this.state;
    try {
      const info = await this.api.submitGrade(sessionId, current.presentationId, selectedGrade!);
      this.update({ graded: info.position, lastError: null });
    } catch (err) {
      // Stale-cursor conflicts mean the server already advanced past this
      // clip (e.g. a retried request that actually landed); resync instead
      // of failing the session.
      if (err instanceof ApiError && err.status === 409) {
        const info = await this.api.sessionInfo(sessionId);
        this.update({ graded: info.position, lastError: err.code });
      } else {
        this.update({ lastError: describe(err) });
        throw err;
      }
    }
    await this.loadCurrent();
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}
