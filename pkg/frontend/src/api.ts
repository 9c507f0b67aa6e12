/**
 * Typed client for the listening-test /v1 API.
 *
 * The fetch implementation is injectable so the grading flow and the
 * dashboard can be driven in tests (or from node) without a browser.
 */

export interface SessionInfo {
  session_id: string;
  grader_id: string;
  total: number;
  position: number;
  completed: boolean;
}

export interface OdgCell {
  counts: Record<string, number>;
  n: number;
  mean: number;
  std: number;
  std_population: number;
}

export interface OdgRow extends OdgCell {
  dataset: string;
  model: string;
}

export interface OverallRow extends OdgCell {
  model: string;
}

export interface ResultsPayload {
  rows: OdgRow[];
  overall: OverallRow[];
  n_grades: number;
}

export interface NextPresentation {
  presentationId: string;
  position: number;
  total: number;
  audio: ArrayBuffer;
}

export interface ApiErrorPayload {
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let code = "http_error";
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: ApiErrorPayload };
    if (body.error) {
      code = body.error.code;
      message = body.error.message;
    }
  } catch {
    /* non-JSON error body; keep the generic message */
  }
  throw new ApiError(resp.status, code, message);
}

export class ListenApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(graderId: string, seed?: number): Promise<SessionInfo> {
    const resp = await this.fetchImpl(this.url("/v1/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ grader_id: graderId, seed: seed ?? null }),
    });
    await raiseForStatus(resp);
    return (await resp.json()) as SessionInfo;
  }

  async sessionInfo(sessionId: string): Promise<SessionInfo> {
    const resp = await this.fetchImpl(this.url(`/v1/sessions/${sessionId}`));
    await raiseForStatus(resp);
    return (await resp.json()) as SessionInfo;
  }

  /** Returns null when the session is completed (end-of-session signal). */
  async nextPresentation(sessionId: string): Promise<NextPresentation | null> {
    const resp = await this.fetchImpl(this.url(`/v1/sessions/${sessionId}/next`));
    if (resp.status === 204) return null;
    await raiseForStatus(resp);
    return {
      presentationId: resp.headers.get("X-Presentation-Id") ?? "",
      position: Number(resp.headers.get("X-Position") ?? "0"),
      total: Number(resp.headers.get("X-Total") ?? "0"),
      audio: await resp.arrayBuffer(),
    };
  }

  async submitGrade(sessionId: string, presentationId: string, odg: number): Promise<SessionInfo> {
    const resp = await this.fetchImpl(this.url(`/v1/sessions/${sessionId}/grades`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ presentation_id: presentationId, odg }),
    });
    await raiseForStatus(resp);
    return (await resp.json()) as SessionInfo;
  }

  async results(groupBy = "dataset_model"): Promise<ResultsPayload> {
    const resp = await this.fetchImpl(this.url(`/v1/results?group_by=${groupBy}`));
    await raiseForStatus(resp);
    return (await resp.json()) as ResultsPayload;
  }
}
