/**
 * Typed client for the cogproto session service.
 *
 * The console never computes beliefs itself: every number it renders
 * comes out of these calls.
 */

export type ClassCode = "h" | "m" | "M";
export type TestName = "A_h" | "A_m" | "A_M";
export type ActionCode = "a" | "b" | "g" | "t";

export interface BeliefTriple {
  h: number;
  m: number;
  M: number;
  clamped?: boolean;
}

export interface StepResource {
  meta_state: TestName;
  word: string;
  delta: number;
  beliefs: BeliefTriple;
  chosen: ClassCode;
}

export interface StopResource {
  stopped: boolean;
  reason: "none" | "oscillation" | "max_tests" | "steady_state";
  detail: number[];
}

export interface SessionResource {
  id: string;
  hypothesis: ClassCode;
  current_test: TestName;
  steps: StepResource[];
  class_trace: ClassCode[];
  stop: StopResource;
  created: string;
  updated: string;
}

export interface CurveRow {
  delta: number;
  h: number;
  m: number;
  M: number;
}

export interface CurveTable {
  test: TestName;
  step: number;
  max_score: number;
  rows: CurveRow[];
}

export interface ModelsResource {
  classes: Record<ClassCode, { alpha: number; beta: number; gamma: number; theta: number }>;
  shape: { rounds: number; step_cap: number };
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail?: unknown,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, "unreachable", `service unreachable: ${String(err)}`);
  }
  const text = await response.text();
  let body: unknown = null;
  if (text) {
    try {
      body = JSON.parse(text);
    } catch {
      throw new ApiError(response.status, "bad_payload", "service returned invalid JSON");
    }
  }
  if (!response.ok) {
    const err = (body ?? {}) as { code?: string; message?: string; detail?: unknown };
    throw new ApiError(
      response.status,
      err.code ?? `http_${response.status}`,
      err.message ?? `request failed with status ${response.status}`,
      err.detail,
    );
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  createSession(hypothesis: ClassCode): Promise<SessionResource> {
    return request(this.url("/api/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ hypothesis }),
    });
  }

  getSession(id: string): Promise<SessionResource> {
    return request(this.url(`/api/sessions/${encodeURIComponent(id)}`));
  }

  postWord(id: string, actions: string): Promise<SessionResource> {
    return request(this.url(`/api/sessions/${encodeURIComponent(id)}/words`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ actions }),
    });
  }

  getCurves(test: TestName, step = 0.01): Promise<CurveTable> {
    return request(this.url(`/api/curves/${test}?step=${step}`));
  }

  getModels(): Promise<ModelsResource> {
    return request(this.url("/api/models"));
  }
}
