/** Shared fetch stubbing for the contract tests. */

import { vi } from "vitest";
import { SessionResource } from "../src/api.js";

export interface StubRoute {
  method: string;
  path: RegExp;
  status: number;
  body: unknown;
}

/** Install a fetch stub dispatching on method + url; returns the call log. */
export function stubFetch(routes: StubRoute[]): Array<{ method: string; url: string; body: unknown }> {
  const calls: Array<{ method: string; url: string; body: unknown }> = [];
  vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    calls.push({
      method,
      url: String(url),
      body: init?.body ? JSON.parse(String(init.body)) : null,
    });
    const route = routes.find((r) => r.method === method && r.path.test(String(url)));
    if (!route) {
      throw new Error(`no stub for ${method} ${url}`);
    }
    return new Response(JSON.stringify(route.body), {
      status: route.status,
      headers: { "content-type": "application/json" },
    });
  });
  return calls;
}

export function freshSession(overrides: Partial<SessionResource> = {}): SessionResource {
  return {
    id: "s-test",
    hypothesis: "M",
    current_test: "A_M",
    steps: [],
    class_trace: [],
    stop: { stopped: false, reason: "none", detail: [] },
    created: "2024-05-01T10:00:00+00:00",
    updated: "2024-05-01T10:00:00+00:00",
    ...overrides,
  };
}

/** The resource the service returns after ten right picks at the major test. */
export function perfectRunAtMajor(): SessionResource {
  return freshSession({
    current_test: "A_h",
    steps: [
      {
        meta_state: "A_M",
        word: "aaaaaaaaaa",
        delta: 0.0,
        beliefs: { h: 0.750260106, m: 0.249739894, M: 0.0, clamped: false },
        chosen: "h",
      },
    ],
    class_trace: ["h"],
    updated: "2024-05-01T10:05:00+00:00",
  });
}
