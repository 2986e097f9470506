/** DOM wiring: connects the state machine and renderers to the page. */

import { ActionCode, ApiClient, ClassCode, CurveTable, TestName } from "./api.js";
import { nearestRow } from "./curves.js";
import {
  renderBanner,
  renderCurveReadout,
  renderCurveSvg,
  renderPending,
  renderSession,
} from "./render.js";
import {
  SessionScreenState,
  addAction,
  clearBanner,
  createSession,
  initialState,
  isLocked,
  loadSession,
  submitPending,
  undoAction,
} from "./state.js";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  if (fromQuery) {
    window.localStorage.setItem("cogproto-api", fromQuery);
    return fromQuery;
  }
  return window.localStorage.getItem("cogproto-api") ?? "http://127.0.0.1:8000";
}

function sessionIdFromHash(): string | null {
  const match = window.location.hash.match(/session=([A-Za-z0-9_-]+)/);
  return match ? match[1]! : null;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const client = new ApiClient(apiBase());
let state: SessionScreenState = initialState;
let curveCache: Partial<Record<TestName, CurveTable>> = {};

function redrawSession(): void {
  el("banner").innerHTML = renderBanner(state.banner);
  el("pending").innerHTML = renderPending(state.pending);
  el("session-view").innerHTML = state.session
    ? renderSession(state.session)
    : "<p>create a session to begin</p>";
  const locked = isLocked(state) || state.session === null;
  document
    .querySelectorAll<HTMLButtonElement>("#entry button")
    .forEach((button) => (button.disabled = locked && button.dataset.action !== undefined));
  if (state.session) {
    window.location.hash = `session=${state.session.id}`;
  }
}

async function redrawCurves(): Promise<void> {
  const test = (el<HTMLSelectElement>("curve-test").value || "A_m") as TestName;
  const slider = el<HTMLInputElement>("curve-slider");
  const delta = Number(slider.value);
  try {
    let table = curveCache[test];
    if (!table) {
      table = await client.getCurves(test, 0.01);
      curveCache[test] = table;
    }
    slider.max = String(table.max_score);
    const row = nearestRow(table.rows, delta);
    el("curve-plot").innerHTML = renderCurveSvg(table.rows, delta, table.max_score);
    el("curve-readout").innerHTML = renderCurveReadout(row);
  } catch (err) {
    el("curve-readout").innerHTML = renderBanner(`curves unavailable: ${String(err)}`);
  }
}

function wire(): void {
  el("new-session").addEventListener("click", async () => {
    const hypothesis = el<HTMLSelectElement>("hypothesis").value as ClassCode;
    state = await createSession(client, hypothesis, state);
    redrawSession();
  });

  document.querySelectorAll<HTMLButtonElement>("#entry button[data-action]").forEach((button) => {
    button.addEventListener("click", () => {
      state = addAction(state, button.dataset.action as ActionCode);
      redrawSession();
    });
  });

  el("undo").addEventListener("click", () => {
    state = undoAction(state);
    redrawSession();
  });

  el("submit").addEventListener("click", async () => {
    state = { ...state, submitting: true };
    redrawSession();
    state = await submitPending(client, state);
    redrawSession();
  });

  el("banner").addEventListener("click", (event) => {
    if ((event.target as HTMLElement).dataset.role === "retry") {
      state = clearBanner(state);
      redrawSession();
    }
  });

  el("curve-test").addEventListener("change", () => void redrawCurves());
  el("curve-slider").addEventListener("input", () => void redrawCurves());
}

async function start(): Promise<void> {
  wire();
  const existing = sessionIdFromHash();
  if (existing) {
    state = await loadSession(client, existing, state);
  }
  redrawSession();
  await redrawCurves();
}

void start();
