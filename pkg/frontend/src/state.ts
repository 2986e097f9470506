/**
 * Session-screen state machine.
 *
 * Pure data plus transition functions so the contract tests can drive the
 * whole flow without a DOM. The view is always derived from the last
 * session resource the service returned; entered-but-unsubmitted actions
 * live in `pending` and survive a failed submit.
 */

import { ActionCode, ApiClient, ApiError, ClassCode, SessionResource } from "./api.js";

export interface SessionScreenState {
  session: SessionResource | null;
  pending: ActionCode[];
  submitting: boolean;
  banner: string | null;
}

export const initialState: SessionScreenState = {
  session: null,
  pending: [],
  submitting: false,
  banner: null,
};

/** Input is locked once the protocol fired a stop condition. */
export function isLocked(state: SessionScreenState): boolean {
  return state.session !== null && state.session.stop.stopped;
}

export function addAction(state: SessionScreenState, code: ActionCode): SessionScreenState {
  if (isLocked(state) || state.submitting) {
    return state;
  }
  if (state.pending.includes("t")) {
    return state; // quitting ends the word; nothing may follow
  }
  return { ...state, pending: [...state.pending, code] };
}

export function undoAction(state: SessionScreenState): SessionScreenState {
  if (state.pending.length === 0 || state.submitting) {
    return state;
  }
  return { ...state, pending: state.pending.slice(0, -1) };
}

export function clearBanner(state: SessionScreenState): SessionScreenState {
  return { ...state, banner: null };
}

function failure(state: SessionScreenState, err: unknown): SessionScreenState {
  const message =
    err instanceof ApiError ? `${err.message} (${err.code})` : `unexpected error: ${String(err)}`;
  // keep pending actions: a failed submit must not lose entered data
  return { ...state, submitting: false, banner: message };
}

export async function createSession(
  client: ApiClient,
  hypothesis: ClassCode,
  state: SessionScreenState = initialState,
): Promise<SessionScreenState> {
  try {
    const session = await client.createSession(hypothesis);
    return { session, pending: [], submitting: false, banner: null };
  } catch (err) {
    return failure(state, err);
  }
}

export async function loadSession(
  client: ApiClient,
  id: string,
  state: SessionScreenState = initialState,
): Promise<SessionScreenState> {
  try {
    const session = await client.getSession(id);
    return { session, pending: [], submitting: false, banner: null };
  } catch (err) {
    return failure(state, err);
  }
}

export async function submitPending(
  client: ApiClient,
  state: SessionScreenState,
): Promise<SessionScreenState> {
  if (state.session === null || state.pending.length === 0 || isLocked(state)) {
    return state;
  }
  const word = state.pending.join("");
  try {
    const session = await client.postWord(state.session.id, word);
    return { session, pending: [], submitting: false, banner: null };
  } catch (err) {
    if (err instanceof ApiError && err.status === 409 && err.code === "session_stopped") {
      // refresh so the stop banner reflects the server's state
      try {
        const session = await client.getSession(state.session.id);
        return { ...state, session, submitting: false, banner: err.message };
      } catch {
        /* fall through to the generic failure path */
      }
    }
    return failure(state, err);
  }
}
