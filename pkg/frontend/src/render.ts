/**
 * HTML-string renderers for the console views.
 *
 * Kept free of DOM access so the contract tests can assert on the markup
 * the practitioner would see.
 */

import { ActionCode, BeliefTriple, CurveRow, SessionResource, StepResource } from "./api.js";
import { argmaxOf, argmaxRegions } from "./curves.js";

const CLASS_LABELS: Record<string, string> = {
  h: "healthy",
  m: "mild",
  M: "major",
};

const ACTION_LABELS: Record<ActionCode, string> = {
  a: "right pick",
  b: "wrong pick",
  g: "idle",
  t: "quit",
};

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function pct(value: number): string {
  return `${(value * 100).toFixed(1)}%`;
}

export function renderBeliefBars(beliefs: BeliefTriple): string {
  const winner = argmaxOf({ delta: 0, h: beliefs.h, m: beliefs.m, M: beliefs.M });
  const bars = (["h", "m", "M"] as const).map((code) => {
    const highlight = code === winner ? " argmax" : "";
    return `
      <div class="belief-row${highlight}" data-class="${code}">
        <span class="belief-label">${CLASS_LABELS[code]} (${code})</span>
        <span class="belief-bar"><span class="belief-fill" style="width:${pct(beliefs[code])}"></span></span>
        <span class="belief-value">${beliefs[code].toFixed(4)}</span>
      </div>`;
  });
  return `<div class="belief-bars">${bars.join("")}</div>`;
}

export function renderDeltaGauge(delta: number, maxScore = 10): string {
  const position = Math.min(Math.max(delta / maxScore, 0), 1);
  return `
    <div class="delta-gauge" data-delta="${delta}">
      <span class="delta-label">score ${delta.toFixed(3)} / ${maxScore}</span>
      <span class="delta-track"><span class="delta-needle" style="left:${pct(position)}"></span></span>
    </div>`;
}

export function renderTimeline(classTrace: string[]): string {
  const chips = classTrace
    .map((code, i) => `<span class="chip chip-${code}" data-index="${i}">${code}</span>`)
    .join("");
  return `<div class="timeline">${chips}</div>`;
}

export function renderStopBanner(stop: SessionResource["stop"]): string {
  if (!stop.stopped) {
    return "";
  }
  return `
    <div class="stop-banner" data-reason="${stop.reason}">
      Protocol stopped: <strong>${stop.reason.replace("_", " ")}</strong>.
      Input is locked.
    </div>`;
}

export function renderSuggestion(step: StepResource): string {
  const test = `A_${step.chosen}`;
  return `<div class="suggestion">suggested next test: <strong>${test}</strong> (${CLASS_LABELS[step.chosen]})</div>`;
}

export function renderStepReport(step: StepResource): string {
  return `
    <section class="step-report">
      <h3>test ${step.meta_state}, word <code>${esc(step.word)}</code></h3>
      ${renderDeltaGauge(step.delta)}
      ${renderBeliefBars(step.beliefs)}
      ${renderSuggestion(step)}
    </section>`;
}

export function renderPending(pending: ActionCode[]): string {
  const items = pending
    .map((code) => `<span class="pending-action">${ACTION_LABELS[code]} (${code})</span>`)
    .join("");
  return `<div class="pending" data-count="${pending.length}">${items || "<em>no actions entered</em>"}</div>`;
}

export function renderBanner(banner: string | null): string {
  if (banner === null) {
    return "";
  }
  return `<div class="error-banner" role="alert">${esc(banner)} <button data-role="retry">dismiss</button></div>`;
}

export function renderSession(session: SessionResource): string {
  const last = session.steps[session.steps.length - 1];
  return `
    <section class="session" data-id="${session.id}">
      <h2>current test: ${session.current_test}</h2>
      ${renderStopBanner(session.stop)}
      ${last ? renderStepReport(last) : "<p>no words recorded yet</p>"}
      ${renderTimeline(session.class_trace)}
    </section>`;
}

export function renderCurveReadout(row: CurveRow): string {
  const winner = argmaxOf(row);
  return `
    <div class="curve-readout" data-delta="${row.delta}">
      score ${row.delta.toFixed(3)}:
      h = ${row.h.toFixed(4)}, m = ${row.m.toFixed(4)}, M = ${row.M.toFixed(4)}
      <strong>(argmax ${winner})</strong>
    </div>`;
}

const CURVE_COLORS: Record<string, string> = { h: "#2e7d32", m: "#212121", M: "#6a1b9a" };

export function renderCurveSvg(
  rows: CurveRow[],
  sliderDelta: number,
  maxScore: number,
  width = 640,
  height = 240,
): string {
  if (rows.length === 0) {
    return "<svg></svg>";
  }
  const lines = (["h", "m", "M"] as const)
    .map((code) => {
      const points = rows
        .map((row) => {
          const x = (row.delta / maxScore) * width;
          const y = height - row[code] * height;
          return `${x.toFixed(2)},${y.toFixed(2)}`;
        })
        .join(" ");
      return `<polyline fill="none" stroke="${CURVE_COLORS[code]}" stroke-width="2" points="${points}" data-curve="${code}"/>`;
    })
    .join("");
  const boundaries = argmaxRegions(rows)
    .slice(1)
    .map((region) => {
      const x = ((region.from / maxScore) * width).toFixed(2);
      return `<line x1="${x}" y1="0" x2="${x}" y2="${height}" stroke="#bbb" stroke-dasharray="4 3" data-boundary="${region.winner}"/>`;
    })
    .join("");
  const sliderX = ((sliderDelta / maxScore) * width).toFixed(2);
  return `
    <svg viewBox="0 0 ${width} ${height}" class="curve-plot" role="img">
      ${boundaries}
      ${lines}
      <line x1="${sliderX}" y1="0" x2="${sliderX}" y2="${height}" stroke="#e53935" data-role="slider"/>
    </svg>`;
}
