/**
 * HTML rendering. Pure string builders so they are trivially testable;
 * app.ts wires events onto the produced DOM by delegation.
 */

import { GridViewState, isComplete, markedCount } from "./state.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function markButton(
  cellId: string,
  dimension: string,
  value: string,
  label: string,
  active: boolean,
): string {
  return (
    `<button type="button" class="mark${active ? " active" : ""}"` +
    ` data-cell="${esc(cellId)}" data-dim="${dimension}"` +
    ` data-value="${value}">${label}</button>`
  );
}

export function renderGrid(state: GridViewState, imageBase: string): string {
  const rows: string[] = [];
  for (let r = 0; r < state.rows; r++) {
    const cells: string[] = [];
    for (let c = 0; c < state.cols; c++) {
      const cell = state.cells[r * state.cols + c];
      const marks = [
        markButton(cell.cellId, "realness", "real", "R", cell.realness === "real"),
        markButton(
          cell.cellId,
          "realness",
          "generated",
          "G",
          cell.realness === "generated",
        ),
      ];
      if (state.classCallRequired) {
        marks.push(
          markButton(
            cell.cellId,
            "class_call",
            "benign",
            "B",
            cell.classCall === "benign",
          ),
          markButton(
            cell.cellId,
            "class_call",
            "malignant",
            "M",
            cell.classCall === "malignant",
          ),
        );
      }
      cells.push(
        `<div class="cell" data-cell="${esc(cell.cellId)}">` +
          `<img src="${esc(imageBase + cell.image)}" alt="${esc(cell.cellId)}"` +
          ` data-cell="${esc(cell.cellId)}" draggable="false">` +
          `<div class="marks">${marks.join("")}</div>` +
          `</div>`,
      );
    }
    rows.push(`<div class="grid-row">${cells.join("")}</div>`);
  }

  const total = state.cells.length;
  const done = markedCount(state);
  const hint = state.classCallRequired
    ? "mark each image R or G, and B or M"
    : "mark each image R or G";
  return (
    `<section class="experiment">` +
    `<header><h2>Experiment ${state.experimentIndex} of 18</h2>` +
    `<p class="hint">${hint}; click an image to zoom</p>` +
    `<p class="progress">${done}/${total} marked</p></header>` +
    `<div class="grid">${rows.join("")}</div>` +
    `<footer><button type="button" id="submit" ${
      isComplete(state) ? "" : "disabled "
    }>Submit experiment ${state.experimentIndex}</button></footer>` +
    `</section>`
  );
}

export function renderZoomOverlay(imageUrl: string, state: GridViewState): string {
  const transform = `scale(${state.zoom}) translate(${state.panX}px, ${state.panY}px)`;
  return (
    `<div class="overlay" id="overlay">` +
    `<div class="overlay-hint">wheel: zoom · drag: pan · esc/click outside: close</div>` +
    `<img src="${esc(imageUrl)}" style="transform: ${transform}" draggable="false">` +
    `</div>`
  );
}

export function renderCompletion(locked: boolean): string {
  return (
    `<section class="done"><h2>All 18 experiments submitted</h2>` +
    (locked
      ? `<p>Session locked. Thank you.</p>`
      : `<p>You can now lock the session to finalize your ratings.</p>` +
        `<button type="button" id="lock">Lock session</button>`) +
    `</section>`
  );
}

export function renderError(message: string): string {
  return `<div class="error" role="alert">${esc(message)}</div>`;
}

export function renderStartForm(defaults: {
  baseUrl: string;
  studyId: string;
}): string {
  return (
    `<section class="start"><h2>Nodule rating study</h2>` +
    `<form id="start-form">` +
    `<label>Service URL <input name="baseUrl" value="${esc(defaults.baseUrl)}"></label>` +
    `<label>Study id <input name="studyId" value="${esc(defaults.studyId)}"></label>` +
    `<label>Rater id <input name="raterId" placeholder="your id"></label>` +
    `<label>…or resume session <input name="sessionId" placeholder="session token"></label>` +
    `<button type="submit">Start</button>` +
    `</form></section>`
  );
}
