/**
 * Grid view state: the rater's marks for one 6x6 experiment, plus zoom.
 *
 * Marks are revisable until submit and survive reloads via storage.
 * Zoom and pan are pure view concerns: they never touch the marks or the
 * submission payload.
 */

import {
  CellResponse,
  ClassCall,
  GridPayload,
  Realness,
} from "./types.js";

export interface CellView {
  cellId: string;
  image: string;
  realness: Realness | null;
  classCall: ClassCall | null;
}

export interface GridViewState {
  sessionId: string;
  experimentIndex: number;
  rows: number;
  cols: number;
  classCallRequired: boolean;
  cells: CellView[];
  zoom: number;
  panX: number;
  panY: number;
}

export function fromPayload(sessionId: string, payload: GridPayload): GridViewState {
  return {
    sessionId,
    experimentIndex: payload.experiment_index,
    rows: payload.rows,
    cols: payload.cols,
    classCallRequired: payload.class_call_required,
    cells: payload.cells.map((c) => ({
      cellId: c.cell_id,
      image: c.image,
      realness: null,
      classCall: null,
    })),
    zoom: 1,
    panX: 0,
    panY: 0,
  };
}

export type MarkDimension = "realness" | "class_call";

/** Record one mark; the latest value wins. Returns a new state. */
export function markCell(
  state: GridViewState,
  cellId: string,
  dimension: MarkDimension,
  value: Realness | ClassCall,
): GridViewState {
  const idx = state.cells.findIndex((c) => c.cellId === cellId);
  if (idx < 0) {
    throw new Error(`unknown cell ${cellId}`);
  }
  if (dimension === "class_call" && !state.classCallRequired) {
    throw new Error(
      `experiment ${state.experimentIndex} takes no benign/malignant call`,
    );
  }
  const cells = state.cells.slice();
  const cell = { ...cells[idx] };
  if (dimension === "realness") {
    cell.realness = value as Realness;
  } else {
    cell.classCall = value as ClassCall;
  }
  cells[idx] = cell;
  return { ...state, cells };
}

function cellComplete(state: GridViewState, cell: CellView): boolean {
  if (cell.realness === null) return false;
  if (state.classCallRequired && cell.classCall === null) return false;
  return true;
}

export function markedCount(state: GridViewState): number {
  return state.cells.filter((c) => cellComplete(state, c)).length;
}

/** Submit is allowed only when every cell has every requested mark. */
export function isComplete(state: GridViewState): boolean {
  return markedCount(state) === state.cells.length;
}

export function toSubmission(state: GridViewState): CellResponse[] {
  if (!isComplete(state)) {
    throw new Error(
      `grid incomplete: ${markedCount(state)}/${state.cells.length} cells marked`,
    );
  }
  return state.cells.map((c) => {
    const response: CellResponse = {
      cell_id: c.cellId,
      realness: c.realness as Realness,
    };
    if (state.classCallRequired) {
      response.class_call = c.classCall as ClassCall;
    }
    return response;
  });
}

export function setView(
  state: GridViewState,
  zoom: number,
  panX: number,
  panY: number,
): GridViewState {
  return { ...state, zoom: Math.min(Math.max(zoom, 1), 16), panX, panY };
}

// ---------------------------------------------------------------------------
// persistence: marks survive an accidental reload mid-experiment

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

function marksKey(state: GridViewState): string {
  return `noduleforge.marks.${state.sessionId}.${state.experimentIndex}`;
}

export function saveMarks(state: GridViewState, storage: StorageLike): void {
  const marks: Record<string, [Realness | null, ClassCall | null]> = {};
  for (const c of state.cells) {
    if (c.realness !== null || c.classCall !== null) {
      marks[c.cellId] = [c.realness, c.classCall];
    }
  }
  storage.setItem(marksKey(state), JSON.stringify(marks));
}

export function restoreMarks(
  state: GridViewState,
  storage: StorageLike,
): GridViewState {
  const raw = storage.getItem(marksKey(state));
  if (!raw) return state;
  let marks: Record<string, [Realness | null, ClassCall | null]>;
  try {
    marks = JSON.parse(raw);
  } catch {
    return state;
  }
  const cells = state.cells.map((c) => {
    const saved = marks[c.cellId];
    if (!saved) return c;
    return {
      ...c,
      realness: saved[0],
      classCall: state.classCallRequired ? saved[1] : null,
    };
  });
  return { ...state, cells };
}

export function clearMarks(state: GridViewState, storage: StorageLike): void {
  storage.removeItem(marksKey(state));
}
