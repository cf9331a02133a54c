/**
 * Wire types for the rating service API.
 *
 * These are the ONLY shapes the client ever receives. Grid cells carry a
 * cell id and an opaque image path and nothing else; ground truth
 * (real/generated, benign/malignant) never appears in any payload, and
 * validateGridPayload() enforces that at runtime.
 */

export type Realness = "real" | "generated";
export type ClassCall = "benign" | "malignant";

export interface SessionInfo {
  session_id: string;
  state: "open" | "locked";
  completed_experiments: number[];
  completed_count: number;
  total_experiments: number;
  next_experiment: number | null;
}

export interface GridCellPayload {
  cell_id: string;
  image: string;
}

export interface GridPayload {
  experiment_index: number;
  rows: number;
  cols: number;
  class_call_required: boolean;
  cells: GridCellPayload[];
}

export interface CellResponse {
  cell_id: string;
  realness: Realness;
  class_call?: ClassCall;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}

/** Ground-truth vocabulary that must never appear inside a grid payload. */
const FORBIDDEN_SUBSTRINGS = ["real", "generated", "benign", "malignant"];

const CELL_KEYS = new Set(["cell_id", "image"]);
const GRID_KEYS = new Set([
  "experiment_index",
  "rows",
  "cols",
  "class_call_required",
  "cells",
]);

/**
 * Assert a grid payload matches the blinded schema exactly: known keys
 * only, 36 cells, and no ground-truth vocabulary anywhere in the cell
 * fields. Throws on any violation.
 */
export function validateGridPayload(data: unknown): GridPayload {
  if (typeof data !== "object" || data === null) {
    throw new Error("grid payload is not an object");
  }
  const obj = data as Record<string, unknown>;
  for (const key of Object.keys(obj)) {
    if (!GRID_KEYS.has(key)) {
      throw new Error(`unexpected grid payload field: ${key}`);
    }
  }
  if (
    typeof obj.experiment_index !== "number" ||
    typeof obj.rows !== "number" ||
    typeof obj.cols !== "number" ||
    typeof obj.class_call_required !== "boolean" ||
    !Array.isArray(obj.cells)
  ) {
    throw new Error("grid payload has a malformed field");
  }
  if (obj.cells.length !== obj.rows * obj.cols) {
    throw new Error(
      `grid payload has ${obj.cells.length} cells for a ` +
        `${obj.rows}x${obj.cols} grid`,
    );
  }
  for (const cell of obj.cells) {
    if (typeof cell !== "object" || cell === null) {
      throw new Error("grid cell is not an object");
    }
    const c = cell as Record<string, unknown>;
    for (const key of Object.keys(c)) {
      if (!CELL_KEYS.has(key)) {
        throw new Error(`unexpected cell field: ${key}`);
      }
    }
    if (typeof c.cell_id !== "string" || typeof c.image !== "string") {
      throw new Error("grid cell has a malformed field");
    }
    const haystack = `${c.cell_id} ${c.image}`.toLowerCase();
    for (const word of FORBIDDEN_SUBSTRINGS) {
      if (haystack.includes(word)) {
        throw new Error(`cell fields leak ground-truth vocabulary: ${word}`);
      }
    }
  }
  return obj as unknown as GridPayload;
}
