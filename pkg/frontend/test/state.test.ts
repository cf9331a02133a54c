import { describe, expect, it } from "vitest";

import {
  StorageLike,
  clearMarks,
  fromPayload,
  isComplete,
  markCell,
  markedCount,
  restoreMarks,
  saveMarks,
  setView,
  toSubmission,
} from "../src/state.js";
import { GridPayload } from "../src/types.js";

function payload(classRequired: boolean, index = 1): GridPayload {
  return {
    experiment_index: index,
    rows: 6,
    cols: 6,
    class_call_required: classRequired,
    cells: Array.from({ length: 36 }, (_, i) => ({
      cell_id: `c${String(i + 1).padStart(2, "0")}`,
      image: `/images/${i.toString(16).padStart(16, "0")}.png`,
    })),
  };
}

class FakeStorage implements StorageLike {
  private map = new Map<string, string>();
  getItem(k: string) {
    return this.map.get(k) ?? null;
  }
  setItem(k: string, v: string) {
    this.map.set(k, v);
  }
  removeItem(k: string) {
    this.map.delete(k);
  }
}

describe("grid state", () => {
  it("loads 36 cells with no marks", () => {
    const state = fromPayload("sid", payload(false));
    expect(state.cells).toHaveLength(36);
    expect(markedCount(state)).toBe(0);
    expect(isComplete(state)).toBe(false);
  });

  it("all 36 realness marks enable submission", () => {
    let state = fromPayload("sid", payload(false));
    for (let i = 0; i < 35; i++) {
      state = markCell(state, state.cells[i].cellId, "realness", "real");
    }
    expect(isComplete(state)).toBe(false); // 35 marked: submit stays disabled
    state = markCell(state, state.cells[35].cellId, "realness", "generated");
    expect(isComplete(state)).toBe(true);
  });

  it("class experiments also need every class mark", () => {
    let state = fromPayload("sid", payload(true));
    for (const cell of state.cells) {
      state = markCell(state, cell.cellId, "realness", "real");
    }
    expect(isComplete(state)).toBe(false);
    for (const cell of state.cells) {
      state = markCell(state, cell.cellId, "class_call", "benign");
    }
    expect(isComplete(state)).toBe(true);
  });

  it("re-marking a cell keeps the latest value", () => {
    let state = fromPayload("sid", payload(false));
    state = markCell(state, "c01", "realness", "real");
    state = markCell(state, "c01", "realness", "generated");
    expect(state.cells[0].realness).toBe("generated");
  });

  it("rejects marks for unknown cells and disallowed dimensions", () => {
    const state = fromPayload("sid", payload(false));
    expect(() => markCell(state, "c99", "realness", "real")).toThrow("c99");
    expect(() => markCell(state, "c01", "class_call", "benign")).toThrow(
      "no benign/malignant call",
    );
  });

  it("builds the submission payload in cell order", () => {
    let state = fromPayload("sid", payload(true, 5));
    for (const cell of state.cells) {
      state = markCell(state, cell.cellId, "realness", "generated");
      state = markCell(state, cell.cellId, "class_call", "malignant");
    }
    const responses = toSubmission(state);
    expect(responses).toHaveLength(36);
    expect(responses[0]).toEqual({
      cell_id: "c01",
      realness: "generated",
      class_call: "malignant",
    });
  });

  it("refuses to build an incomplete submission", () => {
    const state = fromPayload("sid", payload(false));
    expect(() => toSubmission(state)).toThrow("incomplete");
  });

  it("omits class_call entirely outside class experiments", () => {
    let state = fromPayload("sid", payload(false, 2));
    for (const cell of state.cells) {
      state = markCell(state, cell.cellId, "realness", "real");
    }
    for (const r of toSubmission(state)) {
      expect("class_call" in r).toBe(false);
    }
  });
});

describe("zoom and pan", () => {
  it("never alter marks or the submission payload", () => {
    let state = fromPayload("sid", payload(false));
    for (const cell of state.cells) {
      state = markCell(state, cell.cellId, "realness", "real");
    }
    const before = JSON.stringify(toSubmission(state));
    state = setView(state, 8, -40, 25);
    expect(state.zoom).toBe(8);
    expect(JSON.stringify(toSubmission(state))).toBe(before);
    expect(state.cells.every((c) => c.realness === "real")).toBe(true);
  });

  it("clamps zoom to a sane range", () => {
    let state = fromPayload("sid", payload(false));
    state = setView(state, 0.01, 0, 0);
    expect(state.zoom).toBe(1);
    state = setView(state, 1e9, 0, 0);
    expect(state.zoom).toBe(16);
  });
});

describe("mark persistence", () => {
  it("marks survive a reload via storage", () => {
    const storage = new FakeStorage();
    let state = fromPayload("sid", payload(true, 7));
    state = markCell(state, "c03", "realness", "generated");
    state = markCell(state, "c03", "class_call", "malignant");
    saveMarks(state, storage);

    let reloaded = fromPayload("sid", payload(true, 7));
    reloaded = restoreMarks(reloaded, storage);
    expect(reloaded.cells[2].realness).toBe("generated");
    expect(reloaded.cells[2].classCall).toBe("malignant");
    expect(reloaded.cells[0].realness).toBeNull();
  });

  it("clearMarks removes the stored entry", () => {
    const storage = new FakeStorage();
    let state = fromPayload("sid", payload(false, 3));
    state = markCell(state, "c01", "realness", "real");
    saveMarks(state, storage);
    clearMarks(state, storage);
    const reloaded = restoreMarks(fromPayload("sid", payload(false, 3)), storage);
    expect(reloaded.cells[0].realness).toBeNull();
  });

  it("storage is scoped per session and experiment", () => {
    const storage = new FakeStorage();
    let state = fromPayload("sid-a", payload(false, 3));
    state = markCell(state, "c01", "realness", "real");
    saveMarks(state, storage);
    const other = restoreMarks(fromPayload("sid-b", payload(false, 3)), storage);
    expect(other.cells[0].realness).toBeNull();
    const otherExp = restoreMarks(fromPayload("sid-a", payload(false, 4)), storage);
    expect(otherExp.cells[0].realness).toBeNull();
  });
});
