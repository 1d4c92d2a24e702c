import { describe, expect, it } from "vitest";

import {
  chooseKey,
  control,
  editFormula,
  toggleExport,
  valueText,
  type ServerMessage,
} from "../src/protocol.js";
import {
  applyMessage,
  applyRaw,
  boundingBox,
  colToIndex,
  indexToCol,
  initialState,
  selectKey,
} from "../src/state.js";

const snapshot = (cells: Array<[string, number]>, seq = 0): ServerMessage => ({
  type: "snapshot",
  instance: null,
  seq,
  cells: cells.map(([addr, v]) => ({
    addr,
    formula: null,
    value: { t: "num", v },
    export: null,
  })),
});

const delta = (seq: number, changes: Array<[string, number]>): ServerMessage => ({
  type: "delta",
  seq,
  changes: changes.map(([addr, v]) => ({ addr, value: { t: "num", v } })),
});

describe("applyMessage", () => {
  it("snapshot replaces state, delta updates one cell", () => {
    let s = initialState();
    s = applyMessage(s, snapshot([["A1", 1], ["A2", 2], ["A3", 3]]));
    expect(s.cells.size).toBe(3);
    s = applyMessage(s, delta(1, [["A2", 20]]));
    expect(s.cells.get("A2")?.value).toEqual({ t: "num", v: 20 });
    expect(s.cells.get("A1")?.value).toEqual({ t: "num", v: 1 });
    expect(s.seq).toBe(1);
  });

  it("ignores deltas with stale sequence numbers", () => {
    let s = initialState();
    s = applyMessage(s, snapshot([["A1", 1]], 5));
    const before = s;
    s = applyMessage(s, delta(5, [["A1", 99]]));
    expect(s).toBe(before); // redelivery: no change at all
    s = applyMessage(s, delta(6, [["A1", 99]]));
    expect(s.cells.get("A1")?.value).toEqual({ t: "num", v: 99 });
  });

  it("snapshot resets the sequence", () => {
    let s = initialState();
    s = applyMessage(s, snapshot([["A1", 1]], 9));
    s = applyMessage(s, snapshot([["A1", 2]], 3));
    expect(s.seq).toBe(3);
    s = applyMessage(s, delta(4, [["A1", 5]]));
    expect(s.cells.get("A1")?.value).toEqual({ t: "num", v: 5 });
  });

  it("keys update preserves a still-present selection", () => {
    let s = initialState();
    s = applyMessage(s, { type: "keys", keys: ["ACME", "IBM"] });
    s = selectKey(s, "IBM");
    s = applyMessage(s, { type: "keys", keys: ["ACME", "IBM", "MSFT"] });
    expect(s.selectedKey).toBe("IBM");
    s = applyMessage(s, { type: "keys", keys: ["ACME", "MSFT"] });
    expect(s.selectedKey).toBeNull();
  });

  it("error messages surface without touching the grid", () => {
    let s = initialState();
    s = applyMessage(s, snapshot([["A1", 1]]));
    const cells = s.cells;
    s = applyMessage(s, { type: "error", msg: "cycle detected" });
    expect(s.lastError).toBe("cycle detected");
    expect(s.cells).toBe(cells);
  });

  it("delta preserves formula and export metadata", () => {
    let s = initialState();
    s = applyMessage(s, {
      type: "snapshot",
      instance: null,
      seq: 0,
      cells: [{ addr: "G3", formula: "=G2/G4", value: { t: "blank" }, export: "vwap" }],
    });
    s = applyMessage(s, delta(1, [["G3", 17.5]]));
    const g3 = s.cells.get("G3")!;
    expect(g3.formula).toBe("=G2/G4");
    expect(g3.exportName).toBe("vwap");
  });
});

describe("applyRaw", () => {
  it("drops garbage frames without state changes", () => {
    let s = initialState();
    s = applyMessage(s, snapshot([["A1", 1]]));
    expect(applyRaw(s, "{not json")).toBe(s);
    expect(applyRaw(s, JSON.stringify({ type: "mystery" }))).toBe(s);
  });
});

describe("value rendering", () => {
  it("renders scalars like the engine's own output formats", () => {
    expect(valueText({ t: "num", v: 17.5 })).toBe("17.5");
    expect(valueText({ t: "num", v: 2 })).toBe("2");
    expect(valueText({ t: "bool", v: true })).toBe("TRUE");
    expect(valueText({ t: "blank" })).toBe("");
    expect(valueText({ t: "err", v: "#DIV/0!" })).toBe("#DIV/0!");
  });

  it("renders window cells as a badge, not a scalar", () => {
    expect(valueText({ t: "win", v: { count: 3, sum: 42, min: 1, max: 20 } })).toBe(
      "3 values (Σ 42, min 1, max 20)",
    );
  });
});

describe("addresses and bounds", () => {
  it("column letters roundtrip", () => {
    expect(colToIndex("A")).toBe(1);
    expect(colToIndex("AA")).toBe(27);
    expect(indexToCol(27)).toBe("AA");
    for (const n of [1, 26, 27, 52, 703, 16384]) {
      expect(colToIndex(indexToCol(n))).toBe(n);
    }
  });

  it("bounding box covers all cells plus margin", () => {
    let s = initialState();
    s = applyMessage(s, snapshot([["B2", 1], ["D9", 2]]));
    expect(boundingBox(s, 1)).toEqual({ minCol: 1, maxCol: 5, minRow: 1, maxRow: 10 });
    expect(boundingBox(initialState())).toBeNull();
  });
});

describe("outbound builders", () => {
  it("each action is exactly one protocol message", () => {
    expect(editFormula("E3", "=SUM(A3:A22)")).toEqual({
      type: "set_formula",
      addr: "E3",
      formula: "=SUM(A3:A22)",
    });
    expect(toggleExport("G3", "isBargain", true)).toEqual({
      type: "mark_export",
      addr: "G3",
      name: "isBargain",
      on: true,
    });
    expect(chooseKey("ACME")).toEqual({ type: "select_instance", key: "ACME" });
    expect(control("step")).toEqual({ type: "control", action: "step" });
  });
});
