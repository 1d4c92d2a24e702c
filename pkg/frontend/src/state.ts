// Grid state as a pure fold over server messages.
//
// The server is the single source of truth: rendering is a function of the
// state produced here, and the state only moves on snapshot/delta/keys.
// Deltas carry a session-monotonic seq; a snapshot resets it and any delta
// with seq <= current is a redelivery and must be ignored.

import type { Key, ServerMessage, SnapshotCell, Value } from "./protocol.js";

export interface CellState {
  value: Value;
  formula: string | null;
  exportName: string | null;
}

export interface GridState {
  cells: Map<string, CellState>;
  seq: number;
  instance: Key | null;
  keys: Key[];
  selectedKey: Key | null;
  lastError: string | null;
}

export function initialState(): GridState {
  return {
    cells: new Map(),
    seq: -1,
    instance: null,
    keys: [],
    selectedKey: null,
    lastError: null,
  };
}

function fromSnapshot(state: GridState, instance: Key | null, seq: number,
                      cells: SnapshotCell[]): GridState {
  const next = new Map<string, CellState>();
  for (const c of cells) {
    next.set(c.addr, { value: c.value, formula: c.formula, exportName: c.export });
  }
  return { ...state, cells: next, seq, instance, lastError: null };
}

export function applyMessage(state: GridState, msg: ServerMessage): GridState {
  switch (msg.type) {
    case "snapshot":
      return fromSnapshot(state, msg.instance, msg.seq, msg.cells);
    case "delta": {
      if (msg.seq <= state.seq) {
        return state; // idempotent redelivery
      }
      const cells = new Map(state.cells);
      for (const ch of msg.changes) {
        const prev = cells.get(ch.addr);
        cells.set(ch.addr, {
          value: ch.value,
          formula: prev?.formula ?? null,
          exportName: prev?.exportName ?? null,
        });
      }
      return { ...state, cells, seq: msg.seq };
    }
    case "keys": {
      const keys = [...msg.keys];
      const selectedKey =
        state.selectedKey !== null && keys.includes(state.selectedKey)
          ? state.selectedKey
          : null;
      return { ...state, keys, selectedKey };
    }
    case "error":
      return { ...state, lastError: msg.msg };
  }
}

export function selectKey(state: GridState, key: Key | null): GridState {
  return { ...state, selectedKey: key };
}

// A malformed frame is dropped with a console note; the grid must never move
// on garbage.
export function applyRaw(state: GridState, raw: string): GridState {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    console.warn("sheetstream: dropping unparseable frame", raw.slice(0, 80));
    return state;
  }
  if (
    typeof msg !== "object" || msg === null ||
    !["snapshot", "delta", "keys", "error"].includes((msg as { type?: string }).type ?? "")
  ) {
    console.warn("sheetstream: dropping unknown message", msg);
    return state;
  }
  return applyMessage(state, msg as ServerMessage);
}

export interface Bounds {
  minCol: number;
  maxCol: number;
  minRow: number;
  maxRow: number;
}

export function colToIndex(letters: string): number {
  let n = 0;
  for (const ch of letters) {
    n = n * 26 + (ch.charCodeAt(0) - 64);
  }
  return n;
}

export function indexToCol(n: number): string {
  let s = "";
  while (n > 0) {
    const r = (n - 1) % 26;
    s = String.fromCharCode(65 + r) + s;
    n = Math.floor((n - 1) / 26);
  }
  return s;
}

export function parseAddr(addr: string): { col: number; row: number } {
  const m = /^([A-Z]+)([0-9]+)$/.exec(addr);
  if (!m) {
    throw new Error(`bad address ${addr}`);
  }
  return { col: colToIndex(m[1]!), row: Number(m[2]!) };
}

// Only the model's bounding box (plus margin) is ever rendered; that is the
// whole virtualization story for sheet-sized models.
export function boundingBox(state: GridState, margin = 2): Bounds | null {
  if (state.cells.size === 0) {
    return null;
  }
  let minCol = Infinity, maxCol = 0, minRow = Infinity, maxRow = 0;
  for (const addr of state.cells.keys()) {
    const { col, row } = parseAddr(addr);
    minCol = Math.min(minCol, col);
    maxCol = Math.max(maxCol, col);
    minRow = Math.min(minRow, row);
    maxRow = Math.max(maxRow, row);
  }
  return {
    minCol: Math.max(1, minCol - margin),
    maxCol: maxCol + margin,
    minRow: Math.max(1, minRow - margin),
    maxRow: maxRow + margin,
  };
}
