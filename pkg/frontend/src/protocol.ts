// Wire types for the sheetstream session protocol (one JSON message per frame).

export type Key = string | number;

export type Value =
  | { t: "num"; v: number }
  | { t: "text"; v: string }
  | { t: "bool"; v: boolean }
  | { t: "blank" }
  | { t: "err"; v: string }
  | { t: "win"; v: { count: number; sum: number; min: number; max: number } };

export interface SnapshotCell {
  addr: string;
  formula: string | null;
  value: Value;
  export: string | null;
}

export type ServerMessage =
  | { type: "snapshot"; instance: Key | null; seq: number; cells: SnapshotCell[] }
  | { type: "delta"; seq: number; changes: { addr: string; value: Value }[] }
  | { type: "keys"; keys: Key[] }
  | { type: "error"; msg: string };

export type ClientMessage =
  | { type: "set_formula"; addr: string; formula: string }
  | { type: "mark_export"; addr: string; name: string; on: boolean }
  | { type: "select_instance"; key: Key }
  | { type: "control"; action: "pause" | "resume" | "step" };

// Outbound builders: each UI action maps to exactly one message. The grid
// itself never changes optimistically; it only moves on snapshot/delta.

export function editFormula(addr: string, formula: string): ClientMessage {
  return { type: "set_formula", addr, formula };
}

export function toggleExport(addr: string, name: string, on: boolean): ClientMessage {
  return { type: "mark_export", addr, name, on };
}

export function chooseKey(key: Key): ClientMessage {
  return { type: "select_instance", key };
}

export function control(action: "pause" | "resume" | "step"): ClientMessage {
  return { type: "control", action };
}

export function valueText(v: Value): string {
  switch (v.t) {
    case "num":
      return String(v.v);
    case "text":
      return v.v;
    case "bool":
      return v.v ? "TRUE" : "FALSE";
    case "blank":
      return "";
    case "err":
      return v.v;
    case "win":
      // window cells are lists, not scalars: show the badge
      return `${v.v.count} values (Σ ${v.v.sum}, min ${v.v.min}, max ${v.v.max})`;
  }
}
