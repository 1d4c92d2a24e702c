// Folding a recorded live-session log must land exactly on the server's
// final cell state. The fixture is produced by scripts/record_session.py
// against the bundled bargain-detector model and inputs.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import type { ServerMessage, Value } from "../src/protocol.js";
import { applyMessage, initialState } from "../src/state.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(readFileSync(join(here, "fixtures", "session_log.json"), "utf-8")) as {
  log: ServerMessage[];
  final: Record<string, Value>;
};

describe("session log fold", () => {
  it("fold(snapshot, deltas) equals the server's final state for every cell", () => {
    let state = initialState();
    for (const msg of fixture.log) {
      state = applyMessage(state, msg);
    }
    const finalAddrs = Object.keys(fixture.final);
    expect(finalAddrs.length).toBeGreaterThan(0);
    for (const addr of finalAddrs) {
      expect(state.cells.get(addr)?.value, `cell ${addr}`).toEqual(fixture.final[addr]);
    }
    // and nothing extra appeared
    expect([...state.cells.keys()].sort()).toEqual(finalAddrs.sort());
  });

  it("is insensitive to duplicated delta frames (idempotent redelivery)", () => {
    let state = initialState();
    for (const msg of fixture.log) {
      state = applyMessage(state, msg);
      if (msg.type === "delta") {
        state = applyMessage(state, msg); // deliver twice
      }
    }
    for (const addr of Object.keys(fixture.final)) {
      expect(state.cells.get(addr)?.value).toEqual(fixture.final[addr]);
    }
  });

  it("the log contains real replay traffic", () => {
    const kinds = new Set(fixture.log.map((m) => m.type));
    expect(kinds.has("snapshot")).toBe(true);
    expect(kinds.has("delta")).toBe(true);
  });
});
