#!/usr/bin/env python3
"""Record a live session's message log plus the server's final cell state.

Drives the bundled bargain-detector through a websocket session (no browser):
steps through tuples, performs a formula edit and an export marking midway so
the log contains snapshots between deltas, then freezes everything to
frontend/tests/fixtures/session_log.json. The UI test suite folds the log
through its reducer and must land exactly on the recorded final state.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from sheetstream.formula import format_addr
from sheetstream.io import open_inputs
from sheetstream.model import load_model
from sheetstream.server import ServeSession, create_app
from sheetstream.values import value_to_json

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "frontend" / "tests" / "fixtures" / "session_log.json"


def main() -> None:
    model = load_model((ROOT / "fixtures" / "vwap.sheet.json").read_text())
    records = open_inputs(
        model,
        {"trades": ROOT / "fixtures" / "trades.csv", "quotes": ROOT / "fixtures" / "quotes.csv"},
    )
    session = ServeSession(model, records)
    log: list[dict] = []

    def until_snapshot(ws) -> None:
        """Read frames into the log up to the next snapshot (the sync barrier)."""
        while True:
            msg = ws.receive_json()
            log.append(msg)
            if msg["type"] == "snapshot":
                return

    def step(ws) -> None:
        # a dropped tuple yields no delta, so chase every step with a
        # select_instance round-trip, which always answers with a snapshot
        ws.send_json({"type": "control", "action": "step"})
        ws.send_json({"type": "select_instance", "key": None})
        until_snapshot(ws)

    with TestClient(create_app(session)) as tc, tc.websocket_connect("/ws") as ws:
        until_snapshot(ws)  # connect snapshot
        for _ in range(30):
            step(ws)
        ws.send_json({"type": "set_formula", "addr": "H1", "formula": "=COUNT(C3:C22)"})
        until_snapshot(ws)
        ws.send_json({"type": "mark_export", "addr": "H1", "name": "tradeCount", "on": True})
        until_snapshot(ws)
        for _ in range(25):
            step(ws)

        final = {
            format_addr(addr): value_to_json(value)
            for addr, _src, value, _export in session.template.visible_cells()
        }

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"log": log, "final": final}, indent=1) + "\n")
    print(f"wrote {len(log)} messages and {len(final)} final cells to {OUT}")


if __name__ == "__main__":
    main()
