"""Live session server: replay control plus a grid protocol over one websocket.

One owner task serializes every engine mutation (tuples and edits); websocket
handlers only exchange messages with it through queues, so a client edit can
never land mid-tuple.  Sessions start paused; clients drive them with
``control`` messages (pause/resume/step).

Protocol (JSON, one message per frame):
  server -> client:
    {"type":"snapshot","instance":key|null,"seq":n,"cells":[{addr,formula,value,export}]}
    {"type":"delta","seq":n,"changes":[{"addr":A,"value":V}]}
    {"type":"keys","keys":[...]}
    {"type":"error","msg":s}
  client -> server:
    {"type":"set_formula","addr":A,"formula":"=..."}
    {"type":"mark_export","addr":A,"name":s,"on":bool}
    {"type":"select_instance","key":K}
    {"type":"control","action":"pause"|"resume"|"step"}

Formula and export edits apply to the shared model, hence to every partition
instance at once; outcomes are identical across instances because the checks
are structural.  Edits are answered with fresh snapshots (deltas carry no
formula text); tuple propagation is answered with deltas.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse

from sheetstream.engine import EngineError, EngineInstance, build
from sheetstream.formula import format_addr, parse_addr
from sheetstream.io import open_inputs
from sheetstream.model import CellDef, ExportDecl, SheetModel, dump_model
from sheetstream.partition import PartitionManager, admit, normalize_key
from sheetstream.values import value_to_json

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>sheetstream</title></head>
<body>
<h1>sheetstream session</h1>
<p>No UI bundle found (set SHEETSTREAM_UI or build frontend/dist).
The websocket protocol is live at <code>/ws</code>.</p>
<pre id="log" style="font-family:monospace"></pre>
<script>
const log = document.getElementById("log");
const ws = new WebSocket(`ws://${location.host}/ws`);
ws.onmessage = (e) => { log.textContent += e.data + "\\n"; };
</script>
</body></html>
"""


_ALL = object()  # broadcast scope: every client regardless of selected key


@dataclass
class _Client:
    ws: WebSocket
    outbox: asyncio.Queue = field(default_factory=asyncio.Queue)
    selected: object = None  # partition key or None


class ServeSession:
    def __init__(self, model: SheetModel, records, replay_speed: float = 0.0,
                 max_partitions: int = 10_000):
        self.model = model
        self.records = iter(records)
        self.replay_speed = replay_speed
        self.partitioned = model.partitioned
        if self.partitioned:
            self.manager = PartitionManager(model, max_partitions)
            self.template = build(model)  # shown before any key exists
        else:
            self.manager = None
            self.template = build(model)
        self.streams = {s.name: s for s in model.streams}
        self.paused = True
        self.seq = 0
        self.commands: asyncio.Queue = asyncio.Queue()
        self.clients: dict[int, _Client] = {}
        self._next_client = 0
        self._cell_overlay: dict = {}
        self._export_overlay: dict = {}
        self._pending: object = None

    # -- model views -------------------------------------------------------

    def _instances(self) -> list[EngineInstance]:
        out = [self.template]
        if self.manager:
            out.extend(self.manager.instances.values())
        return out

    def _instance_for(self, key) -> EngineInstance:
        if key is None or self.manager is None:
            return self.template
        return self.manager.instances.get(key, self.template)

    def current_model(self) -> SheetModel:
        """The model with this session's edits folded in (printed on shutdown)."""
        cells = {c.addr: c for c in self.model.cells}
        cells.update(self._cell_overlay)
        exports = {e.addr: e for e in self.model.exports}
        exports.update(self._export_overlay)
        exports = {a: e for a, e in exports.items() if e is not None}
        return SheetModel(self.model.streams, self.model.bindings,
                          tuple(cells.values()), tuple(exports.values()))

    def snapshot_msg(self, key) -> dict:
        inst = self._instance_for(key)
        cells = [
            {
                "addr": format_addr(addr),
                "formula": src,
                "value": value_to_json(value),
                "export": export,
            }
            for addr, src, value, export in inst.visible_cells()
        ]
        return {"type": "snapshot", "instance": key, "seq": self.seq, "cells": cells}

    def keys_msg(self) -> dict:
        return {"type": "keys", "keys": list(self.manager.creation_order) if self.manager else []}

    # -- messaging ---------------------------------------------------------

    def _post(self, client: _Client, msg: dict) -> None:
        client.outbox.put_nowait(msg)

    def _broadcast(self, msg: dict, only_key=_ALL) -> None:
        for client in self.clients.values():
            if only_key is _ALL or client.selected == only_key:
                self._post(client, msg)

    def _broadcast_snapshots(self) -> None:
        for client in self.clients.values():
            self._post(client, self.snapshot_msg(client.selected))

    # -- command handling (owner task only) ---------------------------------

    async def handle_command(self, cid: int, msg: dict) -> None:
        client = self.clients.get(cid)
        if client is None:
            return
        kind = msg.get("type")
        if kind == "control":
            action = msg.get("action")
            if action == "pause":
                self.paused = True
            elif action == "resume":
                self.paused = False
            elif action == "step":
                self._apply_next_tuple()
            else:
                self._post(client, {"type": "error", "msg": f"unknown control action {action!r}"})
        elif kind == "set_formula":
            self._edit_formula(client, msg)
        elif kind == "mark_export":
            self._edit_export(client, msg)
        elif kind == "select_instance":
            key = msg.get("key")
            if key is not None and self.manager is not None:
                try:
                    key = normalize_key(key)
                except Exception:
                    self._post(client, {"type": "error", "msg": f"bad key {msg.get('key')!r}"})
                    return
                if key not in self.manager.instances:
                    self._post(client, {"type": "error", "msg": f"unknown instance key {key!r}"})
                    return
            client.selected = key if self.manager is not None else None
            self._post(client, self.snapshot_msg(client.selected))
        else:
            raise _ProtocolViolation(f"unknown message type {kind!r}")

    def _edit_formula(self, client: _Client, msg: dict) -> None:
        addr_text, formula = msg.get("addr"), msg.get("formula")
        if not isinstance(addr_text, str) or not isinstance(formula, str):
            raise _ProtocolViolation("set_formula needs string addr and formula")
        try:
            addr = parse_addr(addr_text)
            for inst in self._instances():
                inst.set_formula(addr, formula)
        except (EngineError, ValueError) as err:
            self._post(client, {"type": "error", "msg": str(err)})
            return
        cell = self.template._cells[(addr.col, addr.row)]
        self._cell_overlay[addr] = CellDef(addr, cell.source, cell.ast)
        self._broadcast_snapshots()

    def _edit_export(self, client: _Client, msg: dict) -> None:
        addr_text, name, on = msg.get("addr"), msg.get("name"), msg.get("on")
        if not isinstance(addr_text, str) or not isinstance(name, str) or not isinstance(on, bool):
            raise _ProtocolViolation("mark_export needs addr, name, on")
        try:
            addr = parse_addr(addr_text)
            for inst in self._instances():
                inst.set_export(addr, name, on)
        except (EngineError, ValueError) as err:
            self._post(client, {"type": "error", "msg": str(err)})
            return
        self._export_overlay[addr] = ExportDecl(addr, name) if on else None
        self._broadcast_snapshots()

    def _apply_next_tuple(self) -> bool:
        """Advance the replay by one input record; returns False at end of input."""
        rec = self._pending
        self._pending = None
        if rec is None:
            rec = next(self.records, None)
        if rec is None:
            self.paused = True
            return False
        decl = self.streams[rec.stream]
        if not admit(decl, list(rec.values)):
            return True
        if self.manager is not None:
            known = set(self.manager.instances)
            key, changes = self.manager.route(rec.stream, list(rec.values), rec.ts)
            if key not in known:
                self._broadcast(self.keys_msg())
        else:
            key = None
            changes = self.template.apply_tuple(rec.stream, list(rec.values), rec.ts)
        if changes.changed:
            self.seq += 1
            delta = {
                "type": "delta",
                "seq": self.seq,
                "changes": [
                    {"addr": format_addr(addr), "value": value_to_json(new)}
                    for addr, _old, new in changes.changed
                ],
            }
            self._broadcast(delta, only_key=key)
        return True

    def _peek_ts(self):
        if self._pending is None:
            self._pending = next(self.records, None)
        return None if self._pending is None else self._pending.ts

    # -- the owner loop ------------------------------------------------------

    async def owner(self) -> None:
        last_ts = None
        while True:
            # commands always win over replay progress
            while not self.commands.empty():
                cid, msg = self.commands.get_nowait()
                await self.handle_command(cid, msg)
            if self.paused:
                cid, msg = await self.commands.get()
                await self.handle_command(cid, msg)
                continue
            next_ts = self._peek_ts()
            if next_ts is None:
                self.paused = True
                continue
            if self.replay_speed > 0 and last_ts is not None and next_ts > last_ts:
                due = time.monotonic() + (next_ts - last_ts) / 1000.0 / self.replay_speed
                interrupted = False
                while (remaining := due - time.monotonic()) > 0:
                    try:
                        cid, msg = await asyncio.wait_for(self.commands.get(), timeout=remaining)
                    except asyncio.TimeoutError:
                        break
                    await self.handle_command(cid, msg)
                    if self.paused:
                        interrupted = True
                        break
                if interrupted:
                    continue
            self._apply_next_tuple()
            last_ts = next_ts
            await asyncio.sleep(0)  # let connection tasks breathe at full speed


class _ProtocolViolation(Exception):
    pass


def create_app(session: ServeSession, ui_dir: Path | None = None) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(_app):
        task = asyncio.create_task(session.owner())
        yield
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task

    app = FastAPI(lifespan=lifespan)

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        cid = session._next_client
        session._next_client += 1
        client = _Client(ws)
        session.clients[cid] = client
        sender = asyncio.create_task(_drain(client))
        try:
            session._post(client, session.snapshot_msg(client.selected))
            if session.partitioned:
                session._post(client, session.keys_msg())
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict) or "type" not in msg:
                        raise ValueError("not a protocol message")
                except ValueError as err:
                    raise _ProtocolViolation(str(err)) from None
                if msg["type"] in ("set_formula", "mark_export", "select_instance", "control"):
                    await session.commands.put((cid, msg))
                else:
                    raise _ProtocolViolation(f"unknown message type {msg['type']!r}")
        except (WebSocketDisconnect, _ProtocolViolation):
            pass
        finally:
            sender.cancel()
            session.clients.pop(cid, None)
            with contextlib.suppress(Exception):
                await ws.close()

    async def _drain(client: _Client) -> None:
        while True:
            msg = await client.outbox.get()
            await client.ws.send_text(json.dumps(msg))

    if ui_dir is not None and ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    else:

        @app.get("/")
        async def index() -> HTMLResponse:
            return HTMLResponse(_FALLBACK_PAGE)

    return app


def _find_ui_dir() -> Path | None:
    env = os.environ.get("SHEETSTREAM_UI")
    if env:
        return Path(env)
    local = Path("frontend") / "dist"
    return local if local.is_dir() else None


def serve_forever(model: SheetModel, config) -> None:
    """Blocking entry used by the CLI; prints the edited model on shutdown."""
    import socket

    import uvicorn

    records = open_inputs(model, config.inputs) if config.inputs else iter(())
    session = ServeSession(model, records, replay_speed=config.replay_speed,
                           max_partitions=config.max_partitions)
    app = create_app(session, ui_dir=_find_ui_dir())
    # probe the port first so "address in use" is a clean exit-2 OSError
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", config.port))
    try:
        uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")
    finally:
        print(dump_model(session.current_model()), end="")
