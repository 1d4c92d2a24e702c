"""Sheet-model documents: streams, bindings, formula cells, exports.

A model is declared in a `.sheet.json` file.  Loading is strict (unknown keys
are errors) and total: any input yields either a model or a list of
diagnostics, never a crash.  Models are immutable after load and safe to
share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from sheetstream.formula import (
    Binary,
    Call,
    CellAddr,
    Expr,
    FormulaError,
    NumberLit,
    RangeAddr,
    StreamAttrRef,
    Unary,
    format_addr,
    parse_addr,
    parse_formula,
    parse_range,
)

ATTR_TYPES = ("number", "text", "timestamp")
KEYABLE_TYPES = ("number", "text")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Diagnostic:
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


class ModelError(ValueError):
    """Raised by load_model; carries one Diagnostic per problem found."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class AttrDecl:
    name: str
    type: str  # one of ATTR_TYPES


@dataclass(frozen=True)
class SelectClause:
    attr: str
    value: str | float


@dataclass(frozen=True)
class StreamDecl:
    name: str
    attrs: tuple[AttrDecl, ...]
    ts_attr: str | None = None
    select: SelectClause | None = None
    partition_by: str | None = None

    def attr_index(self, name: str) -> int:
        for i, a in enumerate(self.attrs):
            if a.name == name:
                return i
        raise KeyError(name)

    def attr_type(self, name: str) -> str | None:
        for a in self.attrs:
            if a.name == name:
                return a.type
        return None


@dataclass(frozen=True)
class Binding:
    stream: str
    kind: str  # "scroll" | "latest"
    region: RangeAddr
    projection: tuple[str, ...]
    rows: int | None = None  # scroll only; equals region height


@dataclass(frozen=True)
class CellDef:
    addr: CellAddr
    source: str
    ast: Expr


@dataclass(frozen=True)
class ExportDecl:
    addr: CellAddr
    out_name: str


@dataclass
class SheetModel:
    streams: tuple[StreamDecl, ...] = ()
    bindings: tuple[Binding, ...] = ()
    cells: tuple[CellDef, ...] = ()
    exports: tuple[ExportDecl, ...] = ()

    @property
    def partitioned(self) -> bool:
        return any(s.partition_by is not None for s in self.streams)

    def stream(self, name: str) -> StreamDecl | None:
        for s in self.streams:
            if s.name == name:
                return s
        return None

    def cell(self, addr: CellAddr) -> CellDef | None:
        for c in self.cells:
            if c.addr == addr:
                return c
        return None


# --- loading ---------------------------------------------------------------


def _want(obj: dict, where: str, allowed: dict[str, bool], diags: list[Diagnostic]) -> bool:
    """Strict-mode key check; allowed maps key -> required. Returns False on problems."""
    ok = True
    for k in obj:
        if k not in allowed:
            diags.append(Diagnostic(where, f"unknown key {k!r}"))
            ok = False
    for k, required in allowed.items():
        if required and k not in obj:
            diags.append(Diagnostic(where, f"missing required key {k!r}"))
            ok = False
    return ok


def _ident(v: object, where: str, what: str, diags: list[Diagnostic]) -> str | None:
    if not isinstance(v, str) or not _IDENT_RE.fullmatch(v):
        diags.append(Diagnostic(where, f"{what} must be an identifier, got {v!r}"))
        return None
    return v


def _load_stream(i: int, raw: object, diags: list[Diagnostic]) -> StreamDecl | None:
    where = f"streams[{i}]"
    if not isinstance(raw, dict):
        diags.append(Diagnostic(where, "stream declaration must be an object"))
        return None
    keys = {"name": True, "attrs": True, "ts_attr": False, "select": False, "partition_by": False}
    if not _want(raw, where, keys, diags):
        return None
    name = _ident(raw["name"], where, "stream name", diags)
    attrs: list[AttrDecl] = []
    if not isinstance(raw["attrs"], list) or not raw["attrs"]:
        diags.append(Diagnostic(where, "attrs must be a non-empty array"))
        return None
    for j, a in enumerate(raw["attrs"]):
        aw = f"{where}.attrs[{j}]"
        if not isinstance(a, dict) or not _want(a, aw, {"name": True, "type": True}, diags):
            return None
        an = _ident(a["name"], aw, "attribute name", diags)
        if a["type"] not in ATTR_TYPES:
            diags.append(Diagnostic(aw, f"attribute type must be one of {ATTR_TYPES}, got {a['type']!r}"))
            return None
        if an is None:
            return None
        attrs.append(AttrDecl(an, a["type"]))
    ts_attr = raw.get("ts_attr")
    if ts_attr is not None and not isinstance(ts_attr, str):
        diags.append(Diagnostic(where, "ts_attr must be a string"))
        return None
    select = None
    if raw.get("select") is not None:
        sraw = raw["select"]
        sw = f"{where}.select"
        if not isinstance(sraw, dict) or not _want(sraw, sw, {"attr": True, "value": True}, diags):
            return None
        sval = sraw["value"]
        if isinstance(sval, bool) or not isinstance(sval, (str, int, float)):
            diags.append(Diagnostic(sw, "select value must be a string or number"))
            return None
        if not isinstance(sraw["attr"], str):
            diags.append(Diagnostic(sw, "select attr must be a string"))
            return None
        select = SelectClause(sraw["attr"], float(sval) if isinstance(sval, (int, float)) else sval)
    partition_by = raw.get("partition_by")
    if partition_by is not None and not isinstance(partition_by, str):
        diags.append(Diagnostic(where, "partition_by must be a string"))
        return None
    if name is None:
        return None
    return StreamDecl(name, tuple(attrs), ts_attr, select, partition_by)


def _load_binding(i: int, raw: object, diags: list[Diagnostic]) -> Binding | None:
    where = f"bindings[{i}]"
    if not isinstance(raw, dict):
        diags.append(Diagnostic(where, "binding must be an object"))
        return None
    if not isinstance(raw.get("kind"), str) or raw.get("kind") not in ("scroll", "latest"):
        diags.append(Diagnostic(where, "kind must be \"scroll\" or \"latest\""))
        return None
    kind = raw["kind"]
    keys = {"stream": True, "kind": True, "region": True, "projection": True}
    if kind == "scroll":
        keys["rows"] = True
    if not _want(raw, where, keys, diags):
        return None
    stream = _ident(raw["stream"], where, "stream", diags)
    if not isinstance(raw["region"], str):
        diags.append(Diagnostic(where, "region must be a string like \"A3:C22\""))
        return None
    try:
        region = parse_range(raw["region"])
    except FormulaError as err:
        diags.append(Diagnostic(f"{where}.region", err.message))
        return None
    proj_raw = raw["projection"]
    if not isinstance(proj_raw, list) or not all(isinstance(p, str) for p in proj_raw):
        diags.append(Diagnostic(where, "projection must be an array of attribute names"))
        return None
    rows = None
    if kind == "scroll":
        rows = raw["rows"]
        if not isinstance(rows, int) or isinstance(rows, bool) or rows < 1:
            diags.append(Diagnostic(where, "rows must be a positive integer"))
            return None
    if stream is None:
        return None
    return Binding(stream, kind, region, tuple(proj_raw), rows)


def _load_cell(i: int, raw: object, diags: list[Diagnostic]) -> CellDef | None:
    where = f"cells[{i}]"
    if not isinstance(raw, dict) or not _want(raw, where, {"addr": True, "formula": True}, diags):
        return None
    if not isinstance(raw["addr"], str):
        diags.append(Diagnostic(where, "addr must be a string"))
        return None
    try:
        addr = parse_addr(raw["addr"])
    except FormulaError as err:
        diags.append(Diagnostic(f"{where}.addr", err.message))
        return None
    src = raw["formula"]
    if not isinstance(src, str) or not src.startswith("="):
        diags.append(Diagnostic(f"{where}.formula", "formula text must start with '='"))
        return None
    try:
        ast = parse_formula(src)
    except FormulaError as err:
        diags.append(Diagnostic(f"cells[{raw['addr']}]", err.message))
        return None
    return CellDef(addr, src, ast)


def _load_export(i: int, raw: object, diags: list[Diagnostic]) -> ExportDecl | None:
    where = f"exports[{i}]"
    if not isinstance(raw, dict) or not _want(raw, where, {"addr": True, "name": True}, diags):
        return None
    if not isinstance(raw["addr"], str):
        diags.append(Diagnostic(where, "addr must be a string"))
        return None
    try:
        addr = parse_addr(raw["addr"])
    except FormulaError as err:
        diags.append(Diagnostic(f"{where}.addr", err.message))
        return None
    name = _ident(raw["name"], where, "export name", diags)
    if name is None:
        return None
    return ExportDecl(addr, name)


def load_model(document: str) -> SheetModel:
    """Parse and validate a model document; raises ModelError with diagnostics."""
    diags: list[Diagnostic] = []
    try:
        root = json.loads(document)
    except json.JSONDecodeError as err:
        raise ModelError([Diagnostic(f"line {err.lineno} col {err.colno}", err.msg)]) from None
    except (RecursionError, ValueError) as err:
        raise ModelError([Diagnostic("document", str(err))]) from None
    if not isinstance(root, dict):
        raise ModelError([Diagnostic("document", "top level must be a JSON object")])
    sections = {"streams": False, "bindings": False, "cells": False, "exports": False}
    _want(root, "document", sections, diags)

    streams: list[StreamDecl] = []
    bindings: list[Binding] = []
    cells: list[CellDef] = []
    exports: list[ExportDecl] = []
    for section, loader, out in (
        ("streams", _load_stream, streams),
        ("bindings", _load_binding, bindings),
        ("cells", _load_cell, cells),
        ("exports", _load_export, exports),
    ):
        raw = root.get(section, [])
        if not isinstance(raw, list):
            diags.append(Diagnostic(section, "must be an array"))
            continue
        for i, item in enumerate(raw):
            loaded = loader(i, item, diags)
            if loaded is not None:
                out.append(loaded)
    if diags:
        raise ModelError(diags)
    model = SheetModel(tuple(streams), tuple(bindings), tuple(cells), tuple(exports))
    diags = validate(model)
    if diags:
        raise ModelError(diags)
    return model


# --- validation ------------------------------------------------------------


def window_calls(expr: Expr) -> list[Call]:
    """WINDOW call sites in pre-order (the order engine assigns store ids)."""
    out = []
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Call):
            if node.fn == "WINDOW":
                out.append(node)
            stack.extend(reversed(node.args))
        elif isinstance(node, Unary):
            stack.append(node.operand)
        elif isinstance(node, Binary):
            stack.append(node.right)
            stack.append(node.left)
    return out


def partition_diagnostics(model: SheetModel) -> list[Diagnostic]:
    """Key-agreement rules: either no stream partitions, or all of them do,
    by one common key attribute (same name, same type)."""
    diags: list[Diagnostic] = []
    partitioned = [s for s in model.streams if s.partition_by is not None]
    if not partitioned:
        return diags
    missing = [s.name for s in model.streams if s.partition_by is None]
    if missing:
        have = ", ".join(s.name for s in partitioned)
        diags.append(
            Diagnostic(
                "streams",
                "partition key agreement: all streams must declare partition_by "
                f"(declared on {have}; missing on {', '.join(missing)})",
            )
        )
    key_names: dict[str, list[str]] = {}
    key_types: dict[str, list[str]] = {}
    for s in partitioned:
        key_names.setdefault(s.partition_by, []).append(s.name)
        t = s.attr_type(s.partition_by)
        if t is not None:
            key_types.setdefault(t, []).append(s.name)
    if len(key_names) > 1:
        desc = "; ".join(f"{s} partitions by {k}" for k, streams in sorted(key_names.items())
                         for s in streams)
        diags.append(Diagnostic("streams", f"partition keys disagree: {desc}"))
    if len(key_types) > 1:
        desc = "; ".join(f"{t} on {', '.join(names)}" for t, names in sorted(key_types.items()))
        diags.append(Diagnostic("streams", f"partition key types differ: {desc}"))
    return diags


def validate(model: SheetModel) -> list[Diagnostic]:
    """All structural invariants except formula-cell cycles (caught at engine build)."""
    diags: list[Diagnostic] = []

    seen_streams: set[str] = set()
    for s in model.streams:
        where = f"stream {s.name}"
        if s.name in seen_streams:
            diags.append(Diagnostic(where, "duplicate stream name"))
        seen_streams.add(s.name)
        seen_attrs: set[str] = set()
        for a in s.attrs:
            if a.name in seen_attrs:
                diags.append(Diagnostic(where, f"duplicate attribute {a.name!r}"))
            seen_attrs.add(a.name)
        if s.ts_attr is not None:
            t = s.attr_type(s.ts_attr)
            if t is None:
                diags.append(Diagnostic(where, f"ts_attr {s.ts_attr!r} is not a declared attribute"))
            elif t != "timestamp":
                diags.append(Diagnostic(where, f"ts_attr {s.ts_attr!r} must have type timestamp, has {t}"))
        if s.select is not None:
            t = s.attr_type(s.select.attr)
            if t is None:
                diags.append(Diagnostic(where, f"select attr {s.select.attr!r} is not a declared attribute"))
            elif t not in KEYABLE_TYPES:
                diags.append(Diagnostic(where, f"select attr {s.select.attr!r} must be number or text"))
            elif (t == "text") != isinstance(s.select.value, str):
                diags.append(Diagnostic(where, f"select value {s.select.value!r} does not match attr type {t}"))
        if s.partition_by is not None:
            t = s.attr_type(s.partition_by)
            if t is None:
                diags.append(Diagnostic(where, f"partition_by {s.partition_by!r} is not a declared attribute"))
            elif t not in KEYABLE_TYPES:
                diags.append(Diagnostic(where, f"partition key {s.partition_by!r} must be number or text"))
            if s.select is not None:
                diags.append(Diagnostic(where, "a stream may carry select or partition_by, not both"))

    formula_addrs: dict[CellAddr, CellDef] = {}
    for c in model.cells:
        if c.addr in formula_addrs:
            diags.append(Diagnostic(f"cells[{format_addr(c.addr)}]", "duplicate cell definition"))
        formula_addrs[c.addr] = c

    for i, b in enumerate(model.bindings):
        where = f"bindings[{i}] ({b.stream} -> {b.region.text()})"
        s = model.stream(b.stream)
        if s is None:
            diags.append(Diagnostic(where, f"unknown stream {b.stream!r}"))
        else:
            for p in b.projection:
                if s.attr_type(p) is None:
                    diags.append(Diagnostic(where, f"projected attribute {p!r} is not declared on {b.stream}"))
        if b.region.width != len(b.projection):
            diags.append(
                Diagnostic(where, f"region width {b.region.width} != projection length {len(b.projection)}")
            )
        if b.kind == "scroll" and b.region.height != b.rows:
            diags.append(Diagnostic(where, f"scroll region height {b.region.height} != rows {b.rows}"))
        if b.kind == "latest" and b.region.height != 1:
            diags.append(Diagnostic(where, f"latest region must be one row high, got {b.region.height}"))
        for j in range(i):
            if b.region.intersects(model.bindings[j].region):
                diags.append(
                    Diagnostic(where, f"overlapping bindings: intersects bindings[{j}] "
                                      f"({model.bindings[j].region.text()})")
                )
        for addr in formula_addrs:
            if b.region.contains(addr):
                diags.append(Diagnostic(where, f"formula cell {format_addr(addr)} lies inside bound region"))

    stream_names = {s.name for s in model.streams}
    for c in model.cells:
        where = f"cells[{format_addr(c.addr)}]"
        for call in window_calls(c.ast):
            ref = call.args[0]
            assert isinstance(ref, StreamAttrRef)
            s = model.stream(ref.stream)
            if ref.stream not in stream_names:
                diags.append(Diagnostic(where, f"WINDOW references unknown stream {ref.stream!r}"))
            elif s is not None:
                t = s.attr_type(ref.attr)
                if t is None:
                    diags.append(Diagnostic(where, f"WINDOW references unknown attribute {ref.stream}.{ref.attr}"))
                elif t != "number":
                    diags.append(Diagnostic(where, f"WINDOW attribute {ref.stream}.{ref.attr} must be number-typed"))
            span = call.args[1]
            if not isinstance(span, NumberLit) or span.value <= 0 or span.value != int(span.value):
                diags.append(Diagnostic(where, "WINDOW span must be a positive integer millisecond literal"))

    seen_names: set[str] = set()
    for e in model.exports:
        where = f"exports[{e.out_name}]"
        if e.out_name in seen_names:
            diags.append(Diagnostic(where, "duplicate export name"))
        seen_names.add(e.out_name)
        cell = formula_addrs.get(e.addr)
        bound = any(b.region.contains(e.addr) for b in model.bindings)
        if cell is None and not bound:
            diags.append(
                Diagnostic(where, f"export address {format_addr(e.addr)} is neither a formula cell nor stream-bound")
            )
        if cell is not None and isinstance(cell.ast, Call) and cell.ast.fn == "WINDOW":
            diags.append(Diagnostic(where, "window cells hold value lists and cannot be exported"))

    diags.extend(partition_diagnostics(model))
    return diags


# --- serialization ---------------------------------------------------------


def dump_model(model: SheetModel) -> str:
    """Serialize to the document format; load_model(dump_model(m)) == m."""
    doc: dict = {"streams": [], "bindings": [], "cells": [], "exports": []}
    for s in model.streams:
        raw: dict = {"name": s.name, "attrs": [{"name": a.name, "type": a.type} for a in s.attrs]}
        if s.ts_attr is not None:
            raw["ts_attr"] = s.ts_attr
        if s.select is not None:
            raw["select"] = {"attr": s.select.attr, "value": s.select.value}
        if s.partition_by is not None:
            raw["partition_by"] = s.partition_by
        doc["streams"].append(raw)
    for b in model.bindings:
        raw = {"stream": b.stream, "kind": b.kind, "region": b.region.text()}
        if b.kind == "scroll":
            raw["rows"] = b.rows
        raw["projection"] = list(b.projection)
        doc["bindings"].append(raw)
    for c in model.cells:
        doc["cells"].append({"addr": format_addr(c.addr), "formula": c.source})
    for e in model.exports:
        doc["exports"].append({"addr": format_addr(e.addr), "name": e.out_name})
    return json.dumps(doc, indent=2) + "\n"
