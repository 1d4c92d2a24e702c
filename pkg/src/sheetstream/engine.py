"""Materialize a sheet model into a running instance.

The dependency graph is static (references are absolute, no INDIRECT-style
indirection), so the topological order and the per-stream recomputation lists
are fixed at build time.  Each arriving tuple triggers exactly one evaluation
pass over the formula cells transitively reachable from the cells it touched.

Formulas are compiled to closures over the instance's cell store; ranges are
resolved at build time to the defined cells they contain (everything else in
a range is permanently blank and cannot contribute).

Coercion rules, Excel-compatible unless noted:
  * arithmetic: Blank -> 0, TRUE/FALSE -> 1/0, Text -> #VALUE!
  * range aggregation skips Text/Bool/Blank; direct scalar arguments coerce
  * ordered comparisons need both sides in one family (number, text, bool)
    after Blank coerces to that family's zero; '='/'<>' never error, mixed
    families compare unequal
  * any Error operand propagates leftmost-first; IF evaluates only the
    selected branch once its condition is error-free
  * a window value consumed by anything but SUM/COUNT/AVERAGE/MIN/MAX is
    #VALUE!
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from sheetstream.formula import (
    Binary,
    BoolLit,
    Call,
    CellAddr,
    CellRef,
    Expr,
    FormulaError,
    NumberLit,
    RangeRef,
    StreamAttrRef,
    TextLit,
    Unary,
    format_addr,
    parse_addr,
    parse_formula,
    references,
)
from sheetstream.model import Binding, CellDef, Diagnostic, SheetModel, StreamDecl, window_calls
from sheetstream.values import (
    DIV0_ERROR,
    NA_ERROR,
    VALUE_ERROR,
    Error,
    WindowRef,
    values_equal,
)
from sheetstream.window import WindowSpec, WindowStore

Key = tuple[int, int]  # (col, row)

_isfinite = math.isfinite


class EngineError(ValueError):
    """Rejected engine operation; the instance is left unchanged."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


class BuildError(EngineError):
    pass


@dataclass
class ChangeSet:
    changed: list[tuple[CellAddr, object, object]] = field(default_factory=list)
    exports_changed: bool = False


def _key(addr: CellAddr) -> Key:
    return (addr.col, addr.row)


# --- value coercion helpers --------------------------------------------------


def _coerce_num(v):
    """float, or the Error to return."""
    if v is None:
        return 0.0
    t = type(v)
    if t is bool:
        return 1.0 if v else 0.0
    if t is Error:
        return v
    return VALUE_ERROR  # str, WindowRef


def _coerce_bool(v):
    """bool, or the Error to return (IF/AND/OR/NOT condition rule)."""
    t = type(v)
    if t is bool:
        return v
    if t is float:
        return v != 0.0
    if v is None:
        return False
    if t is Error:
        return v
    return VALUE_ERROR  # str, WindowRef


def _num_result(x: float):
    return x if _isfinite(x) else VALUE_ERROR


def _equal(a, b) -> bool:
    """'=' semantics: same family compares by value; Blank is 0 / "" / FALSE;
    different families are unequal."""
    ta, tb = type(a), type(b)
    if ta is tb:
        return a == b
    if a is None:
        return b == 0.0 if tb is float else b == "" if tb is str else b is False if tb is bool else False
    if b is None:
        return _equal(b, a)
    return False


def _ordered(op: str, a, b):
    """'<' family; returns bool or Error."""
    ta, tb = type(a), type(b)
    if a is None:
        a, ta = (0.0, float) if tb is float else ("", str) if tb is str else (False, bool) if tb is bool else (0.0, float)
    if b is None:
        b, tb = (0.0, float) if ta is float else ("", str) if ta is str else (False, bool)
    if ta is not tb:
        return VALUE_ERROR
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


# --- compilation -------------------------------------------------------------

_AGGREGATORS = ("SUM", "COUNT", "AVERAGE", "MIN", "MAX")


class _Compiler:
    """Compiles one cell's AST to a zero-argument closure over the instance state."""

    def __init__(self, instance: "EngineInstance", cell_key: Key):
        self.instance = instance
        self.cell_key = cell_key
        self.window_ordinal = 0

    def range_members(self, rng) -> list[tuple[int, Key]]:
        return self.instance._range_members(rng)

    def compile(self, e: Expr):
        store = self.instance._store
        if isinstance(e, NumberLit):
            v = e.value
            return lambda: v
        if isinstance(e, TextLit):
            v = e.value
            return lambda: v
        if isinstance(e, BoolLit):
            v = e.value
            return lambda: v
        if isinstance(e, CellRef):
            k = _key(e.addr)
            return lambda: store.get(k)
        if isinstance(e, RangeRef):
            # bare ranges are only meaningful inside aggregators/MATCH,
            # which special-case them before reaching here
            return lambda: VALUE_ERROR
        if isinstance(e, StreamAttrRef):
            return lambda: VALUE_ERROR  # parser confines these to WINDOW
        if isinstance(e, Unary):
            f = self.compile(e.operand)

            def neg():
                v = f()
                if type(v) is not float:
                    v = _coerce_num(v)
                    if type(v) is not float:
                        return v
                return -v

            return neg
        if isinstance(e, Binary):
            return self.compile_binary(e)
        if isinstance(e, Call):
            return self.compile_call(e)
        raise TypeError(f"not an Expr: {e!r}")

    def compile_binary(self, e: Binary):
        lf, rf = self.compile(e.left), self.compile(e.right)
        op = e.op
        if op in ("+", "-", "*", "/", "^"):

            def arith():
                a = lf()
                if type(a) is not float:
                    a = _coerce_num(a)
                    if type(a) is not float:
                        return a
                b = rf()
                if type(b) is not float:
                    b = _coerce_num(b)
                    if type(b) is not float:
                        return b
                if op == "+":
                    return _num_result(a + b)
                if op == "-":
                    return _num_result(a - b)
                if op == "*":
                    return _num_result(a * b)
                if op == "/":
                    if b == 0.0:
                        return DIV0_ERROR
                    return _num_result(a / b)
                try:
                    r = a**b
                except OverflowError:
                    return VALUE_ERROR
                except ZeroDivisionError:
                    return DIV0_ERROR
                if type(r) is complex or math.isnan(r):
                    return VALUE_ERROR  # fractional power of a negative number
                return _num_result(r)

            return arith

        def cmp():
            a = lf()
            if type(a) is Error:
                return a
            b = rf()
            if type(b) is Error:
                return b
            if type(a) is WindowRef or type(b) is WindowRef:
                return VALUE_ERROR
            if op == "=":
                return _equal(a, b)
            if op == "<>":
                return not _equal(a, b)
            return _ordered(op, a, b)

        return cmp

    def compile_call(self, e: Call):
        fn = e.fn
        if fn in _AGGREGATORS:
            return self.compile_aggregate(fn, e.args)
        if fn == "IF":
            cf = self.compile(e.args[0])
            tf = self.compile(e.args[1])
            ff = self.compile(e.args[2])

            def if_():
                c = _coerce_bool(cf())
                if type(c) is not bool:
                    return c
                return tf() if c else ff()

            return if_
        if fn in ("AND", "OR"):
            fns = [self.compile(a) for a in e.args]
            want = fn == "OR"  # short-circuit value

            def logic():
                vals = [f() for f in fns]
                for v in vals:
                    if type(v) is Error:
                        return v
                for v in vals:
                    b = _coerce_bool(v)
                    if type(b) is not bool:
                        return b
                    if b is want:
                        return want
                return not want

            return logic
        if fn == "NOT":
            f = self.compile(e.args[0])

            def not_():
                b = _coerce_bool(f())
                if type(b) is not bool:
                    return b
                return not b

            return not_
        if fn == "ABS":
            f = self.compile(e.args[0])

            def abs_():
                v = f()
                if type(v) is not float:
                    v = _coerce_num(v)
                    if type(v) is not float:
                        return v
                return abs(v)

            return abs_
        if fn == "MATCH":
            return self.compile_match(e.args)
        if fn == "WINDOW":
            ref = e.args[0]
            span = e.args[1]
            assert isinstance(ref, StreamAttrRef) and isinstance(span, NumberLit)
            wid = (self.cell_key, self.window_ordinal)
            self.window_ordinal += 1
            spec = WindowSpec(ref.stream, ref.attr, int(span.value))
            self.instance._register_window(wid, spec)
            windows = self.instance.windows
            return lambda: windows[wid].summary()
        raise AssertionError(f"unreachable: unknown function {fn}")

    def compile_match(self, args):
        store = self.instance._store
        vf = self.compile(args[0])
        rng_arg = args[1]
        if isinstance(rng_arg, RangeRef):
            members = self.range_members(rng_arg.rng)
        elif isinstance(rng_arg, CellRef):
            members = [(1, _key(rng_arg.addr))]
        else:
            return lambda: VALUE_ERROR

        def match():
            target = vf()
            tt = type(target)
            if tt is Error:
                return target
            if tt is WindowRef:
                return VALUE_ERROR
            for pos, k in members:
                v = store.get(k)
                if type(v) is Error:
                    return v
                if type(v) is WindowRef:
                    return VALUE_ERROR  # windows only flow into aggregators
                if v is None:
                    continue
                if type(v) is tt and v == target:
                    return float(pos)
            return NA_ERROR

        return match

    def compile_aggregate(self, fn: str, args):
        store = self.instance._store
        # hot path: single-range aggregate over the member list
        if len(args) == 1 and isinstance(args[0], RangeRef):
            keys = [k for _, k in self.range_members(args[0].rng)]
            if fn == "SUM":

                def sum_():
                    acc = 0.0
                    for k in keys:
                        v = store.get(k)
                        if type(v) is float:
                            acc += v
                        elif type(v) is Error:
                            return v
                        elif type(v) is WindowRef and v.count:
                            acc += v.total
                    return _num_result(acc)

                return sum_
            if fn == "COUNT":

                def count_():
                    n = 0
                    for k in keys:
                        v = store.get(k)
                        if type(v) is float:
                            n += 1
                        elif type(v) is Error:
                            return v
                        elif type(v) is WindowRef:
                            n += v.count
                    return float(n)

                return count_

        arg_fns = []
        for a in args:
            if isinstance(a, RangeRef):
                arg_fns.append(("ref", self.range_members(a.rng)))
            elif isinstance(a, CellRef):
                arg_fns.append(("ref", [(1, _key(a.addr))]))
            else:
                arg_fns.append(("scalar", self.compile(a)))

        def gather():
            """-> (numbers, window summaries) or Error."""
            nums: list[float] = []
            wins: list[WindowRef] = []
            for kind, payload in arg_fns:
                if kind == "ref":
                    for _, k in payload:
                        v = store.get(k)
                        t = type(v)
                        if t is float:
                            nums.append(v)
                        elif t is Error:
                            return v
                        elif t is WindowRef:
                            wins.append(v)
                else:
                    v = payload()
                    t = type(v)
                    if t is float:
                        nums.append(v)
                    elif t is bool:
                        nums.append(1.0 if v else 0.0)
                    elif v is None:
                        nums.append(0.0)
                    elif t is Error:
                        return v
                    elif t is WindowRef:
                        wins.append(v)
                    else:
                        return VALUE_ERROR  # direct text argument
            return nums, wins

        if fn == "SUM":

            def agg_sum():
                g = gather()
                if type(g) is Error:
                    return g
                nums, wins = g
                acc = 0.0
                for x in nums:
                    acc += x
                for w in wins:
                    if w.count:
                        acc += w.total
                return _num_result(acc)

            return agg_sum
        if fn == "COUNT":

            def agg_count():
                g = gather()
                if type(g) is Error:
                    return g
                nums, wins = g
                return float(len(nums) + sum(w.count for w in wins))

            return agg_count
        if fn == "AVERAGE":

            def agg_avg():
                g = gather()
                if type(g) is Error:
                    return g
                nums, wins = g
                n = len(nums) + sum(w.count for w in wins)
                if n == 0:
                    return DIV0_ERROR
                acc = 0.0
                for x in nums:
                    acc += x
                for w in wins:
                    if w.count:
                        acc += w.total
                return _num_result(acc / n)

            return agg_avg

        lo = fn == "MIN"

        def agg_extremum():
            g = gather()
            if type(g) is Error:
                return g
            nums, wins = g
            pool = nums + [(w.vmin if lo else w.vmax) for w in wins if w.count]
            if not pool:
                return 0.0
            return min(pool) if lo else max(pool)

        return agg_extremum


# --- build -------------------------------------------------------------------


@dataclass
class _StreamRuntime:
    decl: StreamDecl
    attr_types: tuple[str, ...] = ()
    bindings: list[Binding] = field(default_factory=list)
    # per binding: (row key-lists, deque of projected row values, attr indices)
    writers: list[tuple[list[list[Key]], object, list[int]]] = field(default_factory=list)
    window_feeds: list[tuple[tuple[Key, int], int]] = field(default_factory=list)  # (wid, attr idx)
    reach: list[tuple[Key, object]] = field(default_factory=list)  # topo-ordered (key, closure)
    last_ts: float = -math.inf


def build(model: SheetModel) -> "EngineInstance":
    """Build an evaluable instance; expects validate(model) to be clean.

    Raises BuildError if the formula cells contain a dependency cycle.
    """
    return EngineInstance(model)


class EngineInstance:
    def __init__(self, model: SheetModel):
        self.model = model
        self._store: dict[Key, object] = {}
        self.windows: dict[tuple[Key, int], WindowStore] = {}
        self._window_specs: dict[tuple[Key, int], WindowSpec] = {}
        self.exports: dict[Key, str] = {}
        for e in model.exports:
            self.exports[_key(e.addr)] = e.out_name
        self.seq = 0
        self.eval_passes = 0
        self.eval_cells = 0
        self._cells: dict[Key, CellDef] = {_key(c.addr): c for c in model.cells}
        self._streams: dict[str, _StreamRuntime] = {}
        self._bound_to_stream: dict[Key, str] = {}
        for s in model.streams:
            self._streams[s.name] = _StreamRuntime(s, tuple(a.type for a in s.attrs))
        for b in model.bindings:
            rt = self._streams[b.stream]
            rt.bindings.append(b)
            rows = [[(a.col, a.row) for a in b.region.row_addrs(r)] for r in range(b.region.height)]
            proj = [rt.decl.attr_index(p) for p in b.projection]
            rt.writers.append((rows, deque(maxlen=b.region.height), proj))
            for row in rows:
                for k in row:
                    self._bound_to_stream[k] = b.stream
        self._defined: set[Key] = set(self._cells) | set(self._bound_to_stream)
        self._range_cache: dict[tuple[Key, Key], list[tuple[int, Key]]] = {}
        self._rebuild(self._cells)
        # initial pass: the store starts blank, formulas settle to quiescence
        for k in self._topo:
            self._store[k] = self._compiled[k]()

    # -- static structure ------------------------------------------------

    def _range_members(self, rng) -> list[tuple[int, Key]]:
        """Defined cells inside rng as (1-based row-major position, key), in scan order."""
        ck = (_key(rng.top_left), _key(rng.bottom_right))
        got = self._range_cache.get(ck)
        if got is not None:
            return got
        tl, br = rng.top_left, rng.bottom_right
        width = br.col - tl.col + 1
        members = []
        for col, row in self._defined:
            if tl.col <= col <= br.col and tl.row <= row <= br.row:
                pos = (row - tl.row) * width + (col - tl.col) + 1
                members.append((pos, (col, row)))
        members.sort()
        self._range_cache[ck] = members
        return members

    def _rebuild(self, cells: dict[Key, CellDef]) -> None:
        """(Re)compute graph, topo order, closures, per-stream reach lists."""
        self._range_cache.clear()
        self._defined = set(cells) | set(self._bound_to_stream)

        dependents: dict[Key, set[Key]] = {k: set() for k in cells}
        indegree: dict[Key, int] = {k: 0 for k in cells}
        direct_roots: dict[str, set[Key]] = {name: set() for name in self._streams}
        for k, cell in cells.items():
            for ref in references(cell.ast):
                if isinstance(ref, CellAddr):
                    targets = [_key(ref)]
                elif isinstance(ref, tuple):  # (stream, attr) via WINDOW
                    if ref[0] in direct_roots:
                        direct_roots[ref[0]].add(k)
                    continue
                else:  # RangeAddr
                    targets = [m for _, m in self._range_members(ref)]
                for t in targets:
                    if t in cells:
                        if k not in dependents[t]:
                            dependents[t].add(k)
                            indegree[k] += 1
                    else:
                        stream = self._bound_to_stream.get(t)
                        if stream is not None:
                            direct_roots[stream].add(k)

        order: list[Key] = []
        ready = sorted(k for k, d in indegree.items() if d == 0)
        while ready:
            k = ready.pop()
            order.append(k)
            for d in sorted(dependents[k], reverse=True):
                indegree[d] -= 1
                if indegree[d] == 0:
                    ready.append(d)
        if len(order) != len(cells):
            cycle = self._find_cycle(cells, {k: d for k, d in indegree.items() if d > 0})
            raise BuildError([Diagnostic("cells", "dependency cycle: " + cycle)])

        old_windows = self.windows
        new_windows: dict[tuple[Key, int], WindowStore] = {}
        new_specs: dict[tuple[Key, int], WindowSpec] = {}
        self.windows = new_windows
        self._window_specs = new_specs
        self._pending_specs = (new_windows, new_specs, old_windows)

        compiled: dict[Key, object] = {}
        for k in order:
            comp = _Compiler(self, k)
            compiled[k] = comp.compile(cells[k].ast)
            root = cells[k].ast
            if not (isinstance(root, Call) and root.fn == "WINDOW"):
                compiled[k] = _guard_window_result(compiled[k])

        topo_index = {k: i for i, k in enumerate(order)}
        for name, rt in self._streams.items():
            rt.window_feeds = [
                ((wid), rt.decl.attr_index(spec.attr))
                for wid, spec in new_specs.items()
                if spec.stream == name
            ]
            roots = set(direct_roots[name])
            for wid, spec in new_specs.items():
                if spec.stream == name:
                    roots.add(wid[0])
            seen = set(roots)
            stack = list(roots)
            while stack:
                k = stack.pop()
                for d in dependents.get(k, ()):
                    if d not in seen:
                        seen.add(d)
                        stack.append(d)
            rt.reach = [(k, compiled[k]) for k in sorted(seen, key=topo_index.__getitem__)]

        self._cells = cells
        self._compiled = compiled
        self._topo = order
        self._dependents = dependents

    def _register_window(self, wid: tuple[Key, int], spec: WindowSpec) -> None:
        new_windows, new_specs, old_windows = self._pending_specs
        new_specs[wid] = spec
        prior = old_windows.get(wid)
        if prior is not None and prior.spec == spec:
            new_windows[wid] = prior  # same call site survives a rebuild with history
        else:
            new_windows[wid] = WindowStore(spec)

    def _find_cycle(self, cells: dict[Key, CellDef], in_cycle: dict[Key, int]) -> str:
        # walk upstream references within the unresolved subgraph until a repeat
        start = min(in_cycle)
        path = [start]
        k = start
        while True:
            nxt = None
            for ref in sorted(references(cells[k].ast), key=str):
                if isinstance(ref, CellAddr):
                    if _key(ref) in in_cycle:
                        nxt = _key(ref)
                        break
                elif not isinstance(ref, tuple):  # RangeAddr
                    for _, m in self._range_members(ref):
                        if m in in_cycle:
                            nxt = m
                            break
                    if nxt is not None:
                        break
            if nxt is None:
                break
            if nxt in path:
                path = path[path.index(nxt) :] + [nxt]
                break
            path.append(nxt)
            k = nxt
        names = [format_addr(CellAddr(c, r)) for c, r in path]
        return " → ".join(names)

    # -- reads -------------------------------------------------------------

    def read_cell(self, addr: CellAddr | str):
        if isinstance(addr, str):
            addr = parse_addr(addr)
        return self._store.get(_key(addr))

    def visible_cells(self) -> list[tuple[CellAddr, str | None, object, str | None]]:
        """(addr, formula source, value, export name) for every defined cell, row-major."""
        out = []
        for k in sorted(self._defined, key=lambda k: (k[1], k[0])):
            cell = self._cells.get(k)
            out.append(
                (
                    CellAddr(*k),
                    cell.source if cell else None,
                    self._store.get(k),
                    self.exports.get(k),
                )
            )
        return out

    # -- mutations -----------------------------------------------------------

    def apply_tuple(self, stream_name: str, values: list, ts, record_changes: bool = True) -> ChangeSet:
        rt = self._streams.get(stream_name)
        if rt is None:
            raise EngineError([Diagnostic(stream_name, "unknown stream")])
        types = rt.attr_types
        if len(values) != len(types):
            raise EngineError(
                [Diagnostic(stream_name, f"schema mismatch: expected {len(types)} values, got {len(values)}")]
            )
        vals: list = [None] * len(values)
        for i, t in enumerate(types):
            v = values[i]
            tv = type(v)
            if t == "text":
                if tv is not str:
                    raise EngineError(
                        [Diagnostic(stream_name, f"schema mismatch: {rt.decl.attrs[i].name} expects text, got {v!r}")]
                    )
                vals[i] = v
            elif t == "number":
                if tv is not float:
                    if tv is bool or tv is not int or not _isfinite(v):
                        raise EngineError(
                            [Diagnostic(stream_name, f"schema mismatch: {rt.decl.attrs[i].name} expects a number, got {v!r}")]
                        )
                    v = float(v)
                elif not _isfinite(v):
                    raise EngineError(
                        [Diagnostic(stream_name, f"schema mismatch: {rt.decl.attrs[i].name} expects a finite number, got {v!r}")]
                    )
                vals[i] = v
            else:  # timestamp
                if tv is bool or tv is not int or v < 0:
                    raise EngineError(
                        [Diagnostic(stream_name, f"schema mismatch: {rt.decl.attrs[i].name} expects non-negative integer ms, got {v!r}")]
                    )
                vals[i] = float(v)
        if ts < rt.last_ts:
            raise EngineError(
                [Diagnostic(stream_name, f"out-of-order timestamp {ts} (last was {rt.last_ts:.0f})")]
            )

        store = self._store
        exports = self.exports
        old_exports = [store.get(k) for k in exports] if exports else None
        changes: list[tuple[CellAddr, object, object]] = []

        for rows, dq, proj in rt.writers:
            dq.append([vals[i] for i in proj])
            start = len(rows) - len(dq)
            if record_changes:
                for r, row_vals in enumerate(dq):
                    for k, v in zip(rows[start + r], row_vals):
                        old = store.get(k)
                        if type(old) is not type(v) or old != v:
                            store[k] = v
                            changes.append((CellAddr(*k), old, v))
            else:
                for r, row_vals in enumerate(dq):
                    for k, v in zip(rows[start + r], row_vals):
                        store[k] = v

        for wid, attr_idx in rt.window_feeds:
            self.windows[wid].insert(ts, vals[attr_idx])

        if record_changes:
            for k, fn in rt.reach:
                new = fn()
                old = store.get(k)
                if type(old) is not type(new) or old != new:
                    store[k] = new
                    changes.append((CellAddr(*k), old, new))
        else:
            for k, fn in rt.reach:
                store[k] = fn()

        self.eval_cells += len(rt.reach)
        self.eval_passes += 1
        self.seq += 1
        rt.last_ts = ts

        if exports:
            exports_changed = any(
                not values_equal(old, store.get(k)) for old, k in zip(old_exports, exports)
            )
        else:
            exports_changed = False
        return ChangeSet(changes, exports_changed)

    def set_formula(self, addr: CellAddr | str, text: str) -> ChangeSet:
        """Define or replace one formula cell, rebuild, re-evaluate everything.

        On any failure (parse error, cycle, stream-bound target) the instance
        is unchanged.
        """
        if isinstance(addr, str):
            addr = parse_addr(addr)
        k = _key(addr)
        if k in self._bound_to_stream:
            raise EngineError([Diagnostic(format_addr(addr), "cell is stream-bound")])
        try:
            ast = parse_formula(text)
        except FormulaError as err:
            raise EngineError([Diagnostic(format_addr(addr), err.message)]) from None
        for call in window_calls(ast):
            ref = call.args[0]
            rt = self._streams.get(ref.stream)
            if rt is None:
                raise EngineError([Diagnostic(format_addr(addr), f"WINDOW references unknown stream {ref.stream!r}")])
            t = rt.decl.attr_type(ref.attr)
            if t != "number":
                raise EngineError(
                    [Diagnostic(format_addr(addr), f"WINDOW attribute {ref.stream}.{ref.attr} must be a number attribute")]
                )
            span = call.args[1]
            if not isinstance(span, NumberLit) or span.value <= 0 or span.value != int(span.value):
                raise EngineError([Diagnostic(format_addr(addr), "WINDOW span must be a positive integer millisecond literal")])

        new_cells = dict(self._cells)
        new_cells[k] = CellDef(addr, text, ast)
        saved = (self._cells, self._compiled, self._topo, self._dependents,
                 self.windows, self._window_specs, self._defined,
                 {name: (rt.reach, rt.window_feeds) for name, rt in self._streams.items()})
        try:
            self._rebuild(new_cells)
        except BuildError:
            (self._cells, self._compiled, self._topo, self._dependents,
             self.windows, self._window_specs, self._defined, per_stream) = saved
            for name, (reach, feeds) in per_stream.items():
                self._streams[name].reach = reach
                self._streams[name].window_feeds = feeds
            self._range_cache.clear()
            raise

        store = self._store
        exports = self.exports
        old_exports = [store.get(ek) for ek in exports] if exports else None
        changes: list[tuple[CellAddr, object, object]] = []
        for ck in self._topo:
            new = self._compiled[ck]()
            old = store.get(ck)
            if type(old) is not type(new) or old != new:
                store[ck] = new
                changes.append((CellAddr(*ck), old, new))
        if exports:
            exports_changed = any(
                not values_equal(old, store.get(ek)) for old, ek in zip(old_exports, exports)
            )
        else:
            exports_changed = False
        return ChangeSet(changes, exports_changed)

    def set_export(self, addr: CellAddr | str, name: str, on: bool) -> None:
        """Mark or unmark a cell for export (live sessions edit these)."""
        if isinstance(addr, str):
            addr = parse_addr(addr)
        k = _key(addr)
        if on:
            cell = self._cells.get(k)
            if cell is None and k not in self._bound_to_stream:
                raise EngineError([Diagnostic(format_addr(addr), "export target is neither a formula cell nor stream-bound")])
            if cell is not None and isinstance(cell.ast, Call) and cell.ast.fn == "WINDOW":
                raise EngineError([Diagnostic(format_addr(addr), "window cells hold value lists and cannot be exported")])
            if name in self.exports.values() and self.exports.get(k) != name:
                raise EngineError([Diagnostic(name, "duplicate export name")])
            self.exports[k] = name
        else:
            self.exports.pop(k, None)


def _guard_window_result(fn):
    """Window handles may only surface from a WINDOW-rooted cell."""

    def guarded():
        v = fn()
        if type(v) is WindowRef:
            return VALUE_ERROR
        return v

    return guarded
