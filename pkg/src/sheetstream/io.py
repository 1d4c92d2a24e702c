"""File-replay input cursors and output sinks.

Inputs are CSV (RFC 4180, header row of attribute names) or JSON lines (one
object per line, keys = attribute names).  Multiple streams are merged into
one deterministic cursor: ascending timestamp, ties broken by stream
declaration order, then within-file order.  Outputs are emitted once per
input tuple that changes at least one exported cell, in input order, so a
run's output bytes are a pure function of (model, input files, config).
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from sheetstream.engine import EngineError, build
from sheetstream.model import SheetModel, StreamDecl, window_calls
from sheetstream.partition import PartitionManager, RoutingError
from sheetstream.values import Error, WindowRef, fmt_number


class InputError(ValueError):
    pass


class RunError(ValueError):
    pass


class TupleRecord(NamedTuple):
    stream: str
    values: tuple
    ts: int
    seq: int  # global arrival index, 0-based


@dataclass(frozen=True)
class OutputRecord:
    key: str | float | None
    seq: int
    exports: tuple[tuple[str, object], ...]  # (name, value) in model export order


@dataclass
class RunStats:
    tuples_in: int = 0
    tuples_dropped_by_select: int = 0
    outputs_emitted: int = 0
    partitions_created: int = 0


# --- input -------------------------------------------------------------------


def _json_value(v, attr_type: str, path, lineno: int, name: str):
    if attr_type == "text":
        if not isinstance(v, str):
            raise InputError(f"{path}:{lineno} key {name}: expected a string, got {v!r}")
        return v
    if attr_type == "number":
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise InputError(f"{path}:{lineno} key {name}: expected a number, got {v!r}")
        return float(v)
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise InputError(f"{path}:{lineno} key {name}: expected integer milliseconds, got {v!r}")
    if v < 0:
        raise InputError(f"{path}:{lineno} key {name}: timestamps must be non-negative, got {v}")
    return v


def _open_csv(path: Path, decl: StreamDecl):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    expected = [a.name for a in decl.attrs]
    try:
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: missing header row")
        if header != expected:
            raise InputError(f"{path}: header {header!r} does not match schema attrs {expected!r}")
    except BaseException:
        fh.close()
        raise
    types = [a.type for a in decl.attrs]
    ncols = len(types)

    def rows():
        try:
            for lineno, row in enumerate(reader, start=2):
                if len(row) != ncols:
                    raise InputError(f"{path}:{lineno}: expected {ncols} columns, got {len(row)}")
                out = []
                for i, t in enumerate(types):
                    cell = row[i]
                    if t == "text":
                        out.append(cell)
                    elif t == "number":
                        try:
                            v = float(cell)
                        except ValueError:
                            raise InputError(
                                f"{path}:{lineno} column {expected[i]}: not a number: {cell!r}"
                            ) from None
                        if not math.isfinite(v):
                            raise InputError(
                                f"{path}:{lineno} column {expected[i]}: number out of range: {cell!r}"
                            )
                        out.append(v)
                    else:
                        try:
                            v = int(cell)
                        except ValueError:
                            raise InputError(
                                f"{path}:{lineno} column {expected[i]}: "
                                f"not an integer millisecond timestamp: {cell!r}"
                            ) from None
                        if v < 0:
                            raise InputError(
                                f"{path}:{lineno} column {expected[i]}: "
                                f"timestamps must be non-negative, got {v}"
                            )
                        out.append(v)
                yield tuple(out)
        finally:
            fh.close()

    return rows()


def _open_jsonl(path: Path, decl: StreamDecl):
    names = [a.name for a in decl.attrs]
    types = {a.name: a.type for a in decl.attrs}
    fh = open(path, encoding="utf-8")

    def rows():
        try:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as err:
                    raise InputError(f"{path}:{lineno}: {err.msg}") from None
                if not isinstance(obj, dict):
                    raise InputError(f"{path}:{lineno}: expected an object per line")
                missing = [n for n in names if n not in obj]
                extra = [k for k in obj if k not in types]
                if missing or extra:
                    raise InputError(
                        f"{path}:{lineno}: keys do not match schema (missing {missing!r}, unexpected {extra!r})"
                    )
                yield tuple(
                    _json_value(obj[n], types[n], path, lineno, n) for n in names
                )
        finally:
            fh.close()

    return rows()


def _stream_iter(decl: StreamDecl, decl_idx: int, path: Path, fmt: str, ts_from_row: bool):
    rows = _open_csv(path, decl) if fmt == "csv" else _open_jsonl(path, decl)
    ts_idx = None if ts_from_row else decl.attr_index(decl.ts_attr)

    def entries():
        last_ts = None
        for row_idx, values in enumerate(rows):
            ts = row_idx if ts_idx is None else values[ts_idx]
            if last_ts is not None and ts < last_ts:
                raise InputError(
                    f"{path}: timestamps decrease within the stream "
                    f"(row {row_idx + 1}: {ts} after {last_ts})"
                )
            last_ts = ts
            yield (ts, decl_idx, row_idx, values)

    return entries()


def _detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise InputError(f"{path}: cannot infer format from suffix (use .csv or .jsonl)")


def open_inputs(model: SheetModel, sources: dict):
    """Merged cursor over one source file per declared stream.

    Source values are paths (format from suffix) or (path, format) pairs.
    Yields TupleRecord in merge order with a global 0-based seq.
    """
    declared = {s.name for s in model.streams}
    missing = declared - set(sources)
    extra = set(sources) - declared
    if missing:
        raise InputError(f"missing source for stream(s): {', '.join(sorted(missing))}")
    if extra:
        raise InputError(f"source given for undeclared stream(s): {', '.join(sorted(extra))}")

    no_ts = [s.name for s in model.streams if s.ts_attr is None]
    if no_ts:
        has_window = any(window_calls(c.ast) for c in model.cells)
        if len(model.streams) > 1 or has_window:
            raise InputError(
                f"stream(s) without ts_attr ({', '.join(no_ts)}) are only allowed in a "
                "single-stream model with no WINDOW cells; row order then supplies time"
            )

    iters = []
    for idx, decl in enumerate(model.streams):
        src = sources[decl.name]
        if isinstance(src, tuple):
            path, fmt = Path(src[0]), src[1]
            if fmt not in ("csv", "jsonl"):
                raise InputError(f"{path}: unknown format {fmt!r}")
        else:
            path = Path(src)
            fmt = _detect_format(path)
        if not path.exists():
            raise InputError(f"{path}: no such file")
        iters.append(_stream_iter(decl, idx, path, fmt, ts_from_row=decl.ts_attr is None))

    def cursor():
        names = [s.name for s in model.streams]
        merged = heapq.merge(*iters) if len(iters) > 1 else iters[0] if iters else ()
        for seq, (ts, decl_idx, _row_idx, values) in enumerate(merged):
            yield TupleRecord(names[decl_idx], values, ts, seq)

    return cursor()


# --- output ------------------------------------------------------------------


def format_cell_text(v) -> str:
    """Scalar cell value as output text (CSV field / error literal)."""
    t = type(v)
    if t is float:
        return fmt_number(v)
    if t is str:
        return v
    if t is bool:
        return "TRUE" if v else "FALSE"
    if v is None:
        return ""
    if t is Error:
        return v.code
    raise TypeError(f"cannot emit {v!r} as an output value")


class CsvSink:
    def __init__(self, fh, export_names: list[str], partitioned: bool):
        self._fh = fh
        self._writer = csv.writer(fh, lineterminator="\n")
        self.partitioned = partitioned
        head = (["__key"] if partitioned else []) + ["__seq"] + list(export_names)
        self._writer.writerow(head)

    def emit(self, rec: OutputRecord) -> None:
        row = []
        if self.partitioned:
            row.append(format_cell_text(rec.key))
        row.append(str(rec.seq))
        row.extend(format_cell_text(v) for _, v in rec.exports)
        self._writer.writerow(row)

    def flush(self) -> None:
        self._fh.flush()


class JsonlSink:
    def __init__(self, fh, export_names: list[str], partitioned: bool):
        self._fh = fh
        self.partitioned = partitioned

    def emit(self, rec: OutputRecord) -> None:
        obj = {}
        if self.partitioned:
            obj["__key"] = rec.key
        obj["__seq"] = rec.seq
        for name, v in rec.exports:
            if type(v) is Error:
                obj[name] = v.code
            elif type(v) is WindowRef:
                raise TypeError("window cells cannot be emitted")
            else:
                obj[name] = v
        self._fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

    def flush(self) -> None:
        self._fh.flush()


def open_sink(fh, fmt: str, model: SheetModel):
    names = [e.out_name for e in model.exports]
    if fmt == "csv":
        return CsvSink(fh, names, model.partitioned)
    if fmt == "jsonl":
        return JsonlSink(fh, names, model.partitioned)
    raise ValueError(f"unknown output format {fmt!r}")


# --- the run loop ------------------------------------------------------------


def run(model: SheetModel, cursor, sink, *, max_partitions: int = 10_000) -> RunStats:
    """Replay the cursor through the model, emitting exports on change.

    Any routing or apply error aborts with RunError naming the input seq.
    """
    stats = RunStats()
    export_addrs = [e.addr for e in model.exports]
    export_names = [e.out_name for e in model.exports]
    partitioned = model.partitioned
    manager = PartitionManager(model, max_partitions) if partitioned else None
    instance = None if partitioned else build(model)
    # select clauses resolved to (value index, expected literal) once
    selects: dict[str, tuple[int, object] | None] = {
        s.name: (s.attr_index(s.select.attr), s.select.value) if s.select else None
        for s in model.streams
    }

    dropped = 0
    n_in = 0
    for rec in cursor:
        n_in += 1
        sel = selects[rec.stream]
        if sel is not None and rec.values[sel[0]] != sel[1]:
            dropped += 1
            continue
        try:
            if partitioned:
                key, changes = manager.route(rec.stream, list(rec.values), rec.ts, record_changes=False)
                inst = manager.instances[key]
            else:
                key = None
                inst = instance
                changes = inst.apply_tuple(rec.stream, list(rec.values), rec.ts, record_changes=False)
        except (EngineError, RoutingError) as err:
            raise RunError(f"input seq {rec.seq} ({rec.stream}): {err}") from None
        if changes.exports_changed:
            exports = tuple(
                (name, inst.read_cell(addr)) for name, addr in zip(export_names, export_addrs)
            )
            sink.emit(OutputRecord(key, rec.seq, exports))
            stats.outputs_emitted += 1

    stats.tuples_in = n_in
    stats.tuples_dropped_by_select = dropped

    if partitioned:
        stats.partitions_created = len(manager.instances)
    sink.flush()
    return stats
