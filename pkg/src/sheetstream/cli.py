"""Command-line front door: check models, run them over files, serve the live UI."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from sheetstream.engine import BuildError, build
from sheetstream.io import InputError, RunError, open_inputs, open_sink, run
from sheetstream.model import ModelError, SheetModel, load_model
from sheetstream.partition import RoutingError


@dataclass
class RunConfig:
    model_path: Path
    inputs: dict[str, Path] = field(default_factory=dict)
    output: Path | None = None
    format: str = "csv"
    max_partitions: int = 10_000
    port: int = 8080
    replay_speed: float = 0.0


def _parse_inputs(pairs: list[str]) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for pair in pairs or []:
        name, sep, path = pair.partition("=")
        if not sep or not name or not path:
            raise SystemExit(f"--input expects NAME=PATH, got {pair!r}")
        if name in out:
            raise SystemExit(f"--input given twice for stream {name!r}")
        out[name] = Path(path)
    return out


def _load(path: Path) -> SheetModel:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise _IoFailure(str(err)) from None
    return load_model(text)


class _IoFailure(Exception):
    pass


def cmd_check(model_path: Path) -> int:
    try:
        model = _load(model_path)
    except _IoFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ModelError as err:
        for d in err.diagnostics:
            print(d)
        return 1
    try:
        build(model)
    except BuildError as err:
        for d in err.diagnostics:
            print(d)
        return 1
    return 0


def cmd_run(config: RunConfig) -> int:
    try:
        model = _load(config.model_path)
        cursor = open_inputs(model, config.inputs)
        if config.output is None:
            sink = open_sink(sys.stdout, config.format, model)
            stats = run(model, cursor, sink, max_partitions=config.max_partitions)
        else:
            with open(config.output, "w", newline="", encoding="utf-8") as fh:
                sink = open_sink(fh, config.format, model)
                stats = run(model, cursor, sink, max_partitions=config.max_partitions)
    except _IoFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ModelError, InputError, RunError, RoutingError, BuildError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(
        f"tuples_in={stats.tuples_in} dropped_by_select={stats.tuples_dropped_by_select} "
        f"outputs_emitted={stats.outputs_emitted} partitions_created={stats.partitions_created}",
        file=sys.stderr,
    )
    return 0


def cmd_serve(config: RunConfig) -> int:
    try:
        model = _load(config.model_path)
        build(model)  # surface cycle diagnostics before binding the port
    except _IoFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ModelError, BuildError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    from sheetstream.server import serve_forever

    try:
        serve_forever(model, config)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sheetstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="validate a model file; exit 0 iff clean")
    p_check.add_argument("model", type=Path)

    def add_run_flags(p, serve: bool):
        p.add_argument("model", type=Path)
        p.add_argument("--input", action="append", metavar="NAME=PATH", default=[],
                       help="input file for one stream (repeatable)")
        p.add_argument("--max-partitions", type=int, default=10_000)
        if serve:
            p.add_argument("--port", type=int, default=8080)
            p.add_argument("--replay-speed", type=float, default=0.0,
                           help="0 = as fast as possible, 1 = timestamp-paced")
        else:
            p.add_argument("--output", type=Path, default=None, help="default: stdout")
            p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p_run = sub.add_parser("run", help="replay inputs through the model, write outputs")
    add_run_flags(p_run, serve=False)
    p_serve = sub.add_parser("serve", help="serve the live grid UI over HTTP/websocket")
    add_run_flags(p_serve, serve=True)

    args = parser.parse_args(argv)
    if args.command == "check":
        return cmd_check(args.model)

    config = RunConfig(model_path=args.model, inputs=_parse_inputs(args.input),
                       max_partitions=args.max_partitions)
    if config.max_partitions < 1:
        parser.error("--max-partitions must be positive")
    if args.command == "run":
        config.output = args.output
        config.format = args.format
        return cmd_run(config)
    config.port = args.port
    config.replay_speed = args.replay_speed
    if not 1 <= config.port <= 65535:
        parser.error("--port must be in 1..65535")
    if not (config.replay_speed >= 0 and config.replay_speed != float("inf")):
        parser.error("--replay-speed must be finite and >= 0")
    return cmd_serve(config)


if __name__ == "__main__":
    sys.exit(main())
