#!/usr/bin/env python3
"""Measure sustained tuple throughput through the bargain-detector model.

Generates synthetic ACME trades at the requested sizes, replays them through
fixtures/vwap.sheet.json, and reports tuples/second per size so linear scaling
is easy to eyeball.
"""

from __future__ import annotations

import argparse
import io
import tempfile
import time
from pathlib import Path

from sheetstream.io import open_inputs, open_sink, run
from sheetstream.model import load_model

ROOT = Path(__file__).resolve().parent.parent


def write_trades(path: Path, n: int) -> None:
    lines = ["sym,price,vol,pv,ts"]
    ts = 0
    for i in range(n):
        ts += 7
        price = 92.0 + (i % 160) * 0.1
        vol = float(100 + (i % 400))
        lines.append(f"ACME,{price!r},{vol!r},{price * vol!r},{ts}")
    path.write_text("\n".join(lines) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[100_000, 1_000_000])
    parser.add_argument("--model", type=Path, default=ROOT / "fixtures" / "vwap.sheet.json")
    args = parser.parse_args()

    model = load_model(args.model.read_text())
    with tempfile.TemporaryDirectory() as d:
        quotes = Path(d) / "quotes.csv"
        quotes.write_text("sym,price,ts\n")
        times = []
        for n in args.sizes:
            trades = Path(d) / f"trades_{n}.csv"
            write_trades(trades, n)
            cursor = open_inputs(model, {"trades": trades, "quotes": quotes})
            sink = open_sink(io.StringIO(), "csv", model)
            t0 = time.perf_counter()
            stats = run(model, cursor, sink)
            dt = time.perf_counter() - t0
            times.append((n, dt))
            print(f"{n:>9} tuples: {dt:7.2f}s  {n / dt / 1e3:7.1f}k tuples/s  "
                  f"(outputs={stats.outputs_emitted})")
        if len(times) >= 2:
            (n0, t0_), (n1, t1_) = times[0], times[-1]
            print(f"scaling: {n1 // n0}x input -> {t1_ / t0_:.1f}x time")


if __name__ == "__main__":
    main()
