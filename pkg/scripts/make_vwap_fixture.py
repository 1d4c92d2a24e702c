#!/usr/bin/env python3
"""Regenerate the bundled VWAP fixture: input CSVs and golden outputs.

This script is the independent oracle for the bargain-detector example.  It
deliberately imports nothing from sheetstream: the expected outputs are
recomputed from first principles (volume-weighted average price over the last
20 ACME trades, bargain iff the quoted price is below it) and frozen to
fixtures/vwap_golden.{csv,jsonl}.  Never hand-edit those files; rerun this.

Data invariants the generator enforces so the example emits exactly one
output row per ACME quote:
  * ACME trade prices stay inside [92, 108], so the VWAP does too;
  * quote prices alternate between [60, 80] (bargains) and [120, 140]
    (non-bargains), so no trade can flip the bargain flag;
  * consecutive quote prices always differ, so every quote changes exports.
"""

from __future__ import annotations

import csv
import json
import math
import random
from collections import deque
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

N_TRADES = 200
N_QUOTES = 20
SEED = 20140615
WINDOW_ROWS = 20


def fmt(x: float) -> str:
    """Shortest decimal that reads back as the same double (int form if integral)."""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def generate(rng: random.Random):
    trades = []  # (sym, price, vol, pv, ts)
    ts = 1000
    for i in range(N_TRADES):
        ts += rng.randint(50, 400)
        if i % 20 == 7:
            sym, price = "MSFT", round(rng.uniform(10, 20), 2)
        else:
            sym, price = "ACME", round(rng.uniform(92, 108), 2)
        vol = float(rng.randint(100, 999))
        trades.append((sym, price, vol, price * vol, ts))

    quotes = []  # (sym, price, ts)
    for i in range(N_QUOTES):
        anchor = trades[40 + i * 8][4]
        if i % 2 == 0:
            price = round(rng.uniform(60, 80), 2)
        else:
            price = round(rng.uniform(120, 140), 2)
        quotes.append(("ACME", price, anchor + 17))
    return trades, quotes


def merge(trades, quotes):
    """Cursor order: ascending ts, ties by stream declaration order (trades first)."""
    entries = [(t[4], 0, i, t) for i, t in enumerate(trades)]
    entries += [(q[2], 1, i, q) for i, q in enumerate(quotes)]
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    return entries


def simulate(entries):
    """Replays the sheet's observable behaviour: emit (seq, quote, isBargain)
    whenever an exported value changes."""
    last20: deque = deque(maxlen=WINDOW_ROWS)
    quote_price: float | None = None
    prev_exports = (None, False)  # blank quote cell, gated flag starts FALSE
    outputs = []
    for seq, (ts, kind, _idx, row) in enumerate(entries):
        if row[0] != "ACME":
            continue  # dropped by SELECT before any state change
        if kind == 0:
            last20.append((row[1], row[2]))
        else:
            quote_price = row[1]
        if quote_price is None:
            flag = False
        else:
            vwap = math.fsum(p * v for p, v in last20) / math.fsum(v for _, v in last20)
            flag = quote_price < vwap
        exports = (quote_price, flag)
        if exports != prev_exports:
            if kind == 0:
                raise AssertionError(f"fixture invariant broken: trade at seq {seq} changed exports")
            outputs.append((seq, quote_price, flag))
            prev_exports = exports
    return outputs


def main() -> None:
    rng = random.Random(SEED)
    trades, quotes = generate(rng)
    assert sum(1 for t in trades if t[0] == "ACME") >= WINDOW_ROWS

    FIXTURES.mkdir(exist_ok=True)
    with open(FIXTURES / "trades.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sym", "price", "vol", "pv", "ts"])
        for sym, price, vol, pv, ts in trades:
            w.writerow([sym, repr(price), fmt(vol), repr(pv), ts])
    with open(FIXTURES / "quotes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sym", "price", "ts"])
        for sym, price, ts in quotes:
            w.writerow([sym, repr(price), ts])

    outputs = simulate(merge(trades, quotes))
    assert len(outputs) == N_QUOTES, f"expected one output per quote, got {len(outputs)}"

    with open(FIXTURES / "vwap_golden.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["__seq", "quote", "isBargain"])
        for seq, price, flag in outputs:
            w.writerow([str(seq), fmt(price), "TRUE" if flag else "FALSE"])
    with open(FIXTURES / "vwap_golden.jsonl", "w", encoding="utf-8") as fh:
        for seq, price, flag in outputs:
            fh.write(json.dumps({"__seq": seq, "quote": price, "isBargain": flag},
                                separators=(",", ":")) + "\n")

    print(f"wrote {N_TRADES} trades, {N_QUOTES} quotes, {len(outputs)} golden rows to {FIXTURES}")


if __name__ == "__main__":
    main()
