"""sheetstream: run spreadsheet models as streaming operators.

A sheet model binds input streams to cell regions (scrolling or latest-row),
recomputes formulas incrementally as tuples arrive, and emits marked cells as
an output tuple stream.  Time-based WINDOW cells and keyed PARTITION
instancing extend the bounded spreadsheet to unbounded streams.
"""

from sheetstream.engine import ChangeSet, EngineInstance, build
from sheetstream.model import SheetModel, dump_model, load_model, validate
from sheetstream.values import Error, WindowRef

__all__ = [
    "ChangeSet",
    "EngineInstance",
    "Error",
    "SheetModel",
    "WindowRef",
    "build",
    "dump_model",
    "load_model",
    "validate",
]
