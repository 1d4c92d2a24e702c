"""Cell value domain.

Values are plain Python objects for speed: numbers are ``float``, text is
``str``, booleans are ``bool``, blank is ``None``.  Error codes and window
summaries get small dedicated classes.  ``bool`` is an ``int`` subclass in
Python, so all type dispatch here uses exact ``type()`` checks.
"""

from __future__ import annotations

from dataclasses import dataclass

ERROR_CODES = ("#VALUE!", "#DIV/0!", "#N/A", "#REF!", "#CYCLE!")


class Error:
    """A spreadsheet error code; interned, compare with ``is`` or ``==``."""

    __slots__ = ("code",)

    def __init__(self, code: str):
        if code not in ERROR_CODES:
            raise ValueError(f"unknown error code {code!r}")
        self.code = code

    def __repr__(self) -> str:
        return f"Error({self.code})"

    def __eq__(self, other: object) -> bool:
        return type(other) is Error and other.code == self.code

    def __hash__(self) -> int:
        return hash(self.code)


VALUE_ERROR = Error("#VALUE!")
DIV0_ERROR = Error("#DIV/0!")
NA_ERROR = Error("#N/A")
REF_ERROR = Error("#REF!")
CYCLE_ERROR = Error("#CYCLE!")

_BY_CODE = {e.code: e for e in (VALUE_ERROR, DIV0_ERROR, NA_ERROR, REF_ERROR, CYCLE_ERROR)}


def error_for(code: str) -> Error:
    return _BY_CODE[code]


@dataclass(frozen=True)
class WindowRef:
    """Snapshot of a window cell: count plus incrementally-kept aggregates.

    The summary is immutable; the live buffer stays inside the engine.  Empty
    windows report 0 for sum/min/max (average is derived by consumers).
    """

    count: int
    total: float
    vmin: float
    vmax: float


# Value = float | str | bool | None | Error | WindowRef


def is_error(v: object) -> bool:
    return type(v) is Error


def values_equal(a: object, b: object) -> bool:
    """Strict equality: 1.0 and TRUE are different values."""
    return type(a) is type(b) and a == b


def fmt_number(x: float) -> str:
    """Shortest decimal text that reads back as the same double.

    Integral values under 2**53 print without a fraction part ("17.5" stays
    "17.5", 2.0 prints as "2").
    """
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def value_to_json(v: object) -> dict:
    """Tagged encoding used by the live-session protocol."""
    t = type(v)
    if t is float:
        return {"t": "num", "v": v}
    if t is str:
        return {"t": "text", "v": v}
    if t is bool:
        return {"t": "bool", "v": v}
    if v is None:
        return {"t": "blank"}
    if t is Error:
        return {"t": "err", "v": v.code}
    if t is WindowRef:
        return {
            "t": "win",
            "v": {"count": v.count, "sum": v.total, "min": v.vmin, "max": v.vmax},
        }
    raise TypeError(f"not a cell value: {v!r}")
