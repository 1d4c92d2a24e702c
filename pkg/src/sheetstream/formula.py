"""Formula language: addresses, AST, parser, canonical printer, reference extraction.

Grammar (whitespace-insensitive between tokens, function names case-insensitive):

    formula := '=' expr
    expr    := add ( ('='|'<>'|'<'|'<='|'>'|'>=') add )?
    add     := mul ( ('+'|'-') mul )*
    mul     := neg ( ('*'|'/') neg )*
    neg     := '-' neg | pow
    pow     := atom ( '^' neg )?
    atom    := NUMBER | STRING | 'TRUE' | 'FALSE' | range | cellref
             | streamref | call | '(' expr ')'

Precedence note: unary minus binds looser than '^', so =-3^2 is -(3^2).
This follows standard mathematical convention and diverges from Excel.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass

MAX_COL = 16384  # column XFD
MAX_ROW = 1_048_576

# name -> (min arity, max arity or None for variadic)
FUNCTIONS: dict[str, tuple[int, int | None]] = {
    "SUM": (1, None),
    "COUNT": (1, None),
    "AVERAGE": (1, None),
    "MIN": (1, None),
    "MAX": (1, None),
    "IF": (3, 3),
    "AND": (1, None),
    "OR": (1, None),
    "NOT": (1, 1),
    "MATCH": (2, 2),
    "ABS": (1, 1),
    "WINDOW": (2, 2),
}


class FormulaError(ValueError):
    """Parse failure; carries the byte offset of the offending token."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"at offset {offset}: {message}")
        self.offset = offset
        self.message = message


@dataclass(frozen=True, order=True)
class CellAddr:
    col: int  # A=1, bijective base-26
    row: int

    def text(self) -> str:
        return format_addr(self)


@dataclass(frozen=True)
class RangeAddr:
    top_left: CellAddr
    bottom_right: CellAddr

    @property
    def width(self) -> int:
        return self.bottom_right.col - self.top_left.col + 1

    @property
    def height(self) -> int:
        return self.bottom_right.row - self.top_left.row + 1

    def contains(self, addr: CellAddr) -> bool:
        return (
            self.top_left.col <= addr.col <= self.bottom_right.col
            and self.top_left.row <= addr.row <= self.bottom_right.row
        )

    def intersects(self, other: "RangeAddr") -> bool:
        return not (
            other.bottom_right.col < self.top_left.col
            or self.bottom_right.col < other.top_left.col
            or other.bottom_right.row < self.top_left.row
            or self.bottom_right.row < other.top_left.row
        )

    def row_addrs(self, row_index: int) -> list[CellAddr]:
        """Addresses of one region row (0-based from the top)."""
        r = self.top_left.row + row_index
        return [CellAddr(c, r) for c in range(self.top_left.col, self.bottom_right.col + 1)]

    def text(self) -> str:
        return f"{format_addr(self.top_left)}:{format_addr(self.bottom_right)}"


# --- AST -------------------------------------------------------------------


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class NumberLit(Expr):
    value: float


@dataclass(frozen=True)
class TextLit(Expr):
    value: str


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class CellRef(Expr):
    addr: CellAddr


@dataclass(frozen=True)
class RangeRef(Expr):
    rng: RangeAddr


@dataclass(frozen=True)
class StreamAttrRef(Expr):
    stream: str
    attr: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple[Expr, ...]


# --- addresses -------------------------------------------------------------

_ADDR_RE = re.compile(r"([A-Z]+)([1-9][0-9]*)")
_CELLREF_RE = re.compile(r"[A-Z]+[1-9][0-9]*\Z")


def parse_addr(text: str) -> CellAddr:
    m = _ADDR_RE.fullmatch(text)
    if not m:
        raise FormulaError(0, f"malformed cell address {text!r}")
    col = 0
    for ch in m.group(1):
        col = col * 26 + (ord(ch) - 64)
    row = int(m.group(2))
    if col > MAX_COL or row > MAX_ROW:
        raise FormulaError(0, f"cell address {text!r} out of bounds")
    return CellAddr(col, row)


def format_addr(addr: CellAddr) -> str:
    n = addr.col
    s = ""
    while n:
        n, r = divmod(n - 1, 26)
        s = string.ascii_uppercase[r] + s
    return f"{s}{addr.row}"


def parse_range(text: str) -> RangeAddr:
    head, sep, tail = text.partition(":")
    if not sep:
        raise FormulaError(0, f"malformed range {text!r} (expected A1:B2 form)")
    tl, br = parse_addr(head), parse_addr(tail)
    if tl.col > br.col or tl.row > br.row:
        raise FormulaError(0, f"range {text!r} has top-left below or right of bottom-right")
    return RangeAddr(tl, br)


# --- lexer -----------------------------------------------------------------

_NUMBER_RE = re.compile(r"[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TWO_CHAR_OPS = ("<>", "<=", ">=")
_ONE_CHAR_OPS = set("=<>+-*/^(),:.")


@dataclass
class _Token:
    kind: str  # NUMBER | STRING | IDENT | OP | EOF
    text: str
    offset: int


def _lex(src: str, start: int = 0) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = start, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if "0" <= ch <= "9":
            m = _NUMBER_RE.match(src, i)
            tokens.append(_Token("NUMBER", m.group(), i))
            i = m.end()
            continue
        if ch == '"':
            j = i + 1
            parts: list[str] = []
            while True:
                if j >= n:
                    raise FormulaError(i, "unterminated string literal")
                if src[j] == '"':
                    if j + 1 < n and src[j + 1] == '"':
                        parts.append('"')
                        j += 2
                        continue
                    break
                parts.append(src[j])
                j += 1
            tokens.append(_Token("STRING", "".join(parts), i))
            i = j + 1
            continue
        m = _IDENT_RE.match(src, i)  # ASCII identifiers only
        if m:
            tokens.append(_Token("IDENT", m.group(), i))
            i = m.end()
            continue
        two = src[i : i + 2]
        if two in _TWO_CHAR_OPS:
            tokens.append(_Token("OP", two, i))
            i += 2
            continue
        if ch in _ONE_CHAR_OPS:
            tokens.append(_Token("OP", ch, i))
            i += 1
            continue
        raise FormulaError(i, f"unexpected character {ch!r}")
    tokens.append(_Token("EOF", "", n))
    return tokens


# --- parser ----------------------------------------------------------------

_CMP_OPS = ("=", "<>", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.stream_refs: list[tuple[StreamAttrRef, int]] = []

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect_op(self, text: str) -> _Token:
        t = self.peek()
        if t.kind != "OP" or t.text != text:
            raise FormulaError(t.offset, f"expected {text!r}")
        return self.next()

    def at_op(self, *texts: str) -> bool:
        t = self.peek()
        return t.kind == "OP" and t.text in texts

    def expr(self) -> Expr:
        left = self.add()
        if self.at_op(*_CMP_OPS):
            op = self.next().text
            right = self.add()
            return Binary(op, left, right)
        return left

    def add(self) -> Expr:
        e = self.mul()
        while self.at_op("+", "-"):
            op = self.next().text
            e = Binary(op, e, self.mul())
        return e

    def mul(self) -> Expr:
        e = self.neg()
        while self.at_op("*", "/"):
            op = self.next().text
            e = Binary(op, e, self.neg())
        return e

    def neg(self) -> Expr:
        if self.at_op("-"):
            self.next()
            return Unary("-", self.neg())
        return self.pow()

    def pow(self) -> Expr:
        base = self.atom()
        if self.at_op("^"):
            self.next()
            return Binary("^", base, self.neg())
        return base

    def atom(self) -> Expr:
        t = self.peek()
        if t.kind == "NUMBER":
            self.next()
            v = float(t.text)
            if not math.isfinite(v):
                raise FormulaError(t.offset, f"number literal {t.text!r} out of range")
            return NumberLit(v)
        if t.kind == "STRING":
            self.next()
            return TextLit(t.text)
        if t.kind == "IDENT":
            return self.ident_atom()
        if self.at_op("("):
            self.next()
            e = self.expr()
            self.expect_op(")")
            return e
        raise FormulaError(t.offset, "expected expression")

    def ident_atom(self) -> Expr:
        t = self.next()
        if self.at_op("."):
            self.next()
            attr = self.peek()
            if attr.kind != "IDENT":
                raise FormulaError(attr.offset, "expected attribute name after '.'")
            self.next()
            node = StreamAttrRef(t.text, attr.text)
            self.stream_refs.append((node, t.offset))
            return node
        if self.at_op("("):
            return self.call(t)
        upper = t.text.upper()
        if upper == "TRUE":
            return BoolLit(True)
        if upper == "FALSE":
            return BoolLit(False)
        if _CELLREF_RE.fullmatch(t.text):
            try:
                addr = parse_addr(t.text)
            except FormulaError as err:
                raise FormulaError(t.offset, err.message) from None
            if self.at_op(":"):
                self.next()
                t2 = self.peek()
                if t2.kind != "IDENT" or not _CELLREF_RE.fullmatch(t2.text):
                    raise FormulaError(t2.offset, "expected cell address after ':'")
                self.next()
                try:
                    addr2 = parse_addr(t2.text)
                except FormulaError as err:
                    raise FormulaError(t2.offset, err.message) from None
                if addr.col > addr2.col or addr.row > addr2.row:
                    raise FormulaError(t.offset, f"range {t.text}:{t2.text} is inverted")
                return RangeRef(RangeAddr(addr, addr2))
            return CellRef(addr)
        raise FormulaError(t.offset, f"unknown identifier {t.text!r}")

    def call(self, name: _Token) -> Expr:
        fn = name.text.upper()
        if fn not in FUNCTIONS:
            raise FormulaError(name.offset, f"unknown function {name.text!r}")
        self.expect_op("(")
        args: list[Expr] = []
        if not self.at_op(")"):
            args.append(self.expr())
            while self.at_op(","):
                self.next()
                args.append(self.expr())
        self.expect_op(")")
        lo, hi = FUNCTIONS[fn]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if hi == lo else (f"at least {lo}" if hi is None else f"{lo}..{hi}")
            raise FormulaError(name.offset, f"{fn} takes {want} argument(s), got {len(args)}")
        return Call(fn, tuple(args))


def parse_formula(text: str) -> Expr:
    """Parse '=...' formula text to an AST; raises FormulaError on bad input.

    Error offsets are byte positions into the full formula text.
    """
    if not text.startswith("="):
        raise FormulaError(0, "formula must start with '='")
    tokens = _lex(text, start=1)
    parser = _Parser(tokens)
    ast = parser.expr()
    trailing = parser.peek()
    if trailing.kind != "EOF":
        raise FormulaError(trailing.offset, f"unexpected trailing input {trailing.text!r}")
    allowed = {
        id(node.args[0])
        for node in _walk(ast)
        if isinstance(node, Call) and node.fn == "WINDOW"
    }
    for ref, offset in parser.stream_refs:
        if id(ref) not in allowed:
            raise FormulaError(
                offset, "stream.attr references are only valid as WINDOW's first argument"
            )
    for node in _walk(ast):
        if isinstance(node, Call) and node.fn == "WINDOW":
            if not isinstance(node.args[0], StreamAttrRef):
                raise FormulaError(0, "WINDOW's first argument must be a stream.attr reference")
    return ast


def _walk(expr: Expr):
    yield expr
    if isinstance(expr, Unary):
        yield from _walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from _walk(expr.left)
        yield from _walk(expr.right)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from _walk(a)


# --- canonical printing ----------------------------------------------------

# grammar levels, loosest to tightest
_CMP, _ADD, _MUL, _NEG, _POW, _ATOM = range(1, 7)


def _fmt_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _render(e: Expr) -> tuple[str, int]:
    if isinstance(e, NumberLit):
        if e.value < 0:
            return "-" + _print(NumberLit(-e.value), _NEG), _NEG
        return _fmt_number(e.value), _ATOM
    if isinstance(e, TextLit):
        return '"' + e.value.replace('"', '""') + '"', _ATOM
    if isinstance(e, BoolLit):
        return ("TRUE" if e.value else "FALSE"), _ATOM
    if isinstance(e, CellRef):
        return format_addr(e.addr), _ATOM
    if isinstance(e, RangeRef):
        return e.rng.text(), _ATOM
    if isinstance(e, StreamAttrRef):
        return f"{e.stream}.{e.attr}", _ATOM
    if isinstance(e, Unary):
        return "-" + _print(e.operand, _NEG), _NEG
    if isinstance(e, Binary):
        if e.op in _CMP_OPS:
            return _print(e.left, _ADD) + e.op + _print(e.right, _ADD), _CMP
        if e.op in ("+", "-"):
            return _print(e.left, _ADD) + e.op + _print(e.right, _MUL), _ADD
        if e.op in ("*", "/"):
            return _print(e.left, _MUL) + e.op + _print(e.right, _NEG), _MUL
        if e.op == "^":
            return _print(e.left, _ATOM) + "^" + _print(e.right, _NEG), _POW
        raise ValueError(f"unknown operator {e.op!r}")
    if isinstance(e, Call):
        return e.fn + "(" + ",".join(_print(a, _CMP) for a in e.args) + ")", _ATOM
    raise TypeError(f"not an Expr: {e!r}")


def _print(e: Expr, required_level: int) -> str:
    s, level = _render(e)
    if level < required_level:
        return "(" + s + ")"
    return s


def format_formula(expr: Expr) -> str:
    """Canonical text; parse_formula(format_formula(e)) is structurally equal to e."""
    return "=" + _print(expr, _CMP)


# --- static references -----------------------------------------------------


def references(expr: Expr) -> set:
    """Static reads of a formula: CellAddr, RangeAddr (not flattened), (stream, attr)."""
    out: set = set()
    for node in _walk(expr):
        if isinstance(node, CellRef):
            out.add(node.addr)
        elif isinstance(node, RangeRef):
            out.add(node.rng)
        elif isinstance(node, StreamAttrRef):
            out.add((node.stream, node.attr))
    return out
