"""Expression language for skim predicates and derived columns.

Precedence, loosest first: ``||``, ``&&``, comparisons, ``+ -``, ``* /``,
unary ``- !``, then calls and atoms. Comparisons do not chain. The builtin
calls are count, sum, max, min (jagged input, scalar output) plus abs and
sqrt (elementwise).

Evaluation is columnar over entry ranges, with a semantics chosen so that
the result is bitwise identical to a per-event interpreter:

- integers are 64-bit and wrap on overflow; integer division floors and
  raises on a zero divisor
- float arithmetic is IEEE double; division by zero yields inf/NaN
- sum folds each event's elements left to right from zero
- max/min return f64, propagate NaN, and yield NaN on an empty event
- ``&&`` and ``||`` do not short-circuit
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .treefile import ColumnChunk, Dtype, Shape


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprTypeError(ExprError):
    pass


class EvalError(ExprError):
    pass


class Kind(Enum):
    BOOL = "bool"
    I64 = "i64"
    F64 = "f64"

    @property
    def numpy(self) -> np.dtype:
        return _KIND_NUMPY[self]


_KIND_NUMPY = {
    Kind.BOOL: np.dtype(bool),
    Kind.I64: np.dtype(np.int64),
    Kind.F64: np.dtype(np.float64),
}

# Column dtypes widen losslessly on load; the expression engine only
# distinguishes bool, 64-bit int, and double.
_DTYPE_KIND = {
    Dtype.I32: Kind.I64,
    Dtype.I64: Kind.I64,
    Dtype.F32: Kind.F64,
    Dtype.F64: Kind.F64,
    Dtype.BOOL: Kind.BOOL,
}


@dataclass(frozen=True)
class ExprType:
    kind: Kind
    jagged: bool

    def __str__(self) -> str:
        return f"{'jagged ' if self.jagged else ''}{self.kind.value}"


# ---------------------------------------------------------------------------
# AST
#
# `offset` is excluded from equality so that structurally identical
# expressions compare equal regardless of where they sat in the source.


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Literal(Expr):
    value: object
    kind: Kind
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ColumnRef(Expr):
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    operand: Expr
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr
    offset: int = field(default=0, compare=False)


FUNCTIONS = ("count", "sum", "max", "min", "abs", "sqrt")
_AGGREGATES = ("count", "sum", "max", "min")

_COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")


def column_refs(expr: Expr) -> set[str]:
    """Names of every column the expression reads."""
    out: set[str] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, ColumnRef):
            out.add(node.name)
        elif isinstance(node, Unary):
            stack.append(node.operand)
        elif isinstance(node, Binary):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Call):
            stack.append(node.arg)
    return out


# ---------------------------------------------------------------------------
# tokenizer / parser


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_]\w*)
    | (?P<op>\|\||&&|==|!=|<=|>=|[+\-*/<>!()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "ident" | "op" | "eof"
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if match.lastgroup != "ws":
            tokens.append(_Token(match.lastgroup, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> _Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r}", tok.offset)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.or_expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected {tok.text!r}", tok.offset)
        return expr

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.peek().kind == "op" and self.peek().text == "||":
            tok = self.advance()
            left = Binary("||", left, self.and_expr(), offset=tok.offset)
        return left

    def and_expr(self) -> Expr:
        left = self.cmp_expr()
        while self.peek().kind == "op" and self.peek().text == "&&":
            tok = self.advance()
            left = Binary("&&", left, self.cmp_expr(), offset=tok.offset)
        return left

    def cmp_expr(self) -> Expr:
        left = self.add_expr()
        tok = self.peek()
        if tok.kind == "op" and tok.text in _COMPARISONS:
            self.advance()
            # no chaining: a < b < c is a syntax error at the second '<'
            return Binary(tok.text, left, self.add_expr(), offset=tok.offset)
        return left

    def add_expr(self) -> Expr:
        left = self.mul_expr()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            tok = self.advance()
            left = Binary(tok.text, left, self.mul_expr(), offset=tok.offset)
        return left

    def mul_expr(self) -> Expr:
        left = self.unary_expr()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            tok = self.advance()
            left = Binary(tok.text, left, self.unary_expr(), offset=tok.offset)
        return left

    def unary_expr(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("-", "!"):
            self.advance()
            return Unary(tok.text, self.unary_expr(), offset=tok.offset)
        return self.atom()

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            if any(c in tok.text for c in ".eE"):
                return Literal(float(tok.text), Kind.F64, offset=tok.offset)
            value = int(tok.text)
            if value > 2**63 - 1:
                raise ParseError("integer literal out of range", tok.offset)
            return Literal(value, Kind.I64, offset=tok.offset)
        if tok.kind == "ident":
            self.advance()
            if tok.text == "true":
                return Literal(True, Kind.BOOL, offset=tok.offset)
            if tok.text == "false":
                return Literal(False, Kind.BOOL, offset=tok.offset)
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", tok.offset)
                self.advance()
                arg = self.or_expr()
                self.expect_op(")")
                return Call(tok.text, arg, offset=tok.offset)
            return ColumnRef(tok.text, offset=tok.offset)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            expr = self.or_expr()
            self.expect_op(")")
            return expr
        if tok.kind == "eof":
            raise ParseError("unexpected end of input", tok.offset)
        raise ParseError(f"unexpected {tok.text!r}", tok.offset)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# typecheck


def _numeric(t: ExprType) -> bool:
    return t.kind in (Kind.I64, Kind.F64)


def _promote(a: Kind, b: Kind) -> Kind:
    return Kind.F64 if Kind.F64 in (a, b) else Kind.I64


def typecheck(expr: Expr, schema: dict[str, tuple[Dtype, Shape]]) -> ExprType:
    """Resolve the expression's result type against a tree schema.

    Raises :class:`ExprTypeError` on unknown columns, non-numeric
    arithmetic, aggregates applied to flat columns, or mixed-shape misuse.
    """
    if isinstance(expr, Literal):
        return ExprType(expr.kind, jagged=False)
    if isinstance(expr, ColumnRef):
        if expr.name not in schema:
            raise ExprTypeError(f"unknown column {expr.name!r}")
        dtype, shape = schema[expr.name]
        return ExprType(_DTYPE_KIND[Dtype(dtype)], jagged=Shape(shape) is Shape.JAGGED)
    if isinstance(expr, Unary):
        inner = typecheck(expr.operand, schema)
        if expr.op == "-":
            if not _numeric(inner):
                raise ExprTypeError(f"unary '-' needs a numeric operand, got {inner}")
            return inner
        if not (inner.kind is Kind.BOOL):
            raise ExprTypeError(f"'!' needs a bool operand, got {inner}")
        return inner
    if isinstance(expr, Binary):
        left = typecheck(expr.left, schema)
        right = typecheck(expr.right, schema)
        jagged = left.jagged or right.jagged
        if expr.op in ("&&", "||"):
            if left.kind is not Kind.BOOL or right.kind is not Kind.BOOL:
                raise ExprTypeError(f"{expr.op!r} needs bool operands, got {left} and {right}")
            return ExprType(Kind.BOOL, jagged)
        if expr.op in _COMPARISONS:
            if _numeric(left) and _numeric(right):
                return ExprType(Kind.BOOL, jagged)
            if left.kind is Kind.BOOL and right.kind is Kind.BOOL and expr.op in ("==", "!="):
                return ExprType(Kind.BOOL, jagged)
            raise ExprTypeError(f"cannot compare {left} with {right} using {expr.op!r}")
        if not (_numeric(left) and _numeric(right)):
            raise ExprTypeError(f"{expr.op!r} needs numeric operands, got {left} and {right}")
        return ExprType(_promote(left.kind, right.kind), jagged)
    if isinstance(expr, Call):
        inner = typecheck(expr.arg, schema)
        if expr.func in _AGGREGATES:
            if not inner.jagged:
                raise ExprTypeError(f"{expr.func} needs a jagged argument, got scalar {inner}")
            if expr.func == "count":
                return ExprType(Kind.I64, jagged=False)
            if not _numeric(inner):
                raise ExprTypeError(f"{expr.func} needs numeric elements, got {inner}")
            if expr.func == "sum":
                return ExprType(inner.kind, jagged=False)
            return ExprType(Kind.F64, jagged=False)  # max/min: NaN must be representable
        if not _numeric(inner):
            raise ExprTypeError(f"{expr.func} needs a numeric argument, got {inner}")
        if expr.func == "sqrt":
            return ExprType(Kind.F64, inner.jagged)
        return inner  # abs
    raise ExprTypeError(f"unhandled node {type(expr).__name__}")


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class _Val:
    values: np.ndarray
    offsets: np.ndarray | None = None  # jagged iff not None; local, starts at 0

    @property
    def jagged(self) -> bool:
        return self.offsets is not None


def _load(chunk: ColumnChunk) -> _Val:
    values = chunk.values
    if values.dtype == np.int32:
        values = values.astype(np.int64)
    elif values.dtype == np.float32:
        values = values.astype(np.float64)
    return _Val(values, chunk.offsets)


def _flatten_pair(a: _Val, b: _Val, offset: int) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Align two operands elementwise, broadcasting scalars over jagged peers."""
    if a.jagged and b.jagged:
        if len(a.offsets) != len(b.offsets) or not np.array_equal(a.offsets, b.offsets):
            raise EvalError(
                f"jagged operands have different per-event lengths (operator at offset {offset})"
            )
        return a.values, b.values, a.offsets
    if a.jagged:
        return a.values, np.repeat(b.values, np.diff(a.offsets)), a.offsets
    if b.jagged:
        return np.repeat(a.values, np.diff(b.offsets)), b.values, b.offsets
    return a.values, b.values, None


def _promote_arrays(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.dtype == np.float64 and b.dtype != np.float64:
        b = b.astype(np.float64)
    elif b.dtype == np.float64 and a.dtype != np.float64:
        a = a.astype(np.float64)
    return a, b


def _fold_sum(val: _Val) -> np.ndarray:
    """Per-event left-to-right sum, matching a scalar accumulator loop bitwise."""
    counts = np.diff(val.offsets)
    starts = val.offsets[:-1]
    out = np.zeros(len(counts), dtype=val.values.dtype)
    limit = int(counts.max()) if len(counts) else 0
    for j in range(limit):
        sel = counts > j
        out[sel] += val.values[starts[sel] + j]
    return out


def _fold_extremum(val: _Val, op) -> np.ndarray:
    """Per-event max/min in f64; NaN elements poison the event, empty gives NaN."""
    counts = np.diff(val.offsets)
    starts = val.offsets[:-1]
    values = val.values.astype(np.float64, copy=False)
    out = np.full(len(counts), np.nan, dtype=np.float64)
    limit = int(counts.max()) if len(counts) else 0
    for j in range(limit):
        sel = counts > j
        picked = values[starts[sel] + j]
        if j == 0:
            out[sel] = picked
        else:
            out[sel] = op(out[sel], picked)  # np.maximum/minimum propagate NaN
    return out


def evaluate(
    expr: Expr,
    columns: dict[str, ColumnChunk],
    n_entries: int | None = None,
) -> ColumnChunk:
    """Evaluate over an entry range; columns must share one entry count.

    The expression should already typecheck against the schema the columns
    came from. Returns a flat chunk for scalar results or a jagged chunk
    for per-event arrays.
    """
    names = column_refs(expr)
    for name in names:
        if name not in columns:
            raise EvalError(f"column {name!r} not provided")
    lengths = {columns[name].n_entries for name in names}
    if len(lengths) > 1:
        raise EvalError(f"columns cover different entry counts: {sorted(lengths)}")
    if n_entries is None:
        if not lengths:
            raise EvalError("expression reads no columns; pass n_entries explicitly")
        n_entries = lengths.pop()
    elif lengths and lengths != {n_entries}:
        raise EvalError(f"columns cover {lengths.pop()} entries, expected {n_entries}")

    result = _eval(expr, columns, n_entries)
    return ColumnChunk(result.values, result.offsets)


def _eval(expr: Expr, columns: dict[str, ColumnChunk], n: int) -> _Val:
    if isinstance(expr, Literal):
        return _Val(np.full(n, expr.value, dtype=expr.kind.numpy))
    if isinstance(expr, ColumnRef):
        return _load(columns[expr.name])
    if isinstance(expr, Unary):
        inner = _eval(expr.operand, columns, n)
        if expr.op == "-":
            return _Val(np.negative(inner.values), inner.offsets)
        return _Val(~inner.values, inner.offsets)
    if isinstance(expr, Binary):
        left = _eval(expr.left, columns, n)
        right = _eval(expr.right, columns, n)
        a, b, offsets = _flatten_pair(left, right, expr.offset)
        return _Val(_apply_binary(expr.op, a, b, expr.offset), offsets)
    if isinstance(expr, Call):
        inner = _eval(expr.arg, columns, n)
        if expr.func in _AGGREGATES:
            if not inner.jagged:
                raise EvalError(f"{expr.func} applied to a scalar value")
            if expr.func == "count":
                return _Val(np.diff(inner.offsets).astype(np.int64))
            if expr.func == "sum":
                return _Val(_fold_sum(inner))
            op = np.maximum if expr.func == "max" else np.minimum
            return _Val(_fold_extremum(inner, op))
        if expr.func == "abs":
            return _Val(np.abs(inner.values), inner.offsets)
        with np.errstate(invalid="ignore"):
            return _Val(np.sqrt(inner.values.astype(np.float64, copy=False)), inner.offsets)
    raise EvalError(f"unhandled node {type(expr).__name__}")


def _apply_binary(op: str, a: np.ndarray, b: np.ndarray, offset: int) -> np.ndarray:
    if op in ("&&", "||"):
        return (a & b) if op == "&&" else (a | b)
    if op in _COMPARISONS:
        if a.dtype == bool or b.dtype == bool:
            if op not in ("==", "!="):
                raise EvalError(f"bool values only support == and != (operator at offset {offset})")
            return (a == b) if op == "==" else (a != b)
        a, b = _promote_arrays(a, b)
        with np.errstate(invalid="ignore"):
            return {
                "==": np.equal, "!=": np.not_equal,
                "<": np.less, "<=": np.less_equal,
                ">": np.greater, ">=": np.greater_equal,
            }[op](a, b)
    a, b = _promote_arrays(a, b)
    if op == "/":
        if a.dtype == np.int64:
            if np.any(b == 0):
                raise EvalError(f"integer division by zero (operator at offset {offset})")
            return a // b
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / b
    func = {"+": np.add, "-": np.subtract, "*": np.multiply}[op]
    with np.errstate(over="ignore"):
        return func(a, b)
