"""Naive per-event reference implementations used as test oracles.

Everything here trades speed for obviousness: expressions are interpreted
one event at a time with scalar Python arithmetic, histograms are filled
with plain loops, and the byte-range window cache is replayed over
``(offset, length)`` lists.  The vectorized production code is expected to
reproduce these results bit for bit; floats are compared with
:func:`arrays_match`, which demands identical bits except that NaN payloads
are ignored (NaN positions still have to line up).
"""

from __future__ import annotations

import math

import numpy as np

from treeduce.exprlang import Binary, Call, ColumnRef, Expr, Literal, Unary
from treeduce.treefile import ColumnChunk

U64 = 1 << 64
I64_MIN = -(1 << 63)


class RefError(Exception):
    """Raised where the production evaluator raises EvalError."""


def wrap64(value: int) -> int:
    """Reduce an arbitrary int to two's-complement int64."""
    return ((value - I64_MIN) % U64) + I64_MIN


def _is_float(v) -> bool:
    return isinstance(v, float)


def _is_bool(v) -> bool:
    return isinstance(v, bool)


def ieee_div(x: float, y: float) -> float:
    """IEEE 754 double division, including the zero-divisor cases."""
    if y == 0.0:
        if math.isnan(x) or x == 0.0:
            return float("nan")
        return math.inf * math.copysign(1.0, x) * math.copysign(1.0, y)
    return x / y


def ieee_max(a: float, b: float) -> float:
    # ties keep the right operand, matching np.maximum
    if math.isnan(a) or math.isnan(b):
        return float("nan")
    return a if a > b else b


def ieee_min(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b):
        return float("nan")
    return a if a < b else b


def _arith(op: str, a, b):
    if _is_float(a) or _is_float(b):
        x, y = float(a), float(b)
        if op == "+":
            return x + y
        if op == "-":
            return x - y
        if op == "*":
            return x * y
        if op == "/":
            return ieee_div(x, y)
        raise AssertionError(op)
    x, y = int(a), int(b)
    if op == "+":
        return wrap64(x + y)
    if op == "-":
        return wrap64(x - y)
    if op == "*":
        return wrap64(x * y)
    if op == "/":
        if y == 0:
            raise RefError("integer division by zero")
        return wrap64(x // y)
    raise AssertionError(op)


def _compare(op: str, a, b) -> bool:
    if _is_bool(a) or _is_bool(b):
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        raise RefError("ordered comparison on bool")
    if _is_float(a) or _is_float(b):
        # mirror the f64 promotion the vectorized path performs up front
        a, b = float(a), float(b)
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise AssertionError(op)


def _pairs(a, b):
    """Broadcast two operands; returns (pair list, is_jagged)."""
    a_j, b_j = isinstance(a, list), isinstance(b, list)
    if a_j and b_j:
        if len(a) != len(b):
            raise RefError("jagged length mismatch")
        return list(zip(a, b)), True
    if a_j:
        return [(x, b) for x in a], True
    if b_j:
        return [(a, y) for y in b], True
    return [(a, b)], False


def _map1(fn, v):
    if isinstance(v, list):
        return [fn(x) for x in v]
    return fn(v)


def _map2(fn, a, b):
    pairs, jagged = _pairs(a, b)
    out = [fn(x, y) for x, y in pairs]
    return out if jagged else out[0]


def _float_valued(expr: Expr, float_cols: frozenset) -> bool:
    """Kind of a well-typed expression's values: float, or int/bool."""
    if isinstance(expr, Literal):
        return isinstance(expr.value, float)
    if isinstance(expr, ColumnRef):
        return expr.name in float_cols
    if isinstance(expr, Unary):
        return expr.op == "-" and _float_valued(expr.operand, float_cols)
    if isinstance(expr, Binary):
        if expr.op in ("&&", "||", "==", "!=", "<", "<=", ">", ">="):
            return False
        return _float_valued(expr.left, float_cols) or _float_valued(expr.right, float_cols)
    if isinstance(expr, Call):
        if expr.func == "count":
            return False
        if expr.func in ("sqrt", "max", "min"):
            return True
        # abs and sum keep their argument's kind
        return _float_valued(expr.arg, float_cols)
    raise AssertionError(f"unhandled node {expr!r}")


def eval_event(expr: Expr, event: dict, float_cols: frozenset = frozenset()):
    """Interpret one event.

    ``event`` maps column names to Python scalars (flat) or lists of
    Python scalars (jagged); int columns arrive as int, f32/f64 as float,
    bool as bool.  Returns a scalar or a list.  ``float_cols`` names the
    float columns; an empty fold cannot learn its kind from the values.
    """
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, ColumnRef):
        return event[expr.name]
    if isinstance(expr, Unary):
        v = eval_event(expr.operand, event, float_cols)
        if expr.op == "!":
            return _map1(lambda x: not x, v)
        return _map1(lambda x: -x if _is_float(x) else wrap64(-x), v)
    if isinstance(expr, Binary):
        a = eval_event(expr.left, event, float_cols)
        b = eval_event(expr.right, event, float_cols)
        if expr.op == "&&":
            return _map2(lambda x, y: bool(x) and bool(y), a, b)
        if expr.op == "||":
            return _map2(lambda x, y: bool(x) or bool(y), a, b)
        if expr.op in ("==", "!=", "<", "<=", ">", ">="):
            return _map2(lambda x, y: _compare(expr.op, x, y), a, b)
        return _map2(lambda x, y: _arith(expr.op, x, y), a, b)
    if isinstance(expr, Call):
        arg = eval_event(expr.arg, event, float_cols)
        if expr.func == "abs":
            return _map1(lambda x: math.fabs(x) if _is_float(x) else wrap64(abs(x)), arg)
        if expr.func == "sqrt":
            return _map1(_ref_sqrt, arg)
        if not isinstance(arg, list):
            raise RefError(f"{expr.func} needs a jagged argument")
        if expr.func == "count":
            return len(arg)
        if expr.func == "sum":
            return _fold_sum(arg, _float_valued(expr.arg, float_cols))
        if expr.func == "max":
            return _fold_extremum(arg, ieee_max)
        if expr.func == "min":
            return _fold_extremum(arg, ieee_min)
    raise AssertionError(f"unhandled node {expr!r}")


def _ref_sqrt(x) -> float:
    x = float(x)
    if math.isnan(x) or x < 0.0:
        return float("nan")
    return math.sqrt(x)


def _fold_sum(items: list, force_float: bool):
    if force_float:
        acc = 0.0
        for v in items:
            acc = acc + v
        return acc
    acc = 0
    for v in items:
        acc = wrap64(acc + v)
    return acc


def _fold_extremum(items: list, op) -> float:
    if not items:
        return float("nan")
    acc = float(items[0])
    for v in items[1:]:
        acc = op(acc, float(v))
    return acc


def eval_events(expr: Expr, events: list[dict], float_cols: frozenset = frozenset()) -> list:
    """Per-event evaluation; any event failing mirrors a chunk-wide error."""
    return [eval_event(expr, ev, float_cols) for ev in events]


def float_columns(columns: dict[str, ColumnChunk]) -> frozenset:
    """Names of the float-element columns, for ``float_cols`` arguments."""
    return frozenset(name for name, c in columns.items() if c.values.dtype.kind == "f")


def events_from_columns(columns: dict[str, ColumnChunk], n_entries: int | None = None) -> list[dict]:
    """Explode column chunks into per-event dicts of Python values."""
    if n_entries is None:
        n_entries = next(iter(columns.values())).n_entries
    events = []
    for i in range(n_entries):
        ev = {}
        for name, chunk in columns.items():
            if chunk.offsets is None:
                ev[name] = chunk.values[i].item()
            else:
                lo = int(chunk.offsets[i])
                hi = int(chunk.offsets[i + 1])
                ev[name] = [v.item() for v in chunk.values[lo:hi]]
        events.append(ev)
    return events


def arrays_match(a: np.ndarray, b: np.ndarray) -> bool:
    """Bitwise equality, except NaN payloads; NaN positions must align."""
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype != b.dtype or a.shape != b.shape:
        return False
    if a.dtype.kind == "f":
        nan_a, nan_b = np.isnan(a), np.isnan(b)
        if not np.array_equal(nan_a, nan_b):
            return False
        return a[~nan_a].tobytes() == b[~nan_b].tobytes()
    return a.tobytes() == b.tobytes()


def chunks_match(a: ColumnChunk, b: ColumnChunk) -> bool:
    if (a.offsets is None) != (b.offsets is None):
        return False
    if a.offsets is not None and not np.array_equal(a.offsets, b.offsets):
        return False
    return arrays_match(a.values, b.values)


# --- histogram filling -------------------------------------------------

def route_value(q: float, num: int, low: float, high: float) -> int:
    """Bin index; -1 underflow, num overflow, num + 1 nanflow."""
    if math.isnan(q):
        return num + 1
    if q < low:
        return -1
    if q >= high:
        return num
    scaled = (q - low) / (high - low) * num
    return min(int(math.floor(scaled)), num - 1)


def fill_histogram(qs, weights, num: int, low: float, high: float) -> dict:
    """Loop-fill a binned count histogram; returns plain totals."""
    values = [0.0] * num
    under = over = nan = 0.0
    entries = 0.0
    for q, w in zip(qs, weights, strict=True):
        entries += w
        slot = route_value(float(q), num, low, high)
        if slot == -1:
            under += w
        elif slot == num:
            over += w
        elif slot == num + 1:
            nan += w
        else:
            values[slot] += w
    return {
        "values": values,
        "underflow": under,
        "overflow": over,
        "nanflow": nan,
        "entries": entries,
    }


# --- byte-range window cache -------------------------------------------

def simulate_cache(
    requests: list[tuple[int, int]],
    file_len: int,
    read_ahead: int,
    max_windows: int,
) -> dict:
    """Replay reads against the LRU window cache; returns traffic totals."""
    windows: list[tuple[int, int]] = []  # (start, stop), MRU last
    requested = fetched = calls = 0
    for offset, length in requests:
        if length <= 0:
            continue
        requested += length
        hit = None
        for i, (start, stop) in enumerate(windows):
            if start <= offset and offset + length <= stop:
                hit = i
                break
        if hit is not None:
            if hit + 1 != len(windows):
                windows.append(windows.pop(hit))
            continue
        fetch_len = max(length, read_ahead)
        fetch_len = min(fetch_len, max(file_len - offset, 0))
        if fetch_len == 0:
            continue
        calls += 1
        fetched += fetch_len
        windows.append((offset, offset + fetch_len))
        if len(windows) > max_windows:
            windows.pop(0)
    return {"bytes_requested": requested, "bytes_fetched": fetched, "fetch_calls": calls}


def task_requests(reader, tree: str, columns: tuple[str, ...], entry_start: int, entry_stop: int) -> list[tuple[int, int]]:
    """The (offset, length) sequence one reduction task issues.

    Mirrors open-file (header, directory) plus the overlapping baskets of
    each requested column in column order.
    """
    reqs = [(0, 32), (reader.header.dir_offset, reader.header.dir_len)]
    tmeta = reader.tree(tree)
    for name in columns:
        for basket in tmeta.branches[name].baskets:
            b_start = basket.first_entry
            b_stop = basket.first_entry + basket.n_entries
            if b_stop <= entry_start or b_start >= entry_stop:
                continue
            reqs.append((basket.offset, basket.stored_len))
    return reqs


# --- whole-job reduction ------------------------------------------------

def reduce_events(
    events: list[dict],
    keep: list[str],
    skim: Expr | None,
    derived: list[tuple[str, Expr]],
    float_cols: frozenset = frozenset(),
) -> list[dict]:
    """Select events, then extend the survivors with derived values."""
    out = []
    for ev in events:
        if skim is not None:
            verdict = eval_event(skim, ev, float_cols)
            if not isinstance(verdict, bool):
                raise RefError("skim must produce a flat bool")
            if not verdict:
                continue
        row = {name: ev[name] for name in keep}
        for name, expr in derived:
            row[name] = eval_event(expr, ev, float_cols)
        out.append(row)
    return out
