"""Relational operators over tuple-independent probabilistic tables.

A `ProbTable` is an ordinary table plus one probability per row; rows are
mutually independent events.  Deterministic selection and join act on the
scalar columns and carry or multiply probabilities; duplicate-eliminating
projection combines merged rows with the at-least-one rule; probabilistic
selection folds a comparison probability into the row probability; and
grouped aggregation produces one distribution-valued column per aggregate
together with the group existence probability.

Emitted exact distributions are conditioned on group existence: the mass
the aggregate's identity value owes to the fully-absent world is removed
and the rest renormalized.  The unconditioned view is recoverable as
p * dist + (1 - p) * identity, and deterministic (possible-world) results
compare directly against the conditioned form.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Sequence

from .aggregates import (
    DEFAULT_MAX_DENSE_DEGREE,
    DEFAULT_TOPK_CAPACITY,
    AtLeastOne,
    CountUda,
    MinMaxUda,
    MomentsUda,
    NormalUda,
    SumUda,
)
from .errors import ContractError, EmptySupportError, InternalError
from .moments import GammaMixture, NormalApprox
from .pgf import (
    DEFAULT_FFT_THRESHOLD,
    NEG_INF,
    POS_INF,
    DenseCountPgf,
    Pgf,
    ValueScale,
    is_finite_value,
    prob_compare,
    truncate_and_renormalize,
)

__all__ = [
    "Column",
    "ProbTable",
    "AggregateSpec",
    "EngineConfig",
    "AGGREGATE_KINDS",
    "METHODS_BY_KIND",
    "select_det",
    "select_prob",
    "project_prob",
    "join_prob",
    "group_aggregate",
    "t_agg",
    "det_select_prob",
    "det_group_aggregate",
]

AGGREGATE_KINDS = ("count", "sum", "min", "max")
METHODS_BY_KIND = {
    "count": ("exact", "normal", "moments"),
    "sum": ("exact", "normal", "moments"),
    "min": ("exact", "topk"),
    "max": ("exact", "topk"),
}

PREDICATE_OPS = ("=", "!=", "<", "<=", ">", ">=", "prefix", "between")
COMPARE_FLIP = {"=": "=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


def _default_threads() -> int:
    env = os.environ.get("PGFDB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError(f"PGFDB_THREADS must be an int, got {env!r}") from exc
        if n >= 1:
            return n
    return os.cpu_count() or 1


@dataclass
class EngineConfig:
    """Tunables shared by the operators and the plan executor."""

    threads: int = field(default_factory=_default_threads)
    fft_threshold: int = DEFAULT_FFT_THRESHOLD
    topk_capacity: int = DEFAULT_TOPK_CAPACITY
    mixture_components: int = 4
    max_dense_degree: int = DEFAULT_MAX_DENSE_DEGREE
    method_override: str | None = None


@dataclass(frozen=True)
class Column:
    """Schema entry: scalar data or a distribution-valued aggregate result."""

    name: str
    kind: str = "scalar"  # "scalar" | "pgf"
    scale_digits: int = 0
    dtype: str = "any"  # "int" | "float" | "str" | "any"; advisory for validation

    def __post_init__(self):
        if self.kind not in ("scalar", "pgf"):
            raise ValueError(f"unknown column kind {self.kind!r}")


class ProbTable:
    """Rows with independent existence probabilities."""

    __slots__ = ("columns", "rows", "probs", "_index")

    def __init__(
        self,
        columns: Sequence[Column],
        rows: Sequence[Sequence],
        probs: Sequence[float],
    ):
        self.columns = tuple(columns)
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {names}")
        self.rows = [list(r) for r in rows]
        self.probs = [float(p) for p in probs]
        if len(self.rows) != len(self.probs):
            raise ValueError("row/probability count mismatch")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")
        for i, p in enumerate(self.probs):
            if math.isnan(p) or not 0.0 <= p <= 1.0:
                raise ValueError(f"row {i} probability {p} outside [0, 1]")
        self._index = {c.name: i for i, c in enumerate(self.columns)}

    def col(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no column named {name!r}") from None

    def column(self, name: str) -> Column:
        return self.columns[self.col(name)]

    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def __len__(self) -> int:
        return len(self.rows)

    def __repr__(self) -> str:
        return f"ProbTable({[c.name for c in self.columns]}, {len(self.rows)} rows)"


# -- deterministic predicates -------------------------------------------


def _condition_fn(cond: dict, table: ProbTable) -> Callable[[Sequence], bool]:
    col = cond.get("column")
    op = cond.get("op")
    value = cond.get("value")
    if op not in PREDICATE_OPS:
        raise ValueError(f"unknown predicate op {op!r}")
    idx = table.col(col)
    if table.columns[idx].kind != "scalar":
        raise ValueError(f"predicate on non-scalar column {col!r}")
    if op == "prefix":
        return lambda row: isinstance(row[idx], str) and row[idx].startswith(value)
    if op == "between":
        lo, hi = value
        return lambda row: lo <= row[idx] <= hi
    import operator as _op

    fn = {
        "=": _op.eq,
        "!=": _op.ne,
        "<": _op.lt,
        "<=": _op.le,
        ">": _op.gt,
        ">=": _op.ge,
    }[op]
    return lambda row: fn(row[idx], value)


def select_det(table: ProbTable, predicate: Sequence[dict]) -> ProbTable:
    """Filter rows on deterministic scalar conditions (conjunction).

    Row probabilities are carried through unchanged.
    """
    tests = [_condition_fn(c, table) for c in predicate]
    keep = [
        i for i, row in enumerate(table.rows) if all(t(row) for t in tests)
    ]
    return ProbTable(
        table.columns,
        [table.rows[i] for i in keep],
        [table.probs[i] for i in keep],
    )


# -- probabilistic selection ---------------------------------------------


def _compare_cell(cell, op: str, value) -> float:
    """P(cell op value) for a distribution-valued cell and scalar value."""
    if isinstance(cell, Pgf):
        return prob_compare(cell, value, op)
    if isinstance(cell, (GammaMixture, NormalApprox)):
        pe, pl, pg = cell.compare_probs(value)
        return {
            "=": pe,
            "<": pl,
            "<=": pl + pe,
            ">": pg,
            ">=": pg + pe,
        }[op]
    raise ContractError(f"cell {cell!r} is not distribution-valued")


def select_prob(
    table: ProbTable,
    left: str,
    op: str,
    right,
    retain: bool = False,
) -> ProbTable:
    """Fold P(left op right) into each row's probability.

    At least one operand must be a distribution-valued column; `right` is
    either {"column": name, "scale": k} (k an optional scalar multiplier
    on the column value) or a constant.  Distribution operands are
    projected out of the result.  With `retain`, a single exact pgf
    operand compared against a scalar is kept instead, truncated to the
    satisfying values and renormalized.
    """
    if op not in COMPARE_FLIP:
        raise ValueError(f"unsupported comparison {op!r}")
    left_idx = table.col(left)
    left_is_pgf = table.columns[left_idx].kind == "pgf"
    right_idx = None
    right_is_pgf = False
    right_const = None
    right_scale = 1.0
    if isinstance(right, dict) and "column" in right:
        right_idx = table.col(right["column"])
        right_is_pgf = table.columns[right_idx].kind == "pgf"
        right_scale = float(right.get("scale", 1.0))
        if right_is_pgf and right_scale != 1.0:
            raise ValueError("scale requires a scalar right operand")
    elif isinstance(right, dict) and "const" in right:
        right_const = right["const"]
    else:
        right_const = right
    if not left_is_pgf and not right_is_pgf:
        raise ValueError("probabilistic selection needs a distribution operand")
    if retain and (left_is_pgf == right_is_pgf):
        raise ValueError("retain requires exactly one distribution operand")

    drop = {i for i, flag in ((left_idx, left_is_pgf), (right_idx, right_is_pgf)) if flag and i is not None}
    keep_idx = [i for i in range(len(table.columns)) if i not in drop or retain and i == left_idx]
    out_cols = [table.columns[i] for i in keep_idx]
    out_rows: list[list] = []
    out_probs: list[float] = []
    for row, p in zip(table.rows, table.probs):
        if left_is_pgf and right_is_pgf:
            a, b = row[left_idx], row[right_idx]
            if not isinstance(a, Pgf) or not isinstance(b, Pgf):
                raise ContractError(
                    "comparisons between two approximate distributions are not supported"
                )
            factor = prob_compare(a, b, op)
            new_cells = None
        elif left_is_pgf:
            value = (
                row[right_idx] * right_scale if right_idx is not None else right_const
            )
            cell = row[left_idx]
            if retain:
                if not isinstance(cell, Pgf):
                    raise ContractError("retain requires an exact distribution")
                try:
                    kept, factor = truncate_and_renormalize(
                        cell, _scalar_test(op, value)
                    )
                except EmptySupportError:
                    factor = 0.0
                    kept = None
                new_cells = {left_idx: kept}
            else:
                factor = _compare_cell(cell, op, value)
                new_cells = None
        else:
            value = row[left_idx]
            cell = row[right_idx]
            factor = _compare_cell(cell, COMPARE_FLIP[op], value)
            new_cells = None
        new_p = p * factor
        if new_p <= 0.0:
            continue
        cells = list(row)
        if new_cells:
            for i, v in new_cells.items():
                cells[i] = v
        out_rows.append([cells[i] for i in keep_idx])
        out_probs.append(new_p)
    return ProbTable(out_cols, out_rows, out_probs)


def _scalar_test(op: str, value) -> Callable:
    import operator as _op

    fn = {
        "=": _op.eq,
        "<": _op.lt,
        "<=": _op.le,
        ">": _op.gt,
        ">=": _op.ge,
    }[op]
    return lambda v: fn(v, value)


# -- projection and join --------------------------------------------------


def project_prob(table: ProbTable, columns: Sequence[str]) -> ProbTable:
    """Duplicate-eliminating projection.

    Rows that collapse to the same key survive together: the output row is
    present when at least one contributor is, so probabilities combine as
    1 - prod(1 - p_i).  Contributing rows must be independent, which the
    plan validator enforces structurally.
    """
    idxs = [table.col(name) for name in columns]
    for i in idxs:
        if table.columns[i].kind != "scalar":
            raise ValueError(
                f"column {table.columns[i].name!r} is distribution-valued; "
                "projection keys must be scalar"
            )
    states: dict[tuple, AtLeastOne] = {}
    for row, p in zip(table.rows, table.probs):
        key = tuple(row[i] for i in idxs)
        state = states.get(key)
        if state is None:
            states[key] = state = AtLeastOne()
        state.accumulate(p)
    out_cols = [table.columns[i] for i in idxs]
    rows = [list(key) for key in states]
    probs = [state.finalize() for state in states.values()]
    return ProbTable(out_cols, rows, probs)


def join_prob(
    left: ProbTable,
    right: ProbTable,
    on: Sequence[tuple[str, str]] = (),
) -> ProbTable:
    """Equi-join (cross product when `on` is empty); p = l.p * r.p.

    Join keys must be scalar; output keeps both sides' columns, so the
    two schemas must not collide on names.
    """
    overlap = set(left.column_names()) & set(right.column_names())
    if overlap:
        raise ValueError(f"join would duplicate column names {sorted(overlap)}")
    l_idx = [left.col(a) for a, _ in on]
    r_idx = [right.col(b) for _, b in on]
    for table, idxs in ((left, l_idx), (right, r_idx)):
        for i in idxs:
            if table.columns[i].kind != "scalar":
                raise ValueError(
                    f"join key {table.columns[i].name!r} is distribution-valued"
                )
    buckets: dict[tuple, list[int]] = {}
    for j, row in enumerate(right.rows):
        buckets.setdefault(tuple(row[i] for i in r_idx), []).append(j)
    out_cols = list(left.columns) + list(right.columns)
    rows: list[list] = []
    probs: list[float] = []
    for i, row in enumerate(left.rows):
        key = tuple(row[k] for k in l_idx)
        for j in buckets.get(key, ()):
            rows.append(list(row) + list(right.rows[j]))
            probs.append(left.probs[i] * right.probs[j])
    return ProbTable(out_cols, rows, probs)


# -- grouped aggregation ---------------------------------------------------


@dataclass(frozen=True)
class AggregateSpec:
    """One aggregate column: its kind, input column, and evaluation method."""

    name: str
    kind: str  # count | sum | min | max
    column: str | None = None  # ignored for count
    method: str = "exact"  # exact | normal | moments | topk

    def __post_init__(self):
        if self.kind not in AGGREGATE_KINDS:
            raise ValueError(f"unknown aggregate kind {self.kind!r}")
        if self.method not in METHODS_BY_KIND[self.kind]:
            raise ValueError(
                f"method {self.method!r} does not support {self.kind.upper()} "
                f"(supported: {', '.join(METHODS_BY_KIND[self.kind])})"
            )
        if self.kind != "count" and not self.column:
            raise ValueError(f"{self.kind.upper()} needs an input column")


def t_agg(dist: Pgf, kind: str) -> Pgf:
    """Re-map a distribution-valued input for re-aggregation.

    COUNT sees any present value as one tuple; SUM treats an empty
    MIN/MAX (an infinity) as adding nothing; MIN and MAX swap each
    other's identity element.
    """
    if kind == "count":
        return Pgf.point(1)
    moves = {
        "sum": {POS_INF: 0, NEG_INF: 0},
        "min": {NEG_INF: POS_INF},
        "max": {POS_INF: NEG_INF},
    }
    try:
        mapping = moves[kind]
    except KeyError:
        raise ValueError(f"unknown aggregate kind {kind!r}") from None
    return Pgf(
        ((mapping.get(k, k), p) for k, p in dist.items()),
        scale_digits=dist.scale_digits,
    )


def _make_state(spec: AggregateSpec, scale_digits: int, config: EngineConfig):
    if spec.kind == "count":
        if spec.method == "exact":
            return CountUda(
                fft_threshold=config.fft_threshold,
                max_degree=config.max_dense_degree,
            )
        if spec.method == "normal":
            return NormalUda(kind="count")
        return MomentsUda(kind="count", components=config.mixture_components)
    if spec.kind == "sum":
        if spec.method == "exact":
            return SumUda(
                scale_digits=scale_digits,
                fft_threshold=config.fft_threshold,
                max_degree=config.max_dense_degree,
            )
        if spec.method == "normal":
            return NormalUda(kind="sum", scale_digits=scale_digits)
        return MomentsUda(
            kind="sum",
            scale_digits=scale_digits,
            components=config.mixture_components,
        )
    capacity = config.topk_capacity if spec.method == "topk" else None
    return MinMaxUda(spec.kind, capacity=capacity, scale_digits=scale_digits)


_NEUTRAL_KEY = {"count": 0, "sum": 0, "min": POS_INF, "max": NEG_INF}


def _condition_on_existence(dist: Pgf, p_exist: float, kind: str) -> Pgf:
    """Remove the fully-absent world's mass from the identity term."""
    absent = 1.0 - p_exist
    if p_exist <= 0.0 or absent <= 0.0:
        return dist
    neutral = _NEUTRAL_KEY[kind]
    weights = dict(dist.items())
    target = neutral if neutral in weights else dist.overflow_at
    if target is None or target not in weights:
        if absent > 1e-9:
            raise InternalError("absent-world mass missing from aggregate identity")
        return dist
    remaining = weights[target] - absent
    if remaining < -1e-9:
        raise InternalError("absent-world mass exceeds identity mass")
    overflow_at = dist.overflow_at
    if remaining <= 1e-15:
        del weights[target]
        if overflow_at == target:
            overflow_at = None
    else:
        weights[target] = remaining
    return Pgf.from_weights(
        weights, scale_digits=dist.scale_digits, overflow_at=overflow_at
    )


def _input_value(cell, col: Column, kind: str):
    """Scalar input for an aggregate, unwrapping degenerate distributions."""
    if col.kind == "scalar":
        return cell
    if not isinstance(cell, Pgf):
        raise ContractError(
            f"{kind.upper()} over approximate distribution column {col.name!r} "
            "is not supported"
        )
    mapped = t_agg(cell, kind)
    items = mapped.items()
    if len(items) == 1 and is_finite_value(items[0][0]):
        return ValueScale(mapped.scale_digits).from_grid(items[0][0])
    raise ContractError(
        f"{kind.upper()} over distribution column {col.name!r} is only "
        "supported for single-point distributions"
    )


def _stable_partition(key: tuple, workers: int) -> int:
    digest = hashlib.blake2b(repr(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % workers


def group_aggregate(
    table: ProbTable,
    group_by: Sequence[str],
    aggregates: Sequence[AggregateSpec],
    config: EngineConfig | None = None,
    workers: int = 1,
) -> ProbTable:
    """Group rows and compute each aggregate's distribution per group.

    Output columns are the group keys, then one distribution column per
    aggregate; the row probability is the group existence probability.
    Rows are hash-partitioned across workers, each partition accumulates
    aggregate states independently, and partitions merge in index order,
    so results do not depend on the worker count.
    """
    config = config or EngineConfig()
    names = set()
    for spec in aggregates:
        if spec.name in names:
            raise ValueError(f"duplicate aggregate name {spec.name!r}")
        names.add(spec.name)
    key_idx = [table.col(name) for name in group_by]
    for i in key_idx:
        if table.columns[i].kind != "scalar":
            raise ValueError(
                f"group key {table.columns[i].name!r} is distribution-valued"
            )
    agg_cols: list[tuple[AggregateSpec, Column | None, int | None]] = []
    for spec in aggregates:
        if spec.kind == "count" and spec.column is None:
            agg_cols.append((spec, None, None))
        else:
            idx = table.col(spec.column)
            agg_cols.append((spec, table.columns[idx], idx))

    method_scale = {
        spec.name: (col.scale_digits if col is not None and spec.kind != "count" else 0)
        for spec, col, _ in agg_cols
    }

    workers = max(1, int(workers))
    key_order: list[tuple] = []
    seen: set = set()
    buckets: list[list[int]] = [[] for _ in range(workers)]
    for i, row in enumerate(table.rows):
        key = tuple(row[k] for k in key_idx)
        if key not in seen:
            seen.add(key)
            key_order.append(key)
        buckets[_stable_partition(key, workers) if workers > 1 else 0].append(i)

    def accumulate(bucket: Sequence[int]):
        states: dict[tuple, tuple[AtLeastOne, list]] = {}
        for i in bucket:
            row = table.rows[i]
            p = table.probs[i]
            key = tuple(row[k] for k in key_idx)
            entry = states.get(key)
            if entry is None:
                entry = (
                    AtLeastOne(),
                    [
                        _make_state(spec, method_scale[spec.name], config)
                        for spec, _, _ in agg_cols
                    ],
                )
                states[key] = entry
            exist, udas = entry
            exist.accumulate(p)
            for (spec, col, idx), state in zip(agg_cols, udas):
                if spec.kind == "count":
                    state.accumulate(p)
                else:
                    state.accumulate(p, _input_value(row[idx], col, spec.kind))
        return states

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(accumulate, buckets))
    else:
        partials = [accumulate(buckets[0])]

    merged: dict[tuple, tuple[AtLeastOne, list]] = {}
    for part in partials:  # partition index order keeps merges canonical
        for key, (exist, udas) in part.items():
            if key not in merged:
                merged[key] = (exist, udas)
            else:
                m_exist, m_udas = merged[key]
                m_exist.merge(exist)
                for mine, theirs in zip(m_udas, udas):
                    mine.merge(theirs)

    out_cols = [table.columns[i] for i in key_idx]
    out_cols += [
        Column(spec.name, kind="pgf", scale_digits=method_scale[spec.name])
        for spec, _, _ in agg_cols
    ]
    rows: list[list] = []
    probs: list[float] = []
    for key in key_order:
        exist, udas = merged[key]
        p_exist = exist.finalize()
        cells = list(key)
        for (spec, _, _), state in zip(agg_cols, udas):
            result = state.finalize()
            if isinstance(result, DenseCountPgf):
                result = result.to_pgf()
            if isinstance(result, Pgf):
                result = _condition_on_existence(result, p_exist, spec.kind)
            cells.append(result)
        rows.append(cells)
        probs.append(p_exist)
    return ProbTable(out_cols, rows, probs)


# -- deterministic (single-world) variants --------------------------------


def det_select_prob(table: ProbTable, left: str, op: str, right) -> ProbTable:
    """Single-world form of select_prob: plain scalar comparison filter."""
    left_idx = table.col(left)
    if isinstance(right, dict) and "column" in right:
        right_idx = table.col(right["column"])
        scale = float(right.get("scale", 1.0))
        get = lambda row: row[right_idx] * scale  # noqa: E731
    else:
        const = right["const"] if isinstance(right, dict) else right
        get = lambda row: const  # noqa: E731
    test = {
        "=": lambda a, b: a == b,
        "<": lambda a, b: a < b,
        "<=": lambda a, b: a <= b,
        ">": lambda a, b: a > b,
        ">=": lambda a, b: a >= b,
    }[op]
    keep = [
        i
        for i, row in enumerate(table.rows)
        if test(row[left_idx], get(row))
    ]
    return ProbTable(
        table.columns,
        [table.rows[i] for i in keep],
        [table.probs[i] for i in keep],
    )


def det_group_aggregate(
    table: ProbTable,
    group_by: Sequence[str],
    aggregates: Sequence[AggregateSpec],
) -> ProbTable:
    """Single-world form of group_aggregate: scalar aggregates per group.

    Groups with no rows simply do not appear, matching the conditioned
    probabilistic output.
    """
    key_idx = [table.col(name) for name in group_by]
    agg_info = []
    for spec in aggregates:
        idx = table.col(spec.column) if spec.column else None
        scale = (
            table.columns[idx].scale_digits
            if idx is not None and spec.kind != "count"
            else 0
        )
        agg_info.append((spec, idx, ValueScale(scale)))
    groups: dict[tuple, list[list]] = {}
    order: list[tuple] = []
    for row in table.rows:
        key = tuple(row[k] for k in key_idx)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out_cols = [table.columns[i] for i in key_idx]
    out_cols += [
        Column(spec.name, kind="scalar", scale_digits=scale.scale_digits)
        for spec, _, scale in agg_info
    ]
    rows = []
    for key in order:
        members = groups[key]
        cells = list(key)
        for spec, idx, scale in agg_info:
            if spec.kind == "count":
                cells.append(len(members))
                continue
            keys = [scale.to_grid(row[idx]) for row in members]
            if spec.kind == "sum":
                cells.append(scale.from_grid(sum(keys)))
            elif spec.kind == "min":
                cells.append(scale.from_grid(min(keys)))
            else:
                cells.append(scale.from_grid(max(keys)))
        rows.append(cells)
    return ProbTable(out_cols, rows, [1.0] * len(rows))
