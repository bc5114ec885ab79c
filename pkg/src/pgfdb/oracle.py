"""Brute-force possible-worlds evaluation.

The independent correctness oracle for the exact engine paths: expand the
uncertain tuples into all 2^n presence combinations, evaluate the plan's
single-world (deterministic) form in each, and accumulate world weight per
distinct result tuple and aggregate value.  Certain rows (p = 1) appear in
every world and impossible rows (p = 0) in none, so only rows with
0 < p < 1 spend enumeration budget; the total is capped at 24.

`aggregate_distribution` is the vectorized single-aggregate variant used
where the full plan machinery would be needless overhead: one table, one
aggregate kind, the whole world space processed in chunked bitmask
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import OracleSizeError
from .pgf import NEG_INF, POS_INF, Pgf, ValueScale
from .plan import ValidatedPlan, execute, validate
from .relational import EngineConfig, ProbTable

__all__ = [
    "MAX_ORACLE_TUPLES",
    "OracleRow",
    "WorldsResult",
    "enumerate_eval",
    "aggregate_distribution",
]

MAX_ORACLE_TUPLES = 24
_CHUNK_BITS = 16


@dataclass
class OracleRow:
    """One distinct result tuple: existence probability and, per aggregate
    column, its exact distribution conditioned on the tuple existing."""

    probability: float
    distributions: dict


@dataclass
class WorldsResult:
    key_columns: tuple
    agg_columns: tuple
    rows: dict  # key tuple -> OracleRow
    total_weight: float
    world_weights: list | None  # populated when the world count is small


def _world_table(table: ProbTable, flags: Sequence, mask: int) -> ProbTable:
    """Materialize one world's instance; rows are shared, not copied."""
    rows = [
        row
        for row, f in zip(table.rows, flags)
        if f is True or (f is not None and (mask >> f) & 1)
    ]
    out = object.__new__(ProbTable)
    out.columns = table.columns
    out.rows = rows
    out.probs = [1.0] * len(rows)
    out._index = table._index
    return out


def enumerate_eval(
    plan: dict,
    tables: Mapping[str, ProbTable],
    config: EngineConfig | None = None,
    validated: ValidatedPlan | None = None,
) -> WorldsResult:
    """Evaluate a plan in every possible world and aggregate the results.

    Result rows are keyed by the output's scalar columns; each
    distribution-valued output column yields a value -> probability map
    conditioned on the row's existence, matching the engine's conditioned
    output directly.
    """
    config = config or EngineConfig()
    vp = validated or validate(plan, tables, config)
    out_schema = vp.schemas[vp.output]
    key_pos = [i for i, c in enumerate(out_schema) if c.kind == "scalar"]
    agg_pos = [i for i, c in enumerate(out_schema) if c.kind == "pgf"]
    key_cols = tuple(out_schema[i].name for i in key_pos)
    agg_cols = tuple(out_schema[i].name for i in agg_pos)

    scanned = []
    seen = set()
    for nid in vp.order:
        node = vp.nodes[nid]
        if node["op"] == "scan" and node["table"] not in seen:
            seen.add(node["table"])
            scanned.append(node["table"])

    n_bits = 0
    prob_of_bit: list[float] = []
    table_flags: dict[str, list] = {}
    for name in scanned:
        table = tables[name]
        flags: list = []
        for p in table.probs:
            if p >= 1.0:
                flags.append(True)
            elif p <= 0.0:
                flags.append(None)
            else:
                flags.append(n_bits)
                prob_of_bit.append(p)
                n_bits += 1
        table_flags[name] = flags
    if n_bits > MAX_ORACLE_TUPLES:
        raise OracleSizeError(
            f"oracle limited to {MAX_ORACLE_TUPLES} tuples, got {n_bits} uncertain"
        )

    existence: dict[tuple, float] = {}
    dists: dict[tuple, dict] = {}
    total = 0.0
    n_worlds = 1 << n_bits
    keep_weights = n_bits <= 16
    world_weights: list | None = [] if keep_weights else None

    for mask in range(n_worlds):
        weight = 1.0
        for b, p in enumerate(prob_of_bit):
            weight *= p if (mask >> b) & 1 else 1.0 - p
        total += weight
        if keep_weights:
            world_weights.append(weight)
        world = {
            name: _world_table(tables[name], table_flags[name], mask)
            for name in scanned
        }
        result = execute(plan, world, config, mode="det", validated=vp)
        seen_keys = set()
        for row in result.rows:
            key = tuple(row[i] for i in key_pos)
            if key not in seen_keys:
                seen_keys.add(key)
                existence[key] = existence.get(key, 0.0) + weight
                if key not in dists:
                    dists[key] = {name: {} for name in agg_cols}
            per_agg = dists[key]
            for i, name in zip(agg_pos, agg_cols):
                value = row[i]
                bucket = per_agg[name]
                bucket[value] = bucket.get(value, 0.0) + weight

    rows = {}
    for key, p in existence.items():
        conditional = {
            name: {v: w / p for v, w in bucket.items()}
            for name, bucket in dists[key].items()
        }
        rows[key] = OracleRow(probability=p, distributions=conditional)
    return WorldsResult(
        key_columns=key_cols,
        agg_columns=agg_cols,
        rows=rows,
        total_weight=total,
        world_weights=world_weights,
    )


def aggregate_distribution(
    values: Sequence[float],
    probs: Sequence[float],
    kind: str,
    scale_digits: int = 0,
) -> Pgf:
    """Exact single-aggregate distribution by chunked world enumeration.

    Unconditioned: the all-absent world contributes its weight to the
    aggregate's identity value (0, or an infinity for MIN/MAX).
    """
    if kind not in ("count", "sum", "min", "max"):
        raise ValueError(f"unknown aggregate kind {kind!r}")
    scale = ValueScale(scale_digits)
    grid = np.array([scale.to_grid(v) for v in values], dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != grid.shape:
        raise ValueError("values and probs length mismatch")

    certain = p >= 1.0
    uncertain = (p > 0.0) & (p < 1.0)
    n = int(uncertain.sum())
    if n > MAX_ORACLE_TUPLES:
        raise OracleSizeError(
            f"oracle limited to {MAX_ORACLE_TUPLES} tuples, got {n} uncertain"
        )
    gu = grid[uncertain]
    pu = p[uncertain]
    gc = grid[certain]

    if kind == "count":
        base = float(certain.sum())
    elif kind == "sum":
        base = float(gc.sum())
    elif kind == "min":
        base = float(gc.min()) if gc.size else POS_INF
    else:
        base = float(gc.max()) if gc.size else NEG_INF

    weights: dict[float, float] = {}
    bit_values = np.arange(n, dtype=np.uint32)
    for start in range(0, 1 << n, 1 << _CHUNK_BITS):
        stop = min(start + (1 << _CHUNK_BITS), 1 << n)
        idx = np.arange(start, stop, dtype=np.uint32)
        bits = ((idx[:, None] >> bit_values[None, :]) & 1).astype(bool)
        w = np.where(bits, pu, 1.0 - pu).prod(axis=1)
        if kind == "count":
            vals = bits.sum(axis=1) + base
        elif kind == "sum":
            vals = bits @ gu + base
        elif kind == "min":
            masked = np.where(bits, gu, POS_INF)
            vals = np.minimum(
                masked.min(axis=1) if n else np.full(idx.shape, POS_INF), base
            )
        else:
            masked = np.where(bits, gu, NEG_INF)
            vals = np.maximum(
                masked.max(axis=1) if n else np.full(idx.shape, NEG_INF), base
            )
        uniq, inv = np.unique(vals, return_inverse=True)
        sums = np.zeros(uniq.shape)
        np.add.at(sums, inv, w)
        for v, s in zip(uniq, sums):
            fv = float(v)
            key = fv if not np.isfinite(fv) else int(round(fv))
            weights[key] = weights.get(key, 0.0) + float(s)
    return Pgf.from_weights(weights, scale_digits=scale_digits)
