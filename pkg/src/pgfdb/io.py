"""CSV ingestion, probability synthesis, and result serialization.

A data directory holds one CSV per table plus a `schema.json` describing
column types and the probability column:

    {
      "tables": {
        "readings": {
          "file": "readings.csv",
          "columns": [
            {"name": "v", "dtype": "int"},
            {"name": "price", "dtype": "float", "scale_digits": 2},
            {"name": "sensor", "dtype": "str"}
          ],
          "p_column": "p",
          "p_rule": {"kind": "constant", "value": 1.0}
        }
      }
    }

The probability column (default name "p") is read from the file when
present; otherwise `p_rule` synthesizes it: a constant, seeded uniform
draws, or an arithmetic expression over the row's numeric columns.

Numeric values must land exactly on the column's declared decimal grid
(10^-scale_digits); off-grid input is an error naming the row, because
silent rounding would corrupt exact distributions downstream.

Results are written as a JSON document: one entry per output tuple with
its key values, existence probability, and each aggregate as an exact
support list, a gamma-mixture parameter set, or a normal parameter pair,
plus a mean/variance/0.95-interval summary.
"""

from __future__ import annotations

import ast
import csv
import json
import math
import os
from decimal import Decimal, InvalidOperation
from typing import Mapping, Sequence

import numpy as np

from .errors import IngestError, NormalizationError
from .moments import GammaMixture, NormalApprox
from .pgf import Pgf, ValueScale, confidence_interval
from .relational import Column, ProbTable

__all__ = [
    "load_schema",
    "ingest_table",
    "ingest_dir",
    "write_table",
    "write_dataset",
    "build_result_document",
    "write_result_document",
    "load_result_document",
]

_DTYPES = ("int", "float", "str")


def load_schema(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        schema = json.load(fh)
    if not isinstance(schema.get("tables"), dict):
        raise IngestError(f"{path}: schema must map table names under 'tables'")
    return schema


def _columns_from_schema(table_name: str, spec: dict) -> list[Column]:
    cols = []
    for entry in spec.get("columns", []):
        name = entry.get("name")
        dtype = entry.get("dtype", "str")
        if not name or dtype not in _DTYPES:
            raise IngestError(
                f"table {table_name!r}: bad column spec {entry!r} "
                f"(dtype must be one of {_DTYPES})"
            )
        cols.append(
            Column(
                name,
                kind="scalar",
                scale_digits=int(entry.get("scale_digits", 0)),
                dtype=dtype,
            )
        )
    if not cols:
        raise IngestError(f"table {table_name!r}: no columns declared")
    return cols


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _compile_expression(expr: str, names: Sequence[str]):
    """Arithmetic-only expression over column names, for p synthesis."""
    tree = ast.parse(expr, mode="eval")
    allowed = set(names)

    def check(node) -> None:
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name) and node.id in allowed:
            pass
        else:
            raise IngestError(
                f"p expression {expr!r}: unsupported element "
                f"{ast.dump(node) if not isinstance(node, ast.Name) else node.id!r}"
            )

    check(tree)
    code = compile(tree, "<p_rule>", "eval")

    def evaluate(env: dict) -> float:
        return float(eval(code, {"__builtins__": {}}, env))

    return evaluate


def _parse_cell(text: str, col: Column, table: str, row_no: int):
    if col.dtype == "str":
        return text
    try:
        dec = Decimal(text)
    except InvalidOperation:
        raise IngestError(
            f"table {table!r} row {row_no}: column {col.name!r} "
            f"value {text!r} is not numeric"
        ) from None
    if col.dtype == "int":
        if dec != dec.to_integral_value():
            raise IngestError(
                f"table {table!r} row {row_no}: column {col.name!r} "
                f"value {text!r} is not an integer"
            )
        return int(dec)
    scaled = dec.scaleb(col.scale_digits)
    if scaled != scaled.to_integral_value():
        raise IngestError(
            f"table {table!r} row {row_no}: column {col.name!r} value {text!r} "
            f"does not land on the 10^-{col.scale_digits} grid"
        )
    return ValueScale(col.scale_digits).from_grid(int(scaled))


def ingest_table(
    path: str,
    table_name: str,
    spec: dict,
) -> ProbTable:
    """Read one CSV per its schema entry; synthesize p if configured."""
    columns = _columns_from_schema(table_name, spec)
    p_column = spec.get("p_column", "p")
    p_rule = spec.get("p_rule")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"table {table_name!r}: {path} is empty") from None
        pos = {name: i for i, name in enumerate(header)}
        for col in columns:
            if col.name not in pos:
                raise IngestError(
                    f"table {table_name!r}: declared column {col.name!r} "
                    f"missing from {path} header"
                )
        p_idx = pos.get(p_column)
        rows = []
        probs = []
        numeric_names = [c.name for c in columns if c.dtype != "str"]
        expr_fn = None
        rng = None
        if p_idx is None:
            if p_rule is None:
                raise IngestError(
                    f"table {table_name!r}: no {p_column!r} column and no p_rule"
                )
            kind = p_rule.get("kind")
            if kind == "expression":
                expr_fn = _compile_expression(p_rule["expr"], numeric_names)
            elif kind == "uniform":
                rng = np.random.default_rng(int(p_rule.get("seed", 0)))
            elif kind != "constant":
                raise IngestError(
                    f"table {table_name!r}: unknown p_rule kind {kind!r}"
                )
        for row_no, record in enumerate(reader, start=1):
            if len(record) < len(header):
                raise IngestError(
                    f"table {table_name!r} row {row_no}: expected "
                    f"{len(header)} fields, got {len(record)}"
                )
            cells = [
                _parse_cell(record[pos[col.name]], col, table_name, row_no)
                for col in columns
            ]
            if p_idx is not None:
                text = record[p_idx]
                try:
                    p = float(text)
                except ValueError:
                    raise IngestError(
                        f"table {table_name!r} row {row_no}: p value {text!r} "
                        f"is not numeric"
                    ) from None
            elif expr_fn is not None:
                env = {
                    c.name: cells[i]
                    for i, c in enumerate(columns)
                    if c.dtype != "str"
                }
                p = expr_fn(env)
            elif rng is not None:
                p = float(rng.uniform())
            else:
                p = float(p_rule["value"])
            if math.isnan(p) or not 0.0 <= p <= 1.0:
                raise IngestError(
                    f"table {table_name!r} row {row_no}: p={p} outside [0, 1]"
                )
            rows.append(cells)
            probs.append(p)
    return ProbTable(columns, rows, probs)


def ingest_dir(data_dir: str) -> dict[str, ProbTable]:
    """Load every table listed in DIR/schema.json."""
    schema = load_schema(os.path.join(data_dir, "schema.json"))
    tables = {}
    for name, spec in schema["tables"].items():
        path = os.path.join(data_dir, spec.get("file", f"{name}.csv"))
        tables[name] = ingest_table(path, name, spec)
    return tables


def _format_cell(value, col: Column) -> str:
    if col.dtype == "str":
        return value
    if col.dtype == "int":
        return str(value)
    if col.scale_digits > 0:
        return f"{value:.{col.scale_digits}f}"
    return str(int(round(value)))


def write_table(table: ProbTable, path: str, p_column: str = "p") -> None:
    """Write scalar columns plus the probability column; the decimal-grid
    formatting makes a write/ingest round trip reproduce the table."""
    for col in table.columns:
        if col.kind != "scalar":
            raise ValueError(
                f"column {col.name!r} is distribution-valued; write result "
                f"documents with write_result_document instead"
            )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in table.columns] + [p_column])
        for row, p in zip(table.rows, table.probs):
            writer.writerow(
                [_format_cell(v, c) for v, c in zip(row, table.columns)]
                + [repr(p)]
            )


def _schema_entry(table: ProbTable, file_name: str) -> dict:
    return {
        "file": file_name,
        "columns": [
            {
                "name": c.name,
                "dtype": c.dtype if c.dtype != "any" else "str",
                **({"scale_digits": c.scale_digits} if c.scale_digits else {}),
            }
            for c in table.columns
        ],
    }


def write_dataset(tables: Mapping[str, ProbTable], out_dir: str) -> list[str]:
    """Write CSVs plus a matching schema.json; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    schema = {"tables": {}}
    written = []
    for name, table in tables.items():
        file_name = f"{name}.csv"
        path = os.path.join(out_dir, file_name)
        write_table(table, path)
        schema["tables"][name] = _schema_entry(table, file_name)
        written.append(path)
    schema_path = os.path.join(out_dir, "schema.json")
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")
    written.append(schema_path)
    return written


# -- result documents ------------------------------------------------------


def _encode_value(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _decode_value(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


def _summary(dist) -> dict:
    mean = dist.mean()
    variance = dist.variance()
    lo, hi = confidence_interval(dist, 0.95)
    return {
        "mean": _encode_value(mean) if mean is not None else None,
        "variance": _encode_value(variance) if variance is not None else None,
        "interval95": [_encode_value(lo), _encode_value(hi)],
    }


def _encode_aggregate(cell) -> dict:
    if isinstance(cell, Pgf):
        scale = ValueScale(cell.scale_digits)
        entry = {
            "kind": "exact",
            "scale_digits": cell.scale_digits,
            "conditioned": True,
            "support": [
                [_encode_value(scale.from_grid(k) if not math.isinf(k) else k), p]
                for k, p in cell.items()
            ],
        }
        if cell.overflow_at is not None:
            entry["overflow_at"] = _encode_value(scale.from_grid(cell.overflow_at))
        entry["summary"] = _summary(cell)
        return entry
    if isinstance(cell, GammaMixture):
        return {
            "kind": "mixture",
            "lambda": cell.lam,
            "mus": list(cell.mus),
            "pis": list(cell.pis),
            "shift": cell.shift,
            "scale": cell.spread,
            "scale_digits": cell.scale_digits,
            "conditioned": False,
            "summary": _summary(cell),
        }
    if isinstance(cell, NormalApprox):
        return {
            "kind": "normal",
            "mu": cell.mu,
            "sigma2": cell.sigma2,
            "scale_digits": cell.scale_digits,
            "conditioned": False,
            "summary": _summary(cell),
        }
    raise TypeError(f"cannot serialize aggregate cell {cell!r}")


def build_result_document(table: ProbTable) -> dict:
    """Serialize an output table; distribution cells become typed entries."""
    key_cols = [c for c in table.columns if c.kind == "scalar"]
    agg_cols = [c for c in table.columns if c.kind == "pgf"]
    key_idx = [table.col(c.name) for c in key_cols]
    agg_idx = [table.col(c.name) for c in agg_cols]
    rows = []
    for row, p in zip(table.rows, table.probs):
        entry = {
            "key": {c.name: _encode_value(row[i]) for c, i in zip(key_cols, key_idx)},
            "p": p,
        }
        if agg_cols:
            entry["aggregates"] = {
                c.name: _encode_aggregate(row[i])
                for c, i in zip(agg_cols, agg_idx)
            }
        rows.append(entry)
    return {
        "columns": [c.name for c in key_cols],
        "aggregates": [c.name for c in agg_cols],
        "rows": rows,
    }


def build_oracle_document(result, output_columns) -> dict:
    """Shape a possible-worlds evaluation like an engine result document.

    Conditional value->probability maps are rebuilt as exact supports on
    the output schema's grid so the two documents compare term by term.
    """
    scales = {c.name: c.scale_digits for c in output_columns if c.kind == "pgf"}
    rows = []
    for key, orow in result.rows.items():
        entry = {
            "key": {
                name: _encode_value(v)
                for name, v in zip(result.key_columns, key)
            },
            "p": orow.probability,
        }
        if result.agg_columns:
            aggs = {}
            for name in result.agg_columns:
                sd = scales[name]
                scale = ValueScale(sd)
                weights = {
                    (v if isinstance(v, float) and math.isinf(v) else scale.to_grid(v)): p
                    for v, p in orow.distributions[name].items()
                }
                aggs[name] = _encode_aggregate(
                    Pgf.from_weights(weights, scale_digits=sd)
                )
            entry["aggregates"] = aggs
        rows.append(entry)
    return {
        "columns": list(result.key_columns),
        "aggregates": list(result.agg_columns),
        "rows": rows,
    }


def write_result_document(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_result_document(path: str) -> dict:
    """Read a result document back, re-checking exact-support normalization."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for i, row in enumerate(doc.get("rows", [])):
        for name, agg in (row.get("aggregates") or {}).items():
            if agg.get("kind") != "exact":
                continue
            support = [
                [_decode_value(v), p] for v, p in agg.get("support", [])
            ]
            agg["support"] = support
            total = sum(p for _, p in support)
            if abs(total - 1.0) > 1e-9:
                raise NormalizationError(
                    f"result row {i} aggregate {name!r}: support sums to "
                    f"{total!r}, expected 1 within 1e-9"
                )
            if "overflow_at" in agg:
                agg["overflow_at"] = _decode_value(agg["overflow_at"])
    return doc
