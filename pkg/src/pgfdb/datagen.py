"""Seeded generator for a miniature TPC-H-style probabilistic catalog.

Produces the six-table star subset (nation, supplier, part, partsupp,
lineitem, orders) at a configurable scale: fixed-size dimension tables
and fact tables sized relative to the --rows argument.  Probabilities
are uniform [0,1] draws unless a table is marked certain; all draws come
from one seeded generator in a fixed table order, so a given
(schema, rows, seed) triple always produces byte-identical files.

The content is engineered for availability-style queries: part names
optionally start with "forest", lineitem references real partsupp pairs
so part/partsupp/lineitem joins fan out properly, and quantities and
availability counts are kept small enough that a threshold comparison
lands on both sides with sizable probability.
"""

from __future__ import annotations

import os
from typing import Mapping

import numpy as np

from .io import write_dataset
from .relational import Column, ProbTable

__all__ = ["DEFAULT_GEN_SPECS", "generate_catalog", "generate_dataset"]

_TABLE_ORDER = ("nation", "supplier", "part", "partsupp", "lineitem", "orders")

_NATION_NAMES = (
    "CANADA", "FRANCE", "GERMANY", "JAPAN", "BRAZIL", "KENYA", "PERU", "INDIA",
)
_PART_LEADS = ("linen", "misty", "pale", "ivory", "burnt", "dim", "royal")
_PART_TAILS = ("maple", "cedar", "birch", "walnut", "alder", "spruce", "aspen")
_LETTERS = np.array(list("abcdefghijklmnopqrstuvwxyz"))

DEFAULT_GEN_SPECS: dict = {
    "nation": {"rows": 3, "certain": True},
    "supplier": {"rows": 3},
    "part": {"rows": 4, "certain": True, "forest_fraction": 0.5},
    "partsupp": {"rows": 6, "certain": True},
    "lineitem": {"rows": {"per_unit": 1.0}},
    "orders": {"rows": {"per_unit": 0.25}},
}


def _resolve_rows(spec: dict, n: int, default) -> int:
    rows = spec.get("rows", default)
    if isinstance(rows, dict):
        return max(1, round(float(rows["per_unit"]) * n))
    return int(rows)


def _probs(rng: np.random.Generator, spec: dict, count: int) -> list[float]:
    if spec.get("certain", False):
        return [1.0] * count
    return [float(x) for x in rng.uniform(size=count)]


def _address(rng: np.random.Generator) -> str:
    return "".join(rng.choice(_LETTERS, size=8))


def _date(rng: np.random.Generator) -> str:
    return (
        f"19{int(rng.integers(92, 99))}-"
        f"{int(rng.integers(1, 13)):02d}-{int(rng.integers(1, 29)):02d}"
    )


def generate_catalog(
    schema: Mapping | None, rows: int, seed: int
) -> dict[str, ProbTable]:
    """Build the catalog in memory; `schema` overrides per-table specs."""
    specs = {name: dict(DEFAULT_GEN_SPECS[name]) for name in _TABLE_ORDER}
    if schema:
        for name, spec in schema.get("tables", {}).items():
            if name not in specs:
                raise ValueError(f"unknown table {name!r} in generator schema")
            specs[name].update(spec)
    rng = np.random.default_rng(seed)
    out: dict[str, ProbTable] = {}

    spec = specs["nation"]
    n_nation = min(_resolve_rows(spec, rows, 3), len(_NATION_NAMES))
    nation_rows = [[k + 1, _NATION_NAMES[k]] for k in range(n_nation)]
    out["nation"] = ProbTable(
        [Column("n_nationkey", dtype="int"), Column("n_name", dtype="str")],
        nation_rows,
        _probs(rng, spec, n_nation),
    )

    spec = specs["supplier"]
    n_supp = _resolve_rows(spec, rows, 3)
    supp_rows = []
    for k in range(n_supp):
        # supplier 1 is always in the first nation so nation-filtered
        # queries have work to do
        nationkey = 1 if k == 0 else int(rng.integers(1, n_nation + 1))
        supp_rows.append(
            [k + 1, f"Supplier#{k + 1:09d}", _address(rng), nationkey]
        )
    out["supplier"] = ProbTable(
        [
            Column("s_suppkey", dtype="int"),
            Column("s_name", dtype="str"),
            Column("s_address", dtype="str"),
            Column("s_nationkey", dtype="int"),
        ],
        supp_rows,
        _probs(rng, spec, n_supp),
    )

    spec = specs["part"]
    n_part = _resolve_rows(spec, rows, 4)
    forest_fraction = float(spec.get("forest_fraction", 0.5))
    part_rows = []
    for k in range(n_part):
        lead = (
            "forest"
            if rng.uniform() < forest_fraction
            else str(rng.choice(np.array(_PART_LEADS)))
        )
        tail = str(rng.choice(np.array(_PART_TAILS)))
        price = int(rng.integers(900, 10000))
        part_rows.append([k + 1, f"{lead} {tail}", price / 100.0])
    out["part"] = ProbTable(
        [
            Column("p_partkey", dtype="int"),
            Column("p_name", dtype="str"),
            Column("p_retailprice", dtype="float", scale_digits=2),
        ],
        part_rows,
        _probs(rng, spec, n_part),
    )

    spec = specs["partsupp"]
    combos = [(p + 1, s + 1) for p in range(n_part) for s in range(n_supp)]
    n_ps = min(_resolve_rows(spec, rows, 6), len(combos))
    chosen = [combos[i] for i in rng.permutation(len(combos))[:n_ps]]
    ps_rows = []
    for partkey, suppkey in chosen:
        availqty = int(rng.integers(1, 13))
        cost = int(rng.integers(100, 1000))
        ps_rows.append([partkey, suppkey, availqty, cost / 100.0])
    out["partsupp"] = ProbTable(
        [
            Column("ps_partkey", dtype="int"),
            Column("ps_suppkey", dtype="int"),
            Column("ps_availqty", dtype="int"),
            Column("ps_supplycost", dtype="float", scale_digits=2),
        ],
        ps_rows,
        _probs(rng, spec, n_ps),
    )

    spec = specs["lineitem"]
    n_line = _resolve_rows(spec, rows, rows)
    n_orders = max(1, round(n_line / 4))
    li_rows = []
    for _ in range(n_line):
        partkey, suppkey = chosen[int(rng.integers(0, len(chosen)))]
        orderkey = int(rng.integers(1, n_orders + 1))
        quantity = int(rng.integers(1, 11))
        price = int(rng.integers(1000, 100000))
        li_rows.append(
            [orderkey, partkey, suppkey, quantity, price / 100.0, _date(rng)]
        )
    out["lineitem"] = ProbTable(
        [
            Column("l_orderkey", dtype="int"),
            Column("l_partkey", dtype="int"),
            Column("l_suppkey", dtype="int"),
            Column("l_quantity", dtype="int"),
            Column("l_extendedprice", dtype="float", scale_digits=2),
            Column("l_shipdate", dtype="str"),
        ],
        li_rows,
        _probs(rng, spec, n_line),
    )

    spec = specs["orders"]
    n_ord = _resolve_rows(spec, rows, max(1, round(rows / 4)))
    ord_rows = [
        [k + 1, _date(rng), int(rng.integers(10000, 1000000)) / 100.0]
        for k in range(n_ord)
    ]
    out["orders"] = ProbTable(
        [
            Column("o_orderkey", dtype="int"),
            Column("o_orderdate", dtype="str"),
            Column("o_totalprice", dtype="float", scale_digits=2),
        ],
        ord_rows,
        _probs(rng, spec, n_ord),
    )
    return out


def generate_dataset(
    schema: Mapping | None, rows: int, seed: int, out_dir: str
) -> list[str]:
    """Generate and write the catalog; returns the file paths written."""
    tables = generate_catalog(schema, rows, seed)
    os.makedirs(out_dir, exist_ok=True)
    return write_dataset(tables, out_dir)
