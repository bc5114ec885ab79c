"""Query-plan parsing, validation, and execution.

A plan is a JSON-shaped dict: {"nodes": [{id, op, ...}, ...], "output": id}.
Supported ops and their fields:

    scan         table
    select       input, predicate: [{column, op, value}, ...]
    prob_select  input, left, cmp, right ({"column": c} or {"const": v}),
                 retain (optional bool)
    project      input, columns
    join         left, right, on: [[left_col, right_col], ...]
    group_agg    input, group_by, aggregates: [{name, kind, column, method}]

Validation resolves every column reference against propagated schemas and
returns the complete violation list rather than stopping at the first
problem.  It also enforces the independence safety rule: every node
carries the set of probabilistic base tables its rows depend on, and a
join whose inputs share a source is rejected, because rows derived from
the same uncertain tuples are correlated and multiplying their
probabilities would be wrong.  Combining operators (duplicate-eliminating
projection, grouped aggregation) keep their input's source set; their
output rows are mutually independent (each covers a disjoint slice of the
base rows) so chained aggregation stays legal, but the lineage must
survive so a later join against a sibling branch is still caught.

Execution walks the node DAG in topological order.  `mode="det"` runs the
single-world semantics used by the possible-worlds oracle: the same
select/join/project code paths, with probabilistic selection reduced to a
plain filter and aggregation to scalar results.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .errors import ExecutionError, PgfdbError, PlanValidationError
from .relational import (
    METHODS_BY_KIND,
    PREDICATE_OPS,
    AggregateSpec,
    Column,
    EngineConfig,
    ProbTable,
    det_group_aggregate,
    det_select_prob,
    group_aggregate,
    join_prob,
    project_prob,
    select_det,
    select_prob,
)

__all__ = ["ValidatedPlan", "validate", "execute"]

_NODE_OPS = ("scan", "select", "prob_select", "project", "join", "group_agg")
_COMPARE_OPS = ("=", "<", "<=", ">", ">=")


def _node_inputs(node: dict) -> list:
    op = node.get("op")
    if op == "scan":
        return []
    if op == "join":
        return [node.get("left"), node.get("right")]
    return [node.get("input")]


@dataclass(frozen=True)
class ValidatedPlan:
    """A structurally sound plan with resolved schemas.

    `order` lists the node ids reachable from the output in evaluation
    order; `schemas` maps node id to its output columns; `sources` maps
    node id to the probabilistic base tables its rows depend on.
    """

    nodes: Mapping[str, dict]
    order: tuple[str, ...]
    output: str
    schemas: Mapping[str, tuple[Column, ...]]
    sources: Mapping[str, frozenset]

    def output_columns(self) -> tuple[Column, ...]:
        return self.schemas[self.output]


def validate(
    plan: dict,
    catalog: Mapping[str, ProbTable],
    config: EngineConfig | None = None,
) -> ValidatedPlan:
    """Check a plan against the catalog; raise with every violation found."""
    violations: list[tuple[str, str]] = []

    if not isinstance(plan, dict) or not isinstance(plan.get("nodes"), list):
        raise PlanValidationError([("plan", "plan must have a list of nodes")])
    nodes: dict[str, dict] = {}
    for i, node in enumerate(plan["nodes"]):
        if not isinstance(node, dict) or not isinstance(node.get("id"), str):
            violations.append(("plan", f"node #{i} missing a string id"))
            continue
        nid = node["id"]
        if nid in nodes:
            violations.append((nid, "duplicate node id"))
            continue
        nodes[nid] = node
        if node.get("op") not in _NODE_OPS:
            violations.append((nid, f"unknown op {node.get('op')!r}"))
    output = plan.get("output")
    if not isinstance(output, str) or output not in nodes:
        violations.append(("plan", f"output {output!r} is not a node id"))

    # Reference and cycle checks; a broken graph stops validation here.
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(nid: str) -> bool:
        if state.get(nid) == 2:
            return True
        if state.get(nid) == 1:
            violations.append((nid, "plan graph has a cycle through this node"))
            return False
        state[nid] = 1
        ok = True
        for ref in _node_inputs(nodes[nid]):
            if not isinstance(ref, str) or ref not in nodes:
                violations.append((nid, f"references unknown node {ref!r}"))
                ok = False
            elif not visit(ref):
                ok = False
        state[nid] = 2
        order.append(nid)
        return ok

    if violations or not visit(output):
        raise PlanValidationError(violations)

    # Typed pass: propagate schemas, dropped-column reasons, and sources.
    schemas: dict[str, tuple[Column, ...] | None] = {}
    dropped: dict[str, dict[str, str]] = {}
    sources: dict[str, frozenset] = {}

    def fail(nid: str, msg: str):
        violations.append((nid, msg))

    def resolve(nid: str, name, kinds=("scalar", "pgf"), role="column"):
        schema = schemas[nid]
        if schema is None:
            return None
        if not isinstance(name, str):
            fail(nid, f"{role} name must be a string, got {name!r}")
            return None
        for col in schema:
            if col.name == name:
                if col.kind not in kinds:
                    return col  # caller reports the kind-specific message
                return col
        reason = dropped[nid].get(name)
        if reason:
            fail(nid, f"column {name!r} {reason}")
        else:
            fail(nid, f"unknown column {name!r}")
        return None

    for nid in order:
        node = nodes[nid]
        op = node["op"]
        schemas[nid] = None
        dropped[nid] = {}
        sources[nid] = frozenset()

        if op == "scan":
            table = node.get("table")
            src = catalog.get(table) if isinstance(table, str) else None
            if src is None:
                fail(nid, f"unknown table {table!r}")
                continue
            schemas[nid] = tuple(src.columns)
            if any(p < 1.0 for p in src.probs):
                sources[nid] = frozenset({table})
            continue

        ins = _node_inputs(node)
        if any(schemas[ref] is None for ref in ins):
            continue  # upstream already reported

        if op == "select":
            ref = ins[0]
            schemas[nid] = schemas[ref]
            dropped[nid] = dict(dropped[ref])
            sources[nid] = sources[ref]
            predicate = node.get("predicate")
            if not isinstance(predicate, list):
                fail(nid, "select needs a predicate list")
                continue
            for cond in predicate:
                if not isinstance(cond, dict):
                    fail(nid, f"predicate entry {cond!r} is not an object")
                    continue
                cop = cond.get("op")
                if cop not in PREDICATE_OPS:
                    fail(nid, f"unknown predicate op {cop!r}")
                    continue
                col = resolve(ref, cond.get("column"), role="predicate column")
                if col is None:
                    continue
                if col.kind != "scalar":
                    fail(nid, f"predicate on distribution column {col.name!r}")
                if cop == "prefix" and col.dtype not in ("str", "any"):
                    fail(nid, f"prefix predicate on non-string column {col.name!r}")
                if cop == "between":
                    v = cond.get("value")
                    if not isinstance(v, (list, tuple)) or len(v) != 2:
                        fail(nid, "between needs a two-element value")

        elif op == "prob_select":
            ref = ins[0]
            left = resolve(ref, node.get("left"), role="left operand")
            cmp_op = node.get("cmp")
            if cmp_op not in _COMPARE_OPS:
                fail(nid, f"unknown comparison {cmp_op!r}")
            right = node.get("right")
            right_col = None
            if isinstance(right, dict) and "column" in right:
                right_col = resolve(ref, right["column"], role="right operand")
                scale = right.get("scale", 1)
                if not isinstance(scale, (int, float)) or isinstance(scale, bool):
                    fail(nid, f"right operand scale must be a number, got {scale!r}")
                elif (
                    scale != 1
                    and right_col is not None
                    and right_col.kind == "pgf"
                ):
                    fail(nid, "scale requires a scalar right operand")
            elif not (isinstance(right, dict) and "const" in right):
                fail(
                    nid,
                    "right operand must be {\"column\": name} or {\"const\": value}",
                )
                continue
            if left is None or (right_col is None and isinstance(right, dict) and "column" in right):
                continue
            left_pgf = left.kind == "pgf"
            right_pgf = right_col is not None and right_col.kind == "pgf"
            if not left_pgf and not right_pgf:
                fail(nid, "probabilistic selection needs a distribution operand")
                continue
            retain = bool(node.get("retain", False))
            if retain and (left_pgf == right_pgf):
                fail(nid, "retain requires exactly one distribution operand")
            out = []
            gone = dict(dropped[ref])
            for col in schemas[ref]:
                is_operand = (left_pgf and col.name == left.name) or (
                    right_pgf and right_col is not None and col.name == right_col.name
                )
                if is_operand and not (retain and col.name == left.name):
                    gone[col.name] = "projected out by probabilistic selection"
                else:
                    out.append(col)
            schemas[nid] = tuple(out)
            dropped[nid] = gone
            sources[nid] = sources[ref]

        elif op == "project":
            ref = ins[0]
            cols = node.get("columns")
            if not isinstance(cols, list) or not cols:
                fail(nid, "project needs a non-empty column list")
                continue
            out = []
            ok = True
            for name in cols:
                col = resolve(ref, name, role="projection column")
                if col is None:
                    ok = False
                    continue
                if col.kind != "scalar":
                    fail(nid, f"distribution column {col.name!r} cannot be a projection key")
                    ok = False
                    continue
                out.append(col)
            if not ok:
                continue
            schemas[nid] = tuple(out)
            sources[nid] = sources[ref]

        elif op == "join":
            l, r = ins
            on = node.get("on", [])
            if not isinstance(on, list):
                fail(nid, "join condition must be a list of column pairs")
                continue
            ok = True
            for pair in on:
                if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                    fail(nid, f"join condition entry {pair!r} is not a pair")
                    ok = False
                    continue
                lc = resolve(l, pair[0], role="join key")
                rc = resolve(r, pair[1], role="join key")
                for col in (lc, rc):
                    if col is not None and col.kind != "scalar":
                        fail(nid, "probabilistic join condition not allowed")
                        ok = False
                if lc is None or rc is None:
                    ok = False
            overlap = {c.name for c in schemas[l]} & {c.name for c in schemas[r]}
            if overlap:
                fail(nid, f"join would duplicate column names {sorted(overlap)}")
                ok = False
            shared = sources[l] & sources[r]
            if shared:
                fail(
                    nid,
                    "unsafe reuse: join inputs share probabilistic source(s) "
                    f"{sorted(shared)}",
                )
                ok = False
            if not ok:
                continue
            schemas[nid] = tuple(schemas[l]) + tuple(schemas[r])
            dropped[nid] = {**dropped[l], **dropped[r]}
            sources[nid] = sources[l] | sources[r]

        elif op == "group_agg":
            ref = ins[0]
            ok = True
            group_by = node.get("group_by")
            if not isinstance(group_by, list):
                fail(nid, "group_agg needs a group_by list")
                continue
            out = []
            for name in group_by:
                col = resolve(ref, name, role="group key")
                if col is None:
                    ok = False
                    continue
                if col.kind != "scalar":
                    fail(nid, f"group key {col.name!r} is distribution-valued")
                    ok = False
                    continue
                out.append(col)
            aggs = node.get("aggregates")
            if not isinstance(aggs, list) or not aggs:
                fail(nid, "group_agg needs a non-empty aggregates list")
                continue
            seen_names = set()
            for a in aggs:
                if not isinstance(a, dict):
                    fail(nid, f"aggregate entry {a!r} is not an object")
                    ok = False
                    continue
                try:
                    spec = AggregateSpec(
                        name=a.get("name", ""),
                        kind=a.get("kind", ""),
                        column=a.get("column"),
                        method=a.get("method", "exact"),
                    )
                except (ValueError, TypeError) as exc:
                    fail(nid, str(exc))
                    ok = False
                    continue
                if not spec.name:
                    fail(nid, "aggregate needs a name")
                    ok = False
                    continue
                if spec.name in seen_names:
                    fail(nid, f"duplicate aggregate name {spec.name!r}")
                    ok = False
                seen_names.add(spec.name)
                scale = 0
                if spec.column is not None:
                    col = resolve(ref, spec.column, role="aggregate input")
                    if col is None:
                        ok = False
                        continue
                    if spec.kind != "count":
                        scale = col.scale_digits
                elif spec.kind != "count":
                    ok = False
                    continue
                out.append(Column(spec.name, kind="pgf", scale_digits=scale))
            if not ok:
                continue
            names = [c.name for c in out]
            if len(set(names)) != len(names):
                fail(nid, f"group_agg output would duplicate column names {names}")
                continue
            schemas[nid] = tuple(out)
            sources[nid] = sources[ref]

    if violations:
        raise PlanValidationError(violations)
    return ValidatedPlan(
        nodes=nodes,
        order=tuple(order),
        output=output,
        schemas={nid: schemas[nid] for nid in order},
        sources={nid: sources[nid] for nid in order},
    )


def _right_operand(node: dict):
    right = node["right"]
    if isinstance(right, dict) and "column" in right:
        return right
    if isinstance(right, dict) and "const" in right:
        return right["const"]
    return right


def execute(
    plan: dict,
    tables: Mapping[str, ProbTable],
    config: EngineConfig | None = None,
    mode: str = "prob",
    validated: ValidatedPlan | None = None,
) -> ProbTable:
    """Run a plan and return the output node's table.

    `validated` skips re-validation (the oracle validates once and then
    executes thousands of single-world instances).
    """
    if mode not in ("prob", "det"):
        raise ValueError(f"unknown execution mode {mode!r}")
    config = config or EngineConfig()
    vp = validated or validate(plan, tables, config)
    results: dict[str, ProbTable] = {}
    for nid in vp.order:
        node = vp.nodes[nid]
        op = node["op"]
        try:
            if op == "scan":
                results[nid] = tables[node["table"]]
            elif op == "select":
                results[nid] = select_det(results[node["input"]], node["predicate"])
            elif op == "prob_select":
                src = results[node["input"]]
                right = _right_operand(node)
                if mode == "det":
                    results[nid] = det_select_prob(src, node["left"], node["cmp"], right)
                else:
                    results[nid] = select_prob(
                        src,
                        node["left"],
                        node["cmp"],
                        right,
                        retain=bool(node.get("retain", False)),
                    )
            elif op == "project":
                results[nid] = project_prob(results[node["input"]], node["columns"])
            elif op == "join":
                results[nid] = join_prob(
                    results[node["left"]],
                    results[node["right"]],
                    on=[tuple(pair) for pair in node.get("on", [])],
                )
            else:  # group_agg
                specs = [
                    AggregateSpec(
                        name=a["name"],
                        kind=a["kind"],
                        column=a.get("column"),
                        method=a.get("method", "exact"),
                    )
                    for a in node["aggregates"]
                ]
                if config.method_override:
                    specs = [
                        replace(s, method=config.method_override)
                        if config.method_override in METHODS_BY_KIND[s.kind]
                        else s
                        for s in specs
                    ]
                src = results[node["input"]]
                if mode == "det":
                    results[nid] = det_group_aggregate(src, node["group_by"], specs)
                else:
                    results[nid] = group_aggregate(
                        src,
                        node["group_by"],
                        specs,
                        config=config,
                        workers=config.threads,
                    )
        except PlanValidationError:
            raise
        except (PgfdbError, KeyError, ValueError, TypeError) as exc:
            raise ExecutionError(nid, exc) from exc
    return results[vp.output]
