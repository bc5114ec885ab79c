"""Command-line entry point.

    pgfdb run    --plan FILE --data DIR --output FILE
                 [--threads N] [--fft-threshold D] [--min-topk K]
                 [--mixture-components P] [--method exact|normal|moments|topk]
    pgfdb gen    --schema FILE --rows N --seed S --out DIR
    pgfdb oracle --plan FILE --data DIR --output FILE

Exit codes: 0 success, 1 input/validation error, 2 runtime error.
Diagnostics go to standard error.  PGFDB_THREADS serves as the fallback
for --threads.
"""

from __future__ import annotations

import argparse
import json
import sys

from .datagen import generate_dataset
from .errors import IngestError, OracleSizeError, PgfdbError, PlanValidationError
from .io import (
    build_oracle_document,
    build_result_document,
    ingest_dir,
    write_result_document,
)
from .oracle import enumerate_eval
from .plan import execute, validate
from .relational import EngineConfig

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    # usage mistakes are validation errors (exit 1), not runtime errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="pgfdb",
        description="Exact and approximate aggregate distributions over "
        "tuple-independent probabilistic tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a plan over a data directory")
    run.add_argument("--plan", required=True, help="plan JSON file")
    run.add_argument("--data", required=True, help="data directory with schema.json")
    run.add_argument("--output", required=True, help="result JSON file to write")
    run.add_argument("--threads", type=int, default=None)
    run.add_argument(
        "--fft-threshold",
        type=int,
        default=None,
        help="polynomial degree at which multiplication switches to FFT",
    )
    run.add_argument(
        "--min-topk",
        type=int,
        default=None,
        help="retained distinct values for truncated MIN/MAX",
    )
    run.add_argument("--mixture-components", type=int, default=None)
    run.add_argument(
        "--method",
        choices=("exact", "normal", "moments", "topk"),
        default=None,
        help="force this method on every aggregate whose kind supports it",
    )

    gen = sub.add_parser("gen", help="generate a seeded miniature catalog")
    gen.add_argument("--schema", required=True, help="generator schema JSON file")
    gen.add_argument("--rows", type=int, required=True, help="fact-table scale")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True, help="output directory")

    oracle = sub.add_parser(
        "oracle", help="evaluate a plan by possible-worlds enumeration"
    )
    oracle.add_argument("--plan", required=True)
    oracle.add_argument("--data", required=True)
    oracle.add_argument("--output", required=True)
    return parser


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _config_from(args) -> EngineConfig:
    config = EngineConfig()
    if args.threads is not None:
        if args.threads < 1:
            raise PlanValidationError([("cli", "--threads must be at least 1")])
        config.threads = args.threads
    if args.fft_threshold is not None:
        config.fft_threshold = args.fft_threshold
    if args.min_topk is not None:
        config.topk_capacity = args.min_topk
    if args.mixture_components is not None:
        config.mixture_components = args.mixture_components
    if args.method is not None:
        config.method_override = args.method
    return config


def _cmd_run(args) -> int:
    plan = _load_json(args.plan)
    tables = ingest_dir(args.data)
    config = _config_from(args)
    result = execute(plan, tables, config)
    doc = build_result_document(result)
    write_result_document(doc, args.output)
    print(f"wrote {len(doc['rows'])} result rows to {args.output}")
    return 0


def _cmd_gen(args) -> int:
    schema = _load_json(args.schema)
    paths = generate_dataset(schema, args.rows, args.seed, args.out)
    for path in paths:
        print(path)
    return 0


def _cmd_oracle(args) -> int:
    plan = _load_json(args.plan)
    tables = ingest_dir(args.data)
    config = EngineConfig()
    vp = validate(plan, tables, config)
    result = enumerate_eval(plan, tables, config, validated=vp)
    doc = build_oracle_document(result, vp.output_columns())
    write_result_document(doc, args.output)
    print(f"wrote {len(doc['rows'])} result rows to {args.output}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "gen":
            return _cmd_gen(args)
        return _cmd_oracle(args)
    except (PlanValidationError, IngestError, OracleSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PgfdbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
