"""Exact and approximate aggregate distributions over tuple-independent
probabilistic tables.

The core representation is the probability generating function of an
aggregate: a polynomial whose coefficient on X^k is the probability that
the aggregate equals k.  Products of such polynomials compose independent
inputs, which turns COUNT/SUM into product trees over per-tuple factors
and MIN/MAX into running survival products.  At scales where exact
polynomials are too large, aggregates fall back to a cumulant-based
normal or gamma-mixture approximation fitted by the method of moments.

Layers, bottom up: `pgf` (polynomial arithmetic), `aggregates`
(accumulate/merge/finalize aggregate states), `moments` (cumulant
tracking and the moment-matched approximations), `relational` (tables and
operators), `plan` (validated plan DAG execution), `oracle` (possible-
worlds brute force), `io`/`datagen`/`cli` (files and the command line).
"""

from .aggregates import (
    AtLeastOne,
    CountUda,
    MinMaxUda,
    MomentsUda,
    NormalUda,
    SumUda,
    at_least_one,
    stretch,
)
from .datagen import generate_catalog, generate_dataset
from .errors import (
    ContractError,
    DegreeOverflowError,
    EmptySupportError,
    ExecutionError,
    FitError,
    IngestError,
    InternalError,
    NormalizationError,
    OracleSizeError,
    PgfdbError,
    PlanValidationError,
)
from .io import (
    build_oracle_document,
    build_result_document,
    ingest_dir,
    ingest_table,
    load_result_document,
    load_schema,
    write_dataset,
    write_result_document,
    write_table,
)
from .moments import (
    CumulantAccumulator,
    GammaMixture,
    NormalApprox,
    bernoulli_cumulant,
    cumulants_to_moments,
    fit_gamma_mixture,
    fit_mixture_params,
    moments_to_cumulants,
    normal_fit,
    standardize,
)
from .oracle import aggregate_distribution, enumerate_eval
from .pgf import (
    NEG_INF,
    POS_INF,
    DenseCountPgf,
    Pgf,
    ValueScale,
    confidence_interval,
    pgf_mul_minmax,
    poly_mul,
    prob_compare,
    product_tree,
    total_variation,
    truncate_and_renormalize,
)
from .plan import ValidatedPlan, execute, validate
from .relational import (
    AggregateSpec,
    Column,
    EngineConfig,
    ProbTable,
    group_aggregate,
    join_prob,
    project_prob,
    select_det,
    select_prob,
    t_agg,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateSpec",
    "AtLeastOne",
    "Column",
    "ContractError",
    "CountUda",
    "CumulantAccumulator",
    "DegreeOverflowError",
    "DenseCountPgf",
    "EmptySupportError",
    "EngineConfig",
    "ExecutionError",
    "FitError",
    "GammaMixture",
    "IngestError",
    "InternalError",
    "MinMaxUda",
    "MomentsUda",
    "NEG_INF",
    "NormalApprox",
    "NormalUda",
    "NormalizationError",
    "OracleSizeError",
    "POS_INF",
    "Pgf",
    "PgfdbError",
    "PlanValidationError",
    "ProbTable",
    "SumUda",
    "ValidatedPlan",
    "ValueScale",
    "aggregate_distribution",
    "at_least_one",
    "bernoulli_cumulant",
    "build_oracle_document",
    "build_result_document",
    "confidence_interval",
    "cumulants_to_moments",
    "enumerate_eval",
    "execute",
    "fit_gamma_mixture",
    "fit_mixture_params",
    "generate_catalog",
    "generate_dataset",
    "group_aggregate",
    "ingest_dir",
    "ingest_table",
    "join_prob",
    "load_result_document",
    "load_schema",
    "moments_to_cumulants",
    "normal_fit",
    "pgf_mul_minmax",
    "poly_mul",
    "prob_compare",
    "product_tree",
    "project_prob",
    "select_det",
    "select_prob",
    "stretch",
    "t_agg",
    "total_variation",
    "truncate_and_renormalize",
    "validate",
    "write_dataset",
    "write_result_document",
    "write_table",
]
