"""Exception types shared across the engine."""


class PgfdbError(Exception):
    """Base class for every error raised by this package."""


class NormalizationError(PgfdbError, ValueError):
    """A distribution's probabilities violate the normalization contract."""


class EmptySupportError(PgfdbError):
    """Truncation or conditioning removed every term of a distribution."""


class ContractError(PgfdbError):
    """Aggregate-state lifecycle misuse, e.g. merging incompatible states."""


class DegreeOverflowError(PgfdbError):
    """A dense coefficient vector would exceed the configured size limit."""


class FitError(PgfdbError):
    """The gamma-mixture moment fit could not be completed.

    Callers are expected to fall back to the normal approximation.
    """


class PlanValidationError(PgfdbError):
    """A query plan failed static validation.

    Carries the full list of violations so a plan author sees every
    problem at once instead of one per run.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"[{node}] {msg}" for node, msg in self.violations)
        super().__init__(f"plan validation failed: {lines}")


class ExecutionError(PgfdbError):
    """A plan node failed at runtime; names the node for context."""

    def __init__(self, node_id, cause):
        self.node_id = node_id
        self.cause = cause
        super().__init__(f"node {node_id!r}: {cause}")


class IngestError(PgfdbError):
    """Malformed input data; message carries table, row and column context."""


class OracleSizeError(PgfdbError):
    """The possible-worlds enumerator was asked for too many tuples."""


class InternalError(PgfdbError):
    """An internal numerical invariant was violated; indicates a bug."""
