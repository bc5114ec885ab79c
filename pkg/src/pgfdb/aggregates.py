"""Aggregate states with an initialize / accumulate / merge / finalize cycle.

Each aggregate consumes (probability, value) pairs for the tuples of one
group and produces the distribution of the aggregate over all possible
worlds of those tuples.  States merge associatively, so a caller may
partition the input arbitrarily, accumulate partitions independently,
merge, and finalize once; the result must match single-pass accumulation.

Exact kinds: COUNT and SUM build dense coefficient vectors via balanced
polynomial products; MIN and MAX keep one survival probability per
distinct value, optionally capacity-limited.  Approximate kinds (moments,
normal) are thin wrappers over the cumulant machinery in `moments`.
"""

from __future__ import annotations

import math
import warnings
from typing import Iterable

import numpy as np

from .errors import ContractError, DegreeOverflowError, FitError
from .moments import CumulantAccumulator, NormalApprox, fit_gamma_mixture
from .pgf import (
    DEFAULT_FFT_THRESHOLD,
    NEG_INF,
    POS_INF,
    DenseCountPgf,
    Pgf,
    ValueScale,
    _product_tree_arrays,
    _product_tree_stacked,
)

__all__ = [
    "AtLeastOne",
    "at_least_one",
    "CountUda",
    "SumUda",
    "MinMaxUda",
    "MomentsUda",
    "NormalUda",
    "stretch",
    "DEFAULT_MAX_DENSE_DEGREE",
    "DEFAULT_TOPK_CAPACITY",
]

DEFAULT_MAX_DENSE_DEGREE = 1 << 26
DEFAULT_TOPK_CAPACITY = 100


def _check_prob(p) -> float:
    p = float(p)
    if math.isnan(p) or not 0.0 <= p <= 1.0:
        raise ValueError(f"tuple probability {p} outside [0, 1]")
    return p


class AtLeastOne:
    """Probability that at least one of the accumulated tuples is present."""

    __slots__ = ("absent",)

    def __init__(self):
        self.absent = 1.0  # probability that every tuple seen so far is absent

    def accumulate(self, p) -> None:
        self.absent *= 1.0 - _check_prob(p)

    def merge(self, other: "AtLeastOne") -> None:
        if type(other) is not AtLeastOne:
            raise ContractError(f"cannot merge AtLeastOne with {type(other).__name__}")
        self.absent *= other.absent

    def finalize(self) -> float:
        return 1.0 - self.absent


def at_least_one(probs: Iterable[float]) -> float:
    state = AtLeastOne()
    for p in probs:
        state.accumulate(p)
    return state.finalize()


class CountUda:
    """Distribution of the number of present tuples (Poisson binomial)."""

    kind = "count"

    def __init__(
        self,
        fft_threshold: int = DEFAULT_FFT_THRESHOLD,
        max_degree: int = DEFAULT_MAX_DENSE_DEGREE,
    ):
        self.fft_threshold = fft_threshold
        self.max_degree = max_degree
        self.probs: list[float] = []  # tuples with 0 < p < 1
        self.certain = 0  # p == 1 tuples: a fixed shift of the count

    def _signature(self):
        return (CountUda, self.fft_threshold, self.max_degree)

    def accumulate(self, p, value=None) -> None:
        p = _check_prob(p)
        if p == 0.0:
            return
        if p == 1.0:
            self.certain += 1
        else:
            self.probs.append(p)

    def accumulate_many(self, probs) -> None:
        for p in probs:
            self.accumulate(p)

    def merge(self, other: "CountUda") -> None:
        if type(other) is not CountUda or other._signature() != self._signature():
            raise ContractError("cannot merge incompatible count states")
        self.probs.extend(other.probs)
        self.certain += other.certain

    def finalize(self) -> DenseCountPgf:
        if self.certain + len(self.probs) > self.max_degree:
            raise DegreeOverflowError("sum support too large, use approximation")
        coeffs = _count_dense(np.asarray(self.probs), self.fft_threshold)
        if self.certain:
            coeffs = np.concatenate([np.zeros(self.certain), coeffs])
        return DenseCountPgf(coeffs, validate=False)


def _count_dense(probs: np.ndarray, threshold: int) -> np.ndarray:
    """Dense Poisson-binomial vector: product of (1-p + p*X) factors."""
    if probs.size == 0:
        return np.ones(1)
    factors = np.empty((probs.size, 2))
    factors[:, 0] = 1.0 - probs
    factors[:, 1] = probs
    return _product_tree_stacked(factors, threshold)


def stretch(coeffs: np.ndarray, alpha: int) -> np.ndarray:
    """Spread count coefficients alpha positions apart.

    Re-expresses a per-value count distribution in sum units: a count of
    c tuples, each worth alpha, lands on exponent alpha * c.
    """
    if alpha < 1:
        raise ValueError("alpha must be a positive int")
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if alpha == 1:
        return coeffs.copy()
    out = np.zeros((coeffs.size - 1) * alpha + 1)
    out[::alpha] = coeffs
    return out


class SumUda:
    """Distribution of the sum of present tuples' values.

    Tuples are grouped by distinct value; each group is a scaled count
    distribution, and the groups multiply out through a product tree.
    Negative values are handled by reversing their stretched vectors and
    tracking the accumulated index shift.
    """

    kind = "sum"

    def __init__(
        self,
        scale_digits: int = 0,
        fft_threshold: int = DEFAULT_FFT_THRESHOLD,
        max_degree: int = DEFAULT_MAX_DENSE_DEGREE,
    ):
        self.scale = ValueScale(scale_digits)
        self.fft_threshold = fft_threshold
        self.max_degree = max_degree
        self.groups: dict[int, list[float]] = {}  # value key -> probs in (0,1)
        self.fixed = 0  # contribution of p == 1 tuples, always present

    def _signature(self):
        return (SumUda, self.scale.scale_digits, self.fft_threshold, self.max_degree)

    def accumulate(self, p, value) -> None:
        p = _check_prob(p)
        key = self.scale.to_grid(value)
        if p == 0.0 or key == 0:
            return
        if p == 1.0:
            self.fixed += key
        else:
            self.groups.setdefault(key, []).append(p)

    def merge(self, other: "SumUda") -> None:
        if type(other) is not SumUda or other._signature() != self._signature():
            raise ContractError("cannot merge incompatible sum states")
        for key, probs in other.groups.items():
            self.groups.setdefault(key, []).extend(probs)
        self.fixed += other.fixed

    def finalize(self) -> Pgf:
        degree = sum(abs(k) * len(ps) for k, ps in self.groups.items())
        if degree > self.max_degree:
            raise DegreeOverflowError("sum support too large, use approximation")
        if not self.groups:
            return Pgf.point(self.fixed, scale_digits=self.scale.scale_digits)
        factors = []
        neg_shift = 0
        for key in sorted(self.groups):
            probs = np.asarray(self.groups[key])
            counts = _count_dense(probs, self.fft_threshold)
            stretched = stretch(counts, abs(key))
            if key < 0:
                stretched = stretched[::-1]
                neg_shift += abs(key) * len(probs)
            factors.append(stretched)
        out = _product_tree_arrays(factors, self.fft_threshold)
        offset = self.fixed - neg_shift
        dense = DenseCountPgf(out, validate=False)
        return dense.to_pgf(scale_digits=self.scale.scale_digits, shift=-offset)


class MinMaxUda:
    """Distribution of the smallest (largest) present value.

    Keeps one survival probability per distinct value: the chance that no
    tuple carrying that value is present.  With a capacity, only the best
    `capacity` values are retained exactly; everything past the retention
    boundary collapses into a single tail bucket at the smallest (largest)
    evicted value, flagged via `Pgf.overflow_at`.  The identity value
    (+inf for MIN, -inf for MAX) covers the no-tuples case.
    """

    def __init__(self, mode: str, capacity: int | None = None, scale_digits: int = 0):
        if mode not in ("min", "max"):
            raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be a positive int")
        self.mode = mode
        self.kind = mode
        self.capacity = capacity
        self.scale = ValueScale(scale_digits)
        self.entries: dict[int, float] = {}  # value key -> P(no tuple at key present)
        self.cutoff: int | None = None  # boundary of evicted values

    def _signature(self):
        return (MinMaxUda, self.mode, self.capacity, self.scale.scale_digits)

    def _worst(self) -> int:
        keys = self.entries.keys()
        return max(keys) if self.mode == "min" else min(keys)

    def _beyond(self, a: int, b: int) -> bool:
        """True when value a is further from the aggregate's optimum than b."""
        return a > b if self.mode == "min" else a < b

    def _note_evicted(self, key: int) -> None:
        if self.cutoff is None or self._beyond(self.cutoff, key):
            self.cutoff = key

    def accumulate(self, p, value) -> None:
        p = _check_prob(p)
        if p == 0.0:
            return
        key = self.scale.to_grid(value)
        if key in self.entries:
            self.entries[key] *= 1.0 - p
            return
        if self.capacity is not None and len(self.entries) >= self.capacity:
            worst = self._worst()
            if not self._beyond(worst, key):
                self._note_evicted(key)  # incoming value loses immediately
                return
            del self.entries[worst]
            self._note_evicted(worst)
        self.entries[key] = 1.0 - p

    def merge(self, other: "MinMaxUda") -> None:
        if type(other) is not MinMaxUda or other._signature() != self._signature():
            raise ContractError("cannot merge incompatible min/max states")
        if other.cutoff is not None:
            self._note_evicted(other.cutoff)
        for key, q in other.entries.items():
            self.entries[key] = self.entries.get(key, 1.0) * q
        if self.capacity is not None:
            while len(self.entries) > self.capacity:
                worst = self._worst()
                del self.entries[worst]
                self._note_evicted(worst)

    def finalize(self) -> Pgf:
        reverse = self.mode == "max"
        terms: dict = {}
        alive = 1.0  # P(no better-valued tuple was present)
        for key in sorted(self.entries, reverse=reverse):
            q = self.entries[key]
            mass = alive * (1.0 - q)
            if mass > 0.0:
                terms[key] = mass
            alive *= q
        overflow_at = None
        if alive > 0.0:
            if self.cutoff is not None:
                # tail past the retention boundary, including the empty case
                terms[self.cutoff] = terms.get(self.cutoff, 0.0) + alive
                overflow_at = self.cutoff
            else:
                terms[POS_INF if self.mode == "min" else NEG_INF] = alive
        return Pgf(
            terms, scale_digits=self.scale.scale_digits, overflow_at=overflow_at
        )


class MomentsUda:
    """Moment-matched gamma-mixture approximation of COUNT or SUM.

    Accumulates cumulants in one pass (no polynomial work) and fits the
    mixture at finalize.  Falls back to the normal approximation, with a
    warning, when the fit cannot be completed; degenerate inputs collapse
    to a point mass.
    """

    def __init__(
        self,
        kind: str = "sum",
        scale_digits: int = 0,
        components: int = 4,
    ):
        if kind not in ("count", "sum"):
            raise ValueError("moments approximation applies to count or sum")
        self.kind = kind
        self.scale = ValueScale(scale_digits if kind == "sum" else 0)
        self.components = components
        self.acc = CumulantAccumulator(order=2 * components)

    def _signature(self):
        return (MomentsUda, self.kind, self.scale.scale_digits, self.components)

    def accumulate(self, p, value=None) -> None:
        p = _check_prob(p)
        key = 1 if self.kind == "count" else self.scale.to_grid(value)
        self.acc.accumulate(key, p)

    def accumulate_many(self, probs, values=None) -> None:
        probs = np.asarray(probs, dtype=np.float64)
        if self.kind == "count":
            keys = np.ones(probs.size)
        else:
            keys = np.asarray([self.scale.to_grid(v) for v in values], dtype=np.float64)
        if np.isnan(probs).any() or probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError("tuple probability outside [0, 1]")
        self.acc.accumulate_many(keys, probs)

    def merge(self, other: "MomentsUda") -> None:
        if type(other) is not MomentsUda or other._signature() != self._signature():
            raise ContractError("cannot merge incompatible moments states")
        self.acc.merge(other.acc)

    def finalize(self):
        kappa1, kappa2 = self.acc.kappas[0], self.acc.kappas[1]
        if kappa2 <= 0.0:
            return Pgf.point(round(kappa1), scale_digits=self.scale.scale_digits)
        try:
            return fit_gamma_mixture(
                self.acc.standardized_moments(),
                components=self.components,
                shift=kappa1,
                spread=math.sqrt(kappa2),
                scale_digits=self.scale.scale_digits,
            )
        except FitError as exc:
            warnings.warn(
                f"gamma mixture fit failed ({exc}); using normal approximation",
                RuntimeWarning,
            )
            return NormalApprox(
                mu=kappa1, sigma2=kappa2, scale_digits=self.scale.scale_digits
            )


class NormalUda:
    """Central-limit normal approximation of COUNT or SUM; single pass."""

    def __init__(self, kind: str = "sum", scale_digits: int = 0):
        if kind not in ("count", "sum"):
            raise ValueError("normal approximation applies to count or sum")
        self.kind = kind
        self.scale = ValueScale(scale_digits if kind == "sum" else 0)
        self.mu = 0.0
        self.var = 0.0

    def _signature(self):
        return (NormalUda, self.kind, self.scale.scale_digits)

    def accumulate(self, p, value=None) -> None:
        p = _check_prob(p)
        key = 1 if self.kind == "count" else self.scale.to_grid(value)
        self.mu += key * p
        self.var += key * key * p * (1.0 - p)

    def accumulate_many(self, probs, values=None) -> None:
        probs = np.asarray(probs, dtype=np.float64)
        if np.isnan(probs).any() or probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError("tuple probability outside [0, 1]")
        if self.kind == "count":
            keys = np.ones(probs.size)
        else:
            keys = np.asarray([self.scale.to_grid(v) for v in values], dtype=np.float64)
        self.mu += float(keys @ probs)
        self.var += float((keys * keys) @ (probs * (1.0 - probs)))

    def merge(self, other: "NormalUda") -> None:
        if type(other) is not NormalUda or other._signature() != self._signature():
            raise ContractError("cannot merge incompatible normal states")
        self.mu += other.mu
        self.var += other.var

    def finalize(self) -> NormalApprox:
        return NormalApprox(
            mu=self.mu, sigma2=self.var, scale_digits=self.scale.scale_digits
        )
