"""Probability generating functions over extended integer values.

A discrete distribution is stored as a polynomial: exponents are values,
coefficients are probabilities.  Sums of independent attributes multiply
their polynomials (ordinary convolution); MIN and MAX use a product that
keeps the smaller (larger) exponent of every term pair.  Values live on a
fixed decimal grid (`ValueScale`), with two infinity sentinels marking
"aggregate of an empty set" for MIN and MAX.

Two representations are provided:

* `Pgf`: immutable sparse terms, arbitrary extended values.
* `DenseCountPgf`: contiguous coefficient vector indexed by value,
  used by COUNT and SUM where supports are dense integer ranges.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptySupportError, InternalError, NormalizationError

__all__ = [
    "POS_INF",
    "NEG_INF",
    "ExtendedValue",
    "ValueScale",
    "Pgf",
    "DenseCountPgf",
    "poly_mul",
    "product_tree",
    "pgf_mul_minmax",
    "prob_compare",
    "truncate_and_renormalize",
    "confidence_interval",
    "total_variation",
    "NORMALIZATION_TOL",
    "DEFAULT_FFT_THRESHOLD",
]

POS_INF = math.inf
NEG_INF = -math.inf

# Finite values are plain ints (already on the scale grid); the only
# permitted floats are the two infinities.
ExtendedValue = int | float

NORMALIZATION_TOL = 1e-9
# Negative FFT round-off smaller than this is clamped to zero; anything
# at or below -CLAMP_TOL means the transform itself went wrong.
CLAMP_TOL = 1e-12
DEFAULT_FFT_THRESHOLD = 5000

COMPARE_OPS = ("=", "<", "<=", ">", ">=")


def check_extended(value) -> ExtendedValue:
    """Validate one extended value: an int, or +/-inf."""
    if isinstance(value, bool):
        raise TypeError("bool is not a value")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float) and math.isinf(value):
        return value
    raise TypeError(f"value must be an int or +/-inf, got {value!r}")


def is_finite_value(value: ExtendedValue) -> bool:
    return not (isinstance(value, float) and math.isinf(value))


@dataclass(frozen=True)
class ValueScale:
    """Decimal grid for finite values: raw = key * 10**(-scale_digits)."""

    scale_digits: int = 0

    def __post_init__(self):
        if not isinstance(self.scale_digits, int) or self.scale_digits < 0:
            raise ValueError("scale_digits must be a non-negative int")

    def to_grid(self, raw) -> int:
        """Map a raw number onto the grid key, rejecting off-grid inputs."""
        if isinstance(raw, bool):
            raise TypeError("bool is not a value")
        if isinstance(raw, (int, np.integer)):
            return int(raw) * 10**self.scale_digits
        scaled = float(raw) * 10**self.scale_digits
        if math.isinf(scaled) or math.isnan(scaled):
            raise ValueError(f"cannot scale {raw!r}")
        key = round(scaled)
        if abs(scaled - key) > 1e-9 * max(1.0, abs(scaled)):
            raise ValueError(
                f"value {raw!r} does not land on the 10^-{self.scale_digits} grid"
            )
        return int(key)

    def from_grid(self, key: ExtendedValue):
        """Inverse of to_grid; infinities pass through unchanged."""
        if not is_finite_value(key):
            return key
        if self.scale_digits == 0:
            return key
        return key / 10**self.scale_digits


class Pgf:
    """Immutable normalized sparse distribution over extended values.

    `terms` maps grid keys to probabilities.  Zero-probability terms are
    dropped; the remaining masses must sum to 1 within NORMALIZATION_TOL.

    `overflow_at`, when set, marks the term at that key as a tail bucket
    holding all mass at-or-beyond the key (produced by capacity-limited
    MIN/MAX).  The normalization invariant is unaffected.
    """

    __slots__ = ("_keys", "_probs", "_cum", "_index", "scale_digits", "overflow_at")

    def __init__(
        self,
        terms: Mapping[ExtendedValue, float] | Iterable[tuple[ExtendedValue, float]],
        scale_digits: int = 0,
        overflow_at: ExtendedValue | None = None,
    ):
        if isinstance(terms, Mapping):
            items = terms.items()
        else:
            items = terms
        merged: dict[ExtendedValue, float] = {}
        for key, prob in items:
            key = check_extended(key)
            prob = float(prob)
            if math.isnan(prob) or prob < 0.0:
                raise NormalizationError(f"negative probability {prob} at {key}")
            if prob == 0.0:
                continue
            merged[key] = merged.get(key, 0.0) + prob
        total = math.fsum(merged.values())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NormalizationError(f"probabilities sum to {total}, expected 1")
        keys = sorted(merged)
        probs = np.array([min(merged[k], 1.0) for k in keys], dtype=np.float64)
        self._keys = keys
        self._probs = probs
        self._cum = np.cumsum(probs)
        self._index = {k: p for k, p in zip(keys, probs)}
        self.scale_digits = int(scale_digits)
        if overflow_at is not None:
            overflow_at = check_extended(overflow_at)
            if overflow_at not in self._index:
                raise ValueError("overflow_at must reference an existing term")
        self.overflow_at = overflow_at

    # -- constructors -------------------------------------------------

    @classmethod
    def point(cls, key: ExtendedValue, scale_digits: int = 0) -> "Pgf":
        return cls({key: 1.0}, scale_digits=scale_digits)

    @classmethod
    def from_weights(
        cls,
        weights: Mapping[ExtendedValue, float] | Iterable[tuple[ExtendedValue, float]],
        scale_digits: int = 0,
        overflow_at: ExtendedValue | None = None,
    ) -> "Pgf":
        """Build from non-negative weights, normalizing to total mass 1."""
        if isinstance(weights, Mapping):
            pairs = list(weights.items())
        else:
            pairs = list(weights)
        total = math.fsum(p for _, p in pairs if p > 0.0)
        if total <= 0.0:
            raise EmptySupportError("no positive mass to normalize")
        return cls(
            ((k, p / total) for k, p in pairs),
            scale_digits=scale_digits,
            overflow_at=overflow_at,
        )

    # -- accessors -----------------------------------------------------

    def items(self) -> tuple[tuple[ExtendedValue, float], ...]:
        """Sorted (grid key, probability) pairs."""
        return tuple(zip(self._keys, self._probs.tolist()))

    def display_items(self) -> tuple[tuple, ...]:
        """Sorted (raw value, probability) pairs in display units."""
        scale = ValueScale(self.scale_digits)
        return tuple(
            (scale.from_grid(k), p) for k, p in zip(self._keys, self._probs.tolist())
        )

    def support(self) -> tuple[ExtendedValue, ...]:
        return tuple(self._keys)

    def __len__(self) -> int:
        return len(self._keys)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}: {p:.6g}" for k, p in self.items())
        return f"Pgf({{{inner}}}, scale_digits={self.scale_digits})"

    def mass_at_key(self, key: ExtendedValue) -> float:
        return self._index.get(key, 0.0)

    def cdf_key(self, key: ExtendedValue) -> float:
        """P(X <= key) in grid units."""
        idx = bisect_right(self._keys, key)
        return float(self._cum[idx - 1]) if idx else 0.0

    def cdf_strict_key(self, key: ExtendedValue) -> float:
        """P(X < key) in grid units."""
        idx = bisect_left(self._keys, key)
        return float(self._cum[idx - 1]) if idx else 0.0

    def _grid_key(self, raw) -> tuple[ExtendedValue, bool]:
        """Map a raw comparison operand onto this pgf's grid.

        Returns (key, on_grid).  Off-grid inputs return the floor key so
        callers can still answer strict/loose inequalities exactly.
        """
        if isinstance(raw, float) and math.isinf(raw):
            return raw, True
        if isinstance(raw, bool):
            raise TypeError("bool is not a value")
        scaled = float(raw) * 10**self.scale_digits
        key = round(scaled)
        if abs(scaled - key) <= 1e-9 * max(1.0, abs(scaled)):
            return int(key), True
        return math.floor(scaled), False

    def mass_at(self, raw) -> float:
        key, on_grid = self._grid_key(raw)
        return self.mass_at_key(key) if on_grid else 0.0

    def cdf(self, raw) -> float:
        key, on_grid = self._grid_key(raw)
        return self.cdf_key(key)

    def rescaled(self, scale_digits: int) -> "Pgf":
        """Re-express on a finer grid (scale_digits >= current)."""
        if scale_digits == self.scale_digits:
            return self
        if scale_digits < self.scale_digits:
            raise ValueError("cannot coarsen a value grid")
        factor = 10 ** (scale_digits - self.scale_digits)
        over = self.overflow_at
        if over is not None and is_finite_value(over):
            over = over * factor
        return Pgf(
            (
                (k * factor if is_finite_value(k) else k, p)
                for k, p in zip(self._keys, self._probs.tolist())
            ),
            scale_digits=scale_digits,
            overflow_at=over,
        )

    def mean(self) -> float | None:
        """Expected display value; None when infinite values carry mass."""
        if not all(is_finite_value(k) for k in self._keys):
            return None
        keys = np.array(self._keys, dtype=np.float64)
        return float(keys @ self._probs) / 10**self.scale_digits

    def variance(self) -> float | None:
        if not all(is_finite_value(k) for k in self._keys):
            return None
        keys = np.array(self._keys, dtype=np.float64) / 10**self.scale_digits
        mu = float(keys @ self._probs)
        return float(((keys - mu) ** 2) @ self._probs)

    def approx_equal(self, other: "Pgf", tol: float = NORMALIZATION_TOL) -> bool:
        a, b = _align_scales(self, other)
        keys = set(a._keys) | set(b._keys)
        return all(abs(a.mass_at_key(k) - b.mass_at_key(k)) <= tol for k in keys)


def _align_scales(a: Pgf, b: Pgf) -> tuple[Pgf, Pgf]:
    target = max(a.scale_digits, b.scale_digits)
    return a.rescaled(target), b.rescaled(target)


def total_variation(a: Pgf, b: Pgf) -> float:
    """Total-variation distance between two sparse distributions."""
    a, b = _align_scales(a, b)
    keys = set(a.support()) | set(b.support())
    return 0.5 * math.fsum(abs(a.mass_at_key(k) - b.mass_at_key(k)) for k in keys)


class DenseCountPgf:
    """Dense non-negative coefficient vector; coeffs[k] = P(value = k).

    The natural representation for COUNT (support 0..n) and for SUM after
    value stretching.  Always normalized within NORMALIZATION_TOL.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs, *, validate: bool = True):
        arr = np.ascontiguousarray(coeffs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("coefficients must be a non-empty 1-d vector")
        if validate:
            if float(arr.min()) < 0.0:
                raise NormalizationError("negative coefficient")
            total = float(arr.sum())
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise NormalizationError(f"coefficients sum to {total}, expected 1")
        self.coeffs = arr

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __len__(self) -> int:
        return self.coeffs.size

    def __repr__(self) -> str:
        return f"DenseCountPgf(degree={self.degree})"

    def mass_at(self, k: int) -> float:
        if 0 <= k <= self.degree:
            return float(self.coeffs[k])
        return 0.0

    def cdf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(self.coeffs[: min(k, self.degree) + 1].sum())

    def to_pgf(self, scale_digits: int = 0, shift: int = 0) -> Pgf:
        """Sparse view; index i maps to grid key i - shift."""
        idx = np.nonzero(self.coeffs)[0]
        return Pgf(
            ((int(i) - shift, float(self.coeffs[i])) for i in idx),
            scale_digits=scale_digits,
        )


# -- polynomial products ----------------------------------------------


def _clamp_roundoff(arr: np.ndarray) -> np.ndarray:
    """Zero out tiny negative FFT round-off; large negatives are a bug."""
    low = float(arr.min())
    if low < 0.0:
        if low <= -CLAMP_TOL:
            raise InternalError(f"product coefficient {low} below -{CLAMP_TOL}")
        np.clip(arr, 0.0, None, out=arr)
    return arr


def _fft_size(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _mul_arrays(a: np.ndarray, b: np.ndarray, threshold: int) -> np.ndarray:
    """One polynomial product; schoolbook below the degree threshold."""
    n = a.size + b.size - 1
    if max(a.size, b.size) - 1 < threshold:
        out = np.convolve(a, b)
    else:
        size = _fft_size(n)
        out = np.fft.irfft(np.fft.rfft(a, size) * np.fft.rfft(b, size), size)[:n]
        _clamp_roundoff(out)
    total = out.sum()
    if total > 0.0:
        out /= total
    return out


def _mul_stacked(A: np.ndarray, B: np.ndarray, threshold: int) -> np.ndarray:
    """Row-wise products of two stacks of equal-length polynomials."""
    la, lb = A.shape[1], B.shape[1]
    n = la + lb - 1
    if max(la, lb) - 1 < threshold:
        if lb > la:
            A, B = B, A
            la, lb = lb, la
        out = np.zeros((A.shape[0], n))
        for j in range(lb):
            out[:, j : j + la] += B[:, j : j + 1] * A
    else:
        size = _fft_size(n)
        fa = np.fft.rfft(A, size, axis=1)
        fa *= np.fft.rfft(B, size, axis=1)
        out = np.fft.irfft(fa, size, axis=1)[:, :n]
        _clamp_roundoff(out)
    out /= out.sum(axis=1, keepdims=True)
    return out


_BATCH_MIN = 8  # stack only when enough same-shape pairs to pay off


def _product_tree_arrays(arrays: Sequence[np.ndarray], threshold: int) -> np.ndarray:
    polys = [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]
    while len(polys) > 1:
        nxt: list[np.ndarray] = []
        npairs = len(polys) // 2
        i = 0
        while i < npairs:
            # batch a run of adjacent pairs sharing one shape
            la, lb = polys[2 * i].size, polys[2 * i + 1].size
            j = i + 1
            while (
                j < npairs
                and polys[2 * j].size == la
                and polys[2 * j + 1].size == lb
            ):
                j += 1
            if j - i >= _BATCH_MIN:
                A = np.stack(polys[2 * i : 2 * j : 2])
                B = np.stack(polys[2 * i + 1 : 2 * j : 2])
                nxt.extend(_mul_stacked(A, B, threshold))
            else:
                for k in range(i, j):
                    nxt.append(_mul_arrays(polys[2 * k], polys[2 * k + 1], threshold))
            i = j
        if len(polys) % 2:
            nxt.append(polys[-1])  # odd factor carried forward unchanged
        polys = nxt
    return polys[0]


def _product_tree_stacked(stack: np.ndarray, threshold: int) -> np.ndarray:
    """Product of many equal-length factor rows.

    Same pairwise-round strategy as `product_tree`, kept uniform so every
    round is a single batched multiply; an odd leftover row is set aside
    and folded in at the end.
    """
    pending: list[np.ndarray] = []
    while stack.shape[0] > 1:
        if stack.shape[0] % 2:
            pending.append(np.array(stack[-1]))
            stack = stack[:-1]
        stack = _mul_stacked(stack[0::2], stack[1::2], threshold)
    out = np.ascontiguousarray(stack[0])
    for poly in reversed(pending):
        out = _mul_arrays(out, poly, threshold)
    return out


def poly_mul(
    a: DenseCountPgf, b: DenseCountPgf, threshold: int = DEFAULT_FFT_THRESHOLD
) -> DenseCountPgf:
    """Product of two dense pgfs (distribution of the independent sum)."""
    return DenseCountPgf(_mul_arrays(a.coeffs, b.coeffs, threshold), validate=False)


def product_tree(
    factors: Sequence[DenseCountPgf], threshold: int = DEFAULT_FFT_THRESHOLD
) -> DenseCountPgf:
    """Multiply many dense pgfs with balanced pairwise rounds.

    Round r pairs adjacent factors; an odd leftover is carried forward
    unchanged.  Balanced pairing keeps operand degrees comparable, which
    is what lets the FFT path above `threshold` pay off.
    """
    if not factors:
        raise ValueError("empty product")
    arrays = [f.coeffs for f in factors]
    if len(arrays) == 1:
        return DenseCountPgf(arrays[0].copy(), validate=False)
    return DenseCountPgf(_product_tree_arrays(arrays, threshold), validate=False)


def pgf_mul_minmax(a: Pgf, b: Pgf, mode: str) -> Pgf:
    """Product under the MIN (MAX) monoid: exponents combine by min (max).

    Models MIN/MAX of two independent attributes:
    P(result = v) = sum of P(a=i) * P(b=j) over pairs with min(i,j) = v.
    The identity is the point mass at +inf for MIN, -inf for MAX.
    """
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    pick = min if mode == "min" else max
    a, b = _align_scales(a, b)
    out: dict[ExtendedValue, float] = {}
    for va, pa in a.items():
        for vb, pb in b.items():
            key = pick(va, vb)
            out[key] = out.get(key, 0.0) + pa * pb
    return Pgf(out, scale_digits=a.scale_digits)


# -- comparison probabilities ------------------------------------------


def _compare_scalar(a: Pgf, raw) -> tuple[float, float, float]:
    """(P(a = s), P(a < s), P(a > s)) for a scalar operand."""
    key, on_grid = a._grid_key(raw)
    if on_grid:
        pe = a.mass_at_key(key)
        pl = a.cdf_strict_key(key)
    else:
        pe = 0.0
        pl = a.cdf_key(key)  # key = floor(scaled): X < s  <=>  X <= floor
    return pe, pl, max(0.0, 1.0 - pe - pl)


def _compare_pgfs(a: Pgf, b: Pgf) -> tuple[float, float, float]:
    """(P(a = b), P(a < b), P(a > b)) for independent operands."""
    a, b = _align_scales(a, b)
    pe = pl = pg = 0.0
    for vb, pb in b.items():
        pe += pb * a.mass_at_key(vb)
        pl += pb * a.cdf_strict_key(vb)
        pg += pb * (1.0 - a.cdf_key(vb))
    return pe, pl, pg


def prob_compare(a: Pgf, b, op: str) -> float:
    """Probability that an attribute satisfies `a op b`.

    `b` may be a scalar (int/float, including +/-inf) or another,
    independent, Pgf.  Supported ops: =, <, <=, >, >=.
    """
    if op not in COMPARE_OPS:
        raise ValueError(f"unsupported comparison {op!r}")
    if isinstance(b, Pgf):
        pe, pl, pg = _compare_pgfs(a, b)
    else:
        pe, pl, pg = _compare_scalar(a, b)
    if op == "=":
        return pe
    if op == "<":
        return pl
    if op == "<=":
        return pl + pe
    if op == ">":
        return pg
    return pg + pe


# -- truncation and intervals ------------------------------------------


def truncate_and_renormalize(
    a: Pgf, keep: Callable[[ExtendedValue], bool]
) -> tuple[Pgf, float]:
    """Condition a distribution on `keep(display value)` being true.

    Returns the renormalized distribution and the retained mass.
    """
    scale = ValueScale(a.scale_digits)
    kept = [(k, p) for k, p in a.items() if keep(scale.from_grid(k))]
    mass = math.fsum(p for _, p in kept)
    if not kept or mass <= 0.0:
        raise EmptySupportError("empty support after truncation")
    over = a.overflow_at if any(k == a.overflow_at for k, _ in kept) else None
    return (
        Pgf(
            ((k, p / mass) for k, p in kept),
            scale_digits=a.scale_digits,
            overflow_at=over,
        ),
        mass,
    )


def confidence_interval(dist, level: float) -> tuple:
    """Smallest central interval [lo, hi] with tail mass <= (1-level)/2.

    lo is the largest value whose strictly-below mass is within the lower
    tail budget; hi is the smallest value whose cumulative mass reaches
    1 minus the upper tail budget.  Values are returned in display units.
    Non-Pgf distributions (approximation handles) answer via their own
    `interval` method.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if not isinstance(dist, Pgf):
        return dist.interval(level)
    half = (1.0 - level) / 2.0
    keys = dist._keys
    cum = dist._cum
    scale = ValueScale(dist.scale_digits)
    lo = keys[0]
    for i in range(1, len(keys)):
        if float(cum[i - 1]) <= half + 1e-15:
            lo = keys[i]
        else:
            break
    hi = keys[-1]
    target = 1.0 - half
    for i in range(len(keys)):
        if float(cum[i]) >= target - 1e-15:
            hi = keys[i]
            break
    return scale.from_grid(lo), scale.from_grid(hi)
