"""Cumulant accumulation and moment-matched approximations.

COUNT and SUM over independent tuples have cumulants that simply add:
attribute value v with presence probability p contributes v**j times the
j-th Bernoulli cumulant in p.  One pass over the tuples therefore yields
the first 2p raw moments of the aggregate without any polynomial work.

The aggregate is standardized to mean 10 and unit variance (the offset
keeps the working distribution strictly positive and gamma-shaped), then
matched by a p-component gamma mixture with a common dispersion: the
dispersion solves a pseudo-moment Hankel determinant equation, component
means are roots of the polynomial read off the near-null direction of
that Hankel matrix, and weights solve a small Vandermonde system.  The
central-limit normal approximation serves as estimate for very regular
inputs and as fallback when the fit degenerates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from .errors import FitError

__all__ = [
    "CumulantAccumulator",
    "bernoulli_cumulant",
    "cumulants_to_moments",
    "moments_to_cumulants",
    "standardize",
    "normal_fit",
    "NormalApprox",
    "GammaMixture",
    "fit_mixture_params",
    "fit_gamma_mixture",
    "MAX_ORDER",
    "MAX_COMPONENTS",
]

MAX_ORDER = 12  # supports mixtures of up to 6 components (2p moments)
MAX_COMPONENTS = 6
STANDARD_MEAN = 10.0  # standardized working mean, >> 0 so the support is positive

_EIG_FLOOR = 1e-12  # relative eigenvalue floor when inverting the Hankel matrix
_LAMBDA_CAP = float(1 << 20)  # give up bracketing the dispersion root past this


def _bernoulli_kappa_polys(order: int) -> list[np.ndarray]:
    """Coefficients (ascending, in p) of the first `order` Bernoulli cumulants.

    kappa_1(p) = p and kappa_{j+1} = p (1-p) d kappa_j / dp; the integer
    coefficients stay well inside exact float range for order <= 12.
    """
    polys = [np.array([0.0, 1.0])]
    for _ in range(order - 1):
        prev = polys[-1]
        deriv = prev[1:] * np.arange(1, prev.size)
        nxt = np.zeros(deriv.size + 2)
        nxt[1 : 1 + deriv.size] += deriv  # p * d/dp
        nxt[2 : 2 + deriv.size] -= deriv  # -p^2 * d/dp
        polys.append(nxt)
    return polys


_KAPPA_POLYS = _bernoulli_kappa_polys(MAX_ORDER)


def bernoulli_cumulant(j: int, p) -> float | np.ndarray:
    """j-th cumulant of a Bernoulli(p) indicator, elementwise over p."""
    if not 1 <= j <= MAX_ORDER:
        raise ValueError(f"cumulant order must be in 1..{MAX_ORDER}")
    return np.polynomial.polynomial.polyval(p, _KAPPA_POLYS[j - 1])


class CumulantAccumulator:
    """Running cumulants of a weighted sum of independent indicators.

    `accumulate(value, p)` adds a tuple contributing `value` with
    probability p; cumulant j grows by value**j * kappa_j(p).
    """

    __slots__ = ("order", "kappas")

    def __init__(self, order: int = 8):
        if not 2 <= order <= MAX_ORDER:
            raise ValueError(f"order must be in 2..{MAX_ORDER}")
        self.order = order
        self.kappas = np.zeros(order)

    def accumulate(self, value, p) -> None:
        power = 1.0
        for j in range(1, self.order + 1):
            power *= value
            self.kappas[j - 1] += power * bernoulli_cumulant(j, p)

    def accumulate_many(self, values, probs) -> None:
        values = np.asarray(values, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        power = np.ones_like(values)
        for j in range(1, self.order + 1):
            power = power * values
            self.kappas[j - 1] += float(power @ bernoulli_cumulant(j, probs))

    def merge(self, other: "CumulantAccumulator") -> None:
        if other.order != self.order:
            raise ValueError("cannot merge accumulators of different order")
        self.kappas += other.kappas

    def standardized(self) -> np.ndarray:
        """Cumulants of Z = (A - kappa_1) / sqrt(kappa_2) + STANDARD_MEAN."""
        z, _, _ = standardize(self.kappas)
        return z

    def standardized_moments(self) -> list[float]:
        return cumulants_to_moments(self.standardized())


def standardize(kappas) -> tuple[np.ndarray, float, float]:
    """Shift/scale cumulants to mean STANDARD_MEAN and unit variance.

    Returns (standardized cumulants, shift, spread) with the original
    variable recoverable as A = shift + spread * (Z - STANDARD_MEAN).
    """
    kappas = np.asarray(kappas, dtype=np.float64)
    k1, k2 = float(kappas[0]), float(kappas[1])
    if k2 <= 0.0:
        raise ValueError("variance must be positive to standardize")
    spread = math.sqrt(k2)
    out = kappas / spread ** np.arange(1, kappas.size + 1)
    out[0] = STANDARD_MEAN
    out[1] = 1.0
    return out, k1, spread


def cumulants_to_moments(kappas) -> list[float]:
    """Raw moments m_1..m_r from cumulants via the standard recursion.

    m_r = sum_{k=1}^{r} C(r-1, k-1) kappa_k m_{r-k}, with m_0 = 1.
    """
    kappas = list(map(float, kappas))
    m = [1.0]
    for r in range(1, len(kappas) + 1):
        m.append(
            math.fsum(
                math.comb(r - 1, k - 1) * kappas[k - 1] * m[r - k]
                for k in range(1, r + 1)
            )
        )
    return m[1:]


def moments_to_cumulants(moments) -> list[float]:
    """Inverse of cumulants_to_moments (same recursion, solved in order)."""
    moments = list(map(float, moments))
    m = [1.0] + moments
    kappas: list[float] = []
    for r in range(1, len(moments) + 1):
        tail = math.fsum(
            math.comb(r - 1, k - 1) * kappas[k - 1] * m[r - k] for k in range(1, r)
        )
        kappas.append(m[r] - tail)
    return kappas


# -- normal approximation ----------------------------------------------


def _phi(t: float) -> float:
    return 0.5 * (1.0 + math.erf(t / math.sqrt(2.0)))


@dataclass(frozen=True)
class NormalApprox:
    """Central-limit estimate of an integer-grid aggregate."""

    mu: float  # grid units
    sigma2: float
    scale_digits: int = 0

    def _cdf_cont(self, x: float) -> float:
        if self.sigma2 <= 0.0:
            return 1.0 if x >= self.mu else 0.0
        return _phi((x - self.mu) / math.sqrt(self.sigma2))

    def _grid(self, raw) -> tuple[int, bool]:
        scaled = float(raw) * 10**self.scale_digits
        key = round(scaled)
        if abs(scaled - key) <= 1e-9 * max(1.0, abs(scaled)):
            return int(key), True
        return math.floor(scaled), False

    def mass_at(self, raw) -> float:
        """Probability mass within one grid step around the value."""
        key, on_grid = self._grid(raw)
        if not on_grid:
            return 0.0
        return self._cdf_cont(key + 0.5) - self._cdf_cont(key - 0.5)

    def cdf(self, raw) -> float:
        key, _ = self._grid(raw)
        return self._cdf_cont(key + 0.5)

    def compare_probs(self, raw) -> tuple[float, float, float]:
        """(P(= raw), P(< raw), P(> raw)) under the grid convention."""
        key, on_grid = self._grid(raw)
        if on_grid:
            pe = self._cdf_cont(key + 0.5) - self._cdf_cont(key - 0.5)
            pl = self._cdf_cont(key - 0.5)
        else:
            pe = 0.0
            pl = self._cdf_cont(key + 0.5)
        return pe, pl, max(0.0, 1.0 - pe - pl)

    def mean(self) -> float:
        return self.mu / 10**self.scale_digits

    def variance(self) -> float:
        return self.sigma2 / 10 ** (2 * self.scale_digits)

    def _quantile(self, q: float) -> float:
        if self.sigma2 <= 0.0:
            return self.mu
        return self.mu + math.sqrt(self.sigma2) * stats.norm.ppf(q)

    def interval(self, level: float) -> tuple[float, float]:
        if not 0.0 < level < 1.0:
            raise ValueError("level must be in (0, 1)")
        half = (1.0 - level) / 2.0
        lo = math.floor(self._quantile(half) + 0.5 + 1e-12)
        hi = math.ceil(self._quantile(1.0 - half) - 0.5 - 1e-12)
        factor = 10**self.scale_digits
        if self.scale_digits == 0:
            return lo, hi
        return lo / factor, hi / factor


def normal_fit(values, probs, scale_digits: int = 0) -> NormalApprox:
    """Single-pass normal estimate of sum(value_i * present_i)."""
    values = np.asarray(values, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    mu = float(values @ probs)
    sigma2 = float((values * values) @ (probs * (1.0 - probs)))
    return NormalApprox(mu=mu, sigma2=sigma2, scale_digits=scale_digits)


# -- gamma mixture fit --------------------------------------------------


def _delta_stars(moments: list[float], lam: float, upto: int) -> np.ndarray:
    """Pseudo-moments: m_r deflated by prod_{i=1}^{r-1} (1 + i lam)."""
    out = np.empty(upto + 1)
    out[0] = 1.0
    denom = 1.0
    for r in range(1, upto + 1):
        if r >= 2:
            denom *= 1.0 + (r - 1) * lam
        out[r] = moments[r - 1] / denom
    return out


def _hankel(deltas: np.ndarray, k: int) -> np.ndarray:
    idx = np.arange(k + 1)
    return deltas[idx[:, None] + idx[None, :]]


def _hankel_det(moments: list[float], k: int, lam: float) -> float:
    deltas = _delta_stars(moments, lam, 2 * k)
    return float(np.linalg.det(_hankel(deltas, k)))


def _bisect_root(f, lo: float, hi: float, f_lo: float, f_hi: float) -> float:
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi or hi - lo <= 1e-15 * max(1.0, mid):
            break
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)


def _solve_dispersion(moments: list[float], components: int) -> float:
    """Nested dispersion roots: det of the k-th Hankel matrix vanishes at
    lambda_k, with each root searched below the previous one."""
    m2 = moments[1]
    hi_cap = None
    lam = None
    for k in range(1, components + 1):
        f = lambda x: _hankel_det(moments, k, x)  # noqa: E731
        f0 = f(0.0)
        if f0 <= 0.0:
            raise FitError(f"moment matrix of order {k} not positive at lambda=0")
        if k == 1:
            hi = 10.0 * max(1.0, m2)
            f_hi = f(hi)
            while f_hi > 0.0:
                hi *= 2.0
                if hi > _LAMBDA_CAP:
                    raise FitError("lambda root not found")
                f_hi = f(hi)
        else:
            hi = lam
            f_hi = f(hi)
            if f_hi > 0.0:
                raise FitError("lambda root not found")
        lam = _bisect_root(f, 0.0, hi, f0, f_hi)
    return lam


def _support_points(deltas: np.ndarray, components: int) -> np.ndarray:
    """Component means: roots of the polynomial in the null direction of
    the (singular by construction) pseudo-moment Hankel matrix.

    The matrix entries span many orders of magnitude (entry (i, j) grows
    like mean^(i+j)), so it is diagonally balanced to unit diagonal
    before the rank test; otherwise mere grading reads as extra
    near-null eigenvalues and sound fits get rejected.
    """
    p = components
    H = _hankel(deltas, p)
    diag = np.diag(H)
    if np.any(diag <= 0.0):
        raise FitError("pseudo-moments are not a positive sequence")
    d = 1.0 / np.sqrt(diag)
    balanced = H * d[:, None] * d[None, :]
    eigvals, eigvecs = np.linalg.eigh(balanced)
    mags = np.abs(eigvals)
    floor = _EIG_FLOOR * float(mags.max())
    if int((mags < floor).sum()) > 1:
        raise FitError("pseudo-moment matrix rank deficient")
    # exactly one (near-)null direction: the support polynomial
    coeffs = eigvecs[:, int(np.argmin(mags))] * d
    lead = coeffs[-1]
    if abs(lead) < 1e-300 or abs(lead) < 1e-13 * float(np.abs(coeffs).max()):
        raise FitError("degenerate support polynomial")
    roots = np.polynomial.polynomial.polyroots(coeffs)
    if np.any(np.abs(roots.imag) > 1e-8 * (1.0 + np.abs(roots.real))):
        raise FitError("complex support points")
    mus = np.sort(roots.real)
    if mus[0] <= 0.0:
        raise FitError("non-positive support point")
    if p > 1 and np.min(np.diff(mus)) <= 1e-10 * float(mus[-1]):
        raise FitError("support points not distinct")
    return mus


def fit_mixture_params(
    moments: list[float], components: int = 4
) -> tuple[float, np.ndarray, np.ndarray]:
    """Fit (lambda, mus, pis) so the mixture matches the given raw moments.

    `moments` are m_1..m_{2p} of a positive, standardized variable.
    Raises FitError when the input cannot be represented; callers fall
    back to the normal approximation.
    """
    p = int(components)
    if not 1 <= p <= MAX_COMPONENTS:
        raise ValueError(f"components must be in 1..{MAX_COMPONENTS}")
    if len(moments) < 2 * p:
        raise ValueError(f"need {2 * p} moments for {p} components")
    moments = [float(m) for m in moments[: 2 * p]]
    if moments[0] <= 0.0:
        raise FitError("mean must be positive")
    lam = _solve_dispersion(moments, p)
    if not lam > 0.0:
        raise FitError("dispersion root collapsed to zero")
    deltas = _delta_stars(moments, lam, 2 * p)
    mus = _support_points(deltas, p)
    vand = np.vander(mus, p, increasing=True).T
    pis = np.linalg.solve(vand, deltas[:p])
    if abs(float(pis.sum()) - 1.0) > 1e-9:
        raise FitError("mixture weights do not sum to 1")
    if float(pis.min()) < -1e-9:
        raise FitError("negative mixture weight")
    pis = np.clip(pis, 0.0, None)
    pis = pis / pis.sum()
    return lam, mus, pis


@dataclass(frozen=True)
class GammaMixture:
    """Gamma mixture with common dispersion, in standardized coordinates.

    Component j is a gamma with shape 1/lam and mean mus[j]; the modeled
    grid variable is shift + spread * (Z - STANDARD_MEAN).
    """

    lam: float
    mus: tuple[float, ...]
    pis: tuple[float, ...]
    shift: float = STANDARD_MEAN
    spread: float = 1.0
    scale_digits: int = 0

    @property
    def components(self) -> int:
        return len(self.mus)

    def pdf_z(self, z) -> np.ndarray | float:
        z = np.asarray(z, dtype=np.float64)
        shape = 1.0 / self.lam
        dens = sum(
            pi * stats.gamma.pdf(z, shape, scale=self.lam * mu)
            for pi, mu in zip(self.pis, self.mus)
        )
        return dens if dens.shape else float(dens)

    def cdf_z(self, z) -> float:
        shape = 1.0 / self.lam
        return float(
            sum(
                pi * stats.gamma.cdf(z, shape, scale=self.lam * mu)
                for pi, mu in zip(self.pis, self.mus)
            )
        )

    def _cdf_cont(self, x: float) -> float:
        return self.cdf_z((x - self.shift) / self.spread + STANDARD_MEAN)

    def raw_moment_z(self, r: int) -> float:
        """E[Z^r] in closed form: prod_{i<r}(1+i lam) * sum pi mu^r."""
        boost = math.prod(1.0 + i * self.lam for i in range(1, r))
        return boost * math.fsum(
            pi * mu**r for pi, mu in zip(self.pis, self.mus)
        )

    def mean(self) -> float:
        mz = math.fsum(pi * mu for pi, mu in zip(self.pis, self.mus))
        return (self.shift + self.spread * (mz - STANDARD_MEAN)) / 10**self.scale_digits

    def variance(self) -> float:
        mz = self.raw_moment_z(1)
        vz = self.raw_moment_z(2) - mz * mz
        return self.spread**2 * vz / 10 ** (2 * self.scale_digits)

    def _grid(self, raw) -> tuple[int, bool]:
        scaled = float(raw) * 10**self.scale_digits
        key = round(scaled)
        if abs(scaled - key) <= 1e-9 * max(1.0, abs(scaled)):
            return int(key), True
        return math.floor(scaled), False

    def mass_at(self, raw) -> float:
        key, on_grid = self._grid(raw)
        if not on_grid:
            return 0.0
        return self._cdf_cont(key + 0.5) - self._cdf_cont(key - 0.5)

    def cdf(self, raw) -> float:
        key, _ = self._grid(raw)
        return self._cdf_cont(key + 0.5)

    def compare_probs(self, raw) -> tuple[float, float, float]:
        key, on_grid = self._grid(raw)
        if on_grid:
            pe = self._cdf_cont(key + 0.5) - self._cdf_cont(key - 0.5)
            pl = self._cdf_cont(key - 0.5)
        else:
            pe = 0.0
            pl = self._cdf_cont(key + 0.5)
        return pe, pl, max(0.0, 1.0 - pe - pl)

    def _quantile(self, q: float) -> float:
        lo = self.shift - STANDARD_MEAN * self.spread  # continuous support start
        hi = self.shift + self.spread * (max(self.mus) - STANDARD_MEAN + 10.0)
        while self._cdf_cont(hi) < q:
            hi = lo + 2.0 * (hi - lo)
        return brentq(lambda x: self._cdf_cont(x) - q, lo, hi, xtol=1e-9)

    def interval(self, level: float) -> tuple[float, float]:
        if not 0.0 < level < 1.0:
            raise ValueError("level must be in (0, 1)")
        half = (1.0 - level) / 2.0
        lo = math.floor(self._quantile(half) + 0.5 + 1e-12)
        hi = math.ceil(self._quantile(1.0 - half) - 0.5 - 1e-12)
        factor = 10**self.scale_digits
        if self.scale_digits == 0:
            return lo, hi
        return lo / factor, hi / factor


def fit_gamma_mixture(
    moments: list[float],
    components: int = 4,
    shift: float = STANDARD_MEAN,
    spread: float = 1.0,
    scale_digits: int = 0,
) -> GammaMixture:
    """Fit and package a gamma mixture for a standardized moment sequence."""
    lam, mus, pis = fit_mixture_params(moments, components)
    return GammaMixture(
        lam=lam,
        mus=tuple(float(m) for m in mus),
        pis=tuple(float(w) for w in pis),
        shift=float(shift),
        spread=float(spread),
        scale_digits=scale_digits,
    )
