"""Zero-truncated power-series laws for the latent count N.

A family is described by its coefficients ``a_n`` and generating function
``C(theta) = sum_n a_n theta**n``.  The public functions mirror the usual
quantities (``C`` and its first three derivatives, pmf, mean) and validate the
parameter domain.  The underscore-prefixed helpers work on ``log x`` so the
bivariate code can evaluate ``C`` at ``theta * K`` for tiny ``K`` without
underflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

__all__ = [
    "Kind",
    "PowerSeriesFamily",
    "DomainError",
    "InfeasibleTargetError",
    "SamplingCapError",
    "BOUNDARY_EPS",
    "DEGENERATE_THETA",
    "c_value",
    "c_derivs",
    "pmf",
    "log_pmf",
    "mean",
    "solve_theta",
    "clamp_theta",
    "near_boundary",
    "sample_n",
    "sample_counts",
]

BOUNDARY_EPS = 1e-12
DEGENERATE_THETA = 1.0
SAMPLE_CAP = 10_000_000

# below this exp(log_x) loses relative precision; use the leading term instead
_LOG_TINY = -690.0


class DomainError(ValueError):
    """Parameter outside the family's theta-domain."""


class InfeasibleTargetError(ValueError):
    """Target mean outside the range attainable by the family."""


class SamplingCapError(RuntimeError):
    """Inversion needed more support points than the hard cap."""


class Kind(enum.Enum):
    GEOMETRIC = "geometric"
    POISSON = "poisson"
    LOGARITHMIC = "logarithmic"
    BINOMIAL = "binomial"
    NEGATIVE_BINOMIAL = "negbinomial"
    CUSTOM_POLYNOMIAL = "poly"
    DEGENERATE = "degenerate"


_NEEDS_K = (Kind.BINOMIAL, Kind.NEGATIVE_BINOMIAL)


@dataclass(frozen=True)
class PowerSeriesFamily:
    """Descriptor of a zero-truncated power-series law.

    Parameters
    ----------
    kind : Kind
        Which member of the class.
    k : int
        Replica count, used by binomial and negative binomial only.
    coeffs : tuple of float
        ``a_1, ..., a_d`` for ``Kind.CUSTOM_POLYNOMIAL``.
    """

    kind: Kind
    k: int = 1
    coeffs: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind in _NEEDS_K:
            if int(self.k) != self.k or self.k < 1:
                raise ValueError(f"k must be a positive integer, got {self.k!r}")
            object.__setattr__(self, "k", int(self.k))
        else:
            object.__setattr__(self, "k", 1)
        if self.kind is Kind.CUSTOM_POLYNOMIAL:
            coeffs = tuple(float(a) for a in self.coeffs)
            if not coeffs or any(a < 0 or not math.isfinite(a) for a in coeffs):
                raise ValueError("polynomial coefficients must be finite and >= 0")
            if not any(a > 0 for a in coeffs):
                raise ValueError("at least one polynomial coefficient must be > 0")
            object.__setattr__(self, "coeffs", coeffs)
        elif self.coeffs:
            raise ValueError("coeffs only apply to the custom polynomial family")

    @classmethod
    def parse(cls, spec: str) -> PowerSeriesFamily:
        """Build a family from a string such as ``"negbinomial:2"``.

        Accepted forms: ``geometric``, ``poisson``, ``logarithmic``,
        ``binomial:k``, ``negbinomial:k``, ``poly:a1,a2,...``, ``degenerate``.
        """
        name, _, arg = spec.strip().partition(":")
        name = name.strip().lower()
        try:
            kind = Kind(name)
        except ValueError:
            raise ValueError(f"unknown family {spec!r}") from None
        if kind in _NEEDS_K:
            if not arg:
                raise ValueError(f"family {name!r} needs a replica count, e.g. {name}:2")
            try:
                k = int(arg)
            except ValueError:
                raise ValueError(f"bad replica count in {spec!r}") from None
            return cls(kind, k=k)
        if kind is Kind.CUSTOM_POLYNOMIAL:
            try:
                coeffs = tuple(float(a) for a in arg.split(","))
            except ValueError:
                raise ValueError(f"bad polynomial coefficients in {spec!r}") from None
            return cls(kind, coeffs=coeffs)
        if arg:
            raise ValueError(f"family {name!r} takes no argument")
        return cls(kind)

    @property
    def spec(self) -> str:
        if self.kind in _NEEDS_K:
            return f"{self.kind.value}:{self.k}"
        if self.kind is Kind.CUSTOM_POLYNOMIAL:
            return "poly:" + ",".join(repr(a) for a in self.coeffs)
        return self.kind.value

    def __str__(self) -> str:
        return self.spec

    @property
    def theta_sup(self) -> float:
        if self.kind in (Kind.GEOMETRIC, Kind.LOGARITHMIC, Kind.NEGATIVE_BINOMIAL):
            return 1.0
        return math.inf

    @property
    def is_degenerate(self) -> bool:
        return self.kind is Kind.DEGENERATE

    @property
    def leading_index(self) -> int:
        """Smallest ``n`` with ``a_n > 0``."""
        if self.kind is Kind.NEGATIVE_BINOMIAL:
            return self.k
        if self.kind is Kind.CUSTOM_POLYNOMIAL:
            return next(i for i, a in enumerate(self.coeffs, start=1) if a > 0)
        return 1

    @property
    def max_support(self) -> float:
        if self.kind is Kind.BINOMIAL:
            return self.k
        if self.kind is Kind.CUSTOM_POLYNOMIAL:
            return len(self.coeffs)
        if self.kind is Kind.DEGENERATE:
            return 1
        return math.inf

    @property
    def n_params(self) -> int:
        """Free parameters of the bivariate model built on this family."""
        return 4 if self.is_degenerate else 5

    def log_coeff(self, n):
        """``log a_n`` (``-inf`` off the support), vectorized over ``n``."""
        n = np.asarray(n, dtype=float)
        out = np.full(n.shape, -np.inf)
        valid = (n >= 1) & (n == np.floor(n))
        kind = self.kind
        if kind is Kind.GEOMETRIC:
            out[valid] = 0.0
        elif kind is Kind.POISSON:
            out[valid] = -gammaln(n[valid] + 1.0)
        elif kind is Kind.LOGARITHMIC:
            out[valid] = -np.log(n[valid])
        elif kind is Kind.BINOMIAL:
            k = self.k
            ok = valid & (n <= k)
            nn = n[ok]
            out[ok] = gammaln(k + 1.0) - gammaln(nn + 1.0) - gammaln(k - nn + 1.0)
        elif kind is Kind.NEGATIVE_BINOMIAL:
            k = self.k
            ok = valid & (n >= k)
            nn = n[ok]
            out[ok] = gammaln(nn) - gammaln(k) - gammaln(nn - k + 1.0)
        elif kind is Kind.CUSTOM_POLYNOMIAL:
            a = np.asarray(self.coeffs)
            with np.errstate(divide="ignore"):
                loga = np.log(a)
            ok = valid & (n <= len(a))
            out[ok] = loga[n[ok].astype(int) - 1]
        else:
            out[valid & (n == 1)] = 0.0
        return out if out.ndim else float(out)


def _check_theta(family: PowerSeriesFamily, theta: float) -> float:
    theta = float(theta)
    if family.is_degenerate:
        if not theta > 0:
            raise DomainError(f"theta must be > 0, got {theta}")
        return theta
    if not (0.0 < theta < family.theta_sup):
        raise DomainError(
            f"theta={theta} outside (0, {family.theta_sup}) for {family.spec}"
        )
    return theta


def _finite(values, family: PowerSeriesFamily, theta: float):
    if not all(np.isfinite(v) for v in np.atleast_1d(values)):
        raise OverflowError(f"C(theta) overflows for {family.spec} at theta={theta}")
    return values


def c_value(family: PowerSeriesFamily, theta: float) -> float:
    """Generating function ``C(theta)``.

    Raises
    ------
    DomainError
        If ``theta`` is outside ``(0, s)``.
    OverflowError
        If the value is not representable.
    """
    t = _check_theta(family, theta)
    kind = family.kind
    with np.errstate(over="ignore"):
        if kind is Kind.GEOMETRIC:
            v = t / (1.0 - t)
        elif kind is Kind.POISSON:
            v = math.expm1(t) if t < 709.0 else math.inf
        elif kind is Kind.LOGARITHMIC:
            v = -math.log1p(-t)
        elif kind is Kind.BINOMIAL:
            v = float(np.expm1(family.k * np.log1p(t)))
        elif kind is Kind.NEGATIVE_BINOMIAL:
            v = float(np.exp(family.k * (np.log(t) - np.log1p(-t))))
        elif kind is Kind.CUSTOM_POLYNOMIAL:
            v = float(np.exp(_log_c_custom(family, np.log(t))))
        else:
            v = t
    return _finite(v, family, t)


def c_derivs(family: PowerSeriesFamily, theta: float) -> tuple[float, float, float]:
    """First three derivatives ``(C', C'', C''')`` at ``theta``."""
    t = _check_theta(family, theta)
    kind = family.kind
    k = family.k
    with np.errstate(over="ignore", divide="ignore"):
        if kind is Kind.GEOMETRIC:
            q = 1.0 - t
            d = (q**-2, 2.0 * q**-3, 6.0 * q**-4)
        elif kind is Kind.POISSON:
            e = math.exp(t) if t < 709.0 else math.inf
            d = (e, e, e)
        elif kind is Kind.LOGARITHMIC:
            q = 1.0 - t
            d = (1.0 / q, q**-2, 2.0 * q**-3)
        elif kind is Kind.BINOMIAL:
            p = 1.0 + t
            d = (
                k * p ** (k - 1),
                k * (k - 1) * p ** (k - 2),
                k * (k - 1) * (k - 2) * p ** (k - 3),
            )
        elif kind is Kind.NEGATIVE_BINOMIAL:
            q = 1.0 - t
            d = (
                k * t ** (k - 1) / q ** (k + 1),
                k * (k + 2 * t - 1) * t ** (k - 2) / q ** (k + 2),
                k
                * (k * k + 6 * k * t + 6 * t * t - 3 * k - 6 * t + 2)
                * t ** (k - 3)
                / q ** (k + 3),
            )
        elif kind is Kind.CUSTOM_POLYNOMIAL:
            poly = np.polynomial.Polynomial((0.0,) + family.coeffs)
            d = tuple(float(poly.deriv(j)(t)) for j in (1, 2, 3))
        else:
            d = (1.0, 0.0, 0.0)
    return _finite(tuple(float(x) for x in d), family, t)


def log_pmf(family: PowerSeriesFamily, theta: float, n):
    """``log P(N = n)``; ``-inf`` off the support."""
    t = _check_theta(family, theta)
    if family.is_degenerate:
        return family.log_coeff(n)
    n = np.asarray(n, dtype=float)
    la = family.log_coeff(n)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isfinite(la), la + n * math.log(t) - _log_c(family, math.log(t)), -np.inf)
    return out if out.ndim else float(out)


def pmf(family: PowerSeriesFamily, theta: float, n):
    """``P(N = n) = a_n theta**n / C(theta)``; exactly 0 off the support."""
    return np.exp(log_pmf(family, theta, n))


def mean(family: PowerSeriesFamily, theta: float) -> float:
    """``E(N) = theta C'(theta) / C(theta)``, in closed forms that avoid underflow."""
    t = _check_theta(family, theta)
    return float(_mean(family, t))


def _mean(family: PowerSeriesFamily, t: float) -> float:
    kind = family.kind
    k = family.k
    if kind is Kind.GEOMETRIC:
        return 1.0 / (1.0 - t)
    if kind is Kind.POISSON:
        return t / -math.expm1(-t)
    if kind is Kind.LOGARITHMIC:
        return t / ((1.0 - t) * -math.log1p(-t))
    if kind is Kind.BINOMIAL:
        return k * t / ((1.0 + t) * -math.expm1(-k * math.log1p(t)))
    if kind is Kind.NEGATIVE_BINOMIAL:
        return k / (1.0 - t)
    if kind is Kind.CUSTOM_POLYNOMIAL:
        n = np.arange(1, len(family.coeffs) + 1)
        w = family.log_coeff(n) + n * math.log(t)
        return float(np.exp(logsumexp(w, b=n) - logsumexp(w)))
    return 1.0


def _mean_range(family: PowerSeriesFamily) -> tuple[float, float]:
    lo = float(family.leading_index)
    if family.kind is Kind.CUSTOM_POLYNOMIAL:
        hi = float(max(i for i, a in enumerate(family.coeffs, start=1) if a > 0))
    else:
        hi = float(family.max_support)
    return lo, hi


def clamp_theta(family: PowerSeriesFamily, theta: float) -> float:
    """Pull ``theta`` back to at most ``s - BOUNDARY_EPS``."""
    s = family.theta_sup
    if math.isfinite(s) and theta > s - BOUNDARY_EPS:
        return s - BOUNDARY_EPS
    return theta


def near_boundary(family: PowerSeriesFamily, theta: float, rel: float = 1e-6) -> bool:
    """True when ``theta`` sits within ``rel`` of either end of its domain."""
    if family.is_degenerate:
        return False
    s = family.theta_sup
    if theta <= rel:
        return True
    return math.isfinite(s) and theta >= s - rel * s


def solve_theta(family: PowerSeriesFamily, target_mean: float) -> float:
    """Invert ``mean(family, theta) = target_mean`` for ``theta``.

    The mean is strictly increasing in ``theta``, so the root is unique.  The
    solve runs on a logit (bounded domain) or log (unbounded domain) scale with
    Brent's method.  The degenerate family has no free ``theta``; it returns
    ``DEGENERATE_THETA`` unchanged.

    Raises
    ------
    InfeasibleTargetError
        If ``target_mean`` is not strictly inside the attainable range.
    """
    if family.is_degenerate:
        return DEGENERATE_THETA
    target = float(target_mean)
    lo, hi = _mean_range(family)
    if not (lo < target < hi):
        raise InfeasibleTargetError(
            f"target mean {target} outside ({lo}, {hi}) for {family.spec}"
        )
    s = family.theta_sup
    bounded = math.isfinite(s)
    if bounded:
        to_theta = lambda u: s / (1.0 + math.exp(-u))  # noqa: E731
    else:
        to_theta = math.exp

    def f(u: float) -> float:
        t = to_theta(u)
        if bounded and t >= s:
            return math.inf
        if t <= 0.0:
            return -math.inf
        return math.log(_mean(family, t)) - math.log(target)

    a, b = -1.0, 1.0
    while f(a) > 0:
        a *= 2.0
        if a < -1e4:
            raise InfeasibleTargetError(f"cannot bracket target mean {target}")
    while f(b) < 0:
        b *= 2.0
        if b > 1e4:
            raise InfeasibleTargetError(f"cannot bracket target mean {target}")
    u = brentq(f, a, b, xtol=1e-15, rtol=1e-15, maxiter=500)
    theta = to_theta(u)
    return clamp_theta(family, theta)


# -- log-space kernels used by the bivariate densities -----------------------


def _log_c_custom(family: PowerSeriesFamily, log_x):
    n = np.arange(1, len(family.coeffs) + 1, dtype=float)
    la = family.log_coeff(n)
    keep = np.isfinite(la)
    log_x = np.asarray(log_x, dtype=float)
    terms = la[keep] + np.multiply.outer(log_x, n[keep])
    return logsumexp(terms, axis=-1)


def _log_c(family: PowerSeriesFamily, log_x):
    """``log C(x)`` from ``log x``; vectorized, ``-inf`` at ``x = 0``."""
    log_x = np.asarray(log_x, dtype=float)
    kind = family.kind
    k = family.k
    x = np.exp(log_x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind in (Kind.GEOMETRIC, Kind.NEGATIVE_BINOMIAL):
            out = k * (log_x - np.log1p(-x))
        elif kind is Kind.CUSTOM_POLYNOMIAL:
            out = _log_c_custom(family, log_x)
        elif kind is Kind.DEGENERATE:
            out = log_x.copy()
        else:
            if kind is Kind.POISSON:
                ratio = np.expm1(x) / x
            elif kind is Kind.LOGARITHMIC:
                ratio = -np.log1p(-x) / x
            else:
                ratio = np.expm1(k * np.log1p(x)) / x
            # C(x)/x -> a_1 as x -> 0; a_1 = k for the binomial, 1 otherwise
            a1 = float(k) if kind is Kind.BINOMIAL else 1.0
            ratio = np.where(log_x < _LOG_TINY, a1, ratio)
            if kind is Kind.POISSON:
                big = x > 700.0
                out = np.where(big, x + np.log1p(-np.exp(-x)), log_x + np.log(ratio))
            else:
                out = log_x + np.log(ratio)
    return out


def _log_moment_sum(family: PowerSeriesFamily, order: int, log_x):
    """``log sum_n n**order a_n x**(n-1)`` for ``order`` in 1..3.

    These are ``C'``, ``x C'' + C'`` and ``x**2 C''' + 3 x C'' + C'``; they are
    the normalizers of the conditional law of N in the three density branches.
    """
    log_x = np.asarray(log_x, dtype=float)
    kind = family.kind
    k = family.k
    x = np.exp(log_x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind in (Kind.GEOMETRIC, Kind.NEGATIVE_BINOMIAL):
            poly = {1: np.ones_like(x), 2: k + x, 3: k * k + 3 * k * x + x * x + x}[order]
            lead = 0.0 if k == 1 else (k - 1) * log_x
            return math.log(k) + lead - (k + order) * np.log1p(-x) + np.log(poly)
        if kind is Kind.POISSON:
            poly = {1: np.ones_like(x), 2: 1 + x, 3: 1 + 3 * x + x * x}[order]
            return x + np.log(poly)
        if kind is Kind.LOGARITHMIC:
            if order == 1:
                return -np.log1p(-x)
            if order == 2:
                return -2.0 * np.log1p(-x)
            return np.log1p(x) - 3.0 * np.log1p(-x)
        if kind is Kind.BINOMIAL:
            if order == 1:
                poly = np.full_like(x, float(k))
            elif order == 2:
                poly = k * (k * x + 1)
            else:
                poly = k * ((k - 1) * (k - 2) * x * x + 3 * (k - 1) * x * (1 + x) + (1 + x) ** 2)
            return np.log(poly) + (k - order) * np.log1p(x)
        if kind is Kind.CUSTOM_POLYNOMIAL:
            n = np.arange(1, len(family.coeffs) + 1, dtype=float)
            la = family.log_coeff(n)
            keep = np.isfinite(la)
            terms = la[keep] + order * np.log(n[keep]) + np.multiply.outer(log_x, n[keep] - 1.0)
            return logsumexp(terms, axis=-1)
        return np.zeros_like(x)


# -- sampling -----------------------------------------------------------------


def sample_counts(family: PowerSeriesFamily, theta: float, size: int, rng: np.random.Generator):
    """Draw ``size`` counts by sequential inversion of the cumulative pmf.

    The pmf table is extended in doubling chunks until it covers the largest
    uniform draw.  Raises ``SamplingCapError`` past ``SAMPLE_CAP`` points.
    """
    t = _check_theta(family, theta)
    u = rng.random(size)
    if family.is_degenerate:
        return np.ones(size, dtype=np.int64)
    start = family.leading_index
    top = family.max_support
    umax = float(u.max()) if size else 0.0
    cum = np.empty(0)
    length = 64
    while True:
        stop = min(start + length, top + 1)
        if stop - start > SAMPLE_CAP:
            raise SamplingCapError(
                f"inversion exceeded {SAMPLE_CAP} support points for {family.spec} "
                f"at theta={t}"
            )
        n = np.arange(start, stop, dtype=float)
        cum = np.cumsum(np.exp(log_pmf(family, t, n)))
        exhausted = stop > top
        # the remaining tail is below rounding once terms vanish past the mode
        tail_gone = n.size > 1 and cum[-1] == cum[-2] and n[-1] > _mean(family, t)
        if cum[-1] >= umax or exhausted or tail_gone:
            break
        length *= 2
    idx = np.searchsorted(cum, u, side="left")
    idx = np.minimum(idx, cum.size - 1)
    return (start + idx).astype(np.int64)


def sample_n(family: PowerSeriesFamily, theta: float, rng: np.random.Generator) -> int:
    """Single draw of N; see ``sample_counts``."""
    return int(sample_counts(family, theta, 1, rng)[0])
