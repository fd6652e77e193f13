"""The bivariate GE power-series class: cdf, densities and conditional laws.

Given ``N`` from a power-series law and i.i.d. bivariate GE pairs, the
component-wise maxima ``(Y1, Y2)`` have cdf ``C(theta K) / C(theta)`` where
``K`` is the BGE cdf.  The joint law has an absolutely continuous part off the
diagonal and a singular part on ``y1 == y2``.  All densities are assembled in
log space.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import BivariateSample, InvalidDataError
from .ge import GeParams, ge_log_cdf, ge_log_pdf, geps_cdf, geps_log_cdf
from .power_series import (
    DEGENERATE_THETA,
    DomainError,
    Kind,
    PowerSeriesFamily,
    _check_theta,
    _log_c,
    _log_moment_sum,
)

__all__ = [
    "DEGENERATE",
    "BgepsParams",
    "Branch",
    "DensityValue",
    "joint_cdf",
    "joint_pdf",
    "joint_log_pdf",
    "decomposition_weights",
    "marginal_cdf",
    "max_cdf",
    "conditional_cdf",
    "prob_y1_less_y2",
    "cond_n_pmf",
    "cond_n_mean",
    "log_likelihood",
    "limiting_bge",
]

log = logging.getLogger(__name__)

DEGENERATE = PowerSeriesFamily(Kind.DEGENERATE)

PARAM_NAMES = ("alpha1", "alpha2", "alpha3", "lambda", "theta")


@dataclass(frozen=True)
class BgepsParams:
    """Parameters ``(alpha1, alpha2, alpha3, lam, theta)`` plus the power-series family.

    With the degenerate family (``C(theta) = theta``) the law is the plain BGE
    and ``theta`` carries no information; it is pinned to ``DEGENERATE_THETA``.
    """

    alpha1: float
    alpha2: float
    alpha3: float
    lam: float
    theta: float = DEGENERATE_THETA
    family: PowerSeriesFamily = field(default=DEGENERATE)

    def __post_init__(self) -> None:
        for name in ("alpha1", "alpha2", "alpha3", "lam"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
            object.__setattr__(self, name, v)
        if self.family.is_degenerate:
            object.__setattr__(self, "theta", DEGENERATE_THETA)
        else:
            object.__setattr__(self, "theta", _check_theta(self.family, self.theta))

    @property
    def alpha_sum(self) -> float:
        return self.alpha1 + self.alpha2 + self.alpha3

    @property
    def names(self) -> tuple[str, ...]:
        return PARAM_NAMES[: self.family.n_params]

    def to_vector(self) -> np.ndarray:
        v = [self.alpha1, self.alpha2, self.alpha3, self.lam, self.theta]
        return np.array(v[: self.family.n_params])

    @classmethod
    def from_vector(cls, vec, family: PowerSeriesFamily) -> BgepsParams:
        vec = [float(v) for v in vec]
        if len(vec) != family.n_params:
            raise ValueError(f"expected {family.n_params} parameters, got {len(vec)}")
        theta = vec[4] if len(vec) == 5 else DEGENERATE_THETA
        return cls(vec[0], vec[1], vec[2], vec[3], theta, family)

    def replace(self, **changes) -> BgepsParams:
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.to_vector().tolist()))


class Branch(enum.Enum):
    F0 = "F0"  # y1 == y2, density per unit length on the diagonal
    F1 = "F1"  # y1 < y2
    F2 = "F2"  # y1 > y2


_BRANCHES = (Branch.F0, Branch.F1, Branch.F2)


@dataclass(frozen=True)
class DensityValue:
    branch: Branch
    value: float
    log_value: float


def _lf(shape: float, lam: float, y):
    return np.asarray(ge_log_cdf(GeParams(shape, lam), y), dtype=float)


def _lpdf(shape: float, lam: float, y):
    return np.asarray(ge_log_pdf(GeParams(shape, lam), y), dtype=float)


def _log_theta_terms(p: BgepsParams) -> tuple[float, float]:
    """``log theta`` and ``log theta - log C(theta)``."""
    lt = math.log(p.theta)
    return lt, lt - float(_log_c(p.family, lt))


def _branch_codes(y1, y2) -> np.ndarray:
    return np.where(y1 < y2, 1, np.where(y1 > y2, 2, 0))


def _log_kernel(p: BgepsParams, y1, y2, codes) -> np.ndarray:
    """``log K`` with the shape split of the branch each point falls in."""
    a1, a2, a3, lam = p.alpha1, p.alpha2, p.alpha3, p.lam
    out = np.empty(np.shape(y1))
    m = codes == 1
    out[m] = _lf(a1 + a3, lam, y1[m]) + _lf(a2, lam, y2[m])
    m = codes == 2
    out[m] = _lf(a1, lam, y1[m]) + _lf(a2 + a3, lam, y2[m])
    m = codes == 0
    out[m] = _lf(p.alpha_sum, lam, y1[m])
    return out


def joint_log_cdf(p: BgepsParams, y1, y2):
    y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
    codes = np.where(y1 <= y2, 1, 2)
    log_k = _log_kernel(p, y1, y2, codes)
    if p.family.is_degenerate:
        out = log_k
    else:
        lt = math.log(p.theta)
        with np.errstate(invalid="ignore"):
            out = np.where(
                np.isneginf(log_k),
                -np.inf,
                _log_c(p.family, lt + log_k) - float(_log_c(p.family, lt)),
            )
        out = np.minimum(out, 0.0)
    return out if out.ndim else float(out)


def joint_cdf(p: BgepsParams, y1, y2):
    """``P(Y1 <= y1, Y2 <= y2) = C(theta K) / C(theta)``; 0 if either coordinate <= 0."""
    out = np.exp(joint_log_cdf(p, y1, y2))
    return out if np.ndim(out) else float(out)


def joint_log_pdf(p: BgepsParams, y1, y2) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized log density.

    Returns
    -------
    codes : ndarray of int
        0 on the diagonal (per-length density), 1 for ``y1 < y2``, 2 for ``y1 > y2``.
    log_f : ndarray
        Log of the branch density.
    """
    y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
    if np.any(~(y1 > 0) | ~(y2 > 0)):
        raise DomainError("density is defined for strictly positive coordinates only")
    a1, a2, a3, lam = p.alpha1, p.alpha2, p.alpha3, p.lam
    lt, pre = _log_theta_terms(p)
    fam = p.family
    codes = _branch_codes(y1, y2)
    out = np.empty(y1.shape)

    m = codes == 1
    if m.any():
        u, v = y1[m], y2[m]
        log_k = _lf(a1 + a3, lam, u) + _lf(a2, lam, v)
        out[m] = (
            pre
            + _lpdf(a1 + a3, lam, u)
            + _lpdf(a2, lam, v)
            + _log_moment_sum(fam, 2, lt + log_k)
        )
    m = codes == 2
    if m.any():
        u, v = y1[m], y2[m]
        log_k = _lf(a1, lam, u) + _lf(a2 + a3, lam, v)
        out[m] = (
            pre
            + _lpdf(a1, lam, u)
            + _lpdf(a2 + a3, lam, v)
            + _log_moment_sum(fam, 2, lt + log_k)
        )
    m = codes == 0
    if m.any():
        s = p.alpha_sum
        y = y1[m]
        out[m] = (
            pre
            + math.log(a3 / s)
            + _lpdf(s, lam, y)
            + _log_moment_sum(fam, 1, lt + _lf(s, lam, y))
        )
    return codes, out


def joint_pdf(p: BgepsParams, y1: float, y2: float) -> DensityValue:
    """Density at a single point, tagged with the branch that produced it."""
    codes, lf = joint_log_pdf(p, float(y1), float(y2))
    lv = float(lf)
    return DensityValue(_BRANCHES[int(codes)], math.exp(lv), lv)


def decomposition_weights(p: BgepsParams) -> tuple[float, float]:
    """Masses of the absolutely continuous part and of the diagonal."""
    s = p.alpha_sum
    return (p.alpha1 + p.alpha2) / s, p.alpha3 / s


def marginal_cdf(p: BgepsParams, which: int, y):
    """Cdf of ``Y1`` (``which=1``) or ``Y2`` (``which=2``): GEPS with shape ``alpha_i + alpha3``."""
    if which == 1:
        shape = p.alpha1 + p.alpha3
    elif which == 2:
        shape = p.alpha2 + p.alpha3
    else:
        raise ValueError(f"which must be 1 or 2, got {which!r}")
    return geps_cdf(GeParams(shape, p.lam), p.family, p.theta, y)


def max_cdf(p: BgepsParams, y):
    """Cdf of ``max(Y1, Y2)``: GEPS with shape ``alpha1 + alpha2 + alpha3``."""
    return geps_cdf(GeParams(p.alpha_sum, p.lam), p.family, p.theta, y)


def conditional_cdf(p: BgepsParams, y1, y2):
    """``P(Y1 <= y1 | Y2 <= y2)``.

    Raises
    ------
    DomainError
        If ``P(Y2 <= y2)`` underflows to zero.
    """
    y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
    if np.any(~(y2 > 0)):
        raise DomainError("conditioning value y2 must be > 0")
    log_den = np.asarray(_geps_log(p, p.alpha2 + p.alpha3, y2))
    if np.any(np.isneginf(log_den)):
        raise DomainError("P(Y2 <= y2) underflows to zero")
    out = np.exp(np.minimum(np.asarray(joint_log_cdf(p, y1, y2)) - log_den, 0.0))
    return out if out.ndim else float(out)


def _geps_log(p: BgepsParams, shape: float, y):
    return geps_log_cdf(GeParams(shape, p.lam), p.family, p.theta, y)


def prob_y1_less_y2(p: BgepsParams) -> float:
    """``P(Y1 < Y2) = alpha2 / (alpha1 + alpha2 + alpha3)``.

    ``Y1 < Y2`` happens exactly when the second latent component is the
    largest of the three, so the numerator is ``alpha2`` whatever the family.
    """
    return p.alpha2 / p.alpha_sum


def prob_y1_greater_y2(p: BgepsParams) -> float:
    return p.alpha1 / p.alpha_sum


def _positive_point(y1, y2):
    y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
    if np.any(~(y1 > 0) | ~(y2 > 0)):
        raise DomainError("coordinates must be strictly positive")
    return y1, y2


def cond_n_pmf(p: BgepsParams, y1: float, y2: float, n):
    """``P(N = n | Y1 = y1, Y2 = y2)`` for a single point, vectorized over ``n``."""
    y1, y2 = _positive_point(float(y1), float(y2))
    n = np.asarray(n, dtype=float)
    fam = p.family
    codes = _branch_codes(y1, y2)
    lx = math.log(p.theta) + float(_log_kernel(p, y1[None], y2[None], codes[None])[0])
    la = fam.log_coeff(n)
    power = 1 if int(codes) == 0 else 2
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = np.where(n > 1, (n - 1) * lx, 0.0)
        out = np.where(
            np.isfinite(la),
            power * np.log(np.maximum(n, 1.0)) + la + lead - _log_moment_sum(fam, power, lx),
            -np.inf,
        )
    out = np.exp(out)
    return out if out.ndim else float(out)


def cond_n_mean(p: BgepsParams, y1, y2):
    """``E(N | Y1 = y1, Y2 = y2)``, vectorized; always >= the leading index of the family."""
    y1, y2 = _positive_point(y1, y2)
    codes = _branch_codes(y1, y2)
    lx = math.log(p.theta) + _log_kernel(p, y1, y2, codes)
    fam = p.family
    diag = codes == 0
    lo = np.where(diag, 1, 2)
    out = np.empty(y1.shape)
    for order in (1, 2):
        m = lo == order
        if m.any():
            out[m] = np.exp(
                _log_moment_sum(fam, order + 1, lx[m]) - _log_moment_sum(fam, order, lx[m])
            )
    return out if out.ndim else float(out)


def log_likelihood(p: BgepsParams, data: BivariateSample) -> float:
    """Sum of the branch log densities over the sample.

    A sample that puts mass where the density vanishes yields ``-inf``
    (logged), never an exception.
    """
    if not isinstance(data, BivariateSample):
        raise InvalidDataError("log_likelihood expects a BivariateSample")
    _, lf = joint_log_pdf(p, data.y1, data.y2)
    total = float(np.sum(lf))
    if not math.isfinite(total):
        log.warning("log-likelihood is degenerate (%s) at %s", total, p)
        return -math.inf
    return total


def limiting_bge(p: BgepsParams) -> BgepsParams:
    """Limit as ``theta -> 0+``: BGE with all shapes multiplied by ``c = min{n : a_n > 0}``."""
    c = p.family.leading_index
    return BgepsParams(c * p.alpha1, c * p.alpha2, c * p.alpha3, p.lam)
