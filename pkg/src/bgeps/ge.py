"""Generalized exponential (GE) law and its power-series compound (GEPS)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .power_series import PowerSeriesFamily, _check_theta, _log_c

__all__ = [
    "GeParams",
    "log1mexp",
    "ge_cdf",
    "ge_log_cdf",
    "ge_pdf",
    "ge_log_pdf",
    "ge_quantile",
    "geps_cdf",
    "geps_log_cdf",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class GeParams:
    """Shape ``alpha`` and rate ``lam`` of a GE law, both strictly positive."""

    alpha: float
    lam: float

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and > 0, got {self.alpha}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be finite and > 0, got {self.lam}")


def log1mexp(a):
    """``log(1 - exp(-a))`` for ``a >= 0``, accurate at both ends.

    Uses ``log(-expm1(-a))`` below ``ln 2`` and ``log1p(-exp(-a))`` above.
    """
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(a <= _LN2, np.log(-np.expm1(-a)), np.log1p(-np.exp(-a)))
    return out if out.ndim else float(out)


def _as_out(x):
    return x if np.ndim(x) else float(x)


def ge_log_cdf(p: GeParams, x):
    """``alpha * log(1 - exp(-lam x))``; ``-inf`` for ``x <= 0``."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(pos, p.alpha * log1mexp(np.where(pos, p.lam * x, 1.0)), -np.inf)
    return _as_out(out)


def ge_cdf(p: GeParams, x):
    """``(1 - exp(-lam x))**alpha`` for ``x > 0``, else 0."""
    return _as_out(np.exp(ge_log_cdf(p, x)))


def ge_log_pdf(p: GeParams, x):
    """Log density.

    At ``x = 0`` the density is ``+inf`` for ``alpha < 1``, ``lam`` for
    ``alpha = 1`` and 0 for ``alpha > 1``; the log form returns ``+inf``,
    ``log lam`` and ``-inf`` respectively.  Negative ``x`` gives ``-inf``.
    """
    x = np.asarray(x, dtype=float)
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    body = (
        math.log(p.alpha)
        + math.log(p.lam)
        - p.lam * xs
        + (p.alpha - 1.0) * log1mexp(p.lam * xs)
    )
    if p.alpha < 1.0:
        at_zero = math.inf
    elif p.alpha == 1.0:
        at_zero = math.log(p.lam)
    else:
        at_zero = -math.inf
    out = np.where(pos, body, np.where(x == 0, at_zero, -np.inf))
    return _as_out(out)


def ge_pdf(p: GeParams, x):
    """``alpha lam exp(-lam x) (1 - exp(-lam x))**(alpha - 1)``."""
    return _as_out(np.exp(ge_log_pdf(p, x)))


def ge_quantile(p: GeParams, u):
    """Inverse cdf, ``-log(1 - u**(1/alpha)) / lam`` for ``0 < u < 1``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)) or np.any(np.isnan(u)):
        raise ValueError("quantile level must lie in (0, 1)")
    out = -np.asarray(log1mexp(-np.log(u) / p.alpha)) / p.lam
    return _as_out(out)


def geps_log_cdf(p: GeParams, family: PowerSeriesFamily, theta: float, x):
    """``log C(theta F_GE(x)) - log C(theta)``."""
    theta = _check_theta(family, theta)
    log_f = np.asarray(ge_log_cdf(p, x), dtype=float)
    if family.is_degenerate:
        return _as_out(log_f)
    lt = math.log(theta)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isneginf(log_f), -np.inf, _log_c(family, lt + log_f) - _log_c(family, lt))
    return _as_out(np.minimum(out, 0.0))


def geps_cdf(p: GeParams, family: PowerSeriesFamily, theta: float, x):
    """Cdf of the maximum of N i.i.d. GE variables, ``C(theta F_GE(x)) / C(theta)``."""
    return _as_out(np.exp(geps_log_cdf(p, family, theta, x)))
