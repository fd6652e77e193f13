"""Model comparison: information criteria, K-S distances, likelihood-ratio test, k sweeps."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import kolmogorov
from scipy.stats import chi2

from .core import BgepsParams, marginal_cdf, max_cdf
from .data import BivariateSample
from .em import DEFAULT_MAX_ITER, DEFAULT_TOL, FitReport, fit
from .power_series import Kind, PowerSeriesFamily

__all__ = [
    "KS_METHODS",
    "InfoCriteria",
    "StatResult",
    "GofReport",
    "LrtError",
    "InvalidCdfError",
    "info_criteria",
    "ks_test",
    "lrt_vs_bge",
    "gof_report",
    "k_sweep",
    "SweepEntry",
    "best_k",
]

log = logging.getLogger(__name__)

KS_METHODS = ("stephens", "asymptotic")
LRT_SLACK = 1e-8


class LrtError(ValueError):
    """Likelihood-ratio statistic is negative beyond rounding slack."""


class InvalidCdfError(ValueError):
    """Supplied cdf is not monotone on the sample."""


class InfoCriteria(NamedTuple):
    aic: float
    aicc: float
    bic: float


class StatResult(NamedTuple):
    statistic: float
    p_value: float


def info_criteria(loglik: float, p: int, m: int) -> InfoCriteria:
    """AIC, small-sample corrected AIC and BIC.

    ``aicc`` is NaN when ``m <= p + 1``.
    """
    aic = -2.0 * loglik + 2.0 * p
    aicc = aic + 2.0 * p * (p + 1) / (m - p - 1) if m > p + 1 else math.nan
    bic = -2.0 * loglik + p * math.log(m)
    return InfoCriteria(aic, aicc, bic)


def ks_test(sample, cdf: Callable, method: str = "stephens") -> StatResult:
    """One-sample Kolmogorov-Smirnov distance and asymptotic p-value.

    The p-value is the Kolmogorov tail ``2 sum_j (-1)**(j-1) exp(-2 j**2 t**2)``
    at ``t = (sqrt(n) + 0.12 + 0.11/sqrt(n)) D`` (``method="stephens"``) or at
    ``t = sqrt(n) D`` (``method="asymptotic"``).
    """
    if method not in KS_METHODS:
        raise ValueError(f"method must be one of {KS_METHODS}, got {method!r}")
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("sample is empty")
    f = np.asarray(cdf(x), dtype=float).reshape(n)
    if np.any(np.diff(f) < -1e-12) or np.any((f < 0) | (f > 1)) or np.any(np.isnan(f)):
        raise InvalidCdfError("cdf is not a monotone map into [0, 1] on the sample")
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    sn = math.sqrt(n)
    t = (sn + 0.12 + 0.11 / sn) * d if method == "stephens" else sn * d
    p = float(min(1.0, max(0.0, kolmogorov(t))))
    return StatResult(d, p)


def lrt_vs_bge(loglik_full: float, loglik_bge: float, df: int = 1) -> StatResult:
    """``2 (l_full - l_BGE)`` clamped at 0, with its chi-square(1) upper tail.

    Raises
    ------
    LrtError
        If the statistic is below ``-LRT_SLACK``, which means one of the fits
        did not reach its maximum.
    """
    stat = 2.0 * (loglik_full - loglik_bge)
    if stat < -LRT_SLACK:
        raise LrtError(
            f"LRT statistic {stat:.3g} < 0: the richer model fits worse than BGE, "
            "so at least one fit has not converged"
        )
    stat = max(stat, 0.0)
    return StatResult(stat, float(chi2.sf(stat, df)))


@dataclass
class GofReport:
    aic: float
    aicc: float
    bic: float
    ks: dict[str, StatResult]
    lrt: StatResult | None = None
    loglik: float = math.nan
    n_params: int = 0
    m: int = 0
    family: str = ""
    metadata: dict = field(default_factory=dict)


def ks_triple(params: BgepsParams, data: BivariateSample, method: str = "stephens"):
    return {
        "Y1": ks_test(data.y1, lambda y: marginal_cdf(params, 1, y), method),
        "Y2": ks_test(data.y2, lambda y: marginal_cdf(params, 2, y), method),
        "Max": ks_test(data.maxima, lambda y: max_cdf(params, y), method),
    }


def gof_report(
    params: BgepsParams,
    loglik: float,
    data: BivariateSample,
    bge_loglik: float | None = None,
    ks_method: str = "stephens",
) -> GofReport:
    """Criteria, K-S triple and (when a BGE fit is given) the LRT for one fitted model."""
    k = params.family.n_params
    ic = info_criteria(loglik, k, data.m)
    lrt = None
    if bge_loglik is not None and not params.family.is_degenerate:
        lrt = lrt_vs_bge(loglik, bge_loglik)
    return GofReport(
        aic=ic.aic,
        aicc=ic.aicc,
        bic=ic.bic,
        ks=ks_triple(params, data, ks_method),
        lrt=lrt,
        loglik=loglik,
        n_params=k,
        m=data.m,
        family=params.family.spec,
        metadata={
            "ks_method": ks_method,
            "lrt_df": 1,
            "lrt_note": (
                "plain chi-square(1) tail; BGE is a boundary limit of some "
                "families, so the nominal p-value is approximate"
            ),
        },
    )


@dataclass
class SweepEntry:
    k: int
    report: FitReport | None
    error: str | None = None

    @property
    def loglik(self) -> float:
        return self.report.loglik if self.report is not None else math.nan


def k_sweep(
    data: BivariateSample,
    kind: Kind,
    k_range: Iterable[int],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    compute_se: bool = True,
    executor=None,
    accelerate: bool = True,
) -> list[SweepEntry]:
    """Fit the binomial or negative binomial member for each ``k``.

    Failures are recorded per ``k`` and the sweep continues.  An optional
    ``concurrent.futures`` executor spreads the fits; output order follows
    ``k_range``.
    """
    if kind not in (Kind.BINOMIAL, Kind.NEGATIVE_BINOMIAL):
        raise ValueError("k sweeps apply to the binomial and negative binomial families")
    ks = [int(k) for k in k_range]
    if not ks:
        raise ValueError("k_range is empty")

    def one(k: int) -> SweepEntry:
        try:
            fam = PowerSeriesFamily(kind, k=k)
            return SweepEntry(k, fit(
                data, fam, tol=tol, max_iter=max_iter, compute_se=compute_se, accelerate=accelerate
            ))
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            log.warning("k=%d fit failed: %s", k, exc)
            return SweepEntry(k, None, str(exc))

    if executor is None:
        return [one(k) for k in ks]
    return list(executor.map(one, ks))


def best_k(entries: Sequence[SweepEntry]) -> int:
    """``k`` with the largest log-likelihood among successful fits (first on ties)."""
    ok = [e for e in entries if e.report is not None and math.isfinite(e.loglik)]
    if not ok:
        raise ValueError("no successful fit in the sweep")
    return max(ok, key=lambda e: e.loglik).k
