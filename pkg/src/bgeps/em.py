"""Maximum likelihood fitting by EM.

The latent quantities are the count ``N`` and, off the diagonal, which latent
component attains the smaller coordinate.  The E-step replaces ``N`` by
``b_i = E(N | y_i)`` and splits each off-diagonal observation with the weights
``u = (alpha1, alpha3) / (alpha1 + alpha3)`` or
``v = (alpha2, alpha3) / (alpha2 + alpha3)``.  The M-step has closed forms for
the shapes given the rate, a one-dimensional profile equation for the rate,
and the mean equation ``theta C'(theta) / C(theta) = mean(b)`` for ``theta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma, polygamma

from .core import BgepsParams, cond_n_mean, log_likelihood
from .data import BivariateSample, InvalidDataError
from .ge import log1mexp
from .power_series import (
    DEGENERATE_THETA,
    InfeasibleTargetError,
    Kind,
    PowerSeriesFamily,
    _log_c,
    clamp_theta,
    mean,
    near_boundary,
    solve_theta,
)

__all__ = [
    "EmWeights",
    "FitReport",
    "DegenerateDenominatorError",
    "BracketError",
    "e_step",
    "m_step_alphas",
    "m_step_lambda",
    "m_step_theta",
    "initial_params",
    "fit",
    "em_sweep",
    "numerical_gradient",
    "numerical_hessian",
    "standard_errors",
    "pseudo_loglik",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 2000
# consecutive flat sweeps with theta at a domain edge before giving up
STALL_WINDOW = 100
EDGE_REL = 1e-3


class DegenerateDenominatorError(ArithmeticError):
    """A shape update has a zero denominator."""


class BracketError(RuntimeError):
    """The rate equation could not be bracketed."""


@dataclass(frozen=True)
class EmWeights:
    u1: float
    u2: float
    v1: float
    v2: float
    b: np.ndarray


@dataclass
class FitReport:
    """Outcome of one EM fit."""

    family: PowerSeriesFamily
    estimates: BgepsParams
    standard_errors: dict[str, float | None]
    loglik: float
    initial_loglik: float
    m: int
    iterations: int
    converged: bool
    trajectory: list[tuple[list[float], float]] = field(default_factory=list)
    boundary_warnings: list[str] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    max_rel_gradient: float = math.nan
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    accelerated: bool = True

    @property
    def n_params(self) -> int:
        return self.family.n_params

    @property
    def se_available(self) -> bool:
        return all(v is not None for v in self.standard_errors.values())


def e_step(p: BgepsParams, data: BivariateSample) -> EmWeights:
    """Conditional expectations of the count and the label-splitting weights."""
    if p.family.is_degenerate:
        b = np.ones(data.m)
    else:
        b = np.asarray(cond_n_mean(p, data.y1, data.y2), dtype=float)
    a1, a2, a3 = p.alpha1, p.alpha2, p.alpha3
    return EmWeights(a1 / (a1 + a3), a3 / (a1 + a3), a2 / (a2 + a3), a3 / (a2 + a3), b)


def _shape_counts(w: EmWeights, data: BivariateSample) -> tuple[float, float, float]:
    m0, m1, m2 = data.m0, data.m1, data.m2
    return m1 * w.u1 + m2, m1 + m2 * w.v1, m0 + m1 * w.u2 + m2 * w.v2


def _shape_sums(w: EmWeights, data: BivariateSample, lam: float) -> tuple[float, float, float]:
    q1 = log1mexp(lam * data.y1)
    q2 = log1mexp(lam * data.y2)
    qmin = np.minimum(q1, q2)  # Q is increasing, so this is Q(min(y1, y2))
    b = w.b
    return float(b @ q1), float(b @ q2), float(b @ qmin)


def m_step_alphas(w: EmWeights, data: BivariateSample, lam: float) -> tuple[float, float, float]:
    """Shape updates for a fixed rate.

    Each shape is ``-count_j / sum_i b_i Q(y)`` over the coordinates in which
    that latent component can appear, with ``Q(y) = log(1 - exp(-lam y))``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    counts = _shape_counts(w, data)
    sums = _shape_sums(w, data, lam)
    out = []
    for c, s in zip(counts, sums):
        if not s < 0:
            raise DegenerateDenominatorError(f"shape denominator is {s} at lambda={lam}")
        out.append(-c / s)
    return tuple(out)


def _rate_terms(data: BivariateSample):
    """Sum of observed coordinates and the count ``m0 + 2 m1 + 2 m2``."""
    s = float(np.sum(data.y1[data.i0])) + float(
        np.sum(data.y1[data.i1]) + np.sum(data.y2[data.i1])
        + np.sum(data.y1[data.i2]) + np.sum(data.y2[data.i2])
    )
    return s, data.m0 + 2 * data.m1 + 2 * data.m2


def _g(w: EmWeights, data: BivariateSample, lam: float, alphas) -> float:
    a1, a2, a3 = alphas
    b = w.b
    y1, y2 = data.y1, data.y2
    r1 = y1 / np.expm1(lam * y1)
    r2 = y2 / np.expm1(lam * y2)
    i0, i1, i2 = data.i0, data.i1, data.i2
    total, _ = _rate_terms(data)
    total -= float(np.sum((b[i0] * (a1 + a2 + a3) - 1.0) * r1[i0]))
    total -= float(np.sum((b[i1] * (a1 + a3) - 1.0) * r1[i1]))
    total -= float(np.sum((b[i1] * a2 - 1.0) * r2[i1]))
    total -= float(np.sum((b[i2] * a1 - 1.0) * r1[i2]))
    total -= float(np.sum((b[i2] * (a2 + a3) - 1.0) * r2[i2]))
    return total


def rate_equation(w: EmWeights, data: BivariateSample, lam: float) -> float:
    """``lam * g(lam) - (m0 + 2 m1 + 2 m2)`` with the shapes profiled out."""
    alphas = m_step_alphas(w, data, lam)
    _, count = _rate_terms(data)
    return lam * _g(w, data, lam, alphas) - count


def m_step_lambda(w: EmWeights, data: BivariateSample, lambda_prev: float) -> float:
    """Solve the profile rate equation, bracketing outward from ``lambda_prev``.

    The bracket grows by factors of 2 up to ``2**20`` in each direction before
    giving up with ``BracketError``.
    """
    if not lambda_prev > 0:
        raise ValueError(f"lambda_prev must be > 0, got {lambda_prev}")
    _, count = _rate_terms(data)

    def phi(lam: float) -> float:
        # count / lam - g(lam); positive below the root
        try:
            alphas = m_step_alphas(w, data, lam)
        except DegenerateDenominatorError:
            return math.nan
        return count / lam - _g(w, data, lam, alphas)

    lo = hi = float(lambda_prev)
    f_lo = f_hi = phi(lo)
    if not math.isfinite(f_lo):
        raise BracketError(f"rate equation undefined at lambda={lambda_prev}")
    step = 0
    while not (f_lo > 0 and f_hi < 0):
        step += 1
        if step > 20:
            raise BracketError(
                f"could not bracket the rate equation within 2**20 of {lambda_prev}"
            )
        if not f_lo > 0:
            lo /= 2.0
            f_lo = phi(lo)
        if not f_hi < 0:
            hi *= 2.0
            f_hi = phi(hi)
        if math.isnan(f_lo) or math.isnan(f_hi):
            raise BracketError(f"rate equation undefined while bracketing near {lambda_prev}")
    if f_lo == 0:
        return lo
    return brentq(phi, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=200)


def m_step_theta(family: PowerSeriesFamily, w: EmWeights) -> float:
    """``theta`` update from ``mean(b)``.

    The geometric family uses ``1 - m / sum(b)`` directly; the degenerate family
    has nothing to solve and returns ``DEGENERATE_THETA``.

    Raises
    ------
    InfeasibleTargetError
        If ``mean(b)`` cannot be matched by the family.
    """
    if family.is_degenerate:
        return DEGENERATE_THETA
    b = np.asarray(w.b, dtype=float)
    if family.kind is Kind.GEOMETRIC:
        theta = 1.0 - b.size / float(b.sum())
        if not theta > 0:
            raise InfeasibleTargetError(f"mean(b) = {b.mean()} gives theta <= 0")
        return clamp_theta(family, theta)
    return solve_theta(family, float(b.mean()))


def pseudo_loglik(p: BgepsParams, w: EmWeights, data: BivariateSample) -> float:
    """Expected complete-data log-likelihood (up to constants) for fixed weights.

    Diagnostic only: the M-step maximizes this in the shapes, rate and theta.
    """
    a1, a2, a3, lam = p.alpha1, p.alpha2, p.alpha3, p.lam
    n1, n2, n3 = _shape_counts(w, data)
    s1, s2, s3 = _shape_sums(w, data, lam)
    total, count = _rate_terms(data)
    q1 = log1mexp(lam * data.y1)
    q2 = log1mexp(lam * data.y2)
    off = np.concatenate([data.i1, data.i2])
    q_obs = float(np.sum(q1[data.i0]) + np.sum(q1[off]) + np.sum(q2[off]))
    out = (
        count * math.log(lam)
        + n1 * math.log(a1)
        + n2 * math.log(a2)
        + n3 * math.log(a3)
        - lam * total
        + a1 * s1
        + a2 * s2
        + a3 * s3
        - q_obs
    )
    if not p.family.is_degenerate:
        lt = math.log(p.theta)
        out += lt * float(np.sum(w.b)) - data.m * float(_log_c(p.family, lt))
    return out


# -- initialization -------------------------------------------------------------


def _ge_moment_fit(x: np.ndarray) -> tuple[float, float]:
    """GE shape and rate from the sample mean and coefficient of variation."""
    mu = float(np.mean(x))
    var = float(np.var(x, ddof=1)) if x.size > 1 else mu * mu
    cv2 = var / (mu * mu)

    def cv2_of(log_a: float) -> float:
        a = math.exp(log_a)
        m1 = digamma(a + 1.0) - digamma(1.0)
        v = polygamma(1, 1.0) - polygamma(1, a + 1.0)
        return float(v / (m1 * m1))

    lo, hi = math.log(1e-4), math.log(1e4)
    if cv2 >= cv2_of(lo):
        log_a = lo
    elif cv2 <= cv2_of(hi):
        log_a = hi
    else:
        log_a = brentq(lambda t: cv2_of(t) - cv2, lo, hi, xtol=1e-10)
    alpha = math.exp(log_a)
    lam = float((digamma(alpha + 1.0) - digamma(1.0)) / mu)
    return alpha, lam


def initial_theta(family: PowerSeriesFamily) -> float:
    if family.is_degenerate:
        return DEGENERATE_THETA
    return 0.5 if math.isfinite(family.theta_sup) else 1.0


def initial_params(data: BivariateSample, family: PowerSeriesFamily) -> BgepsParams:
    """Deterministic starting point.

    The rate and total shape come from a GE moment fit to ``max(y1, y2)``; the
    total shape is split equally and divided by ``E(N)`` at the starting theta.
    """
    alpha, lam = _ge_moment_fit(data.maxima)
    theta = initial_theta(family)
    each = alpha / (3.0 * mean(family, theta))
    return BgepsParams(each, each, each, lam, theta, family)


# -- observed information ---------------------------------------------------------


def _steps(p: BgepsParams) -> np.ndarray:
    x = p.to_vector()
    h = np.maximum(1e-5, 1e-4 * np.abs(x))
    if x.size == 5:
        # keep theta +- 2h inside the domain
        s = p.family.theta_sup
        room = min(x[4], s - x[4]) if math.isfinite(s) else x[4]
        h[4] = min(h[4], 0.25 * room)
    # shapes and rate must stay positive
    h[:4] = np.minimum(h[:4], 0.25 * x[:4])
    return h


def _loglik_at(vec, family: PowerSeriesFamily, data: BivariateSample) -> float:
    return log_likelihood(BgepsParams.from_vector(vec, family), data)


def numerical_gradient(p: BgepsParams, data: BivariateSample) -> np.ndarray:
    """Central-difference gradient of the observed log-likelihood."""
    x = p.to_vector()
    h = _steps(p)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (_loglik_at(x + e, p.family, data) - _loglik_at(x - e, p.family, data)) / (2 * h[i])
    return g


def numerical_hessian(p: BgepsParams, data: BivariateSample) -> np.ndarray:
    """Central-difference Hessian of the observed log-likelihood, symmetrized."""
    x = p.to_vector()
    h = _steps(p)
    k = x.size
    f0 = _loglik_at(x, p.family, data)
    hess = np.empty((k, k))
    f = lambda v: _loglik_at(v, p.family, data)  # noqa: E731
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / (h[i] * h[i])
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            hess[i, j] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h[i] * h[j])
            hess[j, i] = hess[i, j]
    return 0.5 * (hess + hess.T)


def standard_errors(p: BgepsParams, data: BivariateSample) -> dict[str, float | None]:
    """Square roots of the diagonal of the inverse observed information.

    All entries are ``None`` when the information matrix is not positive
    definite.
    """
    info = -numerical_hessian(p, data)
    names = p.names
    try:
        np.linalg.cholesky(info)
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return {n: None for n in names}
    d = np.diag(cov)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        return {n: None for n in names}
    return dict(zip(names, np.sqrt(d).tolist()))


def relative_gradient(p: BgepsParams, data: BivariateSample, loglik: float) -> float:
    """``max_j |d l / d p_j| * |p_j| / max(1, |l|)``."""
    g = numerical_gradient(p, data)
    return float(np.max(np.abs(g) * np.abs(p.to_vector())) / max(1.0, abs(loglik)))


# -- driver -----------------------------------------------------------------------


class _SweepFailed(RuntimeError):
    pass


def em_sweep(p: BgepsParams, data: BivariateSample) -> tuple[BgepsParams, str | None]:
    """One pass of E-step, rate, shapes, theta.

    Returns the updated parameters and a note when the theta equation was
    infeasible and the previous theta was kept.
    """
    family = p.family
    w = e_step(p, data)
    try:
        lam = m_step_lambda(w, data, p.lam)
        alphas = m_step_alphas(w, data, lam)
    except (BracketError, DegenerateDenominatorError) as exc:
        raise _SweepFailed(str(exc)) from exc
    if min(alphas) <= 0:
        raise _SweepFailed(f"shape update reached zero {alphas}")
    note = None
    try:
        theta = m_step_theta(family, w)
    except InfeasibleTargetError as exc:
        theta, note = p.theta, f"theta kept ({exc})"
    return BgepsParams(*alphas, lam, theta, family), note


def _to_free(p: BgepsParams) -> np.ndarray:
    x = p.to_vector()
    z = np.log(x)
    if x.size == 5 and math.isfinite(p.family.theta_sup):
        s = p.family.theta_sup
        z[4] = math.log(x[4] / (s - x[4]))
    return z


def _from_free(z: np.ndarray, family: PowerSeriesFamily) -> BgepsParams:
    x = np.exp(z)
    if z.size == 5 and math.isfinite(family.theta_sup):
        s = family.theta_sup
        x[4] = clamp_theta(family, s / (1.0 + math.exp(-z[4])))
    return BgepsParams.from_vector(x, family)


def _squarem_step(p0, p1, p2, data, ll2):
    """SQUAREM extrapolation from three successive EM iterates, then one stabilizing sweep.

    Returns the extrapolated point only when it beats ``p2`` in log-likelihood.
    """
    z0, z1, z2 = _to_free(p0), _to_free(p1), _to_free(p2)
    r = z1 - z0
    v = z2 - 2.0 * z1 + z0
    nv = float(np.linalg.norm(v))
    if nv == 0.0 or not np.all(np.isfinite(v)):
        return None
    step = min(-float(np.linalg.norm(r)) / nv, -1.0)
    z = z0 - 2.0 * step * r + step * step * v
    try:
        cand, _ = em_sweep(_from_free(z, p0.family), data)
    except (_SweepFailed, ValueError, OverflowError):
        return None
    ll = log_likelihood(cand, data)
    if not ll > ll2:
        return None
    return cand, ll


def _at_edge(family: PowerSeriesFamily, theta: float) -> bool:
    if near_boundary(family, theta, EDGE_REL):
        return True
    return not math.isfinite(family.theta_sup) and theta > 1.0 / EDGE_REL


def _rel_change(a: BgepsParams, b: BgepsParams) -> float:
    u, v = a.to_vector(), b.to_vector()
    return float(np.max(np.abs(v - u) / np.maximum(np.abs(u), 1e-300)))


def fit(
    data: BivariateSample,
    family: PowerSeriesFamily,
    init: BgepsParams | str | None = "auto",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    compute_se: bool = True,
    accelerate: bool = True,
) -> FitReport:
    """Maximum likelihood by EM.

    Each sweep recomputes ``b_i`` and the label weights, solves the rate
    equation with the shapes profiled out, updates the shapes, then ``theta``.
    Convergence means one sweep moves every parameter by less than ``tol``
    (relative) and the log-likelihood by less than ``tol``.  A run whose
    log-likelihood stays flat for ``STALL_WINDOW`` sweeps while the parameters
    keep drifting (a ridge running off to the edge of the space) stops early
    with ``converged=False``.

    With ``accelerate=True`` each iteration chains two sweeps and tries a
    SQUAREM extrapolation along them, keeping it only if it raises the
    log-likelihood; the fixed point is the same as plain EM.
    """
    if not isinstance(data, BivariateSample):
        raise InvalidDataError("fit expects a BivariateSample")
    if data.m < family.n_params:
        raise InvalidDataError(
            f"need at least {family.n_params} observations, got {data.m}"
        )
    if init is None or (isinstance(init, str) and init == "auto"):
        p = initial_params(data, family)
    elif isinstance(init, BgepsParams):
        p = BgepsParams(init.alpha1, init.alpha2, init.alpha3, init.lam, init.theta, family)
    else:
        raise ValueError(f"bad init {init!r}")

    diagnostics: list[str] = []
    notes: set[str] = set()
    ll = log_likelihood(p, data)
    ll0 = ll
    trajectory = [(p.to_vector().tolist(), ll)]
    converged = False
    flat = 0
    it = 0

    def sweep(q):
        out, note = em_sweep(q, data)
        if note and "theta" not in notes:
            notes.add("theta")
            diagnostics.append(f"iteration {it}: {note}")
        return out, log_likelihood(out, data)

    for it in range(1, max_iter + 1):
        try:
            p1, ll1 = sweep(p)
        except _SweepFailed as exc:
            diagnostics.append(f"iteration {it}: {exc}")
            break
        if ll1 < ll - 1e-6:
            msg = f"iteration {it}: log-likelihood decreased by {ll - ll1:.3g}"
            log.info(msg)
            diagnostics.append(msg)
        if _rel_change(p, p1) < tol and abs(ll1 - ll) < tol:
            p, ll = p1, ll1
            trajectory.append((p.to_vector().tolist(), ll))
            converged = True
            break
        flat = flat + 1 if abs(ll1 - ll) < tol and _at_edge(family, p1.theta) else 0
        if flat >= STALL_WINDOW:
            p, ll = p1, ll1
            trajectory.append((p.to_vector().tolist(), ll))
            diagnostics.append(
                f"iteration {it}: log-likelihood flat to {tol:g} for {STALL_WINDOW} sweeps "
                f"while theta={p1.theta:.6g} drifts along the edge of its domain; "
                "stopped without convergence"
            )
            break
        if accelerate:
            try:
                p2, ll2 = sweep(p1)
            except _SweepFailed:
                p2, ll2 = p1, ll1
            else:
                jump = _squarem_step(p, p1, p2, data, ll2)
                if jump is not None:
                    p2, ll2 = jump
            p, ll = p2, ll2
        else:
            p, ll = p1, ll1
        trajectory.append((p.to_vector().tolist(), ll))

    warnings_: list[str] = []
    if _at_edge(family, p.theta):
        warnings_.append(f"theta={p.theta!r} is at the edge of its domain")
    if compute_se:
        se = standard_errors(p, data)
        if not all(v is not None for v in se.values()):
            diagnostics.append("observed information matrix is not positive definite")
        rel_grad = relative_gradient(p, data, ll)
    else:
        se = {n: None for n in p.names}
        rel_grad = math.nan
    return FitReport(
        family=family,
        estimates=p,
        standard_errors=se,
        loglik=ll,
        initial_loglik=ll0,
        m=data.m,
        iterations=it,
        converged=converged,
        trajectory=trajectory,
        boundary_warnings=warnings_,
        diagnostics=diagnostics,
        max_rel_gradient=rel_grad,
        tol=tol,
        max_iter=max_iter,
        accelerated=accelerate,
    )
