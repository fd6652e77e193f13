"""Command-line interface: ``bgeps fit | simulate | gof | compare | density-grid``.

Exit codes: 0 success, 1 input or usage error, 2 fit finished without
converging (the report is still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ._version import __version__
from .core import DEGENERATE, BgepsParams, joint_log_pdf, log_likelihood
from .data import BivariateSample
from .em import DEFAULT_MAX_ITER, DEFAULT_TOL, FitReport, fit
from .io import ReportFormatError, load_csv, read_report, write_report, write_sample_csv
from .model_select import KS_METHODS, best_k, gof_report, k_sweep
from .power_series import DomainError, Kind, PowerSeriesFamily
from .sampler import RNG_ALGORITHM, SimulationConfig, sample

log = logging.getLogger("bgeps")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2
DEFAULT_FAMILIES = "geometric,poisson,logarithmic,binomial,negbinomial"
COMPARE_COLUMNS = (
    ["family", "n_params", "m"]
    + ["alpha1", "alpha2", "alpha3", "lambda", "theta"]
    + ["se_alpha1", "se_alpha2", "se_alpha3", "se_lambda", "se_theta"]
    + ["loglik", "aic", "aicc", "bic"]
    + ["ks_y1", "p_y1", "ks_y2", "p_y2", "ks_max", "p_max"]
    + ["lrt", "p_lrt", "converged", "iterations"]
)


class UsageError(Exception):
    """Bad flags or inputs; reported on stderr with exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; 2 is reserved for non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- helpers --------------------------------------------------------------------


def _family(spec: str) -> PowerSeriesFamily:
    try:
        return PowerSeriesFamily.parse(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _params(family: PowerSeriesFamily, a1, a2, a3, lam, theta) -> BgepsParams:
    if not family.is_degenerate and theta is None:
        raise UsageError(f"--theta is required for family {family.spec}")
    try:
        return BgepsParams(a1, a2, a3, lam, 1.0 if theta is None else theta, family)
    except (ValueError, DomainError) as exc:
        raise UsageError(str(exc)) from exc


def _params_from_vector(family: PowerSeriesFamily, text: str, flag: str) -> BgepsParams:
    v = _floats(text, flag)
    if len(v) != family.n_params:
        raise UsageError(f"{flag} needs {family.n_params} values for {family.spec}, got {len(v)}")
    return _params(family, *v[:4], v[4] if len(v) > 4 else None)


def _flags(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def _metadata(args: argparse.Namespace, **extra) -> dict:
    md = {
        "library_version": __version__,
        "command": args.command,
        "flags": _flags(args),
        "rng_algorithm": RNG_ALGORITHM,
    }
    md.update(extra)
    return md


def _emit(data: bytes | str, dest: str | None) -> None:
    if isinstance(data, str):
        data = data.encode()
    if dest is None or dest == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(dest).write_bytes(data)


def _load(args) -> BivariateSample:
    return load_csv(args.input, scale=args.scale, tie_tol=args.tie_tol)


def _read_fit(path: str) -> FitReport:
    try:
        rep, _ = read_report(Path(path).read_bytes())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not isinstance(rep, FitReport):
        raise UsageError(f"{path} is not a fit report")
    return rep


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


# -- commands -------------------------------------------------------------------


def cmd_fit(args) -> int:
    family = _family(args.family)
    data = _load(args)
    init = "auto" if args.init == "auto" else _params_from_vector(family, args.init, "--init")
    rep = fit(
        data, family, init=init, tol=args.tol, max_iter=args.max_iter,
        accelerate=not args.no_accelerate,
    )
    md = _metadata(args, tie_tol=args.tie_tol, scale=args.scale)
    _emit(write_report(rep, args.format, md), args.output)
    if not rep.converged:
        log.warning("fit did not converge after %d iterations", rep.iterations)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    family = _family(args.family)
    p = _params(family, args.alpha1, args.alpha2, args.alpha3, args.lam, args.theta)
    try:
        cfg = SimulationConfig(p, args.n, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(write_sample_csv(sample(cfg)), args.output)
    return EXIT_OK


def cmd_gof(args) -> int:
    data = _load(args)
    if (args.fit is None) == (args.params is None):
        raise UsageError("give exactly one of --fit or --params")
    if args.fit is not None:
        rep = _read_fit(args.fit)
        p = rep.estimates
        if rep.m != data.m:
            log.warning("fit report was made on m=%d observations, input has %d", rep.m, data.m)
    else:
        if args.family is None:
            raise UsageError("--params needs --family")
        p = _params_from_vector(_family(args.family), args.params, "--params")
    # log-likelihood is always evaluated on the supplied data
    ll = log_likelihood(p, data)
    bge_ll = None
    if args.bge_fit is not None:
        bge = _read_fit(args.bge_fit)
        if not bge.family.is_degenerate:
            raise UsageError(f"--bge-fit must be a degenerate-family fit, got {bge.family.spec}")
        bge_ll = log_likelihood(bge.estimates, data)
    g = gof_report(p, ll, data, bge_loglik=bge_ll, ks_method=args.ks_method)
    md = _metadata(args, tie_tol=args.tie_tol, scale=args.scale, ks_method=args.ks_method)
    _emit(write_report(g, args.format, md), args.output)
    return EXIT_OK


def _k_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("-")
    try:
        ks = list(range(int(lo), int(hi) + 1)) if sep else [int(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"--k-range: expected 'a-b' or 'k1,k2,...', got {text!r}") from None
    if not ks or min(ks) < 1:
        raise UsageError(f"--k-range must list positive integers, got {text!r}")
    return ks


def _row(rep: FitReport, g) -> list:
    est = rep.estimates.as_dict()
    names = ["alpha1", "alpha2", "alpha3", "lambda", "theta"]
    row = [rep.family.spec, rep.n_params, rep.m]
    row += [est.get(n) for n in names]
    row += [rep.standard_errors.get(n) for n in names]
    row += [rep.loglik, g.aic, g.aicc, g.bic]
    for key in ("Y1", "Y2", "Max"):
        row += [g.ks[key].statistic, g.ks[key].p_value]
    row += [g.lrt.statistic, g.lrt.p_value] if g.lrt is not None else [None, None]
    row += [rep.converged, rep.iterations]
    return row


def cmd_compare(args) -> int:
    data = _load(args)
    ks = _k_range(args.k_range)
    tokens = [t.strip() for t in args.families.split(";" if ";" in args.families else ",") if t.strip()]
    fit_kw = dict(tol=args.tol, max_iter=args.max_iter, accelerate=not args.no_accelerate)

    bge = fit(data, DEGENERATE, **fit_kw)
    reports = [bge]
    sweep_rows = []
    executor = ThreadPoolExecutor(args.workers) if args.workers > 1 else None
    try:
        for tok in tokens:
            name = tok.partition(":")[0].strip().lower()
            if name in (Kind.BINOMIAL.value, Kind.NEGATIVE_BINOMIAL.value) and ":" not in tok:
                entries = k_sweep(data, Kind(name), ks, compute_se=False, executor=executor, **fit_kw)
                sweep_rows += [
                    [name, e.k, e.loglik, e.report.converged if e.report else None, e.error]
                    for e in entries
                ]
                family = PowerSeriesFamily(Kind(name), k=best_k(entries))
            else:
                family = _family(tok)
            if family.is_degenerate:
                continue
            reports.append(fit(data, family, **fit_kw))
    finally:
        if executor is not None:
            executor.shutdown()

    rows = []
    for rep in reports:
        g = gof_report(
            rep.estimates, rep.loglik, data,
            bge_loglik=None if rep is bge else bge.loglik, ks_method=args.ks_method,
        )
        rows.append([_cell(x) for x in _row(rep, g)])
    _emit(_csv_text(COMPARE_COLUMNS, rows), args.output)
    if args.sweep_output is not None:
        header = ["family", "k", "loglik", "converged", "error"]
        _emit(_csv_text(header, [[_cell(x) for x in r] for r in sweep_rows]), args.sweep_output)
    return EXIT_OK if all(r.converged for r in reports) else EXIT_NOT_CONVERGED


def density_grid(p: BgepsParams, n: int, lo: float, hi: float):
    """Cell-midpoint grid on ``[lo, hi]**2``.

    Returns off-diagonal rows ``(y1, y2, branch, density)`` with branch F1/F2
    and diagonal rows with branch F0, whose density is per unit length along
    ``y1 == y2``.
    """
    h = (hi - lo) / n
    y = lo + h * (np.arange(n) + 0.5)
    g1, g2 = np.meshgrid(y, y, indexing="ij")
    off = g1 != g2
    codes, logf = joint_log_pdf(p, g1[off], g2[off])
    rows = [
        (a, b, f"F{c}", d)
        for a, b, c, d in zip(g1[off].tolist(), g2[off].tolist(), np.asarray(codes).tolist(), np.exp(logf).tolist())
    ]
    codes0, logf0 = joint_log_pdf(p, y, y)
    rows += [(a, a, f"F{c}", d) for a, c, d in zip(y.tolist(), np.asarray(codes0).tolist(), np.exp(logf0).tolist())]
    return rows


def cmd_density_grid(args) -> int:
    family = _family(args.family)
    p = _params(family, args.alpha1, args.alpha2, args.alpha3, args.lam, args.theta)
    if args.grid < 1:
        raise UsageError("--grid must be a positive integer")
    rng = _floats(args.range, "--range")
    if len(rng) != 2 or not 0 <= rng[0] < rng[1] or not math.isfinite(rng[1]):
        raise UsageError(f"--range must be 'lo,hi' with 0 <= lo < hi, got {args.range!r}")
    rows = density_grid(p, args.grid, rng[0], rng[1])
    _emit(_csv_text(["y1", "y2", "branch", "density"], [[_cell(x) for x in r] for r in rows]), args.output)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _data_flags(sp) -> None:
    sp.add_argument("--input", required=True, help="CSV of y1,y2 rows (optional header)")
    sp.add_argument("--scale", type=float, default=1.0, help="multiply every value on load (default 1)")
    sp.add_argument("--tie-tol", type=float, default=0.0,
                    help="merge pairs with |y1-y2| <= tol*max(y1,y2) into ties (default 0)")


def _fit_flags(sp) -> None:
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL, help=f"convergence tolerance (default {DEFAULT_TOL:g})")
    sp.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER,
                    help=f"iteration cap (default {DEFAULT_MAX_ITER})")
    sp.add_argument("--no-accelerate", action="store_true", help="plain EM sweeps without extrapolation")


def _param_flags(sp) -> None:
    sp.add_argument("--family", default="degenerate", help="family spec, e.g. geometric, negbinomial:3, poly:1,0,1")
    sp.add_argument("--alpha1", type=float, required=True)
    sp.add_argument("--alpha2", type=float, required=True)
    sp.add_argument("--alpha3", type=float, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--theta", type=float, default=None, help="omit for the degenerate family")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bgeps", description="Bivariate generalized exponential power-series toolkit.")
    ap.add_argument("--version", action="version", version=f"bgeps {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("fit", help="maximum-likelihood fit by EM")
    sp.add_argument("--family", required=True)
    _data_flags(sp)
    sp.add_argument("--init", default="auto", help="'auto' or a1,a2,a3,lambda[,theta]")
    _fit_flags(sp)
    sp.add_argument("--output", default=None, help="report path (default stdout)")
    sp.add_argument("--format", choices=("json", "text"), default="json")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("simulate", help="draw a seeded sample as CSV")
    _param_flags(sp)
    sp.add_argument("--n", type=int, required=True, help="number of pairs")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", default=None, help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("gof", help="criteria, K-S distances and optional LRT for fitted parameters")
    _data_flags(sp)
    sp.add_argument("--fit", default=None, help="JSON fit report")
    sp.add_argument("--params", default=None, help="inline a1,a2,a3,lambda[,theta] (needs --family)")
    sp.add_argument("--family", default=None)
    sp.add_argument("--bge-fit", default=None, help="JSON report of a degenerate-family fit; enables the LRT")
    sp.add_argument("--ks-method", choices=KS_METHODS, default="stephens")
    sp.add_argument("--output", default=None)
    sp.add_argument("--format", choices=("json", "text"), default="json")
    sp.set_defaults(func=cmd_gof)

    sp = sub.add_parser("compare", help="fit several families against the BGE baseline")
    _data_flags(sp)
    sp.add_argument("--families", default=DEFAULT_FAMILIES,
                    help="comma list; bare 'binomial'/'negbinomial' are swept over --k-range "
                         "(use ';' as separator when a poly spec is included)")
    sp.add_argument("--k-range", default="1-10", help="'a-b' or 'k1,k2,...' (default 1-10)")
    _fit_flags(sp)
    sp.add_argument("--ks-method", choices=KS_METHODS, default="stephens")
    sp.add_argument("--workers", type=int, default=1, help="threads for k sweeps (default 1)")
    sp.add_argument("--output", default=None, help="comparison CSV (default stdout)")
    sp.add_argument("--sweep-output", default=None, help="CSV of (family, k, loglik) from the sweeps")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("density-grid", help="density values on a square grid as CSV")
    _param_flags(sp)
    sp.add_argument("--grid", type=int, default=50, help="cells per axis (default 50)")
    sp.add_argument("--range", default="0,2", help="'lo,hi' for both axes (default 0,2)")
    sp.add_argument("--output", default=None)
    sp.set_defaults(func=cmd_density_grid)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ValueError, ReportFormatError, OSError) as exc:
        print(f"bgeps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
