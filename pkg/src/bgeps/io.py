"""CSV datasets and JSON/text report formats."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np

from ._version import __version__
from .core import BgepsParams
from .data import BivariateSample, InvalidDataError
from .em import FitReport
from .model_select import GofReport, StatResult
from .power_series import PowerSeriesFamily

__all__ = [
    "SCHEMA_VERSION",
    "DataFileError",
    "ReportFormatError",
    "load_csv",
    "parse_csv",
    "merge_ties",
    "write_sample_csv",
    "report_to_dict",
    "report_from_dict",
    "write_report",
    "read_report",
]

SCHEMA_VERSION = 1
HEADER = ("y1", "y2")


class DataFileError(InvalidDataError):
    """A dataset row could not be parsed or holds an invalid value."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ReportFormatError(ValueError):
    """Serialized report is malformed or has an unknown schema version."""


# -- datasets -------------------------------------------------------------------


def merge_ties(y1: np.ndarray, y2: np.ndarray, tie_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Replace pairs with ``|y1 - y2| <= tie_tol * max(y1, y2)`` by their mean."""
    if not tie_tol >= 0:
        raise ValueError(f"tie_tol must be >= 0, got {tie_tol!r}")
    y1 = np.array(y1, dtype=float)
    y2 = np.array(y2, dtype=float)
    if tie_tol > 0:
        near = np.abs(y1 - y2) <= tie_tol * np.maximum(y1, y2)
        mid = 0.5 * (y1[near] + y2[near])
        y1[near] = mid
        y2[near] = mid
    return y1, y2


def parse_csv(text: str, scale: float = 1.0, tie_tol: float = 0.0) -> BivariateSample:
    """Parse ``y1,y2`` rows from text; see :func:`load_csv`."""
    if not (math.isfinite(scale) and scale > 0):
        raise ValueError(f"scale must be finite and positive, got {scale!r}")
    rows: list[tuple[float, float]] = []
    seen_data = False
    for lineno, row in enumerate(csv.reader(_io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells):
            continue
        if not seen_data and tuple(c.lower() for c in cells) == HEADER:
            seen_data = True
            continue
        seen_data = True
        if len(cells) != 2:
            raise DataFileError(lineno, f"expected 2 fields, found {len(cells)}")
        try:
            a, b = float(cells[0]), float(cells[1])
        except ValueError:
            raise DataFileError(lineno, f"cannot parse {','.join(cells)!r} as two numbers") from None
        a, b = a * scale, b * scale
        if not (math.isfinite(a) and math.isfinite(b) and a > 0 and b > 0):
            raise DataFileError(lineno, f"values must be finite and strictly positive, got ({a}, {b})")
        rows.append((a, b))
    if not rows:
        raise InvalidDataError("dataset has no observations")
    arr = np.array(rows)
    return BivariateSample(*merge_ties(arr[:, 0], arr[:, 1], tie_tol))


def load_csv(path, scale: float = 1.0, tie_tol: float = 0.0) -> BivariateSample:
    """Read a two-column dataset.

    Parameters
    ----------
    path : str or Path
        Comma separated file; an optional first line ``y1,y2`` is skipped.
    scale : float
        Every value is multiplied by this factor (0.01 divides by 100).
    tie_tol : float
        Pairs with ``|y1 - y2| <= tie_tol * max(y1, y2)`` become exact ties at
        their mean.  0 keeps only exact ties.

    Raises
    ------
    DataFileError
        With the offending line number on a parse or positivity failure.
    """
    return parse_csv(Path(path).read_text(), scale=scale, tie_tol=tie_tol)


def write_sample_csv(sample: BivariateSample, dest=None) -> str:
    """Write ``y1,y2`` header plus rows at 17 significant digits; returns the text."""
    lines = ["y1,y2"]
    lines += [f"{a:.17g},{b:.17g}" for a, b in zip(sample.y1.tolist(), sample.y2.tolist())]
    text = "\n".join(lines) + "\n"
    if dest is not None:
        Path(dest).write_text(text)
    return text


# -- reports --------------------------------------------------------------------


def _num(x):
    # strict JSON has no NaN/Infinity
    if x is None:
        return None
    x = float(x)
    if math.isfinite(x):
        return x
    return "NaN" if math.isnan(x) else ("Infinity" if x > 0 else "-Infinity")


def _unnum(x):
    if x is None:
        return None
    if isinstance(x, str):
        return {"NaN": math.nan, "Infinity": math.inf, "-Infinity": -math.inf}[x]
    return float(x)


def _stat(s: StatResult | None):
    return None if s is None else {"statistic": _num(s.statistic), "p_value": _num(s.p_value)}


def _unstat(d) -> StatResult | None:
    return None if d is None else StatResult(_unnum(d["statistic"]), _unnum(d["p_value"]))


def _params_dict(p: BgepsParams) -> dict:
    return {k: _num(v) for k, v in p.as_dict().items()}


def _fit_to_dict(r: FitReport) -> dict:
    return {
        "family": r.family.spec,
        "n_params": r.n_params,
        "m": r.m,
        "estimates": _params_dict(r.estimates),
        "standard_errors": {k: _num(v) for k, v in r.standard_errors.items()},
        "loglik": _num(r.loglik),
        "initial_loglik": _num(r.initial_loglik),
        "iterations": r.iterations,
        "converged": r.converged,
        "max_rel_gradient": _num(r.max_rel_gradient),
        "tol": _num(r.tol),
        "max_iter": r.max_iter,
        "accelerated": r.accelerated,
        "boundary_warnings": list(r.boundary_warnings),
        "diagnostics": list(r.diagnostics),
        "trajectory": [{"params": [_num(v) for v in x], "loglik": _num(ll)} for x, ll in r.trajectory],
    }


def _fit_from_dict(d: Mapping) -> FitReport:
    fam = PowerSeriesFamily.parse(d["family"])
    est = d["estimates"]
    theta = _unnum(est.get("theta", 1.0))
    params = BgepsParams(
        _unnum(est["alpha1"]), _unnum(est["alpha2"]), _unnum(est["alpha3"]),
        _unnum(est["lambda"]), theta, fam,
    )
    return FitReport(
        family=fam,
        estimates=params,
        standard_errors={k: _unnum(v) for k, v in d["standard_errors"].items()},
        loglik=_unnum(d["loglik"]),
        initial_loglik=_unnum(d["initial_loglik"]),
        m=int(d["m"]),
        iterations=int(d["iterations"]),
        converged=bool(d["converged"]),
        trajectory=[([_unnum(v) for v in t["params"]], _unnum(t["loglik"])) for t in d["trajectory"]],
        boundary_warnings=list(d["boundary_warnings"]),
        diagnostics=list(d["diagnostics"]),
        max_rel_gradient=_unnum(d["max_rel_gradient"]),
        tol=_unnum(d["tol"]),
        max_iter=int(d["max_iter"]),
        accelerated=bool(d["accelerated"]),
    )


def _gof_to_dict(r: GofReport) -> dict:
    return {
        "family": r.family,
        "n_params": r.n_params,
        "m": r.m,
        "loglik": _num(r.loglik),
        "aic": _num(r.aic),
        "aicc": _num(r.aicc),
        "bic": _num(r.bic),
        "ks": {k: _stat(v) for k, v in r.ks.items()},
        "lrt": _stat(r.lrt),
        "metadata": dict(r.metadata),
    }


def _gof_from_dict(d: Mapping) -> GofReport:
    return GofReport(
        aic=_unnum(d["aic"]),
        aicc=_unnum(d["aicc"]),
        bic=_unnum(d["bic"]),
        ks={k: _unstat(v) for k, v in d["ks"].items()},
        lrt=_unstat(d["lrt"]),
        loglik=_unnum(d["loglik"]),
        n_params=int(d["n_params"]),
        m=int(d["m"]),
        family=d["family"],
        metadata=dict(d["metadata"]),
    )


def report_to_dict(report, metadata: Mapping[str, Any] | None = None) -> dict:
    """Versioned, JSON-ready document for a :class:`FitReport` or :class:`GofReport`."""
    if isinstance(report, FitReport):
        kind, body = "fit", _fit_to_dict(report)
    elif isinstance(report, GofReport):
        kind, body = "gof", _gof_to_dict(report)
    else:
        raise TypeError(f"cannot serialize {type(report).__name__}")
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "library_version": __version__,
        "metadata": dict(metadata or {}),
        "report": body,
    }


def report_from_dict(doc: Mapping):
    """Inverse of :func:`report_to_dict`; returns ``(report, metadata)``."""
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ReportFormatError(f"unsupported schema_version {doc.get('schema_version')!r}")
    try:
        kind = doc["kind"]
        body = doc["report"]
        if kind == "fit":
            rep = _fit_from_dict(body)
        elif kind == "gof":
            rep = _gof_from_dict(body)
        else:
            raise ReportFormatError(f"unknown report kind {kind!r}")
    except (KeyError, TypeError) as exc:
        raise ReportFormatError(f"malformed report: {exc}") from exc
    return rep, dict(doc.get("metadata", {}))


def _fmt(x, width=12) -> str:
    if x is None:
        return "-".rjust(width)
    x = float(x)
    return f"{x:{width}.4f}" if math.isfinite(x) else f"{x!s:>{width}}"


def _fit_text(r: FitReport) -> list[str]:
    out = [f"family        {r.family.spec}", f"m             {r.m}"]
    for name in r.estimates.names:
        est = r.estimates.as_dict()[name]
        se = r.standard_errors.get(name)
        se_s = f"({se:.4f})" if se is not None else "(n/a)"
        out.append(f"{name:<13} {_fmt(est)} {se_s}")
    out += [
        f"-loglik       {_fmt(-r.loglik)}",
        f"iterations    {r.iterations}",
        f"converged     {'yes' if r.converged else 'no'}",
        f"max rel grad  {r.max_rel_gradient:.3g}",
    ]
    out += [f"warning       {w}" for w in r.boundary_warnings]
    out += [f"note          {w}" for w in r.diagnostics]
    return out


def _gof_text(r: GofReport) -> list[str]:
    out = [
        f"family        {r.family}",
        f"m             {r.m}",
        f"-loglik       {_fmt(-r.loglik)}",
        f"AIC           {_fmt(r.aic)}",
        f"AICC          {_fmt(r.aicc)}",
        f"BIC           {_fmt(r.bic)}",
    ]
    for k, s in r.ks.items():
        out.append(f"K-S {k:<9} {_fmt(s.statistic)} (p {s.p_value:.4f})")
    if r.lrt is not None:
        out.append(f"LRT           {_fmt(r.lrt.statistic)} (p {r.lrt.p_value:.4f})")
    return out


def write_report(report, fmt: str = "json", metadata: Mapping[str, Any] | None = None) -> bytes:
    """Serialize a report.

    ``json`` is lossless and versioned (``schema_version``); ``text`` is a
    fixed-width column of estimates (standard errors), -loglik, criteria and
    K-S distances for reading, not for parsing back.  Output carries no
    timestamps, so equal inputs give equal bytes.
    """
    if fmt == "json":
        doc = report_to_dict(report, metadata)
        return (json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n").encode()
    if fmt == "text":
        if isinstance(report, FitReport):
            lines = _fit_text(report)
        elif isinstance(report, GofReport):
            lines = _gof_text(report)
        else:
            raise TypeError(f"cannot serialize {type(report).__name__}")
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"format must be 'json' or 'text', got {fmt!r}")


def read_report(blob: bytes | str):
    """Parse JSON written by :func:`write_report`; returns ``(report, metadata)``."""
    try:
        doc = json.loads(blob)
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"not a JSON report: {exc}") from exc
    if not isinstance(doc, dict):
        raise ReportFormatError("report root must be an object")
    return report_from_dict(doc)
