"""Bivariate generalized exponential power-series distributions."""

from ._version import __version__
from .core import (
    DEGENERATE,
    BgepsParams,
    Branch,
    DensityValue,
    cond_n_mean,
    cond_n_pmf,
    conditional_cdf,
    decomposition_weights,
    joint_cdf,
    joint_log_pdf,
    joint_pdf,
    limiting_bge,
    log_likelihood,
    marginal_cdf,
    max_cdf,
    prob_y1_less_y2,
)
from .data import BivariateSample, InvalidDataError
from .ge import GeParams, ge_cdf, ge_log_pdf, ge_pdf, ge_quantile, geps_cdf
from .power_series import Kind, PowerSeriesFamily

