"""Shared numeric helpers: stable summation, normal distribution, Wilson intervals."""

from __future__ import annotations

import math
import sys

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

LOG_FLOAT_MAX = math.log(sys.float_info.max)

#: 97.5% standard-normal quantile, used by 95% confidence intervals.
Z_95 = 1.959963984540054


def stable_sum(x) -> float:
    """Sum in the widest native float (80-bit extended on x86).

    Fourth-power sums span many orders of magnitude; plain float64
    accumulation can lose the 1e-12-level residuals we assert on.
    """
    return float(np.sum(np.asarray(x), dtype=np.longdouble))


def norm_cdf(x):
    """Standard normal CDF (Cephes ``ndtr``; abs error < 1e-13, well inside
    the 1e-10 budget a cross-language port must match to 1e-8)."""
    return ndtr(x)


def norm_quantile(p):
    """Inverse standard normal CDF (Cephes ``ndtri``)."""
    return ndtri(p)


def log_sum_exp(a):
    return float(logsumexp(np.asarray(a, dtype=float)))


def safe_exp(log_value: float, what: str) -> float:
    """exp() that raises instead of silently returning inf."""
    if log_value > LOG_FLOAT_MAX:
        raise OverflowError(f"{what} overflows a double (log value {log_value:.3g})")
    return math.exp(log_value)


def clamped_log_log(x: float) -> float:
    """ln(max(ln(x), 1)): the inner log is clamped below at 1 so that small
    arguments yield 0 instead of NaN.  Affects finitely many indices only."""
    return math.log(max(math.log(x), 1.0))


def wilson_halfwidth(count: int, n: int, z: float = Z_95) -> float:
    """Half-width of the Wilson score interval for ``count`` successes in ``n``."""
    if n <= 0:
        raise ValueError("Wilson interval needs n >= 1")
    p = count / n
    denom = 1.0 + z * z / n
    return z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom


def wilson_center(count: int, n: int, z: float = Z_95) -> float:
    p = count / n
    return (p + z * z / (2.0 * n)) / (1.0 + z * z / n)
