"""Goodness-of-fit statistics against the standard normal.

Kolmogorov-Smirnov comes from scipy; the Anderson-Darling statistic is
computed directly and its p-value through the Marsaglia & Marsaglia
approximation of the asymptotic (all-parameters-known) distribution, good to
a few 1e-5 in CDF for the sample sizes used here.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats
from scipy.special import ndtr


def studentize(x: np.ndarray) -> np.ndarray:
    """Center and scale by sample mean / sample std (ddof=1)."""
    x = np.asarray(x, dtype=np.float64)
    s = x.std(ddof=1)
    if s == 0.0:
        raise ValueError("cannot studentize a constant sample")
    return (x - x.mean()) / s


def ks_normal(x: np.ndarray) -> tuple[float, float]:
    """KS statistic and p-value against N(0,1) (simple null)."""
    res = stats.kstest(np.asarray(x, dtype=np.float64), "norm")
    return float(res.statistic), float(res.pvalue)


def ad_statistic_normal(x: np.ndarray) -> float:
    """Anderson-Darling A^2 against a fully specified N(0,1)."""
    z = np.sort(ndtr(np.asarray(x, dtype=np.float64)))
    n = len(z)
    if n < 8:
        raise ValueError("need at least 8 samples")
    eps = 1e-300
    z = np.clip(z, eps, 1.0 - 1e-16)
    i = np.arange(1, n + 1, dtype=np.float64)
    s = np.sum((2.0 * i - 1.0) * (np.log(z) + np.log1p(-z[::-1])))
    return float(-n - s / n)


def _ad_cdf_asymptotic(z: float) -> float:
    """P(A^2_inf < z), Marsaglia & Marsaglia polynomial approximation."""
    if z <= 0.0:
        return 0.0
    if z < 2.0:
        poly = 2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (
            0.011672 - 0.00168691 * z) * z) * z) * z) * z
        return float(z ** -0.5 * math.exp(-1.2337141 / z) * poly)
    poly = 1.0776 - (2.30695 - (0.43424 - (0.082433 - (
        0.008056 - 0.0003146 * z) * z) * z) * z) * z
    return float(math.exp(-math.exp(poly)))


def ad_normal(x: np.ndarray) -> tuple[float, float]:
    """Anderson-Darling statistic and asymptotic p-value against N(0,1)."""
    a2 = ad_statistic_normal(x)
    return a2, 1.0 - _ad_cdf_asymptotic(a2)
