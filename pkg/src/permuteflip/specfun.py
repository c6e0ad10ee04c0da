"""Special-function numerics behind score calibration and closed-form expectations.

Thin, validated wrappers around scipy.special: the gamma CDF/quantile pair that
calibrates detection thresholds, generalized harmonic numbers via digamma, and
Shannon entropy. A log-space survival function is provided for scores so extreme
that the p-value underflows a double.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sp

__all__ = [
    "log_gamma",
    "reg_gamma_p",
    "reg_gamma_q",
    "log_reg_gamma_q",
    "gamma_inv_cdf",
    "harmonic",
    "shannon_entropy",
    "validate_distribution",
]

#: absolute slack allowed when checking that a probability vector sums to one
DIST_SUM_TOL = 1e-8


def log_gamma(x):
    """Natural log of the gamma function, for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("log_gamma requires x > 0")
    out = sp.gammaln(x)
    return float(out) if out.ndim == 0 else out


def reg_gamma_p(shape, x):
    """Lower regularized incomplete gamma P(shape, x) = CDF of Gamma(shape, 1)."""
    shape = np.asarray(shape, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(shape <= 0):
        raise ValueError("reg_gamma_p requires shape > 0")
    if np.any(x < 0):
        raise ValueError("reg_gamma_p requires x >= 0")
    out = sp.gammainc(shape, x)
    return float(out) if out.ndim == 0 else out


def reg_gamma_q(shape, x):
    """Upper regularized incomplete gamma Q(shape, x) = 1 - P(shape, x)."""
    shape = np.asarray(shape, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(shape <= 0):
        raise ValueError("reg_gamma_q requires shape > 0")
    if np.any(x < 0):
        raise ValueError("reg_gamma_q requires x >= 0")
    out = sp.gammaincc(shape, x)
    return float(out) if out.ndim == 0 else out


def _log_gamma_q_tail(shape: float, x: float) -> float:
    # Lentz continued fraction for Q(shape, x), evaluated in log space.
    # Only valid (and only used) in the deep right tail x > shape + 1.
    tiny = 1e-300
    b = x + 1.0 - shape
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - shape)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return -x + shape * math.log(x) - math.lgamma(shape) + math.log(h)


def log_reg_gamma_q(shape, x):
    """ln Q(shape, x), usable even where Q underflows to zero as a double."""
    shape = float(shape)
    x = float(x)
    if shape <= 0:
        raise ValueError("log_reg_gamma_q requires shape > 0")
    if x < 0:
        raise ValueError("log_reg_gamma_q requires x >= 0")
    q = sp.gammaincc(shape, x)
    if q > 1e-290:
        return math.log(q)
    return _log_gamma_q_tail(shape, x)


def gamma_inv_cdf(shape, q):
    """Quantile of Gamma(shape, 1): the x with reg_gamma_p(shape, x) = q."""
    shape = np.asarray(shape, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(shape <= 0):
        raise ValueError("gamma_inv_cdf requires shape > 0")
    if np.any(q < 0) or np.any(q >= 1):
        raise ValueError("gamma_inv_cdf requires 0 <= q < 1")
    out = sp.gammaincinv(shape, q)
    return float(out) if out.ndim == 0 else out


def harmonic(z):
    """Generalized harmonic number H(z) = digamma(z + 1) + Euler-Mascheroni.

    Matches the partial sum 1 + 1/2 + ... + 1/k at integer k and interpolates
    in between; H(0) = 0.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("harmonic requires z >= 0")
    out = sp.digamma(z + 1.0) + np.euler_gamma
    return float(out) if out.ndim == 0 else out


def validate_distribution(p, tol: float = DIST_SUM_TOL) -> np.ndarray:
    """Check that p is a probability vector; returns it as a float array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a nonempty 1-d probability vector")
    if np.any(~np.isfinite(p)) or np.any(p < -1e-12):
        raise ValueError("probabilities must be finite and nonnegative")
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"probabilities sum to {total!r}, not 1")
    return p


def shannon_entropy(p) -> float:
    """Shannon entropy in nats, with the 0 * ln 0 = 0 convention."""
    p = validate_distribution(p)
    mask = p > 0
    return float(-np.sum(p[mask] * np.log(p[mask])))
