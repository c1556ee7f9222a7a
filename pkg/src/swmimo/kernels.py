"""Censored-Gaussian scalar kernels with a compiled fast path.

These are the per-entry primitives the estimator hammers in its inner loops:
the log interval probability of a Gaussian, log(Phi(b) - Phi(a)), and the two
hazard-type weights

    w1 = (phi(b) - phi(a)) / (Phi(b) - Phi(a))
    w2 = (a*phi(a) - b*phi(b)) / (Phi(b) - Phi(a))

with a = (lo - mu)/sigma, b = (up - mu)/sigma.  They satisfy

    d/dmu   log P = -w1 / sigma
    d2/dmu2 log P = (w2 - w1**2) / sigma**2   (always <= 0).

All functions accept +-inf thresholds and stay finite far into the tails by
working in the log domain off complementary CDFs.  A Cython twin
(``swmimo._fast``) is selected at import when available; set SWMIMO_PURE=1 to
force the NumPy/SciPy reference backend.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.special import log_ndtr as _sp_log_ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG2 = np.log(2.0)


def _log1mexp(d):
    """log(1 - exp(d)) for d <= 0, accurate at both ends."""
    d = np.asarray(d, dtype=float)
    out = np.full(d.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = (d > -_LOG2) & (d < 0.0)
        out[hi] = np.log(-np.expm1(d[hi]))
        lo = d <= -_LOG2
        out[lo] = np.log1p(-np.exp(d[lo]))
    return out


def _standardize(lo, up, mu, sigma):
    lo = np.asarray(lo, dtype=float)
    up = np.asarray(up, dtype=float)
    with np.errstate(invalid="ignore"):
        a = (lo - mu) / sigma
        b = (up - mu) / sigma
    # (+-inf - mu) is fine, but inf - inf from broadcasting nan-guards:
    a = np.where(np.isneginf(lo), -np.inf, a)
    b = np.where(np.isposinf(up), np.inf, b)
    return np.broadcast_arrays(a, b)


def _log_cdf_diff_np(lo, up, mu=0.0, sigma=1.0):
    a, b = _standardize(lo, up, mu, sigma)
    # Work on whichever side keeps the CDF arguments negative (log_ndtr is
    # accurate there); Phi(b)-Phi(a) = Phi(-a)-Phi(-b).
    both_inf = np.isneginf(a) & np.isposinf(b)
    with np.errstate(invalid="ignore"):
        flip = np.where(np.isinf(a) | np.isinf(b), np.isposinf(b), a + b > 0.0)
    a_ = np.where(flip, -b, a)
    b_ = np.where(flip, -a, b)
    la = _sp_log_ndtr(a_)
    lb = _sp_log_ndtr(b_)
    out = lb + _log1mexp(la - lb)
    return np.where(both_inf, 0.0, out)


def _censored_moments_np(lo, up, mu=0.0, sigma=1.0):
    a, b = _standardize(lo, up, mu, sigma)
    logp = _log_cdf_diff_np(lo, up, mu, sigma)

    with np.errstate(invalid="ignore", over="ignore"):
        la = np.where(np.isinf(a), -np.inf, -0.5 * a * a - _LOG_SQRT_2PI)
        lb = np.where(np.isinf(b), -np.inf, -0.5 * b * b - _LOG_SQRT_2PI)
        w1 = np.exp(lb - logp) - np.exp(la - logp)
        # a*phi(a): log-magnitude log|a| + la, sign(a); zero when a in {0, +-inf}
        ta = np.where(
            np.isinf(a) | (a == 0.0), 0.0, np.sign(a) * np.exp(np.log(np.abs(np.where(a == 0.0, 1.0, a))) + la - logp)
        )
        tb = np.where(
            np.isinf(b) | (b == 0.0), 0.0, np.sign(b) * np.exp(np.log(np.abs(np.where(b == 0.0, 1.0, b))) + lb - logp)
        )
        w2 = ta - tb

    # Interval probability underflowed even in log domain: fall back to the
    # point-interval limits w1 -> -t, w2 -> t**2 - 1 at the interval centre.
    dead = np.isneginf(logp)
    if np.any(dead):
        mid = np.where(np.isinf(a), b, np.where(np.isinf(b), a, 0.5 * (a + b)))
        w1 = np.where(dead, -mid, w1)
        w2 = np.where(dead, mid * mid - 1.0, w2)
    return logp, w1, w2


_IMPL = None
BACKEND = "numpy"

if not os.environ.get("SWMIMO_PURE"):
    try:
        from . import _fast as _IMPL  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _IMPL = None


def log_cdf_diff(lo, up, mu=0.0, sigma=1.0):
    """log(Phi((up-mu)/sigma) - Phi((lo-mu)/sigma)), tail-safe, elementwise."""
    if _IMPL is not None:
        lo, up, mu = np.broadcast_arrays(
            np.asarray(lo, dtype=float), np.asarray(up, dtype=float), np.asarray(mu, dtype=float)
        )
        return _IMPL.log_cdf_diff(np.ascontiguousarray(lo), np.ascontiguousarray(up), np.ascontiguousarray(mu), float(sigma))
    return _log_cdf_diff_np(lo, up, mu, sigma)


def censored_moments(lo, up, mu=0.0, sigma=1.0):
    """Return (log P, w1, w2) for the interval [lo, up) under N(mu, sigma^2)."""
    if _IMPL is not None:
        lo, up, mu = np.broadcast_arrays(
            np.asarray(lo, dtype=float), np.asarray(up, dtype=float), np.asarray(mu, dtype=float)
        )
        return _IMPL.censored_moments(
            np.ascontiguousarray(lo), np.ascontiguousarray(up), np.ascontiguousarray(mu), float(sigma)
        )
    return _censored_moments_np(lo, up, mu, sigma)
