"""Shared numerical building blocks.

Real-form embeddings of complex arrays, the raised-cosine pulse with its
first two derivatives (singular points evaluated by series), tail-safe
censored-Gaussian log-probabilities, and Zadoff-Chu sequences.
"""

from __future__ import annotations

import math

import numpy as np

from .kernels import censored_moments, log_cdf_diff  # noqa: F401  (re-exported)

# -----------------------------------------------------------------------------
# Real forms
# -----------------------------------------------------------------------------


def real_form(z: np.ndarray) -> np.ndarray:
    """Real embedding of a complex vector or matrix.

    A length-n vector x maps to [Re(x); Im(x)] (length 2n).  An (m, n) matrix
    X maps to the (2m, 2n) block matrix [[Re X, -Im X], [Im X, Re X]], so that
    ``real_form(X) @ real_form(z) == real_form(X @ z)``.  A single column
    passed as an (m, 1) array uses the matrix rule.
    """
    z = np.asarray(z)
    if z.ndim == 1:
        return np.concatenate([z.real, z.imag]).astype(float)
    if z.ndim == 2:
        return np.block([[z.real, -z.imag], [z.imag, z.real]]).astype(float)
    raise ValueError("real_form expects a 1-D or 2-D array")


def complex_from_real(v: np.ndarray) -> np.ndarray:
    """Inverse of the vector rule: [Re(x); Im(x)] -> x."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0] // 2
    return v[:n] + 1j * v[n:]


# -----------------------------------------------------------------------------
# Raised-cosine pulse
# -----------------------------------------------------------------------------

_SINC_SMALL = 1e-2  # |pi*u| below which the sinc series takes over
_Q_SMALL = 1e-4  # |u - 1/(2*beta)| below which the singular-point series takes over


def _sinc012(u):
    """sinc(u) = sin(pi u)/(pi u) and its first two derivatives w.r.t. u."""
    x = np.pi * np.asarray(u, dtype=float)
    x2 = x * x
    small = np.abs(x) < _SINC_SMALL
    xs = np.where(small, 1.0, x)
    s, c = np.sin(xs), np.cos(xs)
    v = np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0, s / xs)
    d1 = np.where(small, x * (-1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0), (xs * c - s) / (xs * xs))
    d2 = np.where(
        small,
        -1.0 / 3.0 + x2 / 10.0 - x2 * x2 / 168.0,
        (2.0 * s - x2 * s - 2.0 * xs * c) / (xs * xs * xs),
    )
    return v, np.pi * d1, np.pi * np.pi * d2


def _q012(u, beta):
    """cos(pi*beta*u) / (1 - 4 beta^2 u^2) and derivatives; even in u.

    Near the removable singularity |u| = 1/(2 beta) the function equals
    (pi/4) * sinc(beta*v) / (1 + beta*v) with v = |u| - 1/(2 beta), which the
    series branch expands to fourth order.
    """
    u = np.asarray(u, dtype=float)
    ua = np.abs(u)
    us = 1.0 / (2.0 * beta)
    v = ua - us
    near = np.abs(v) < _Q_SMALL

    pb = np.pi * beta
    ua_safe = np.where(near, 0.0, ua)
    cosv = np.cos(pb * ua_safe)
    sinv = np.sin(pb * ua_safe)
    dn = np.where(near, 1.0, 1.0 - 4.0 * beta * beta * ua_safe * ua_safe)
    dn1 = -8.0 * beta * beta * ua_safe
    dn2 = -8.0 * beta * beta
    q = cosv / dn
    q1 = -pb * sinv / dn - cosv * dn1 / (dn * dn)
    q2 = (
        -pb * pb * cosv / dn
        + 2.0 * pb * sinv * dn1 / (dn * dn)
        + cosv * (2.0 * dn1 * dn1 / (dn * dn * dn) - dn2 / (dn * dn))
    )

    # series branch in w = beta * v
    a2 = np.pi * np.pi / 6.0
    a4 = a2 * a2 * 0.6 / 3.0  # pi^4/120
    c2 = 1.0 - a2
    c4 = 1.0 - a2 + a4
    w = beta * v
    f0 = 1.0 - w + c2 * w * w - c2 * w**3 + c4 * w**4 - c4 * w**5
    f1 = -1.0 + 2.0 * c2 * w - 3.0 * c2 * w * w + 4.0 * c4 * w**3 - 5.0 * c4 * w**4
    f2 = 2.0 * c2 - 6.0 * c2 * w + 12.0 * c4 * w * w - 20.0 * c4 * w**3
    qs = 0.25 * np.pi * f0
    qs1 = 0.25 * np.pi * beta * f1
    qs2 = 0.25 * np.pi * beta * beta * f2

    q = np.where(near, qs, q)
    q1 = np.where(near, qs1, q1)
    q2 = np.where(near, qs2, q2)
    sgn = np.where(u < 0.0, -1.0, 1.0)
    return q, sgn * q1, q2


def rc_pulse(t, T_s: float, beta: float):
    """Raised-cosine pulse p(t) = sinc(t/T_s) cos(pi b t/T_s) / (1-(2 b t/T_s)^2).

    Total on all of R; both removable singularities (t = 0 from the sinc and
    |t| = T_s/(2 beta)) are evaluated by series.  sinc(x) = sin(pi x)/(pi x).
    """
    if T_s <= 0:
        raise ValueError("T_s must be positive")
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    u = np.asarray(t, dtype=float) / T_s
    s, _, _ = _sinc012(u)
    q, _, _ = _q012(u, beta)
    out = s * q
    return out if out.ndim else float(out)


def rc_pulse_d012(t, T_s: float, beta: float):
    """(p, p', p'') of the raised-cosine pulse at t, derivatives w.r.t. t."""
    if T_s <= 0:
        raise ValueError("T_s must be positive")
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    u = np.asarray(t, dtype=float) / T_s
    s, s1, s2 = _sinc012(u)
    q, q1, q2 = _q012(u, beta)
    p = s * q
    p1 = (s1 * q + s * q1) / T_s
    p2 = (s2 * q + 2.0 * s1 * q1 + s * q2) / (T_s * T_s)
    return p, p1, p2


# -----------------------------------------------------------------------------
# Zadoff-Chu sequences
# -----------------------------------------------------------------------------


def zc_sequence(n: int, root: int = 1, shift: int = 0) -> np.ndarray:
    """Unit-modulus Zadoff-Chu sequence of length n, circularly shifted.

    Requires gcd(root, n) = 1, which makes all n circular shifts mutually
    orthogonal (perfect periodic autocorrelation).
    """
    if n < 1:
        raise ValueError("sequence length must be positive")
    if math.gcd(root, n) != 1:
        raise ValueError(f"root {root} is not coprime with length {n}; shifts would not be orthogonal")
    if not 0 <= shift < n:
        raise ValueError("shift must satisfy 0 <= shift < n")
    k = np.arange(n)
    if n % 2 == 0:
        phase = root * k * k / n
    else:
        phase = root * k * (k + 1) / n
    return np.roll(np.exp(-1j * np.pi * phase), shift)
