"""Monte-Carlo probes of the asymptotic held-out likelihood.

Verifies numerically that the per-entry expected validation log-likelihood,
as a function of a candidate channel, is concave with its maximum at the
true channel, and that with an unsaturated uniform quantizer of width Delta
it equals -||h_hat - h||^2 - log(pi e)/2 + log(Delta) up to O(Delta).

Sensing rows are drawn with i.i.d. N(0, 1) *real-form* entries (zero mean,
unit variance), the assumption under which the distortion constant holds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .frontend import uniform_step_factor
from .kernels import log_cdf_diff

SIGMA = np.sqrt(0.5)


@dataclass(frozen=True)
class CvProbeConfig:
    """Probe setup: true channel (real form), quantizer, and sample budget.

    `bits` selects a mid-rise quantizer whose step adapts to the observation
    std (as the acquisition front end does); `step` instead selects an
    unsaturated infinite-level quantizer of that width.  Exactly one of the
    two must be set.
    """

    h_real: tuple[float, ...] = (5.0, 5.0)
    bits: int | None = 1
    step: float | None = None
    n_samples: int = 100_000

    def __post_init__(self):
        if (self.bits is None) == (self.step is None):
            raise ValueError("set exactly one of bits / step")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    @property
    def h(self) -> np.ndarray:
        return np.asarray(self.h_real, dtype=float)


@dataclass(frozen=True)
class ProbeDraws:
    """One batch of sensing rows and their quantized observations (lo/up)."""

    rows: np.ndarray  # (n_samples, dim)
    lo: np.ndarray
    up: np.ndarray


def draw_probe(probe: CvProbeConfig, rng: np.random.Generator) -> ProbeDraws:
    """Sample rows, pass the true channel through noise and the quantizer.

    Reusing one batch across candidate channels gives paired (common random
    number) comparisons of the f_CV estimates.
    """
    h = probe.h
    rows = rng.standard_normal((probe.n_samples, h.size))
    x = rows @ h + SIGMA * rng.standard_normal(probe.n_samples)
    if probe.step is not None:
        lo = probe.step * np.floor(x / probe.step)
        up = lo + probe.step
    else:
        sigma_obs = np.sqrt(float(h @ h) + SIGMA**2)
        step = uniform_step_factor(probe.bits) * sigma_obs
        levels = 2**probe.bits
        idx = np.clip(np.floor(x / step + levels / 2).astype(int), 0, levels - 1)
        lo = np.where(idx == 0, -np.inf, step * (idx - levels / 2))
        up = np.where(idx == levels - 1, np.inf, step * (idx + 1 - levels / 2))
    return ProbeDraws(rows=rows, lo=lo, up=up)


def fcv_estimate(h_hat: np.ndarray, draws: ProbeDraws) -> tuple[float, float]:
    """Mean and standard error of the per-entry log-likelihood at h_hat."""
    mu = draws.rows @ np.asarray(h_hat, dtype=float)
    terms = log_cdf_diff(draws.lo, draws.up, mu, SIGMA)
    n = terms.size
    return float(terms.mean()), float(terms.std(ddof=1) / np.sqrt(n))


def empirical_fcv(
    h_hat, probe: CvProbeConfig, rng: np.random.Generator, draws: ProbeDraws | None = None
) -> tuple[float, float]:
    """Monte-Carlo estimate of the asymptotic per-entry CV log-likelihood."""
    if draws is None:
        draws = draw_probe(probe, rng)
    return fcv_estimate(np.asarray(h_hat, dtype=float), draws)


def fcv_lattice(
    probe: CvProbeConfig,
    rng: np.random.Generator,
    half_width: float = 2.0,
    points_per_axis: int = 21,
) -> list[dict]:
    """f_CV over a square lattice centred on the true 2-dim channel.

    Returns one row per lattice point: {h1, h2, fcv, stderr}; all points
    share one draw batch so comparisons across the lattice are paired.
    """
    h = probe.h
    if h.size != 2:
        raise ValueError("lattice probe expects a 2-dim real-form channel")
    draws = draw_probe(probe, rng)
    axis1 = h[0] + np.linspace(-half_width, half_width, points_per_axis)
    axis2 = h[1] + np.linspace(-half_width, half_width, points_per_axis)
    out = []
    for v1 in axis1:
        for v2 in axis2:
            mean, err = fcv_estimate(np.array([v1, v2]), draws)
            out.append({"h1": float(v1), "h2": float(v2), "fcv": mean, "stderr": err})
    return out


@dataclass(frozen=True)
class ConcavityReport:
    n_segments: int
    n_violations: int
    worst_margin: float  # most negative concavity slack in stderr units

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def concavity_probe(
    probe: CvProbeConfig,
    rng: np.random.Generator,
    n_segments: int = 100,
    half_width: float = 2.0,
    sign: float = 1.0,
) -> ConcavityReport:
    """Midpoint-concavity check of f_CV along random segments.

    Flags f((x+y)/2) < (f(x)+f(y))/2 - 3 * combined stderr.  `sign=-1`
    negates the scores, which must trip the detector (self-test hook).
    """
    draws = draw_probe(probe, rng)
    dim = probe.h.size
    violations = 0
    worst = np.inf
    for _ in range(n_segments):
        a = probe.h + rng.uniform(-half_width, half_width, dim)
        b = probe.h + rng.uniform(-half_width, half_width, dim)
        fa, ea = fcv_estimate(a, draws)
        fb, eb = fcv_estimate(b, draws)
        fm, em = fcv_estimate(0.5 * (a + b), draws)
        fa, fb, fm = sign * fa, sign * fb, sign * fm
        err = np.sqrt(em**2 + 0.25 * ea**2 + 0.25 * eb**2)
        slack = fm - 0.5 * (fa + fb)
        margin = np.inf if err == 0.0 else slack / err
        if slack < -3.0 * err:
            violations += 1
        worst = min(worst, margin)
    return ConcavityReport(n_segments=n_segments, n_violations=violations, worst_margin=float(worst))


def delta_scaling_check(
    h,
    h_hat,
    deltas,
    probe: CvProbeConfig,
    rng: np.random.Generator,
) -> list[dict]:
    """Residual of the infinite-resolution expansion for each interval width.

    residual(D) = f_CV(h_hat) + ||h_hat - h||^2 + log(pi e)/2 - log(D);
    the expansion claims residual = O(D).
    """
    h = np.asarray(h, dtype=float)
    h_hat = np.asarray(h_hat, dtype=float)
    out = []
    for step in deltas:
        draws = draw_probe(replace(probe, h_real=tuple(h), bits=None, step=float(step)), rng)
        mean, err = fcv_estimate(h_hat, draws)
        se = float(np.sum((h_hat - h) ** 2))
        residual = mean + se + 0.5 * np.log(np.pi * np.e) - np.log(step)
        out.append(
            {
                "delta": float(step),
                "fcv": mean,
                "stderr": err,
                "residual": float(residual),
                "residual_over_delta": float(residual / step),
            }
        )
    return out
