"""Discrete-time spatial-wideband channel synthesis.

A uniform linear array of M antennas receives from K single-antenna users.
Because the wavefront's travel time across the array is not negligible
against the sampling period, each antenna sees a different sample of the
pulse; the tap support widens beyond the delay spread and the steering
vector couples angle and delay through the per-antenna pulse samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import rc_pulse, rc_pulse_d012

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Physical and frame constants for one simulated uplink.

    M antennas, K users, R RF chains (R <= M), delay spread of D symbols.
    `paths[k]` / `powers[k]` give user k's path count and transmit power
    (the SNR is mean(powers) against unit-variance noise).  `bits` is the
    per-real-dimension ADC resolution, None meaning infinite resolution.
    Training runs `n_frames` frames of `frame_len` symbols with cyclic
    prefix/suffix guards; the RF combiner is fixed within a frame.
    """

    M: int
    K: int = 1
    R: int = 1
    D: int = 4
    paths: tuple[int, ...] = (1,)
    powers: tuple[float, ...] = (1.0,)
    bits: int | None = None
    f_c: float = 28e9
    bw: float = 600e6
    spacing: float | None = None  # antenna spacing; default half carrier wavelength
    light_speed: float = SPEED_OF_LIGHT
    beta: float = 0.35
    n_frames: int = 20
    frame_len: int = 16
    prefix_len: int | None = None  # default: tap-support upper edge
    suffix_len: int | None = None  # default: |tap-support lower edge|
    res_angle: int = 2
    res_delay: int = 2
    cv_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.R < 1 or self.D < 1:
            raise ValueError("M, K, R, D must be positive")
        if self.R > self.M:
            raise ValueError(f"R={self.R} RF chains exceed M={self.M} antennas")
        if len(self.paths) != self.K or len(self.powers) != self.K:
            raise ValueError("paths and powers must have one entry per user")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.bits is not None and self.bits < 1:
            raise ValueError("bits must be >= 1 (or None for unquantized)")
        if self.res_angle < 1 or self.res_delay < 1:
            raise ValueError("grid resolutions must be >= 1")

    @property
    def T_s(self) -> float:
        return 1.0 / self.bw

    @property
    def wavelength(self) -> float:
        return self.light_speed / self.f_c

    @property
    def d(self) -> float:
        return self.spacing if self.spacing is not None else 0.5 * self.wavelength

    @property
    def snr(self) -> float:
        return sum(self.powers) / self.K

    @property
    def support(self) -> "TapSupport":
        return tap_support(self)

    @property
    def n_taps(self) -> int:
        return self.support.size

    @property
    def delay_span(self) -> float:
        return (self.D - 1) * self.T_s

    @property
    def N(self) -> int:
        """Training instants over the estimation phase (guards excluded)."""
        return self.n_frames * self.frame_len

    @property
    def n_obs(self) -> int:
        return self.R * self.N

    def guard_lengths(self) -> tuple[int, int]:
        sup = self.support
        n_p = self.prefix_len if self.prefix_len is not None else sup.up
        n_s = self.suffix_len if self.suffix_len is not None else -sup.lo
        return n_p, n_s

    def with_snr(self, snr: float, profile_step_db: float = 0.0) -> "SystemConfig":
        """Config with per-user powers set from an SNR (see harness.power_profile)."""
        from .harness import power_profile

        return replace(self, powers=power_profile(self.K, snr, profile_step_db))


@dataclass(frozen=True)
class TapSupport:
    """Integer tap indices [lo, up] that carry energy after mainlobe truncation."""

    lo: int
    up: int

    @property
    def size(self) -> int:
        return self.up - self.lo + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.up + 1)


def tap_support(cfg: SystemConfig) -> TapSupport:
    """Tap window of the spatial-wideband channel.

    The array-crossing delay (M-1)*d/c measured in samples widens the
    narrowband window [0, D-1] by ceil((M-1)*d/(c*T_s)) on both sides.
    """
    guard = math.ceil((cfg.M - 1) * cfg.d / (cfg.light_speed * cfg.T_s))
    return TapSupport(lo=-guard, up=cfg.D - 1 + guard)


@dataclass(frozen=True)
class PathParams:
    """One propagation path: complex gain, arrival angle, delay, owning user (0-based)."""

    gain: complex
    aoa: float
    delay: float
    user: int = 0


def propagation_delay(tau: float, theta: float, antenna: int, cfg: SystemConfig) -> float:
    """Path delay seen at the given antenna (0-based), tau + m*d*sin(theta)/c."""
    return tau + antenna * cfg.d * math.sin(theta) / cfg.light_speed


def steering_vec(theta: float, tau: float, d: int, cfg: SystemConfig) -> np.ndarray:
    """Spatial-wideband array response of tap d for a unit-gain path.

    Entry m combines the carrier phase ramp exp(-j*2*pi*f_c*m*d*sin(theta)/c)
    with the per-antenna pulse sample p(d*T_s - tau - m*d*sin(theta)/c).
    """
    m = np.arange(cfg.M)
    offset = m * cfg.d * np.sin(theta) / cfg.light_speed
    phase = np.exp(-2j * np.pi * cfg.f_c * offset)
    return phase * rc_pulse(d * cfg.T_s - tau - offset, cfg.T_s, cfg.beta)


def narrowband_steering_vec(theta: float, tau: float, d: int, cfg: SystemConfig) -> np.ndarray:
    """Conventional response: common pulse sample p(d*T_s - tau), phase ramp only."""
    m = np.arange(cfg.M)
    offset = m * cfg.d * np.sin(theta) / cfg.light_speed
    phase = np.exp(-2j * np.pi * cfg.f_c * offset)
    return phase * rc_pulse(d * cfg.T_s - tau, cfg.T_s, cfg.beta)


def _geometry(theta, cfg):
    m = np.arange(cfg.M)
    offset = m * cfg.d / cfg.light_speed  # seconds per unit sin(theta)
    delta = offset * np.sin(theta)
    phase = np.exp(-2j * np.pi * cfg.f_c * delta)
    taps = cfg.support.indices
    return offset, delta, phase, taps


def steering_stack(theta: float, tau: float, cfg: SystemConfig) -> np.ndarray:
    """All-tap response stacked tap-major: entry [t*M + m] is tap (lo+t), antenna m."""
    _, delta, phase, taps = _geometry(theta, cfg)
    pulse = rc_pulse(taps[:, None] * cfg.T_s - tau - delta[None, :], cfg.T_s, cfg.beta)
    return (phase[None, :] * pulse).ravel()


def narrowband_stack(theta: float, tau: float, cfg: SystemConfig) -> np.ndarray:
    """Narrowband-model response over the full tap window.

    Applies the conventional approximation p(d*T_s - tau_m) ~ p(d*T_s - tau):
    the carrier phase ramp is kept, the per-antenna pulse delay dropped.  At
    boresight this coincides with the wideband response.  Used only by the
    model-mismatch experiment.
    """
    _, _, phase, taps = _geometry(theta, cfg)
    pulse = rc_pulse(taps * cfg.T_s - tau, cfg.T_s, cfg.beta)
    return (pulse[:, None] * phase[None, :]).ravel()


def steering_stack_derivs(theta: float, tau: float, cfg: SystemConfig):
    """Stacked response and its first/second partials w.r.t. (theta, tau).

    Returns (s, s_th, s_ta, s_thth, s_thta, s_tata), each shaped like
    steering_stack.  The pulse enters through t = d*T_s - tau - delta(theta)
    and the carrier phase through psi = 2*pi*f_c*delta(theta), so the chain
    rule mixes p, p', p'' with the delta derivatives.
    """
    offset, delta, phase, taps = _geometry(theta, cfg)
    d1 = offset * np.cos(theta)  # d delta / d theta
    d2 = -delta  # second derivative
    psi1 = 2.0 * np.pi * cfg.f_c * d1
    psi2 = 2.0 * np.pi * cfg.f_c * d2
    targ = taps[:, None] * cfg.T_s - tau - delta[None, :]
    p0, p1, p2 = rc_pulse_d012(targ, cfg.T_s, cfg.beta)
    e = phase[None, :]
    d1b, d2b, psi1b, psi2b = d1[None, :], d2[None, :], psi1[None, :], psi2[None, :]
    s = e * p0
    s_ta = -e * p1
    s_tata = e * p2
    s_th = e * (-1j * psi1b * p0 - d1b * p1)
    s_thta = e * (1j * psi1b * p1 + d1b * p2)
    s_thth = e * (-(psi1b * psi1b + 1j * psi2b) * p0 + (2j * psi1b * d1b - d2b) * p1 + d1b * d1b * p2)
    return tuple(x.ravel() for x in (s, s_th, s_ta, s_thth, s_thta, s_tata))


def narrowband_stack_derivs(theta: float, tau: float, cfg: SystemConfig):
    """Narrowband counterpart of steering_stack_derivs (no per-antenna pulse delay)."""
    offset, _, phase, taps = _geometry(theta, cfg)
    d1 = offset * np.cos(theta)
    d2 = -offset * np.sin(theta)
    psi1 = 2.0 * np.pi * cfg.f_c * d1
    psi2 = 2.0 * np.pi * cfg.f_c * d2
    p0, p1, p2 = rc_pulse_d012(taps * cfg.T_s - tau, cfg.T_s, cfg.beta)
    e = phase[None, :]
    pb0, pb1, pb2 = p0[:, None], p1[:, None], p2[:, None]
    s = e * pb0
    s_ta = -e * pb1
    s_tata = e * pb2
    s_th = -1j * psi1[None, :] * e * pb0
    s_thta = 1j * psi1[None, :] * e * pb1
    s_thth = -(psi1[None, :] ** 2 + 1j * psi2[None, :]) * e * pb0
    return tuple(x.ravel() for x in (s, s_th, s_ta, s_thth, s_thta, s_tata))


STACKS = {
    "wideband": (steering_stack, steering_stack_derivs),
    "narrowband": (narrowband_stack, narrowband_stack_derivs),
}


@dataclass(frozen=True)
class Channel:
    """Tap matrix H (M x |taps|*K, tap-major then user-major columns) plus truth.

    h = vec(H) stacks columns; the ground-truth paths ride along for
    evaluation only and are never read by the estimator.
    """

    taps: np.ndarray
    support: TapSupport
    paths: tuple[PathParams, ...] = field(default=(), repr=False)

    @property
    def M(self) -> int:
        return self.taps.shape[0]

    @property
    def K(self) -> int:
        return self.taps.shape[1] // self.support.size

    @property
    def h(self) -> np.ndarray:
        return self.taps.ravel(order="F")

    def to_json(self) -> str:
        def c(z):
            return [float(np.real(z)), float(np.imag(z))]

        doc = {
            "support": [self.support.lo, self.support.up],
            "shape": list(self.taps.shape),
            "h": [c(z) for z in self.h],
            "paths": [
                {"gain": c(p.gain), "aoa": p.aoa, "delay": p.delay, "user": p.user} for p in self.paths
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Channel":
        doc = json.loads(text)
        h = np.array([re + 1j * im for re, im in doc["h"]])
        m, cols = doc["shape"]
        taps = h.reshape((m, cols), order="F")
        paths = tuple(
            PathParams(gain=p["gain"][0] + 1j * p["gain"][1], aoa=p["aoa"], delay=p["delay"], user=p["user"])
            for p in doc["paths"]
        )
        return cls(taps=taps, support=TapSupport(*doc["support"]), paths=paths)


def sample_paths(cfg: SystemConfig, rng: np.random.Generator) -> list[PathParams]:
    """Draw i.i.d. path parameters: gain CN(0,1), AoA U[-pi/2, pi/2], delay U[0, (D-1)T_s]."""
    out: list[PathParams] = []
    for user in range(cfg.K):
        n = cfg.paths[user]
        if n == 0:
            continue
        re = rng.standard_normal(n)
        im = rng.standard_normal(n)
        aoa = rng.uniform(-np.pi / 2, np.pi / 2, n)
        delay = rng.uniform(0.0, cfg.delay_span, n)
        out.extend(
            PathParams(gain=(re[i] + 1j * im[i]) / np.sqrt(2.0), aoa=aoa[i], delay=delay[i], user=user)
            for i in range(n)
        )
    return out


def build_channel(paths, cfg: SystemConfig, model: str = "wideband") -> Channel:
    """Superpose per-path responses into the tap matrix (additive in paths)."""
    sup = cfg.support
    H = np.zeros((cfg.M, sup.size * cfg.K), dtype=complex)
    stack_fn = STACKS[model][0]
    for p in paths:
        if not -np.pi / 2 <= p.aoa <= np.pi / 2:
            raise ValueError(f"AoA {p.aoa} outside [-pi/2, pi/2]")
        if not 0.0 <= p.delay <= cfg.delay_span:
            raise ValueError(f"delay {p.delay} outside [0, {cfg.delay_span}]")
        if not 0 <= p.user < cfg.K:
            raise ValueError(f"user {p.user} outside range({cfg.K})")
        stack = stack_fn(p.aoa, p.delay, cfg).reshape(sup.size, cfg.M)
        H[:, p.user :: cfg.K] += p.gain * stack.T
    return Channel(taps=H, support=sup, paths=tuple(paths))


def path_vector(theta: float, tau: float, user: int, cfg: SystemConfig, model: str = "wideband") -> np.ndarray:
    """vec(H)-layout column of a unit-gain path (the F(P) column for one path)."""
    stack = STACKS[model][0](theta, tau, cfg).reshape(cfg.n_taps, cfg.M)
    h = np.zeros((cfg.n_taps, cfg.K, cfg.M), dtype=complex)
    h[:, user, :] = stack
    return h.ravel()
