"""Training acquisition front end.

Frame/guard scheduling with Zadoff-Chu training, per-frame RF combiners,
the stacked sensing operator, AWGN, B-bit mid-rise quantization, and the
estimation/validation split of the observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import Channel, SystemConfig, TapSupport
from .numerics import real_form, zc_sequence

# -----------------------------------------------------------------------------
# Training schedule
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingSchedule:
    """Per-user training symbols for one frame plus guard bookkeeping.

    `body[k]` is user k's frame_len symbol block (repeated every frame,
    power-scaled to E|s|^2 = powers[k]); guards are cyclic copies of the
    body.  `S[i, k + K*t]` is user k's symbol at lag (support.lo + t)
    relative to body position i, so the sensing rows become S kron W^H.
    """

    body: np.ndarray
    S: np.ndarray
    support: TapSupport
    prefix_len: int
    suffix_len: int

    @property
    def K(self) -> int:
        return self.body.shape[0]

    @property
    def frame_len(self) -> int:
        return self.body.shape[1]

    def symbol(self, user: int, i) -> np.ndarray:
        """Cyclically extended symbol stream, valid on [-prefix_len, frame_len+suffix_len)."""
        return self.body[user, np.asarray(i) % self.frame_len]


def design_training(cfg: SystemConfig, root: int = 1) -> TrainingSchedule:
    """Assign user k the (|taps|*k)-shifted ZC sequence of length frame_len.

    Lagged copies of the same base sequence are again circular shifts, so the
    per-user shift spacing of |taps| keeps all frame-matrix columns distinct
    shifts, hence orthogonal.  Rejects frame/guard lengths that would allow
    inter-user or inter-frame interference.
    """
    sup = cfg.support
    n_taps = sup.size
    if cfg.frame_len < n_taps * cfg.K:
        raise ValueError(
            f"frame_len={cfg.frame_len} < |taps|*K={n_taps * cfg.K}: orthogonal training impossible"
        )
    n_p, n_s = cfg.guard_lengths()
    if n_p < sup.up:
        raise ValueError(f"prefix_len={n_p} < {sup.up}: inter-frame interference")
    if n_s < -sup.lo:
        raise ValueError(f"suffix_len={n_s} < {-sup.lo}: inter-frame interference")

    base = zc_sequence(cfg.frame_len, root=root, shift=0)
    body = np.stack([np.sqrt(cfg.powers[k]) * np.roll(base, n_taps * k) for k in range(cfg.K)])

    i = np.arange(cfg.frame_len)
    S = np.empty((cfg.frame_len, n_taps * cfg.K), dtype=complex)
    for t, lag in enumerate(sup.indices):
        for k in range(cfg.K):
            S[:, k + cfg.K * t] = body[k, (i - lag) % cfg.frame_len]
    return TrainingSchedule(body=body, S=S, support=sup, prefix_len=n_p, suffix_len=n_s)


# -----------------------------------------------------------------------------
# RF combiners
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class CombinerSchedule:
    """Per-frame M x R combiners with orthonormal columns (W^H W = I_R)."""

    W: np.ndarray  # (n_frames, M, R)

    @property
    def n_frames(self) -> int:
        return self.W.shape[0]


def build_combiners(cfg: SystemConfig, rng: np.random.Generator) -> CombinerSchedule:
    """ZC-column combiners; the shift subset rotates deterministically per frame.

    Frame t uses columns perm[(t*R + i) mod M], i < R, for a seed-derived
    permutation perm, so consecutive frames probe fresh shift subsets and all
    M shifts recur every ceil(M/R) frames.
    """
    base = zc_sequence(cfg.M, root=1, shift=0) / np.sqrt(cfg.M)
    cols = np.stack([np.roll(base, s) for s in range(cfg.M)], axis=1)
    perm = rng.permutation(cfg.M)
    W = np.empty((cfg.n_frames, cfg.M, cfg.R), dtype=complex)
    for t in range(cfg.n_frames):
        shifts = perm[(t * cfg.R + np.arange(cfg.R)) % cfg.M]
        W[t] = cols[:, shifts]
    return CombinerSchedule(W=W)


# -----------------------------------------------------------------------------
# Sensing operator
# -----------------------------------------------------------------------------


@dataclass
class SensingOperator:
    """Stacked map from vec(H) to the unquantized observations.

    Row block of frame t is S kron W[t]^H; shape (R*N, M*|taps|*K).  The
    per-user column block (user_block) feeds atom evaluation in the
    estimator.
    """

    schedule: TrainingSchedule
    combiners: CombinerSchedule
    cfg: SystemConfig

    def __post_init__(self):
        self._dense: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.cfg.n_obs, self.cfg.M * self.cfg.n_taps * self.cfg.K)

    def matrix(self) -> np.ndarray:
        if self._dense is None:
            blocks = [np.kron(self.schedule.S, self.combiners.W[t].conj().T) for t in range(self.cfg.n_frames)]
            self._dense = np.vstack(blocks)
        return self._dense

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.matrix() @ h

    def user_block(self, user: int) -> np.ndarray:
        """Columns acting on user `user`'s tap stack, as (R*N, M*|taps|) contiguous."""
        A = self.matrix()
        M, K, n_taps = self.cfg.M, self.cfg.K, self.cfg.n_taps
        idx = ((np.arange(n_taps) * K + user)[:, None] * M + np.arange(M)[None, :]).ravel()
        return np.ascontiguousarray(A[:, idx])

    def save(self, path) -> None:
        np.savez(
            path,
            W=self.combiners.W,
            body=self.schedule.body,
            S=self.schedule.S,
            support=[self.schedule.support.lo, self.schedule.support.up],
            guards=[self.schedule.prefix_len, self.schedule.suffix_len],
        )

    @classmethod
    def load(cls, path, cfg: SystemConfig) -> "SensingOperator":
        data = np.load(path)
        sched = TrainingSchedule(
            body=data["body"],
            S=data["S"],
            support=TapSupport(int(data["support"][0]), int(data["support"][1])),
            prefix_len=int(data["guards"][0]),
            suffix_len=int(data["guards"][1]),
        )
        return cls(schedule=sched, combiners=CombinerSchedule(W=data["W"]), cfg=cfg)


def assemble_sensing(schedule: TrainingSchedule, combiners: CombinerSchedule, cfg: SystemConfig) -> SensingOperator:
    if combiners.n_frames != cfg.n_frames or schedule.frame_len != cfg.frame_len:
        raise ValueError("schedule/combiners do not match the config's frame geometry")
    return SensingOperator(schedule=schedule, combiners=combiners, cfg=cfg)


def simulate_rx(
    op: SensingOperator, h: np.ndarray, rng: np.random.Generator | None = None, noiseless: bool = False
) -> np.ndarray:
    """y = A h + v with v ~ CN(0, I); the unit-norm combiner columns keep the
    post-combining noise white."""
    y = op.apply(h)
    if noiseless:
        return y
    if rng is None:
        raise ValueError("rng required unless noiseless")
    n = y.shape[0]
    return y + (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def simulate_frames(
    channel: Channel,
    schedule: TrainingSchedule,
    combiners: CombinerSchedule,
    cfg: SystemConfig,
    bodies: np.ndarray | None = None,
) -> np.ndarray:
    """Time-domain reference: run the actual guarded multi-frame streams
    through the tap matrix and combine.

    `bodies` (n_frames, K, frame_len) overrides the schedule's repeated body,
    letting tests perturb one frame and check that others are untouched.
    Convolution runs over the full concatenated transmission, so guard-length
    violations would genuinely leak across frames here.
    """
    sup = channel.support
    n_p, n_s = schedule.prefix_len, schedule.suffix_len
    if bodies is None:
        bodies = np.broadcast_to(schedule.body, (cfg.n_frames, cfg.K, cfg.frame_len))
    seg = n_p + cfg.frame_len + n_s
    total = seg * cfg.n_frames
    stream = np.zeros((cfg.K, total + 2 * sup.size), dtype=complex)
    pad = sup.size  # zero margin so n - d never indexes out of range
    for t in range(cfg.n_frames):
        block = np.concatenate(
            [bodies[t, :, cfg.frame_len - n_p :], bodies[t], bodies[t, :, :n_s]], axis=1
        )
        stream[:, pad + t * seg : pad + (t + 1) * seg] = block

    H = channel.taps
    y = np.empty(cfg.n_obs, dtype=complex)
    taps = sup.indices
    for t in range(cfg.n_frames):
        Wh = combiners.W[t].conj().T
        for i in range(cfg.frame_len):
            n = pad + t * seg + n_p + i
            r = np.zeros(cfg.M, dtype=complex)
            for ti, d in enumerate(taps):
                r += H[:, ti * cfg.K : (ti + 1) * cfg.K] @ stream[:, n - d]
            y[(t * cfg.frame_len + i) * cfg.R : (t * cfg.frame_len + i + 1) * cfg.R] = Wh @ r
    return y


# -----------------------------------------------------------------------------
# Quantization
# -----------------------------------------------------------------------------

# Minimum-MSE uniform mid-rise step for a standard normal input, per ADC bits.
_MSE_OPT_STEP = {1: 1.5956, 2: 0.9957, 3: 0.5860, 4: 0.3352}


@lru_cache(maxsize=None)
def uniform_step_factor(bits: int) -> float:
    """MSE-optimal mid-rise step for N(0,1) input; tabulated for B <= 4."""
    if bits in _MSE_OPT_STEP:
        return _MSE_OPT_STEP[bits]
    res = minimize_scalar(lambda d: normal_quantizer_mse(d, bits), bounds=(1e-3, 4.0), method="bounded")
    return float(res.x)


def normal_quantizer_mse(step: float, bits: int) -> float:
    """E(X - Q(X))^2 for X ~ N(0,1) through a mid-rise uniform quantizer."""
    from scipy.integrate import quad

    levels = 2**bits
    edges = np.concatenate([[-np.inf], step * (np.arange(1, levels) - levels / 2), [np.inf]])
    points = step * (np.arange(levels) - (levels - 1) / 2)
    phi = lambda x: np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
    total = 0.0
    for i in range(levels):
        lo = edges[i] if np.isfinite(edges[i]) else -12.0
        hi = edges[i + 1] if np.isfinite(edges[i + 1]) else 12.0
        total += quad(lambda x, q=points[i]: (x - q) ** 2 * phi(x), lo, hi)[0]
    return total


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform mid-rise quantizer per real dimension (bits=None: pass-through).

    2^bits points symmetric about zero; finite inner thresholds at integer
    multiples of `step`, outer thresholds +-inf; finite-interval points are
    midpoints, outer points lie step/2 beyond the last threshold.
    """

    bits: int | None
    step: float = 0.0

    @property
    def unquantized(self) -> bool:
        return self.bits is None

    @property
    def levels(self) -> int:
        return 0 if self.bits is None else 2**self.bits

    @property
    def points(self) -> np.ndarray:
        return self.step * (np.arange(self.levels) - (self.levels - 1) / 2)

    @property
    def inner_edges(self) -> np.ndarray:
        return self.step * (np.arange(1, self.levels) - self.levels / 2)

    def index(self, x: np.ndarray) -> np.ndarray:
        raw = np.floor(np.asarray(x, dtype=float) / self.step + self.levels / 2).astype(int)
        return np.clip(raw, 0, self.levels - 1)

    def interval(self, idx: np.ndarray):
        lo = np.where(idx == 0, -np.inf, self.step * (idx - self.levels / 2))
        up = np.where(idx == self.levels - 1, np.inf, self.step * (idx + 1 - self.levels / 2))
        return lo, up


def expected_rx_power(cfg: SystemConfig) -> float:
    """Analytic per-entry power of the noiseless combined observations.

    Each path contributes its user's power times the (unit-mean) sampled
    pulse energy through unit-norm combiner columns, so the aggregate is
    sum_k powers[k] * paths[k].
    """
    return float(sum(p * l for p, l in zip(cfg.powers, cfg.paths)))


def make_quantizer(cfg: SystemConfig, signal_variance: float | None = None) -> QuantizerSpec:
    """SNR-adapted quantizer: step = (MSE-optimal factor) * per-real-dim std.

    `signal_variance` is the per-complex-entry observation variance
    (signal power + unit noise); default derives it from the config.
    """
    if cfg.bits is None:
        return QuantizerSpec(bits=None)
    if cfg.bits < 1:
        raise ValueError("bits must be >= 1")
    if signal_variance is None:
        signal_variance = expected_rx_power(cfg) + 1.0
    sigma_r = np.sqrt(signal_variance / 2.0)
    return QuantizerSpec(bits=cfg.bits, step=uniform_step_factor(cfg.bits) * sigma_r)


# -----------------------------------------------------------------------------
# Observations and the estimation/CV split
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class DataPartition:
    """Frame-aligned split of the RN complex observation rows.

    `est`/`cv` hold sorted complex-row indices; the *_real views append the
    imaginary-part rows at offset RN (real-form layout).
    """

    est: np.ndarray
    cv: np.ndarray
    n: int

    @property
    def est_real(self) -> np.ndarray:
        return np.concatenate([self.est, self.est + self.n])

    @property
    def cv_real(self) -> np.ndarray:
        return np.concatenate([self.cv, self.cv + self.n])


def partition_cv(cfg: SystemConfig) -> DataPartition:
    """Hold out the last ceil(cv_fraction * n_frames) frames for validation."""
    if not 0.0 < cfg.cv_fraction < 1.0:
        raise ValueError("cv_fraction must lie strictly between 0 and 1")
    n_cv = int(np.ceil(cfg.cv_fraction * cfg.n_frames))
    if not 0 < n_cv < cfg.n_frames:
        raise ValueError("cv split leaves no estimation or no validation frames")
    per_frame = cfg.R * cfg.frame_len
    cut = (cfg.n_frames - n_cv) * per_frame
    return DataPartition(est=np.arange(cut), cv=np.arange(cut, cfg.n_obs), n=cfg.n_obs)


@dataclass(frozen=True)
class QuantizedObservation:
    """Observed points plus per-entry thresholds in real form (Eq.-layout:
    RN real parts then RN imaginary parts).

    In unquantized mode `values` holds the raw samples and lo == up == their
    real form; the likelihood then switches to the Gaussian density.
    """

    values: np.ndarray
    lo: np.ndarray
    up: np.ndarray
    quantizer: QuantizerSpec
    partition: DataPartition | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def unquantized(self) -> bool:
        return self.quantizer.unquantized

    def with_partition(self, partition: DataPartition) -> "QuantizedObservation":
        return QuantizedObservation(self.values, self.lo, self.up, self.quantizer, partition)

    def save(self, path) -> None:
        np.savez(
            path,
            values=self.values,
            lo=self.lo,
            up=self.up,
            bits=-1 if self.quantizer.bits is None else self.quantizer.bits,
            step=self.quantizer.step,
            est=self.partition.est if self.partition is not None else np.array([], dtype=int),
            cv=self.partition.cv if self.partition is not None else np.array([], dtype=int),
        )

    @classmethod
    def load(cls, path) -> "QuantizedObservation":
        data = np.load(path)
        bits = int(data["bits"])
        spec = QuantizerSpec(bits=None if bits < 0 else bits, step=float(data["step"]))
        part = None
        if data["est"].size or data["cv"].size:
            part = DataPartition(est=data["est"], cv=data["cv"], n=data["values"].shape[0])
        return cls(values=data["values"], lo=data["lo"], up=data["up"], quantizer=spec, partition=part)


def quantize(y: np.ndarray, spec: QuantizerSpec) -> QuantizedObservation:
    """Elementwise mid-rise quantization of real and imaginary parts."""
    if spec.unquantized:
        yr = real_form(y)
        return QuantizedObservation(values=np.asarray(y, dtype=complex), lo=yr, up=yr.copy(), quantizer=spec)
    yr = real_form(y)
    idx = spec.index(yr)
    lo, up = spec.interval(idx)
    pts = spec.points[idx]
    n = y.shape[0]
    return QuantizedObservation(values=pts[:n] + 1j * pts[n:], lo=lo, up=up, quantizer=spec)
