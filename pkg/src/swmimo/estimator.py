"""Gridless greedy channel estimation with validation-based stopping.

Each outer iteration scores every grid atom by the squared magnitude of the
censored-Gaussian log-likelihood gradient with respect to a new path's gain
(evaluated at zero gain, thresholds shifted by the current fit), refines the
winner's (angle, delay) over the continuum with a curvature-guarded Newton
step, then refits all path gains by maximizing the concave log-posterior.
The loop stops when the held-out log-likelihood stops improving; the
returned state is the last one that improved it.  The on-grid variant skips
refinement.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import STACKS, SystemConfig, path_vector
from .frontend import QuantizedObservation, SensingOperator
from .kernels import censored_moments, log_cdf_diff
from .numerics import real_form

SIGMA = np.sqrt(0.5)  # per-real-dimension noise std of CN(0, 1)
_LOG_PDF_CONST = -0.5 * np.log(2.0 * np.pi * SIGMA**2)


class GainEstimationError(RuntimeError):
    """Path-gain refit failed to converge (ill-conditioned atom set); carries
    the last iterate in .last_gains."""

    def __init__(self, message: str, last_gains: np.ndarray):
        super().__init__(message)
        self.last_gains = last_gains


@dataclass(frozen=True)
class GridSpec:
    """Uniform half-open discretization of the (angle, delay, user) box.

    res_angle*M angles from -pi/2 (step pi/G_a) and res_delay*|taps| delays
    from 0 (step (D-1)T_s/G_d); atoms are ordered user-major, then angle,
    then delay, which fixes the argmax tie rule.
    """

    thetas: np.ndarray
    taus: np.ndarray
    n_users: int

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "GridSpec":
        g_a = cfg.res_angle * cfg.M
        g_d = cfg.res_delay * cfg.n_taps
        thetas = -np.pi / 2 + np.arange(g_a) * (np.pi / g_a)
        taus = np.arange(g_d) * (cfg.delay_span / g_d) if cfg.D > 1 else np.zeros(1)
        return cls(thetas=thetas, taus=taus, n_users=cfg.K)

    @property
    def size(self) -> int:
        return self.thetas.size * self.taus.size * self.n_users

    def point(self, index: int) -> tuple[float, float, int]:
        per_user = self.thetas.size * self.taus.size
        k, rest = divmod(index, per_user)
        ia, id_ = divmod(rest, self.taus.size)
        return float(self.thetas[ia]), float(self.taus[id_]), int(k)


@dataclass(frozen=True)
class RefinementConfig:
    """Step sizes and caps for the Newton refinement and the gain refit."""

    step: float = 1.0
    max_newton_iters: int = 10
    objective_rtol: float = 1e-8
    gain_tol: float = 1e-8
    max_gain_iters: int = 50
    max_backtracks: int = 20


@dataclass
class EstimateState:
    """Estimated paths (theta, tau, user), their gains, and the CV trace."""

    paths: list[tuple[float, float, int]]
    gains: np.ndarray
    cv_history: list[float]
    n_iterations: int = 0
    model: str = "wideband"
    stop_reason: str = ""
    history: list[dict] | None = None

    @property
    def user_path_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for _, _, k in self.paths:
            counts[k] = counts.get(k, 0) + 1
        return counts

    def to_json(self) -> str:
        return json.dumps(
            {
                "paths": [[th, ta, k] for th, ta, k in self.paths],
                "gains": [[float(g.real), float(g.imag)] for g in self.gains],
                "cv_history": self.cv_history,
                "n_iterations": self.n_iterations,
                "model": self.model,
                "stop_reason": self.stop_reason,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "EstimateState":
        doc = json.loads(text)
        return cls(
            paths=[(p[0], p[1], int(p[2])) for p in doc["paths"]],
            gains=np.array([re + 1j * im for re, im in doc["gains"]], dtype=complex),
            cv_history=list(doc["cv_history"]),
            n_iterations=doc["n_iterations"],
            model=doc["model"],
            stop_reason=doc["stop_reason"],
        )


class AtomEngine:
    """Evaluates sensing-domain atoms a(theta, tau, k) and their derivatives.

    Binds a sensing operator to a steering model ("wideband" or
    "narrowband"); the grid atom matrix is cached per (grid, row-subset).
    """

    def __init__(self, op: SensingOperator, model: str = "wideband"):
        self.op = op
        self.cfg = op.cfg
        self.model = model
        self._stack, self._stack_derivs = STACKS[model]
        self._blocks = [op.user_block(k) for k in range(self.cfg.K)]
        self._grid_cache: dict = {}
        self._atom_cache: dict = {}

    def atom(self, theta: float, tau: float, user: int, rows: np.ndarray | None = None) -> np.ndarray:
        block = self._blocks[user] if rows is None else self._blocks[user][rows]
        return block @ self._stack(theta, tau, self.cfg)

    def atom_derivs(self, theta: float, tau: float, user: int, rows: np.ndarray | None = None):
        block = self._blocks[user] if rows is None else self._blocks[user][rows]
        return tuple(block @ s for s in self._stack_derivs(theta, tau, self.cfg))

    def path_matrix(self, paths, rows: np.ndarray | None = None) -> np.ndarray:
        n = self.cfg.n_obs if rows is None else len(rows)
        A = np.empty((n, len(paths)), dtype=complex)
        for j, key in enumerate(paths):
            col = self._atom_cache.get(key)
            if col is None:
                col = self.atom(*key)
                self._atom_cache[key] = col
            A[:, j] = col if rows is None else col[rows]
        return A

    def mean(self, paths, gains, rows: np.ndarray | None = None) -> np.ndarray:
        if not paths:
            n = self.cfg.n_obs if rows is None else len(rows)
            return np.zeros(n, dtype=complex)
        return self.path_matrix(paths, rows) @ gains

    def grid_matrix(self, grid: GridSpec, rows: np.ndarray | None = None) -> np.ndarray:
        key = (id(grid), None if rows is None else (int(rows[0]), int(rows[-1]), len(rows)))
        if key not in self._grid_cache:
            cfg = self.cfg
            pairs_th = np.repeat(grid.thetas, grid.taus.size)
            pairs_ta = np.tile(grid.taus, grid.thetas.size)
            stacks = np.empty((cfg.M * cfg.n_taps, pairs_th.size), dtype=complex)
            for j in range(pairs_th.size):
                stacks[:, j] = self._stack(pairs_th[j], pairs_ta[j], cfg)
            cols = []
            for k in range(grid.n_users):
                block = self._blocks[k] if rows is None else self._blocks[k][rows]
                cols.append(block @ stacks)
            self._grid_cache[key] = np.hstack(cols)
        return self._grid_cache[key]

    def reconstruct(self, paths, gains) -> np.ndarray:
        h = np.zeros(self.cfg.M * self.cfg.n_taps * self.cfg.K, dtype=complex)
        for (th, ta, k), g in zip(paths, gains):
            h += g * path_vector(th, ta, k, self.cfg, self.model)
        return h


# -----------------------------------------------------------------------------
# Likelihoods
# -----------------------------------------------------------------------------


def _real_parts(obs: QuantizedObservation, mean: np.ndarray, subset_real: np.ndarray):
    mu = real_form(mean)[subset_real]
    return obs.lo[subset_real], obs.up[subset_real], mu


def loglik(
    gains: np.ndarray,
    paths,
    obs: QuantizedObservation,
    subset_real: np.ndarray,
    engine: AtomEngine,
) -> float:
    """Censored-Gaussian log-likelihood of the fit over a real-index subset.

    Unquantized observations use the Gaussian log-density at the observed
    values (variance 1/2 per real dimension).  The subset is sorted first so
    the sum is invariant to index ordering.
    """
    subset_real = np.sort(np.asarray(subset_real))
    mean = engine.mean(paths, gains)
    lo, up, mu = _real_parts(obs, mean, subset_real)
    if obs.unquantized:
        r = lo - mu  # lo == up == observed real components
        return float(np.sum(_LOG_PDF_CONST - r * r / (2.0 * SIGMA**2)))
    return float(np.sum(log_cdf_diff(lo, up, mu, SIGMA)))


def cv_score(gains: np.ndarray, paths, obs: QuantizedObservation, engine: AtomEngine) -> float:
    """Held-out log-likelihood; -inf for an empty path set by convention."""
    if len(paths) == 0:
        return -np.inf
    return loglik(gains, paths, obs, obs.partition.cv_real, engine)


# -----------------------------------------------------------------------------
# Atom selection
# -----------------------------------------------------------------------------


@dataclass
class SelectionContext:
    """Residual-shifted selection state on the estimation rows.

    `weights` is the complex packing (w_re + j*w_im) of the per-real-entry
    gradient weights, so the gain-gradient of a candidate atom is
    -(1/sigma) * [Re; Im](a^H weights) and the selection objective is
    |a^H weights|^2 / sigma^2.
    """

    weights: np.ndarray
    rows: np.ndarray
    engine: AtomEngine


def selection_context(
    obs: QuantizedObservation, engine: AtomEngine, paths=(), gains=np.zeros(0)
) -> SelectionContext:
    part = obs.partition
    rows = part.est
    mean = engine.mean(paths, gains, rows)
    n = obs.n
    sub = np.concatenate([rows, rows + n])
    mu = real_form(mean)
    lo, up = obs.lo[sub], obs.up[sub]
    if obs.unquantized:
        w = -(lo - mu) / SIGMA
    else:
        _, w, _ = censored_moments(lo, up, mu, SIGMA)
    m = rows.size
    return SelectionContext(weights=w[:m] + 1j * w[m:], rows=rows, engine=engine)


def selection_objective(theta: float, tau: float, user: int, ctx: SelectionContext) -> float:
    """Squared norm of the gain gradient at zero gain for one candidate atom."""
    a = ctx.engine.atom(theta, tau, user, ctx.rows)
    c = np.vdot(a, ctx.weights)
    return float((c.real**2 + c.imag**2) / SIGMA**2)


def grid_select(ctx: SelectionContext, grid: GridSpec) -> tuple[float, float, int, float]:
    """Argmax of the selection objective over the grid; first index wins ties."""
    A = ctx.engine.grid_matrix(grid, ctx.rows)
    vals = np.abs(A.conj().T @ ctx.weights) ** 2 / SIGMA**2
    j = int(np.argmax(vals))
    th, ta, k = grid.point(j)
    return th, ta, k, float(vals[j])


def grad_hessian(theta: float, tau: float, user: int, ctx: SelectionContext):
    """Analytic gradient and Hessian of the selection objective in (theta, tau).

    With c_x = (d_x a)^H w, the objective is |c|^2/sigma^2, its gradient
    2 Re(conj(c) c_x)/sigma^2, and the Hessian adds the product-rule term
    Re(conj(c_x) c_y).
    """
    a, a_th, a_ta, a_thth, a_thta, a_tata = ctx.engine.atom_derivs(theta, tau, user, ctx.rows)
    w = ctx.weights
    c = np.vdot(a, w)
    c_th, c_ta = np.vdot(a_th, w), np.vdot(a_ta, w)
    c_thth, c_thta, c_tata = np.vdot(a_thth, w), np.vdot(a_thta, w), np.vdot(a_tata, w)
    s2 = SIGMA**2
    grad = 2.0 / s2 * np.array([(np.conj(c) * c_th).real, (np.conj(c) * c_ta).real])
    h11 = 2.0 / s2 * ((np.conj(c) * c_thth).real + (np.conj(c_th) * c_th).real)
    h22 = 2.0 / s2 * ((np.conj(c) * c_tata).real + (np.conj(c_ta) * c_ta).real)
    h12 = 2.0 / s2 * ((np.conj(c) * c_thta).real + (np.conj(c_th) * c_ta).real)
    return grad, np.array([[h11, h12], [h12, h22]])


def _negative_definite(H: np.ndarray) -> bool:
    evals = np.linalg.eigvalsh(H)
    scale = abs(H[0, 0]) + abs(H[1, 1])
    if scale == 0.0:
        return False
    if evals[0] != 0.0 and abs(evals[1]) / abs(evals[0]) < 1e-12:
        return False  # numerically singular: treat as not negative definite
    return bool(evals[1] < -1e-12 * scale)


def refine(
    theta: float,
    tau: float,
    user: int,
    ctx: SelectionContext,
    rcfg: RefinementConfig,
    bounds: tuple[tuple[float, float], tuple[float, float]],
) -> tuple[float, float, float]:
    """Continuum refinement of (theta, tau) from a grid start.

    Newton step where the Hessian is negative definite, gradient ascent
    otherwise; the step is backtracked (halving) until the objective does
    not decrease and iterates are clamped to the box.  Returns
    (theta, tau, objective) with objective >= the starting value.

    Internally the delay is measured in sampling periods so the two
    coordinates are commensurate: Newton steps are affine-invariant, but the
    curvature test and the gradient fallback are not.  The first trial step
    of the gradient branch is capped at one angular step of the objective's
    natural scale to keep the line search inside the basin.
    """
    ts = ctx.engine.cfg.T_s
    scale = np.array([1.0, ts])
    x = np.array([theta, tau])
    f = selection_objective(x[0], x[1], user, ctx)
    (th_lo, th_hi), (ta_lo, ta_hi) = bounds
    trust = np.pi / max(ctx.engine.cfg.M, 2)
    for _ in range(rcfg.max_newton_iters):
        grad, H = grad_hessian(x[0], x[1], user, ctx)
        g_s = grad * scale
        H_s = H * np.outer(scale, scale)
        if _negative_definite(H_s):
            direction = -np.linalg.solve(H_s, g_s)
            step = rcfg.step
        else:
            direction = g_s
            gnorm = np.linalg.norm(g_s)
            step = rcfg.step if gnorm == 0.0 else min(rcfg.step, trust / gnorm)
        accepted = None
        for _ in range(rcfg.max_backtracks):
            cand = x + step * direction * scale
            cand[0] = min(max(cand[0], th_lo), th_hi)
            cand[1] = min(max(cand[1], ta_lo), ta_hi)
            f_cand = selection_objective(cand[0], cand[1], user, ctx)
            if f_cand > f:
                accepted = (cand, f_cand)
                break
            if f_cand == f:
                break  # flat at float resolution: moving gains nothing
            step *= 0.5
        if accepted is None:
            break
        x, f_new = accepted
        if f_new - f <= rcfg.objective_rtol * max(abs(f), 1.0):
            f = f_new
            break
        f = f_new
    return float(x[0]), float(x[1]), f


# -----------------------------------------------------------------------------
# Path-gain refit
# -----------------------------------------------------------------------------


def _posterior(x_r, A_r, obs, lo, up, target):
    mu = A_r @ x_r
    if target is not None:
        r = target - mu
        ll = np.sum(_LOG_PDF_CONST - r * r / (2.0 * SIGMA**2))
        grad_ll = A_r.T @ r / SIGMA**2
        curv = None
    else:
        logp, w1, w2 = censored_moments(lo, up, mu, SIGMA)
        ll = np.sum(logp)
        grad_ll = -(A_r.T @ w1) / SIGMA
        curv = (w2 - w1 * w1) / SIGMA**2
    value = ll - x_r @ x_r
    grad = grad_ll - 2.0 * x_r
    return value, grad, curv


def map_path_gains(
    paths,
    obs: QuantizedObservation,
    subset_real: np.ndarray,
    engine: AtomEngine,
    rcfg: RefinementConfig | None = None,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """MAP gains of a fixed path set: maximize loglik(x) - ||x||^2 (concave).

    Damped Newton ascent in the real form; the unit-variance complex-normal
    prior makes the Hessian strictly negative definite, so the optimum is
    unique and independent of the start.
    """
    if len(paths) == 0:
        return np.zeros(0, dtype=complex)
    rcfg = rcfg or RefinementConfig()
    subset_real = np.sort(np.asarray(subset_real))
    L = len(paths)
    A = engine.path_matrix(paths)
    A_r = real_form(A)[subset_real]
    if L > 1 and np.linalg.cond(A.conj().T @ A) > 1e12:
        warnings.warn("atom columns are nearly dependent; gain refit may be ill-conditioned")
    lo, up = obs.lo[subset_real], obs.up[subset_real]
    target = lo if obs.unquantized else None

    if init is None:
        x = np.zeros(2 * L)
    else:
        x = np.concatenate([np.asarray(init).real, np.asarray(init).imag])
    value, grad, curv = _posterior(x, A_r, obs, lo, up, target)
    max_iters = 10 * rcfg.max_gain_iters
    for it in range(max_iters):
        if target is not None:
            Hneg = A_r.T @ A_r / SIGMA**2 + 2.0 * np.eye(2 * L)
        else:
            Hneg = -(A_r.T * curv) @ A_r + 2.0 * np.eye(2 * L)
        step_dir = np.linalg.solve(Hneg, grad)
        # Newton steps shrink quadratically: a vanishing step bounds the
        # remaining distance to the unique optimum in parameter units.
        if np.linalg.norm(step_dir) <= rcfg.gain_tol * (1.0 + np.linalg.norm(x)):
            break
        floor = 1e-12 * max(1.0, abs(value))  # float-accumulation slack in the sum
        t = 1.0
        moved = False
        for _ in range(40):
            x_new = x + t * step_dir
            v_new, g_new, c_new = _posterior(x_new, A_r, obs, lo, up, target)
            if v_new >= value - floor:
                x, value, grad, curv = x_new, v_new, g_new, c_new
                moved = True
                break
            t *= 0.5
        if not moved:
            break  # line search pinned at the value's float noise: converged
    else:
        raise GainEstimationError(
            f"gain refit did not converge in {max_iters} iterations", last_gains=x[:L] + 1j * x[L:]
        )
    return x[:L] + 1j * x[L:]


# -----------------------------------------------------------------------------
# Outer greedy loop
# -----------------------------------------------------------------------------


def _duplicate(theta: float, tau: float, user: int, paths, spans, tol: float = 1e-9) -> bool:
    """Collision test in natural units of each coordinate (box spans)."""
    th_tol, ta_tol = tol * spans[0], tol * spans[1]
    return any(k == user and abs(th - theta) <= th_tol and abs(ta - tau) <= ta_tol for th, ta, k in paths)


def nfcfgs_cv(
    obs: QuantizedObservation,
    op: SensingOperator,
    grid: GridSpec | None = None,
    rcfg: RefinementConfig | None = None,
    *,
    model: str = "wideband",
    refine_atoms: bool = True,
    forced_iterations: int | None = None,
    max_paths: int | None = None,
    track_history: bool = False,
) -> EstimateState:
    """Greedy gridless estimation with validation-based stopping.

    Selection, refinement, and the gain refit see only the estimation rows;
    the stopping rule watches the held-out rows and the returned state is
    the best-scoring one.  `forced_iterations` disables the stop to expose
    the overfitting region (the best state is still returned);
    `track_history` snapshots every iteration into state.history.
    """
    if obs.partition is None:
        raise ValueError("observation carries no estimation/CV partition")
    cfg = op.cfg
    engine = AtomEngine(op, model)
    grid = grid or GridSpec.from_config(cfg)
    rcfg = rcfg or RefinementConfig()
    bounds = ((-np.pi / 2, np.pi / 2), (0.0, cfg.delay_span))
    est_real = obs.partition.est_real

    if max_paths is None:
        max_paths = max(1, min(obs.partition.est.size // 4, 4 * sum(cfg.paths)))
    cap = forced_iterations if forced_iterations is not None else max_paths

    paths: list[tuple[float, float, int]] = []
    gains = np.zeros(0, dtype=complex)
    cv_history: list[float] = []
    history: list[dict] | None = [] if track_history else None
    best = (-np.inf, [], np.zeros(0, dtype=complex), 0)
    stop_reason = "max-paths"

    for it in range(1, cap + 1):
        prev_score = cv_score(gains, paths, obs, engine)
        ctx = selection_context(obs, engine, paths, gains)
        th, ta, k, _ = grid_select(ctx, grid)
        if refine_atoms:
            th, ta, _ = refine(th, ta, k, ctx, rcfg, bounds)
        if _duplicate(th, ta, k, paths, (np.pi, max(cfg.delay_span, cfg.T_s))):
            stop_reason = "duplicate-atom"
            break
        paths = paths + [(th, ta, k)]
        gains = map_path_gains(paths, obs, est_real, engine, rcfg, init=np.append(gains, 0.0))
        score = cv_score(gains, paths, obs, engine)
        cv_history.append(score)
        if history is not None:
            history.append({"paths": list(paths), "gains": gains.copy(), "cv": score})
        if score > best[0]:
            best = (score, list(paths), gains.copy(), it)
        if forced_iterations is None and score <= prev_score:
            stop_reason = "cv-decrease"
            break
    else:
        stop_reason = "forced-iterations" if forced_iterations is not None else "max-paths"

    return EstimateState(
        paths=best[1],
        gains=best[2],
        cv_history=cv_history,
        n_iterations=len(cv_history),
        model=model,
        stop_reason=stop_reason,
        history=history,
    )


def fcfgs_cv(
    obs: QuantizedObservation,
    op: SensingOperator,
    grid: GridSpec | None = None,
    rcfg: RefinementConfig | None = None,
    **kwargs,
) -> EstimateState:
    """On-grid ablation: identical loop with the refinement step skipped."""
    return nfcfgs_cv(obs, op, grid, rcfg, refine_atoms=False, **kwargs)


def reconstruct_h(state: EstimateState, cfg: SystemConfig) -> np.ndarray:
    """Channel estimate F(paths) @ gains in the vec(H) layout."""
    h = np.zeros(cfg.M * cfg.n_taps * cfg.K, dtype=complex)
    for (th, ta, k), g in zip(state.paths, state.gains):
        h += g * path_vector(th, ta, k, cfg, state.model)
    return h
