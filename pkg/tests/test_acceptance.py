"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line.  Run with `pytest tests/test_acceptance.py -v -s`."""

import dataclasses
import warnings

import numpy as np

from swmimo.channel import PathParams, SystemConfig, build_channel, sample_paths
from swmimo.cvprobe import CvProbeConfig, concavity_probe, delta_scaling_check, draw_probe, fcv_estimate
from swmimo.estimator import (
    AtomEngine,
    GridSpec,
    fcfgs_cv,
    grad_hessian,
    nfcfgs_cv,
    reconstruct_h,
    selection_context,
    selection_objective,
)
from swmimo.frontend import (
    assemble_sensing,
    build_combiners,
    design_training,
    make_quantizer,
    partition_cv,
    quantize,
    simulate_frames,
    simulate_rx,
)
from swmimo.harness import (
    ExperimentConfig,
    emit_results,
    estimate_scene,
    iteration_census,
    make_scene,
    mismatch_experiment,
    nmse_sweep,
    strip_timing,
    trial_rng,
)

warnings.filterwarnings("ignore", message="atom columns")


def report(criterion: int, ok: bool, detail: str):
    print(f"\nCRITERION {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def scene_for(cfg, seed, paths=None, noiseless=False):
    rng = trial_rng(cfg.seed, 0, seed)
    if paths is None:
        paths = sample_paths(cfg, rng)
    ch = build_channel(paths, cfg)
    op = assemble_sensing(design_training(cfg), build_combiners(cfg, rng), cfg)
    y = simulate_rx(op, ch.h, rng, noiseless=noiseless)
    obs = quantize(y, make_quantizer(cfg)).with_partition(partition_cv(cfg))
    return ch, op, obs


# ---------------------------------------------------------------------------
# configurations shared by the criteria (and checked by criterion 9)
# ---------------------------------------------------------------------------

CFG_RECOVERY = SystemConfig(
    M=16, K=1, R=4, D=4, paths=(1,), powers=(1e7,), bits=None,
    frame_len=8, n_frames=10, res_angle=1, res_delay=1, cv_fraction=0.2,
)
CFG_REFINE = dataclasses.replace(CFG_RECOVERY, powers=(100.0,))
CFG_ORDERING = SystemConfig(
    M=16, K=2, R=8, D=4, paths=(2, 2), powers=(1.0, 1.0), bits=3,
    frame_len=12, n_frames=20, res_angle=2, res_delay=2, cv_fraction=0.2,
)
CFG_MISMATCH = SystemConfig(
    M=128, K=1, R=8, D=2, paths=(1,), powers=(10.0,), bits=None,
    frame_len=10, n_frames=20, res_angle=1, res_delay=1, cv_fraction=0.2,
)
CFG_OVERFIT = SystemConfig(
    M=12, K=1, R=6, D=4, paths=(4,), powers=(1.0,), bits=4,
    frame_len=12, n_frames=16, res_angle=2, res_delay=2, cv_fraction=0.25,
)
CFG_SMALL = SystemConfig(
    M=6, K=2, R=3, D=3, paths=(1, 1), powers=(1.0, 1.0), bits=2,
    frame_len=10, n_frames=5, cv_fraction=0.2,
)
TEST_MATRIX = [CFG_RECOVERY, CFG_REFINE, CFG_ORDERING, CFG_MISMATCH, CFG_OVERFIT, CFG_SMALL]


def test_criterion_1_derivative_correctness():
    """Analytic gradient/Hessian of the selection objective vs central FD."""
    rng = np.random.default_rng(1)
    worst_g, worst_h = 0.0, 0.0
    for bits in (1, 2, 4, None):
        cfg = dataclasses.replace(CFG_SMALL, bits=bits)
        checked = 0
        seed = 0
        while checked < 20:
            ch, op, obs = scene_for(cfg, seed)
            eng = AtomEngine(op)
            # random residual state so thresholds are generically shifted
            paths = [(float(rng.uniform(-1.2, 1.2)), float(rng.uniform(0, cfg.delay_span)), int(rng.integers(cfg.K)))]
            gains = np.array([rng.standard_normal() + 1j * rng.standard_normal()]) * 0.5
            ctx = selection_context(obs, eng, paths, gains)
            for _ in range(5):
                th = float(rng.uniform(-1.3, 1.3))
                ta = float(rng.uniform(0.05, 0.95) * cfg.delay_span)
                k = int(rng.integers(cfg.K))
                g, H = grad_hessian(th, ta, k, ctx)
                f = lambda a, b: selection_objective(a, b, k, ctx)
                d_th, d_ta = 1e-6, 1e-6 * cfg.delay_span
                fd_g = np.array(
                    [
                        (f(th + d_th, ta) - f(th - d_th, ta)) / (2 * d_th),
                        (f(th, ta + d_ta) - f(th, ta - d_ta)) / (2 * d_ta),
                    ]
                )
                h_th, h_ta = 1e-4, 1e-4 * cfg.delay_span
                fd_H = np.empty((2, 2))
                fd_H[0, 0] = (f(th + h_th, ta) - 2 * f(th, ta) + f(th - h_th, ta)) / h_th**2
                fd_H[1, 1] = (f(th, ta + h_ta) - 2 * f(th, ta) + f(th, ta - h_ta)) / h_ta**2
                fd_H[0, 1] = fd_H[1, 0] = (
                    f(th + h_th, ta + h_ta)
                    - f(th + h_th, ta - h_ta)
                    - f(th - h_th, ta + h_ta)
                    + f(th - h_th, ta - h_ta)
                ) / (4 * h_th * h_ta)
                worst_g = max(worst_g, np.abs(g - fd_g).max() / max(np.abs(fd_g).max(), 1e-30))
                worst_h = max(worst_h, np.abs(H - fd_H).max() / max(np.abs(fd_H).max(), 1e-30))
                checked += 1
            seed += 1
    ok = worst_g <= 1e-4 and worst_h <= 1e-4
    report(1, ok, f"grad rel err {worst_g:.2e}, hessian rel err {worst_h:.2e} (tol 1e-4, 20 pts x B in {{1,2,4,inf}})")


def test_criterion_2_exact_recovery():
    """Planted on-grid path, noiseless, unquantized: exact recovery."""
    alpha = 0.8 - 0.6j
    ch, op, obs = scene_for(CFG_RECOVERY, 0, paths=[PathParams(alpha, 0.0, 0.0, 0)], noiseless=True)
    state = nfcfgs_cv(obs, op)
    th, ta, k = state.paths[0] if state.paths else (np.nan, np.nan, -1)
    ok = (
        len(state.paths) == 1
        and k == 0
        and abs(th) <= 1e-9
        and abs(ta) <= 1e-9 * CFG_RECOVERY.T_s
        and abs(state.gains[0] - alpha) <= 1e-6
    )
    report(
        2,
        ok,
        f"|paths|={len(state.paths)}, theta err {abs(th):.2e}, tau err {abs(ta):.2e}s, "
        f"gain err {abs(state.gains[0] - alpha) if len(state.paths) else np.nan:.2e} (tol 1e-6)",
    )


def test_criterion_3_newton_refinement_gain():
    """Off-grid plant at 20 dB, B=inf, (1,1) grid: refined parameter error
    (native units: radians + seconds) at most a tenth of the on-grid error;
    both coordinates individually no worse."""
    cfg = CFG_REFINE
    grid = GridSpec.from_config(cfg)
    cell_th = np.pi / grid.thetas.size
    cell_ta = cfg.delay_span / grid.taus.size
    rng = np.random.default_rng(33)
    err_n, err_f, err_n_th, err_f_th, err_n_ta, err_f_ta = [], [], [], [], [], []
    for t in range(50):
        th0 = float(rng.uniform(-1.4, 1.4))
        ta0 = float(rng.uniform(0.05, 0.95) * cfg.delay_span)
        gain = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
        ch, op, obs = scene_for(cfg, t, paths=[PathParams(gain, th0, ta0, 0)])
        for kind, sink in (("nfcfgs", (err_n, err_n_th, err_n_ta)), ("fcfgs", (err_f, err_f_th, err_f_ta))):
            st = nfcfgs_cv(obs, op) if kind == "nfcfgs" else fcfgs_cv(obs, op)
            th, ta, _ = st.paths[int(np.argmax(np.abs(st.gains)))]
            sink[0].append(abs(th - th0) + abs(ta - ta0))
            sink[1].append(abs(th - th0))
            sink[2].append(abs(ta - ta0))
    ratio = np.median(err_n) / np.median(err_f)
    ok = (
        ratio <= 0.1
        and np.median(err_n_th) <= np.median(err_f_th)
        and np.median(err_n_ta) <= np.median(err_f_ta)
    )
    report(
        3,
        ok,
        f"median combined err ratio {ratio:.3f} (tol 0.1) over 50 paired trials; "
        f"theta {np.median(err_n_th) / cell_th:.4f} vs {np.median(err_f_th) / cell_th:.3f} cells, "
        f"tau {np.median(err_n_ta) / cell_ta:.3f} vs {np.median(err_f_ta) / cell_ta:.3f} cells",
    )


def test_criterion_4_nmse_ordering():
    """Fig.-10-style gap: NFCFGS median NMSE at least 1 dB below FCFGS."""
    nm = {"nfcfgs": [], "fcfgs": []}
    for t in range(50):
        scene = make_scene(CFG_ORDERING, trial_rng(4, 0, t))
        for kind in nm:
            _, row = estimate_scene(scene, kind)
            nm[kind].append(row["nmse"])
    n_db = 10 * np.log10(np.median(nm["nfcfgs"]))
    f_db = 10 * np.log10(np.median(nm["fcfgs"]))
    ok = n_db < f_db and (f_db - n_db) >= 1.0
    report(4, ok, f"median NMSE nfcfgs {n_db:+.2f} dB vs fcfgs {f_db:+.2f} dB; gap {f_db - n_db:.2f} dB (>= 1)")


def test_criterion_5_mismatch_monotonicity():
    """Model-mismatch degradation ~1 at boresight and growing with the AoA."""
    ecfg = ExperimentConfig(
        base=CFG_MISMATCH, snr_db=(10.0,), bits=(None,), trials=30, aoas=(0.0, np.pi / 6, np.pi / 3), seed=5
    )
    table = mismatch_experiment(ecfg)
    degr = [r["degradation"] for r in table]
    ok = degr[0] <= 1.1 and degr[0] < degr[1] < degr[2]
    report(5, ok, f"degradation at (0, pi/6, pi/3): {degr[0]:.3f}, {degr[1]:.1f}, {degr[2]:.1f} (30 paired trials)")


def test_criterion_6_cv_overfit_detection():
    """Iteration with the best held-out score sits near the minimum-SE
    iteration when run past the overfitting point."""
    cfg = CFG_OVERFIT
    hits = 0
    trials = 30
    for t in range(trials):
        rng = trial_rng(6, 0, t)
        scene = make_scene(cfg, rng)
        state = nfcfgs_cv(scene.obs, scene.op, forced_iterations=8, track_history=True)
        se = np.array(
            [
                np.linalg.norm(
                    reconstruct_h(dataclasses.replace(state, paths=s["paths"], gains=s["gains"]), cfg)
                    - scene.channel.h
                )
                ** 2
                for s in state.history
            ]
        )
        peak = int(np.argmax([s["cv"] for s in state.history]))
        if 10 * np.log10(se[peak] / se.min()) <= 3.0:
            hits += 1
    ok = hits >= 0.8 * trials
    report(6, ok, f"CV peak within 3 dB of min-SE in {hits}/{trials} trials (need >= {int(0.8 * trials)})")


def test_criterion_7_lemma_verification():
    """Empirical asymptotic CV score: maximum at the true channel, concave."""
    rng = np.random.default_rng(7)
    offsets = np.linspace(-2.0, 2.0, 21)
    ok_all = True
    details = []
    for bits in (1, 2, 3, 4):
        probe = CvProbeConfig(h_real=(5.0, 5.0), bits=bits, n_samples=100_000)
        draws = draw_probe(probe, rng)
        best_val, best_pt, best_err = -np.inf, None, 0.0
        f_h, e_h = fcv_estimate(np.array([5.0, 5.0]), draws)
        for d1 in offsets:
            for d2 in offsets:
                v, e = fcv_estimate(np.array([5.0 + d1, 5.0 + d2]), draws)
                if v > best_val:
                    best_val, best_pt, best_err = v, (d1, d2), e
        max_at_h = best_pt == (0.0, 0.0) or (best_val - f_h) <= 3 * (best_err + e_h)
        rep = concavity_probe(probe, rng)
        ok_all &= max_at_h and rep.n_violations == 0
        details.append(f"B={bits}: argmax offset {best_pt}, concavity violations {rep.n_violations}")
    report(7, ok_all, "; ".join(details))


def test_criterion_8_corollary_verification():
    """Distortion residual of the infinite-resolution expansion is O(step)."""
    probe = CvProbeConfig(h_real=(5.0, 5.0), bits=None, step=0.4, n_samples=400_000)
    rows = delta_scaling_check(
        (5.0, 5.0), (5.3, 4.8), [0.4, 0.2, 0.1], probe, np.random.default_rng(8)
    )
    ok = True
    msgs = []
    for big, small in ((rows[0], rows[1]), (rows[1], rows[2])):
        tol = 3 * (small["stderr"] + 0.75 * big["stderr"])
        ok &= abs(small["residual"]) <= 0.75 * abs(big["residual"]) + tol
        msgs.append(
            f"|res({small['delta']})|={abs(small['residual']):.4f} <= 0.75*|res({big['delta']})|"
            f"={0.75 * abs(big['residual']):.4f} + {tol:.4f}"
        )
    report(8, ok, "; ".join(msgs))


def test_criterion_9_training_design():
    """Orthogonal training and exact guard isolation on every config used."""
    ok = True
    worst = 0.0
    for cfg in TEST_MATRIX:
        sched = design_training(cfg)
        G = sched.S.conj().T @ sched.S
        off = np.abs(G - np.diag(np.diag(G))).max() / np.abs(np.diag(G)).max()
        worst = max(worst, off)
        ok &= off <= 1e-10

        rng = trial_rng(9, 0, 0)
        ch = build_channel(sample_paths(cfg, rng), cfg)
        comb = build_combiners(cfg, rng)
        bodies = np.array(np.broadcast_to(sched.body, (cfg.n_frames, cfg.K, cfg.frame_len)))
        y0 = simulate_frames(ch, sched, comb, cfg, bodies)
        bodies2 = bodies.copy()
        bodies2[1] += 1.0 + 1.0j
        y1 = simulate_frames(ch, sched, comb, cfg, bodies2)
        per_frame = cfg.R * cfg.frame_len
        mask = np.ones(cfg.n_obs, dtype=bool)
        mask[per_frame : 2 * per_frame] = False
        ok &= np.array_equal(y0[mask], y1[mask])
    report(9, ok, f"{len(TEST_MATRIX)} configs: worst relative off-diagonal {worst:.2e} (tol 1e-10), guard isolation bit-identical")


def test_criterion_10_iteration_census_trend():
    """On-grid variant needs more greedy iterations at moderate/high SNR."""
    ecfg = ExperimentConfig(
        base=CFG_ORDERING, snr_db=(0.0, 5.0), bits=(2, 4), trials=20, estimators=("nfcfgs", "fcfgs"), seed=10
    )
    table = iteration_census(ecfg)
    ok = all(r["iterations_fcfgs"] > r["iterations_nfcfgs"] for r in table)
    detail = "; ".join(
        f"SNR {r['snr_db']:g} B={r['bits']}: ({r['iterations_nfcfgs']:.1f}, {r['iterations_fcfgs']:.1f})"
        for r in table
    )
    report(10, ok, detail + " [(nfcfgs, fcfgs) mean iterations]")


def test_criterion_11_determinism(tmp_path):
    """Same master seed, any worker count: byte-identical CSV (timing aside)."""
    ecfg = ExperimentConfig(
        base=CFG_SMALL, snr_db=(0.0, 5.0), bits=(2,), trials=3, estimators=("nfcfgs", "fcfgs"), seed=11
    )
    emit_results(nmse_sweep(ecfg), tmp_path / "a", ecfg)
    emit_results(nmse_sweep(dataclasses.replace(ecfg, workers=2)), tmp_path / "b", ecfg)
    emit_results(nmse_sweep(ecfg), tmp_path / "c", ecfg)
    a = strip_timing((tmp_path / "a" / "results.csv").read_text())
    b = strip_timing((tmp_path / "b" / "results.csv").read_text())
    c = strip_timing((tmp_path / "c" / "results.csv").read_text())
    ok = a == b == c
    report(11, ok, f"rerun and 2-worker CSVs byte-identical: {ok} ({len(a.splitlines()) - 1} rows)")
