import numpy as np
import pytest

from swmimo.numerics import (
    complex_from_real,
    log_cdf_diff,
    rc_pulse,
    rc_pulse_d012,
    real_form,
    zc_sequence,
)

RNG = np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# real forms
# ---------------------------------------------------------------------------


def test_real_form_vector_rule():
    np.testing.assert_allclose(real_form(np.array([1 + 2j])), [1.0, 2.0])


def test_real_form_matrix_rule():
    np.testing.assert_allclose(real_form(np.array([[1j]])), [[0.0, -1.0], [1.0, 0.0]])


def test_real_form_action_matches_complex_multiply():
    X = RNG.standard_normal((4, 3)) + 1j * RNG.standard_normal((4, 3))
    z = RNG.standard_normal(3) + 1j * RNG.standard_normal(3)
    lhs = real_form(X) @ real_form(z)
    np.testing.assert_allclose(lhs, real_form(X @ z), atol=1e-12)


def test_real_form_ring_homomorphism():
    for _ in range(5):
        X = RNG.standard_normal((3, 4)) + 1j * RNG.standard_normal((3, 4))
        Y = RNG.standard_normal((4, 2)) + 1j * RNG.standard_normal((4, 2))
        np.testing.assert_allclose(real_form(X @ Y), real_form(X) @ real_form(Y), atol=1e-12)


def test_complex_from_real_roundtrip():
    z = RNG.standard_normal(5) + 1j * RNG.standard_normal(5)
    np.testing.assert_allclose(complex_from_real(real_form(z)), z)


# ---------------------------------------------------------------------------
# raised cosine
# ---------------------------------------------------------------------------

TS = 1.0 / 600e6
BETA = 0.35


def test_rc_pulse_peak():
    assert rc_pulse(0.0, TS, BETA) == 1.0


@pytest.mark.parametrize("k", [-3, -2, -1, 1, 2, 3])
def test_rc_pulse_nyquist_zeros(k):
    assert abs(rc_pulse(k * TS, TS, BETA)) < 1e-12


def test_rc_pulse_singular_point_limit():
    ts = TS / (2 * BETA)
    analytic = (np.pi / 4) * np.sinc(1 / (2 * BETA))
    assert rc_pulse(ts, TS, BETA) == pytest.approx(analytic, rel=1e-12)
    for eps in (1e-9 * TS, -1e-9 * TS):
        assert rc_pulse(ts + eps, TS, BETA) == pytest.approx(analytic, rel=1e-6)


@pytest.mark.parametrize("eps", [1e-6 * TS, 1e-7 * TS, 1e-9 * TS])
def test_rc_pulse_continuity_at_singularity(eps):
    ts = TS / (2 * BETA)
    slope = abs(rc_pulse_d012(ts, TS, BETA)[1])
    bound = 4.0 * max(slope, 1.0 / TS) * eps
    assert abs(rc_pulse(ts, TS, BETA) - rc_pulse(ts + eps, TS, BETA)) <= bound
    assert abs(rc_pulse(ts, TS, BETA) - rc_pulse(ts - eps, TS, BETA)) <= bound


@pytest.mark.parametrize("beta", [0.1, 0.35, 0.5, 1.0])
def test_rc_pulse_derivatives_match_finite_differences(beta):
    ts_sing = TS / (2 * beta)
    pts = [0.0, 0.3 * TS, -1.7 * TS, ts_sing, ts_sing + 3e-5 * TS, -ts_sing, 2.2 * TS]
    h1, h2 = 1e-7 * TS, 1e-4 * TS
    for t in pts:
        p, d1, d2 = rc_pulse_d012(t, TS, beta)
        assert p == pytest.approx(rc_pulse(t, TS, beta), rel=1e-12)
        fd1 = (rc_pulse(t + h1, TS, beta) - rc_pulse(t - h1, TS, beta)) / (2 * h1)
        fd2 = (rc_pulse(t + h2, TS, beta) - 2 * rc_pulse(t, TS, beta) + rc_pulse(t - h2, TS, beta)) / h2**2
        assert d1 == pytest.approx(fd1, rel=1e-4, abs=1e-4 / TS)
        assert d2 == pytest.approx(fd2, rel=1e-3, abs=1e-3 / TS**2)


def test_rc_pulse_rejects_bad_args():
    with pytest.raises(ValueError):
        rc_pulse(0.0, -1.0, BETA)
    with pytest.raises(ValueError):
        rc_pulse(0.0, TS, 0.0)
    with pytest.raises(ValueError):
        rc_pulse(0.0, TS, 1.2)


# ---------------------------------------------------------------------------
# censored-Gaussian log probabilities
# ---------------------------------------------------------------------------


def test_log_cdf_diff_total_probability():
    assert log_cdf_diff(-np.inf, np.inf, 0.3, 2.0) == 0.0


def test_log_cdf_diff_half_line():
    assert log_cdf_diff(-np.inf, 1.7, 1.7, 0.4) == pytest.approx(np.log(0.5), rel=1e-14)


def test_log_cdf_diff_far_tail_matches_quadrature():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 60

    def oracle(lo, hi):
        # subdivide: tanh-sinh nodes under-resolve the steep tail otherwise
        phi = lambda x: mpmath.exp(-(x**2) / 2) / mpmath.sqrt(2 * mpmath.pi)
        return float(mpmath.log(mpmath.quad(phi, mpmath.linspace(lo, hi, 41))))

    for lo, hi in [(10.0, 11.0), (-11.0, -10.0), (2.0, 2.5), (-0.3, 0.4), (25.0, 30.0)]:
        got = float(log_cdf_diff(np.array([lo]), np.array([hi]), np.array([0.0]), 1.0)[0])
        assert got == pytest.approx(oracle(lo, hi), rel=1e-10)


def test_log_cdf_diff_monotonicity():
    his = np.linspace(-3.0, 3.0, 25)
    vals = log_cdf_diff(np.full_like(his, -4.0), his, 0.0, 1.0)
    assert np.all(np.diff(vals) > 0)
    los = np.linspace(-3.0, 3.0, 25)
    vals = log_cdf_diff(los, np.full_like(los, 4.0), 0.0, 1.0)
    assert np.all(np.diff(vals) < 0)


def test_log_cdf_diff_partition_sums_to_one():
    edges = np.concatenate([[-np.inf], np.sort(RNG.standard_normal(12)) * 2, [np.inf]])
    logs = log_cdf_diff(edges[:-1], edges[1:], 0.7, 1.3)
    assert np.exp(logs).sum() == pytest.approx(1.0, abs=1e-12)


def test_log_cdf_diff_degenerate_interval_underflows_to_neg_inf():
    assert np.isneginf(log_cdf_diff(np.array([1.0]), np.array([1.0]), np.array([0.0]), 1.0))[0]


# ---------------------------------------------------------------------------
# Zadoff-Chu
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n,root", [(11, 1), (11, 3), (16, 1), (12, 5)])
def test_zc_unit_modulus(n, root):
    z = zc_sequence(n, root, 2 % n)
    np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-13)


def test_zc_shift_gram_is_identity():
    n = 11
    shifts = np.stack([zc_sequence(n, 1, s) for s in range(n)])
    gram = shifts @ shifts.conj().T
    np.testing.assert_allclose(gram, n * np.eye(n), atol=1e-10 * n)


def test_zc_zero_shift_starts_at_one():
    assert zc_sequence(11, 1, 0)[0] == pytest.approx(1.0)


def test_zc_rejects_non_coprime_root():
    with pytest.raises(ValueError):
        zc_sequence(12, 3, 0)


def test_zc_rejects_bad_shift():
    with pytest.raises(ValueError):
        zc_sequence(11, 1, 11)
