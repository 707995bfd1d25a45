import csv
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beacontrack.errors import InvalidInputError
from beacontrack.qkd import (
    Bb84Params,
    CvqkdParams,
    LinkGeometry,
    bb84_breakdown,
    bb84_key_rate,
    binary_entropy,
    covariance_ab,
    cv_holevo,
    cv_key_rate,
    cv_mutual_information,
    cv_snr,
    db_to_transmittance,
    effective_transmittance,
    g_entropy,
    gain,
    photon_error,
    qber,
    rate_vs_loss_sweep,
    symplectic_eigenvalues,
    total_noise,
    tracking_efficiency,
    write_sweep_csv,
    yield_n,
)

import oracles
from harness import cv_parameter_grid

GEO = LinkGeometry()
BB = Bb84Params(n_pulses=1e12)
CVP = CvqkdParams()


# --- tracking efficiency ------------------------------------------------------


def test_tracking_efficiency_examples():
    assert tracking_efficiency(0.0, 1e-5) == 1.0
    assert tracking_efficiency(1e-5, 1e-5) == pytest.approx(math.exp(-1), rel=1e-15)
    assert tracking_efficiency(2e-5, 1e-5) == pytest.approx(0.018316, rel=1e-4)


def test_tracking_efficiency_strictly_decreasing():
    vals = [tracking_efficiency(s, 1.0) for s in np.linspace(0, 3, 50)]
    assert vals[0] == 1.0 and all(b < a for a, b in zip(vals, vals[1:]))


def test_tracking_efficiency_rejects_bad_fov():
    with pytest.raises(InvalidInputError):
        tracking_efficiency(0.1, 0.0)


def test_receiver_fov():
    assert GEO.theta_d == pytest.approx(1.22 * 850e-9 / 0.1, rel=1e-15)


def test_effective_transmittance():
    assert effective_transmittance(0.3, 1.0) == 0.3
    assert effective_transmittance(db_to_transmittance(30), 0.5) == pytest.approx(5e-4, rel=1e-12)
    with pytest.raises(InvalidInputError):
        effective_transmittance(0.0, 0.5)


# --- BB84 pieces ---------------------------------------------------------------


def test_yield_examples():
    assert yield_n(0, 0.3, 1e-6) == pytest.approx(1e-6, rel=1e-9)
    assert yield_n(3, 1.0, 1e-6) == 1.0
    assert yield_n(2, 0.1, 1e-5) == pytest.approx(1 - (1 - 1e-5) * 0.81, rel=1e-14)
    assert yield_n(2, 0.1, 1e-5) == pytest.approx(0.19001, abs=1e-5)


def test_gain_examples():
    assert gain(0.5, 1.0, 0.0, 40) == pytest.approx(1 - math.exp(-0.5), rel=1e-14)
    assert gain(0.0, 0.2, 3e-6, 20) == pytest.approx(3e-6, rel=1e-9)
    assert abs(gain(0.5, 1e-3, 1e-5, 10) - gain(0.5, 1e-3, 1e-5, 50)) < 1e-12


def test_photon_error_examples():
    assert photon_error(2, 1.0, 0.0, 0.01, 0.02) == pytest.approx(0.03, rel=1e-14)
    assert photon_error(0, 0.4, 1e-6, 0.01, 0.0) == pytest.approx(0.5, rel=1e-9)


def test_photon_error_matches_direct_formula():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(0, 8))
        t, pd, ed, et = rng.uniform(1e-4, 1), 10 ** rng.uniform(-8, -3), rng.uniform(0, 0.1), rng.uniform(0, 0.1)
        y = 1 - (1 - pd) * (1 - t) ** n
        want = ((ed + et) * (1 - (1 - t) ** n) + pd / 2) / y
        assert photon_error(n, t, pd, ed, et) == pytest.approx(want, rel=1e-12)


def test_qber_limits():
    assert qber(0.5, 0.1, 0.0, 0.0, 0.0, 20) == 0.0
    assert qber(0.5, 1e-12, 1e-6, 0.01, 0.0, 20) == pytest.approx(0.5, abs=1e-4)


def test_qber_at_thirty_db_matches_oracle():
    t = db_to_transmittance(30)
    mp = mpmath.mp
    mp.dps = 40
    T, mu, pd, e = map(mpmath.mpf, (t, 0.5, 1e-6, 0.01))
    Y = lambda n: 1 - (1 - pd) * (1 - T) ** n
    P = lambda n: mpmath.e ** (-mu) * mu**n / mpmath.factorial(n)
    Q = mpmath.fsum(P(n) * Y(n) for n in range(21))
    E = mpmath.fsum(P(n) * (e * (1 - (1 - T) ** n) + pd / 2) for n in range(21)) / Q
    assert qber(0.5, t, 1e-6, 0.01, 0.0, 20) == pytest.approx(float(E), rel=1e-12)


def test_binary_entropy_examples():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.11) == pytest.approx(0.49992, abs=1e-5)
    with pytest.raises(InvalidInputError):
        binary_entropy(1.5)


@pytest.mark.parametrize("t", [1e-5, 1e-3, 0.3])
def test_truncation_stability(t):
    for fn in (lambda n: gain(0.5, t, 1e-6, n), lambda n: qber(0.5, t, 1e-6, 0.01, 0.0, n)):
        assert abs(fn(20) - fn(40)) < 1e-10


def test_breakdown_matches_high_precision_chain():
    for loss in (10, 20, 30, 40):
        t = db_to_transmittance(loss)
        want = oracles.bb84_chain(t, 0.5, 1e-6, 0.01, 0.0, 1.16, 1e12, 0.5, 1e-10)
        assert bb84_breakdown(BB, t).rate == pytest.approx(want, rel=1e-9)


def test_rate_zero_when_errors_saturate():
    assert bb84_breakdown(Bb84Params(e_det=0.3, e_trk=0.25), 0.01).rate == 0.0


def test_finite_key_rate_below_asymptotic():
    t = db_to_transmittance(30)
    asym = bb84_breakdown(Bb84Params(n_pulses=1e300), t)
    assert asym.delta_fk < 1e-140
    prev = 0.0
    for n in (1e9, 1e10, 1e12, 1e14, 1e16, 1e20):
        r = bb84_breakdown(Bb84Params(n_pulses=n), t).rate
        assert prev <= r <= asym.rate
        prev = r
    assert prev == pytest.approx(asym.rate, rel=1e-3)


def test_key_rate_in_bits_per_second():
    r, bps = bb84_key_rate(BB, GEO, 0.0, 30.0)
    assert r > 0 and bps == pytest.approx(r * BB.f_clk, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(5, 60), st.floats(0, 5e-5))
def test_bb84_monotone_in_loss_and_pointing(loss, sigma):
    r = bb84_key_rate(BB, GEO, sigma, loss)[0]
    assert bb84_key_rate(BB, GEO, sigma, loss + 1.0)[0] <= r
    assert bb84_key_rate(BB, GEO, sigma + 1e-6, loss)[0] <= r


@pytest.mark.parametrize("kwargs", [dict(nu=0.6), dict(f_ec=0.9), dict(p_dark=2.0), dict(n_pulses=0.5)])
def test_bb84_param_validation(kwargs):
    with pytest.raises(InvalidInputError):
        Bb84Params(**kwargs)


# --- CV-QKD --------------------------------------------------------------------

IDEAL = CvqkdParams(xi=0.0, eta_d=1.0, v_el=0.0)


def test_snr_noiseless_identity():
    assert cv_snr(1.0, CvqkdParams(v_a=4.0, xi=0.0, eta_d=1.0, v_el=0.0)) == 4.0


def test_snr_vanishes_with_transmittance():
    assert cv_snr(1e-12, CVP) < 1e-10


def test_snr_direct_evaluation():
    t = 0.1
    chi = (1 - t) / t + 0.01 + (1 / t) * ((1 - 0.6) / 0.6 + 0.05 / 0.6)
    assert total_noise(t, CVP) == pytest.approx(chi, rel=1e-15)
    assert cv_snr(t, CVP) == pytest.approx(4.0 / (1 + chi), rel=1e-15)


def test_mutual_information_examples():
    assert cv_mutual_information(1.0, IDEAL) == pytest.approx(0.5 * math.log2(5.0), rel=1e-15)
    assert cv_mutual_information(0.3, CvqkdParams(v_a=1e-9)) < 1e-9


@pytest.mark.parametrize("t", [1e-4, 0.01, 0.3, 1.0])
def test_mutual_information_is_shannon_capacity_of_snr(t):
    assert cv_mutual_information(t, CVP) == pytest.approx(0.5 * math.log2(1 + cv_snr(t, CVP)), rel=1e-12)


def test_g_entropy():
    assert g_entropy(1.0) == 0.0
    assert g_entropy(3.0) == pytest.approx(2 * math.log2(2) - 1 * math.log2(1), rel=1e-15)
    with pytest.raises(InvalidInputError):
        g_entropy(0.5)


def test_lossless_noiseless_channel_leaks_nothing():
    assert cv_holevo(1.0, CvqkdParams(xi=0.0)) == 0.0
    assert cv_holevo(1.0, IDEAL) == 0.0
    assert cv_holevo(1.0, CVP) > 0  # excess noise alone leaks


def test_ideal_lossless_rate():
    assert cv_key_rate(1.0, IDEAL) == pytest.approx(0.95 * 0.5 * math.log2(5), rel=1e-15)


def test_zero_reconciliation_efficiency_gives_zero_rate():
    assert cv_key_rate(0.5, CvqkdParams(beta=0.0)) == 0.0


def test_covariance_matches_oracle_eigen_route():
    gamma = covariance_ab(0.2, CVP)
    l1, l2, _, _ = symplectic_eigenvalues(0.2, CVP)
    spec = oracles.symplectic_spectrum(gamma)
    assert np.allclose(sorted([l1, l2]), spec, rtol=1e-10)


@pytest.mark.parametrize("t", [0.5, 0.1, 0.01])
def test_holevo_matches_eight_mode_oracle_standard_set(t):
    chi, spec_ab, spec_cond = oracles.holevo_numeric(t, 4.0, 0.01, 0.6, 0.05)
    l1, l2, l3, l4 = symplectic_eigenvalues(t, CVP)
    assert cv_holevo(t, CVP) == pytest.approx(chi, rel=1e-8, abs=1e-12)
    assert np.allclose(sorted([l1, l2]), spec_ab, rtol=1e-9)
    # the conditional state has one extra trusted mode at exactly the vacuum
    assert np.allclose(sorted([l3, l4, 1.0]), spec_cond, rtol=1e-8)


def test_eigenvalues_physical_over_grid():
    for t, v_a, xi, eta, v_el in cv_parameter_grid(60, seed=3):
        p = CvqkdParams(v_a=v_a, xi=xi, eta_d=eta, v_el=v_el)
        assert min(symplectic_eigenvalues(t, p)) >= 1 - 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(3, 60))
def test_cv_rate_monotone_in_loss(loss):
    a = cv_key_rate(db_to_transmittance(loss), CVP)
    b = cv_key_rate(db_to_transmittance(loss + 0.5), CVP)
    assert b <= a


def test_cv_rate_positive_at_thirty_db():
    assert cv_key_rate(db_to_transmittance(30), CVP) > 0


# --- sweep -----------------------------------------------------------------------


def test_equal_errors_give_identical_curves():
    rows = rate_vs_loss_sweep(range(10, 51), 1e-6, 1e-6)
    assert all(r.r_dv_low == r.r_dv_high and r.k_cv_low == r.k_cv_high for r in rows)


def test_every_curve_nonincreasing():
    rows = rate_vs_loss_sweep(np.arange(10, 50.5, 0.5), 0.27107 * GEO.theta_d, 0.02661 * GEO.theta_d)
    for col in ("r_dv_low", "r_dv_high", "k_cv_low", "k_cv_high"):
        vals = [getattr(r, col) for r in rows]
        assert all(b <= a for a, b in zip(vals, vals[1:])), col
    by_loss = {r.loss_db: r for r in rows}
    assert by_loss[40.0].r_dv_low <= by_loss[30.0].r_dv_low


def test_larger_pointing_error_never_helps():
    for r in rate_vs_loss_sweep(range(10, 51, 5), 0.3 * GEO.theta_d, 0.03 * GEO.theta_d):
        assert r.r_dv_low <= r.r_dv_high and r.k_cv_low <= r.k_cv_high


def test_empty_grid_rejected():
    with pytest.raises(InvalidInputError):
        rate_vs_loss_sweep([], 0.0, 0.0)


def test_sweep_csv_header_and_rows(tmp_path):
    rows = rate_vs_loss_sweep([10, 20], 1e-6, 2e-7)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, rows, sigma_low=1e-6, sigma_high=2e-7, bb84=BB, cv=CVP, geometry=GEO)
    text = path.read_text().splitlines()
    comments = [line for line in text if line.startswith("#")]
    assert any("bb84.mu = 0.5" in c for c in comments)
    body = list(csv.reader(line for line in text if not line.startswith("#")))
    assert body[0] == ["loss_db", "r_dv_low", "r_dv_high", "k_cv_low", "k_cv_high"]
    assert len(body) == 3 and float(body[1][1]) == rows[0].r_dv_low
