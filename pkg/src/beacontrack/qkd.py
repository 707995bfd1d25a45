"""Secret-key-rate penalties from residual pointing error.

Two protocols are covered: decoy-state BB84 with a finite-key correction, and
Gaussian-modulated coherent-state CV-QKD with homodyne detection and reverse
reconciliation against collective attacks. Losses in dB map to transmittance
as ``T = 10 ** (-L / 10)`` everywhere.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError

VACUUM_TOL = 1e-12
PHYSICAL_TOL = 1e-9


def db_to_transmittance(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class LinkGeometry:
    """Quantum-signal receiver: wavelength (nm) and aperture diameter (m)."""

    wavelength_nm: float = 850.0
    aperture_m: float = 0.10

    def __post_init__(self):
        if self.wavelength_nm <= 0 or self.aperture_m <= 0:
            raise InvalidInputError("wavelength and aperture must be positive")

    @property
    def theta_d(self) -> float:
        """Receiver field of view ``1.22 lambda / D`` in radians."""
        return 1.22 * self.wavelength_nm * 1e-9 / self.aperture_m


@dataclass(frozen=True)
class Bb84Params:
    mu: float = 0.5
    nu: float = 0.1
    p_dark: float = 1e-6
    e_det: float = 0.01
    e_trk: float = 0.0
    f_ec: float = 1.16
    n_pulses: float = 1e14
    p_mu: float = 0.5
    eps_pa: float = 1e-10
    f_clk: float = 1e9
    q_sift: float = 1.0
    n_max: int = 20

    def __post_init__(self):
        if not 0 < self.nu < self.mu:
            raise InvalidInputError("need 0 < nu < mu")
        for name in ("p_dark", "e_det", "e_trk", "p_mu", "eps_pa", "q_sift"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        if self.f_ec < 1:
            raise InvalidInputError("f_ec must be >= 1")
        if self.n_pulses < 1:
            raise InvalidInputError("n_pulses must be >= 1")
        if self.n_max < 1:
            raise InvalidInputError("n_max must be >= 1")


@dataclass(frozen=True)
class CvqkdParams:
    """Modulation and noise in shot-noise units; ``xi`` is referred to Alice."""

    v_a: float = 4.0
    xi: float = 0.01
    eta_d: float = 0.6
    v_el: float = 0.05
    beta: float = 0.95

    def __post_init__(self):
        if self.v_a <= 0:
            raise InvalidInputError("v_a must be positive")
        if not 0 < self.eta_d <= 1:
            raise InvalidInputError("eta_d must lie in (0, 1]")
        if self.xi < 0 or self.v_el < 0:
            raise InvalidInputError("xi and v_el must be non-negative")
        if not 0 <= self.beta <= 1:
            raise InvalidInputError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class TrackingErrorReport:
    sigma_theta: float
    label: str = ""

    def __post_init__(self):
        if self.sigma_theta < 0:
            raise InvalidInputError("sigma_theta must be non-negative")


def tracking_efficiency(sigma_theta: float, theta_d: float) -> float:
    """Coupling efficiency ``exp(-sigma^2 / theta_d^2)``."""
    if theta_d <= 0:
        raise InvalidInputError("theta_d must be positive")
    if sigma_theta < 0:
        raise InvalidInputError("sigma_theta must be non-negative")
    return math.exp(-(sigma_theta**2) / theta_d**2)


def effective_transmittance(t_ch: float, eta_trk: float) -> float:
    if not (0 < t_ch <= 1 and 0 < eta_trk <= 1):
        raise InvalidInputError("transmittance and efficiency must lie in (0, 1]")
    return t_ch * eta_trk


def tracking_error_rate(sigma_theta: float, coefficient: float = 0.0) -> float:
    """Optional linear map from pointing error to basis error ``e_trk``."""
    return min(0.5, coefficient * sigma_theta)


# --- decoy-state BB84 --------------------------------------------------------


def poisson(n: int, x: float) -> float:
    if x == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-x + n * math.log(x) - math.lgamma(n + 1))


def yield_n(n: int, t_eff: float, p_dark: float) -> float:
    """``Y_n = 1 - (1 - p_dark)(1 - T)^n``; vacuum yields the dark count."""
    if n < 0:
        raise InvalidInputError("photon number must be >= 0")
    return 1.0 - (1.0 - p_dark) * (1.0 - t_eff) ** n


def gain(x: float, t_eff: float, p_dark: float, n_max: int) -> float:
    """Overall gain ``Q_x``, Poisson sum truncated at ``n_max``."""
    if x < 0:
        raise InvalidInputError("intensity must be >= 0")
    return math.fsum(poisson(n, x) * yield_n(n, t_eff, p_dark) for n in range(n_max + 1))


def photon_error(n: int, t_eff: float, p_dark: float, e_det: float, e_trk: float) -> float:
    y = yield_n(n, t_eff, p_dark)
    if y <= 0:
        raise InvalidInputError(f"Y_{n} = 0: error rate undefined")
    return ((e_det + e_trk) * (1.0 - (1.0 - t_eff) ** n) + p_dark / 2.0) / y


def qber(x: float, t_eff: float, p_dark: float, e_det: float, e_trk: float, n_max: int) -> float:
    q = gain(x, t_eff, p_dark, n_max)
    if q <= 0:
        raise InvalidInputError("Q_x = 0: QBER undefined")
    # Y_n e_n written out, so a zero-yield term (vacuum without dark counts) contributes 0
    e = e_det + e_trk
    errs = math.fsum(
        poisson(n, x) * (e * (1.0 - (1.0 - t_eff) ** n) + p_dark / 2.0) for n in range(n_max + 1)
    )
    return errs / q


def binary_entropy(p: float) -> float:
    if not 0 <= p <= 1:
        raise InvalidInputError("probability must lie in [0, 1]")
    if p == 0 or p == 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def _entropy_clamped(p: float) -> float:
    # error rates above 1/2 cost a full bit
    return 1.0 if p >= 0.5 else binary_entropy(p)


@dataclass(frozen=True)
class Bb84Breakdown:
    t_eff: float
    q_mu: float
    e_mu: float
    y1: float
    e1: float
    q1: float
    delta_fk: float
    raw: float
    rate: float
    rate_bps: float


def bb84_breakdown(params: Bb84Params, t_eff: float) -> Bb84Breakdown:
    p = params
    q_mu = gain(p.mu, t_eff, p.p_dark, p.n_max)
    if q_mu <= 0:
        return Bb84Breakdown(t_eff, 0.0, 0.5, 0.0, 0.5, 0.0, math.inf, -math.inf, 0.0, 0.0)
    e_mu = qber(p.mu, t_eff, p.p_dark, p.e_det, p.e_trk, p.n_max)
    y1 = yield_n(1, t_eff, p.p_dark)
    e1 = photon_error(1, t_eff, p.p_dark, p.e_det, p.e_trk)
    q1 = p.mu * math.exp(-p.mu) * y1
    delta = math.sqrt(math.log(2.0 / p.eps_pa) / (2.0 * p.n_pulses * p.p_mu * q_mu))
    raw = p.q_sift * (q1 * (1.0 - _entropy_clamped(e1)) - q_mu * p.f_ec * _entropy_clamped(e_mu) - delta)
    rate = max(0.0, raw)
    return Bb84Breakdown(t_eff, q_mu, e_mu, y1, e1, q1, delta, raw, rate, rate * p.f_clk)


def bb84_key_rate(params: Bb84Params, geometry: LinkGeometry, sigma_theta: float, loss_db: float) -> tuple[float, float]:
    """Finite-key rate per pulse and in bit/s for a channel of ``loss_db``."""
    eta = tracking_efficiency(sigma_theta, geometry.theta_d)
    b = bb84_breakdown(params, effective_transmittance(db_to_transmittance(loss_db), eta))
    return b.rate, b.rate_bps


# --- CV-QKD ------------------------------------------------------------------


def _check_t(t_eff: float) -> None:
    if not 0 < t_eff <= 1:
        raise InvalidInputError("T_eff must lie in (0, 1]")


def detector_noise(params: CvqkdParams) -> float:
    """Homodyne detection noise referred to Bob's input, ``(1 - eta + v_el) / eta``."""
    return (1.0 - params.eta_d) / params.eta_d + params.v_el / params.eta_d


def total_noise(t_eff: float, params: CvqkdParams) -> float:
    """``chi_tot`` referred to the channel input."""
    _check_t(t_eff)
    return (1.0 - t_eff) / t_eff + params.xi + detector_noise(params) / t_eff


def cv_snr(t_eff: float, params: CvqkdParams) -> float:
    """Homodyne signal-to-noise ratio ``V_A / (1 + chi_tot)``."""
    return params.v_a / (1.0 + total_noise(t_eff, params))


def cv_mutual_information(t_eff: float, params: CvqkdParams) -> float:
    """``I_AB = 1/2 log2((V + chi_tot) / (1 + chi_tot))`` with ``V = V_A + 1``."""
    chi = total_noise(t_eff, params)
    v = params.v_a + 1.0
    return 0.5 * math.log2((v + chi) / (1.0 + chi))


def g_entropy(x: float) -> float:
    """Von Neumann entropy of a thermal mode with symplectic eigenvalue ``x``."""
    if x < 1.0 - PHYSICAL_TOL:
        raise InvalidInputError(f"symplectic eigenvalue {x} below 1")
    if x - 1.0 <= VACUUM_TOL:
        return 0.0
    a, b = (x + 1.0) / 2.0, (x - 1.0) / 2.0
    return a * math.log2(a) - b * math.log2(b)


def _pair(s: float, p: float) -> tuple[float, float]:
    # roots of l^4 - s l^2 + p = 0
    disc = max(s * s - 4.0 * p, 0.0)
    root = math.sqrt(disc)
    return math.sqrt(max((s + root) / 2.0, 0.0)), math.sqrt(max((s - root) / 2.0, 0.0))


def covariance_ab(t_eff: float, params: CvqkdParams) -> np.ndarray:
    """4x4 covariance of Alice's EPR mode and Bob's received mode (before detection).

    Ordering ``(xA, pA, xB, pB)``. Exposed so an alternative channel model can
    replace the standard thermal-loss one.
    """
    _check_t(t_eff)
    v = params.v_a + 1.0
    chi_line = (1.0 - t_eff) / t_eff + params.xi
    a = v
    b = t_eff * (v + chi_line)
    c = math.sqrt(t_eff * (v * v - 1.0))
    z = np.diag([1.0, -1.0])
    out = np.zeros((4, 4))
    out[:2, :2] = a * np.eye(2)
    out[2:, 2:] = b * np.eye(2)
    out[:2, 2:] = c * z
    out[2:, :2] = c * z
    return out


def symplectic_eigenvalues(t_eff: float, params: CvqkdParams) -> tuple[float, float, float, float]:
    """Eve's eigenvalues ``(L1, L2)`` and her eigenvalues conditioned on Bob's homodyne ``(L3, L4)``.

    Detector inefficiency and electronic noise are trusted; the extra trusted
    mode contributes an eigenvalue of exactly 1.
    """
    _check_t(t_eff)
    v = params.v_a + 1.0
    t = t_eff
    chi_line = (1.0 - t) / t + params.xi
    chi_hom = detector_noise(params)
    chi_tot = chi_line + chi_hom / t

    big_a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) ** 2
    big_b = t * t * (v * chi_line + 1.0) ** 2
    l1, l2 = _pair(big_a, math.sqrt(big_b) ** 2)

    sqrt_b = math.sqrt(big_b)
    big_c = (v * sqrt_b + t * (v + chi_line) + big_a * chi_hom) / (t * (v + chi_tot))
    big_d = sqrt_b * (v + sqrt_b * chi_hom) / (t * (v + chi_tot))
    l3, l4 = _pair(big_c, big_d)
    return l1, l2, l3, l4


def cv_holevo(t_eff: float, params: CvqkdParams) -> float:
    """Holevo bound ``chi_BE = g(L1) + g(L2) - g(L3) - g(L4)`` (reverse reconciliation)."""
    lams = symplectic_eigenvalues(t_eff, params)
    for lam in lams:
        if lam < 1.0 - PHYSICAL_TOL:
            raise InvalidInputError(f"non-physical covariance: symplectic eigenvalue {lam}")
    l1, l2, l3, l4 = lams
    return g_entropy(l1) + g_entropy(l2) - g_entropy(l3) - g_entropy(l4)


def cv_key_rate(t_eff: float, params: CvqkdParams) -> float:
    return max(0.0, params.beta * cv_mutual_information(t_eff, params) - cv_holevo(t_eff, params))


# --- sweeps --------------------------------------------------------------------

SWEEP_COLUMNS = ("loss_db", "r_dv_low", "r_dv_high", "k_cv_low", "k_cv_high")


@dataclass(frozen=True)
class SweepRow:
    loss_db: float
    r_dv_low: float
    r_dv_high: float
    k_cv_low: float
    k_cv_high: float


def rate_vs_loss_sweep(
    loss_grid,
    sigma_low: float,
    sigma_high: float,
    bb84: Bb84Params = Bb84Params(),
    cv: CvqkdParams = CvqkdParams(),
    geometry: LinkGeometry = LinkGeometry(),
) -> list[SweepRow]:
    """DV and CV key rates per channel use for the low- and high-power pointing errors."""
    losses = list(loss_grid)
    if not losses:
        raise InvalidInputError("loss grid must be non-empty")
    eta_low = tracking_efficiency(sigma_low, geometry.theta_d)
    eta_high = tracking_efficiency(sigma_high, geometry.theta_d)
    rows = []
    for loss in losses:
        t_ch = db_to_transmittance(loss)
        t_low = effective_transmittance(t_ch, eta_low)
        t_high = effective_transmittance(t_ch, eta_high)
        rows.append(
            SweepRow(
                float(loss),
                bb84_breakdown(bb84, t_low).rate,
                bb84_breakdown(bb84, t_high).rate,
                cv_key_rate(t_low, cv),
                cv_key_rate(t_high, cv),
            )
        )
    return rows


def write_sweep_csv(path, rows, *, sigma_low, sigma_high, bb84, cv, geometry) -> None:
    """Sweep table with the parameter set echoed as ``#`` comment lines."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# sigma_low_rad = {sigma_low!r}\n# sigma_high_rad = {sigma_high!r}\n")
        fh.write(f"# theta_d_rad = {geometry.theta_d!r}\n")
        for prefix, obj in (("geometry", geometry), ("bb84", bb84), ("cv", cv)):
            for key, value in asdict(obj).items():
                fh.write(f"# {prefix}.{key} = {value!r}\n")
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([repr(float(getattr(row, c))) for c in SWEEP_COLUMNS])
