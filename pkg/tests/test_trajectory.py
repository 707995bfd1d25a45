import csv
import math

import numpy as np
import pytest

from beacontrack.errors import InvalidInputError
from beacontrack.trajectory import (
    BeamWander,
    MirrorDisturbance,
    OcclusionSchedule,
    PassProfile,
    angular_rate,
    disturbed_position,
    is_visible,
    pixel_velocity,
    sample_times,
    true_position,
    write_truth_csv,
)

CV = PassProfile(kind="CV", transit_time=120.0, origin_px=(10.0, 20.0), velocity_px_s=(2.0, -0.5))
CJ = PassProfile(kind="CJ", origin_px=(255.5, 255.5))


def test_cv_displacement_is_velocity_times_duration():
    x0, y0 = true_position(CV, 0.0)
    x1, y1 = true_position(CV, CV.transit_time)
    assert (x1 - x0, y1 - y0) == (2.0 * 120.0, -0.5 * 120.0)


def test_times_outside_pass_rejected():
    for t in (-0.1, 120.1):
        with pytest.raises(InvalidInputError):
            true_position(CV, t)


def test_cj_rate_peaks_at_mid_pass():
    assert angular_rate(CJ, 60.0) > angular_rate(CJ, 0.0)


def _overpass_rate(profile, t):
    # independent flat-ground law for an overhead pass
    v = 2 * profile.altitude_km * math.tan(math.radians(profile.zenith_window_deg)) / profile.transit_time
    h = profile.altitude_km
    tp = t - profile.transit_time / 2
    return v * h / (h * h + (v * tp) ** 2)


def test_cj_pixel_speed_matches_overpass_law():
    for t in np.linspace(0, CJ.transit_time, 97):
        speed = math.hypot(*pixel_velocity(CJ, float(t)))
        expect = _overpass_rate(CJ, float(t)) * CJ.px_per_mrad * 1000
        assert speed == pytest.approx(expect, rel=1e-9)


def test_cj_velocity_is_derivative_of_position():
    for profile in (CJ, PassProfile(kind="CJ", max_elevation_deg=60, transit_time=300, orientation_deg=25)):
        for t in (5.0, 40.0, profile.transit_time / 2 + 3.0):
            h = 1e-4
            xp, yp = true_position(profile, t + h)
            xm, ym = true_position(profile, t - h)
            vx, vy = pixel_velocity(profile, t)
            assert vx == pytest.approx((xp - xm) / (2 * h), rel=1e-6, abs=1e-9)
            assert vy == pytest.approx((yp - ym) / (2 * h), rel=1e-6, abs=1e-9)


def test_cj_speed_symmetric_about_mid_pass():
    for t in np.linspace(0, 60, 31):
        a = math.hypot(*pixel_velocity(CJ, float(t)))
        b = math.hypot(*pixel_velocity(CJ, CJ.transit_time - float(t)))
        assert a == pytest.approx(b, rel=1e-9)


def test_mid_pass_sits_at_zenith_distance_of_peak_elevation():
    p30 = PassProfile(kind="CJ", max_elevation_deg=30, origin_px=(0.0, 0.0))
    x, y = true_position(p30, p30.transit_time / 2)
    assert math.hypot(x, y) == pytest.approx(math.radians(60) * p30.px_per_rad, rel=1e-12)
    assert true_position(CJ, CJ.transit_time / 2) == pytest.approx(CJ.origin_px, abs=1e-12)


def test_per_frame_step_bounded_by_peak_rate():
    ts = sample_times(CJ, 20.0)
    pts = np.array([true_position(CJ, float(t)) for t in ts])
    steps = np.hypot(*np.diff(pts, axis=0).T)
    bound = angular_rate(CJ, CJ.transit_time / 2) * CJ.px_per_rad / 20.0
    assert steps.max() <= bound * (1 + 1e-9)


def test_along_track_acceleration_flips_once_at_mid_pass():
    ts = np.linspace(0.5, CJ.transit_time - 0.5, 239)
    speed = np.array([pixel_velocity(CJ, float(t))[0] for t in ts])
    accel = np.diff(speed)
    flips = np.flatnonzero(np.diff(np.sign(accel)) != 0)
    assert len(flips) == 1
    assert abs(ts[flips[0] + 1] - CJ.transit_time / 2) < 1.0


def test_empty_schedule_always_visible():
    assert all(is_visible(OcclusionSchedule(), (x, 0), t) for x, t in [(0, 0), (100, 50), (-3, 119)])


def test_interval_blocks_half_open():
    s = OcclusionSchedule(intervals=((10.0, 20.0),))
    assert not is_visible(s, (0, 0), 10.0)
    assert not is_visible(s, (0, 0), 19.99)
    assert is_visible(s, (0, 0), 20.0)


def test_blind_spot_blocks_at_any_time():
    s = OcclusionSchedule(blind_spot_center=(50, 50), blind_spot_radius=5)
    assert not is_visible(s, (50, 50), 0.0)
    assert not is_visible(s, (50, 50), 99.0)
    assert is_visible(s, (56, 50), 0.0)


def test_overlapping_intervals_rejected():
    with pytest.raises(InvalidInputError):
        OcclusionSchedule(intervals=((0, 10), (5, 15)))


def test_disturbance_zero_amplitude_is_identity():
    assert disturbed_position((3.0, 4.0), MirrorDisturbance(amplitude_px=0, frequency_hz=1), 0.37) == (3.0, 4.0)


def test_sine_starts_at_zero_phase():
    d = MirrorDisturbance(amplitude_px=40, frequency_hz=0.2)
    assert disturbed_position((3.0, 4.0), d, 0.0) == (3.0, 4.0)


def test_triangle_reaches_amplitude_at_quarter_period():
    d = MirrorDisturbance(waveform="triangle", amplitude_px=7, frequency_hz=0.5)
    assert disturbed_position((1.0, 1.0), d, 0.5) == pytest.approx((8.0, 1.0))
    # linear ramp: an eighth period gives half the amplitude
    assert d.offset(0.25) == pytest.approx(3.5)


def test_disturbance_follows_axis():
    d = MirrorDisturbance(amplitude_px=2, frequency_hz=0.25, axis=(0.0, 3.0))
    assert disturbed_position((0.0, 0.0), d, 1.0) == pytest.approx((0.0, 2.0))


def test_wander_off_draws_nothing():
    rng = np.random.default_rng(0)
    assert BeamWander().sample(rng) == (0.0, 0.0)
    assert rng.random() == np.random.default_rng(0).random()


def test_truth_csv(tmp_path):
    s = OcclusionSchedule(intervals=((1.0, 2.0),))
    p = PassProfile(kind="CV", transit_time=3.0)
    write_truth_csv(tmp_path / "truth.csv", p, s, 20.0)
    rows = list(csv.DictReader(open(tmp_path / "truth.csv")))
    assert len(rows) == 60
    assert list(rows[0]) == ["t", "x_true", "y_true", "visible"]
    assert [int(r["visible"]) for r in rows[18:42]] == [1, 1] + [0] * 20 + [1, 1]
