import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beacontrack.centroid import Detection, detect_beacon
from beacontrack.control import (
    FsmModel,
    angle_to_pixel,
    calibrate_fsm,
    closed_loop_step,
    command_fsm,
    pixel_to_angle,
)
from beacontrack.errors import InvalidInputError
from beacontrack.frames import BeamModel, CameraModel, Frame, NoiseModel, render_frame


def _det(x, y):
    return Detection((x, y), 10, 100.0, 5)


# --- calibration --------------------------------------------------------------


def test_forty_five_degree_calibration():
    assert calibrate_fsm(45.0, 100.0) == pytest.approx(100.0, rel=1e-15)


def test_one_degree_bench_calibration():
    assert calibrate_fsm(1.0, 1.7455) == pytest.approx(100.0, abs=0.005)


def test_calibration_linear_in_delta_x():
    assert calibrate_fsm(2.0, 3.0) == pytest.approx(2 * calibrate_fsm(2.0, 1.5), rel=1e-15)


@pytest.mark.parametrize("theta", [0.0, 90.0, -95.0])
def test_calibration_rejects_degenerate_angles(theta):
    with pytest.raises(InvalidInputError):
        calibrate_fsm(theta, 1.0)


def test_pixel_to_angle_examples():
    assert pixel_to_angle(0.0, 4.63, 100.0) == 0.0
    assert pixel_to_angle(1000.0, 5.0, 5.0) == pytest.approx(45.0, rel=1e-15)
    assert pixel_to_angle(100.0, 4.63, 100.0) == pytest.approx(0.2653, abs=5e-5)
    assert pixel_to_angle(-100.0, 4.63, 100.0) == -pixel_to_angle(100.0, 4.63, 100.0)


def test_round_trip_below_tenth_pixel():
    for px in np.linspace(-499, 499, 101):
        back = angle_to_pixel(pixel_to_angle(float(px), 4.63, 100.0), 4.63, 100.0)
        assert abs(back - px) < 0.1


# --- clamping -------------------------------------------------------------------


def test_in_range_request_applied_exactly():
    fsm, cmd = command_fsm(FsmModel(), (0.5, -1.25))
    assert fsm.angle == (0.5, -1.25)
    assert cmd.delta_angle == (0.5, -1.25) and not cmd.saturated and not cmd.handoff


def test_clamp_at_limit_signals_handoff():
    fsm, cmd = command_fsm(FsmModel(angle=(3.5, 0.0)), (1.0, 0.0))
    assert fsm.angle == (4.0, 0.0)
    assert cmd.saturated and cmd.handoff
    assert cmd.delta_angle == (0.5, 0.0)


def test_large_negative_request_clamped():
    fsm, cmd = command_fsm(FsmModel(), (-8.0, 0.0))
    assert fsm.angle == (-4.0, 0.0) and cmd.saturated


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=30))
def test_angle_never_exceeds_limit(requests):
    fsm = FsmModel(max_deflection_deg=4.0)
    for req in requests:
        fsm, _ = command_fsm(fsm, req)
        assert abs(fsm.angle[0]) <= 4.0 and abs(fsm.angle[1]) <= 4.0


def test_model_validation():
    with pytest.raises(InvalidInputError):
        FsmModel(distance_mm=0)
    with pytest.raises(InvalidInputError):
        FsmModel(angle=(4.5, 0))
    with pytest.raises(InvalidInputError):
        FsmModel(latency_frames=-1)


# --- closed loop ----------------------------------------------------------------

CENTER = (127.5, 127.5)


def test_centroid_at_center_gives_zero_command():
    fsm = FsmModel()
    for _ in range(10):
        fsm, cmd = closed_loop_step(_det(*CENTER), None, CENTER, fsm)
        assert cmd.delta_angle == (0.0, 0.0)


def test_estimate_used_when_occluded():
    _, cmd = closed_loop_step(None, (CENTER[0] + 10, CENTER[1]), CENTER, FsmModel())
    assert cmd.delta_angle[0] == pytest.approx(pixel_to_angle(10, 4.63, 100.0))


def test_one_shot_recentring_with_rendered_frames():
    cam = CameraModel(width_px=256, height_px=256)
    sky = (cam.center[0] + 50.0, cam.center[1])
    beam = BeamModel(waist_px=6, optical_power=2e-6)
    dark = Frame(np.zeros(cam.shape, dtype=np.uint8))
    fsm = FsmModel(distance_mm=calibrate_fsm(1.0, 1.7455), pixel_pitch_um=cam.pixel_pitch_um)

    def observe():
        sx, sy = fsm.shift_px()
        f = render_frame((sky[0] - sx, sky[1] - sy), beam, cam, NoiseModel.none(), False, np.random.default_rng(0))
        return detect_beacon(f, dark)

    fsm, _ = closed_loop_step(observe(), None, cam.center, fsm)
    det = observe()
    assert math.dist(det.centroid, cam.center) < 1.0


def _ideal_loop(latency, gain=1.0, frames=400, amplitude=40.0, freq=0.2, dt=0.05):
    fsm = FsmModel(latency_frames=latency, gain=gain)
    resid = []
    for k in range(frames):
        sky = CENTER[0] + amplitude * math.sin(2 * math.pi * freq * k * dt)
        spot = sky - fsm.shift_px()[0]
        resid.append(spot - CENTER[0])
        fsm, _ = closed_loop_step(_det(spot, CENTER[1]), None, CENTER, fsm)
    return np.sqrt(np.mean(np.square(resid)))


def test_latency_worsens_residual():
    assert _ideal_loop(3) > _ideal_loop(0)


def test_latency_delays_first_command():
    fsm = FsmModel(latency_frames=2)
    cmds = []
    for _ in range(4):
        fsm, cmd = closed_loop_step(_det(CENTER[0] + 5, CENTER[1]), None, CENTER, fsm)
        cmds.append(cmd.delta_angle[0])
    assert cmds[:2] == [0.0, 0.0] and cmds[2] > 0


def test_positive_offset_is_reduced_next_frame():
    for offset in (0.5, 3.0, 80.0):
        fsm = FsmModel()
        sky = CENTER[0] + offset
        fsm, _ = closed_loop_step(_det(sky, CENTER[1]), None, CENTER, fsm)
        assert abs(sky - fsm.shift_px()[0] - CENTER[0]) < offset
