"""Fine-steering-mirror calibration, clamping, latency and recentring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import InvalidInputError


def calibrate_fsm(theta_cal_deg: float, delta_x: float) -> float:
    """Mirror-to-sensor distance from a known deflection: ``d = dx / tan(theta)``.

    ``d`` comes back in the length unit of ``delta_x``.
    """
    if theta_cal_deg == 0 or abs(theta_cal_deg) >= 90:
        raise InvalidInputError(f"calibration angle must be non-zero and below 90 deg, got {theta_cal_deg}")
    return delta_x / math.tan(math.radians(theta_cal_deg))


def pixel_to_angle(displacement_px: float, pitch_um: float, d_mm: float) -> float:
    """Mirror angle in degrees that moves the spot by ``displacement_px``."""
    if d_mm <= 0:
        raise InvalidInputError("distance d must be positive")
    return math.degrees(math.atan(displacement_px * pitch_um * 1e-3 / d_mm))


def angle_to_pixel(angle_deg: float, pitch_um: float, d_mm: float) -> float:
    """Inverse of :func:`pixel_to_angle`."""
    if d_mm <= 0:
        raise InvalidInputError("distance d must be positive")
    return d_mm * math.tan(math.radians(angle_deg)) / (pitch_um * 1e-3)


@dataclass(frozen=True)
class FsmCommand:
    delta_angle: tuple[float, float]
    saturated: bool = False
    handoff: bool = False
    requested: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class FsmModel:
    """Mirror state. ``pending`` holds requested corrections still in flight."""

    max_deflection_deg: float = 4.0
    distance_mm: float = 100.0
    pixel_pitch_um: float = 4.63
    latency_frames: int = 0
    gain: float = 1.0
    angle: tuple[float, float] = (0.0, 0.0)
    pending: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if self.distance_mm <= 0:
            raise InvalidInputError("distance_mm must be positive (calibrate first)")
        if self.max_deflection_deg <= 0:
            raise InvalidInputError("max_deflection_deg must be positive")
        if self.latency_frames < 0:
            raise InvalidInputError("latency_frames must be >= 0")
        if not 0 < self.gain <= 1.0:
            raise InvalidInputError("gain must lie in (0, 1]")
        if any(abs(a) > self.max_deflection_deg for a in self.angle):
            raise InvalidInputError("angle exceeds max_deflection_deg")

    def shift_px(self, angle=None) -> tuple[float, float]:
        """On-sensor spot shift produced by ``angle`` (default: current angle)."""
        ax, ay = self.angle if angle is None else angle
        return (
            angle_to_pixel(ax, self.pixel_pitch_um, self.distance_mm),
            angle_to_pixel(ay, self.pixel_pitch_um, self.distance_mm),
        )

    def reset(self) -> "FsmModel":
        return replace(self, angle=(0.0, 0.0), pending=())


def command_fsm(fsm: FsmModel, requested) -> tuple[FsmModel, FsmCommand]:
    """Apply an incremental angle, clamped to the mirror's range.

    A clamp raises both ``saturated`` and ``handoff``; the caller then hands the
    remaining correction to the coarse mount.
    """
    limit = fsm.max_deflection_deg
    target = (fsm.angle[0] + requested[0], fsm.angle[1] + requested[1])
    clamped = tuple(max(-limit, min(limit, a)) for a in target)
    saturated = clamped != target
    delta = (clamped[0] - fsm.angle[0], clamped[1] - fsm.angle[1])
    cmd = FsmCommand(delta, saturated, saturated, (float(requested[0]), float(requested[1])))
    return replace(fsm, angle=clamped), cmd


def closed_loop_step(detection, estimate, frame_center, fsm: FsmModel) -> tuple[FsmModel, FsmCommand]:
    """One frame of the recentring loop.

    The target is the detected centroid, or the filter estimate (sensor
    coordinates) while the beacon is occluded. The resulting correction joins
    a FIFO; with ``latency_frames = L`` the correction computed ``L`` frames
    ago is the one applied now.
    """
    target = detection.centroid if detection is not None else estimate
    if target is None:
        correction = (0.0, 0.0)
    else:
        dx = target[0] - frame_center[0]
        dy = target[1] - frame_center[1]
        correction = (
            fsm.gain * pixel_to_angle(dx, fsm.pixel_pitch_um, fsm.distance_mm),
            fsm.gain * pixel_to_angle(dy, fsm.pixel_pitch_um, fsm.distance_mm),
        )
    queue = fsm.pending + (correction,)
    if len(queue) <= fsm.latency_frames:
        return replace(fsm, pending=queue), FsmCommand((0.0, 0.0))
    due, queue = queue[0], queue[1:]
    fsm, cmd = command_fsm(replace(fsm, pending=queue), due)
    return fsm, cmd
