"""True beacon motion on the sensor plane, occlusions and mirror disturbance.

Two pass profiles are supported. ``CV`` moves the spot at a fixed pixel
velocity. ``CJ`` places a satellite on a straight, constant-speed track at
altitude ``h`` and projects its line of sight in a worm's-eye (zenith-centred,
azimuthal-equidistant) view: radius is the zenith angle, direction the
azimuth. Along a zenith pass that gives the familiar overpass law
``omega(t) = v h / (h^2 + (v t')^2)`` with ``t'`` measured from mid-pass.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

_T_TOL = 1e-9


@dataclass(frozen=True)
class PassProfile:
    kind: str = "CV"
    transit_time: float = 120.0
    origin_px: tuple[float, float] = (255.5, 255.5)
    # CV only
    velocity_px_s: tuple[float, float] = (2.0, 0.0)
    # CJ only
    max_elevation_deg: float = 90.0
    altitude_km: float = 700.0
    zenith_window_deg: float = 30.0
    px_per_mrad: float = 0.35
    orientation_deg: float = 0.0

    def __post_init__(self):
        if self.kind not in ("CV", "CJ"):
            raise InvalidInputError(f"pass kind must be CV or CJ, got {self.kind!r}")
        if self.transit_time <= 0:
            raise InvalidInputError("transit_time must be positive")
        if self.kind == "CJ":
            if not 0 < self.max_elevation_deg <= 90:
                raise InvalidInputError("max_elevation_deg must lie in (0, 90]")
            if self.altitude_km <= 0 or self.px_per_mrad <= 0:
                raise InvalidInputError("altitude_km and px_per_mrad must be positive")
            if not 0 < self.zenith_window_deg < 90:
                raise InvalidInputError("zenith_window_deg must lie in (0, 90)")

    @property
    def closest_range_km(self) -> float:
        return self.altitude_km / math.sin(math.radians(self.max_elevation_deg))

    @property
    def cross_track_km(self) -> float:
        if self.max_elevation_deg >= 90:
            return 0.0
        return self.altitude_km / math.tan(math.radians(self.max_elevation_deg))

    @property
    def ground_speed_km_s(self) -> float:
        # sweep the along-track angle from -window to +window over the transit
        return 2.0 * self.closest_range_km * math.tan(math.radians(self.zenith_window_deg)) / self.transit_time

    @property
    def px_per_rad(self) -> float:
        return self.px_per_mrad * 1000.0

    def _rotate(self, dx: float, dy: float) -> tuple[float, float]:
        c, s = math.cos(math.radians(self.orientation_deg)), math.sin(math.radians(self.orientation_deg))
        return c * dx - s * dy, s * dx + c * dy


def _check_time(profile: PassProfile, t: float) -> None:
    if not -_T_TOL <= t <= profile.transit_time + _T_TOL:
        raise InvalidInputError(f"t={t} outside [0, {profile.transit_time}]")


def true_position(profile: PassProfile, t: float) -> tuple[float, float]:
    """Sub-pixel beacon position at time ``t`` (seconds from pass start)."""
    _check_time(profile, t)
    ox, oy = profile.origin_px
    if profile.kind == "CV":
        vx, vy = profile.velocity_px_s
        return ox + vx * t, oy + vy * t
    h = profile.altitude_km
    u = profile.ground_speed_km_s * (t - profile.transit_time / 2.0)
    c = profile.cross_track_km
    if c == 0.0:
        local = (profile.px_per_rad * math.atan2(u, h), 0.0)
    else:
        s = math.hypot(u, c)
        zenith = math.atan2(s, h)
        f = profile.px_per_rad * zenith / s
        local = (f * u, f * c)
    dx, dy = profile._rotate(*local)
    return ox + dx, oy + dy


def pixel_velocity(profile: PassProfile, t: float) -> tuple[float, float]:
    """Time derivative of :func:`true_position` in px/s."""
    _check_time(profile, t)
    if profile.kind == "CV":
        return tuple(profile.velocity_px_s)
    h = profile.altitude_km
    v = profile.ground_speed_km_s
    u = v * (t - profile.transit_time / 2.0)
    c = profile.cross_track_km
    k = profile.px_per_rad
    if c == 0.0:
        local = (k * v * h / (h * h + u * u), 0.0)
    else:
        s = math.hypot(u, c)
        zenith = math.atan2(s, h)
        ds = u * v / s
        dz = h / (s * s + h * h) * ds
        f = zenith / s
        df = (dz * s - zenith * ds) / (s * s)
        local = (k * (df * u + f * v), k * df * c)
    return profile._rotate(*local)


def angular_rate(profile: PassProfile, t: float) -> float:
    """Apparent line-of-sight rate in rad/s for a CJ pass."""
    vx, vy = pixel_velocity(profile, t)
    return math.hypot(vx, vy) / (profile.px_per_rad if profile.kind == "CJ" else 1.0)


@dataclass(frozen=True)
class OcclusionSchedule:
    """Cloud-blocking intervals ``[t_start, t_end)`` and an optional blind-spot disc."""

    intervals: tuple[tuple[float, float], ...] = ()
    blind_spot_center: tuple[float, float] | None = None
    blind_spot_radius: float = 0.0

    def __post_init__(self):
        prev_end = -math.inf
        for start, end in self.intervals:
            if end < start:
                raise InvalidInputError(f"interval ({start}, {end}) ends before it starts")
            if start < prev_end:
                raise InvalidInputError("occlusion intervals must be disjoint and ordered")
            prev_end = end
        if self.blind_spot_radius < 0:
            raise InvalidInputError("blind_spot_radius must be non-negative")


def is_visible(schedule: OcclusionSchedule, pos, t: float) -> bool:
    for start, end in schedule.intervals:
        if start <= t < end:
            return False
    if schedule.blind_spot_center is not None and schedule.blind_spot_radius > 0:
        cx, cy = schedule.blind_spot_center
        if math.hypot(pos[0] - cx, pos[1] - cy) < schedule.blind_spot_radius:
            return False
    return True


@dataclass(frozen=True)
class MirrorDisturbance:
    waveform: str = "sine"
    amplitude_px: float = 0.0
    frequency_hz: float = 0.0
    axis: tuple[float, float] = field(default=(1.0, 0.0))

    def __post_init__(self):
        if self.waveform not in ("sine", "triangle"):
            raise InvalidInputError(f"waveform must be sine or triangle, got {self.waveform!r}")
        if self.amplitude_px < 0 or self.frequency_hz < 0:
            raise InvalidInputError("amplitude and frequency must be non-negative")

    def offset(self, t: float) -> float:
        phase = 2.0 * math.pi * self.frequency_hz * t
        if self.waveform == "sine":
            return self.amplitude_px * math.sin(phase)
        # unit triangle: 0 at t=0, +1 at a quarter period
        return self.amplitude_px * math.asin(max(-1.0, min(1.0, math.sin(phase)))) / (math.pi / 2.0)


@dataclass(frozen=True)
class BeamWander:
    """Random frame-to-frame beam wander on the sensor (turbulence, platform jitter).

    Independent Gaussian offsets with standard deviation ``sd_px`` per axis,
    drawn each frame; the true line of sight is unaffected.
    """

    sd_px: float = 0.0

    def __post_init__(self):
        if self.sd_px < 0:
            raise InvalidInputError("sd_px must be non-negative")

    def sample(self, rng: np.random.Generator) -> tuple[float, float]:
        if self.sd_px == 0.0:
            return 0.0, 0.0
        dx, dy = self.sd_px * rng.standard_normal(2)
        return float(dx), float(dy)


def disturbed_position(base, d: MirrorDisturbance, t: float) -> tuple[float, float]:
    if d.amplitude_px == 0.0:
        return float(base[0]), float(base[1])
    off = d.offset(t)
    ax, ay = d.axis
    norm = math.hypot(ax, ay)
    return base[0] + off * ax / norm, base[1] + off * ay / norm


def sample_times(profile: PassProfile, frame_rate: float) -> np.ndarray:
    n = int(round(profile.transit_time * frame_rate))
    return np.arange(n) / frame_rate


def write_truth_csv(path, profile: PassProfile, schedule: OcclusionSchedule, frame_rate: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x_true", "y_true", "visible"])
        for t in sample_times(profile, frame_rate):
            x, y = true_position(profile, float(t))
            writer.writerow([f"{t:.6f}", f"{x:.6f}", f"{y:.6f}", int(is_visible(schedule, (x, y), float(t)))])
