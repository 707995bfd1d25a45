"""Synthetic tracking-camera frames containing a Gaussian beacon spot.

Coordinates follow the image convention used throughout the package:
``x`` is the column index ``i`` and ``y`` the row index ``j``, so
``frame.pixels[j, i]`` is the intensity at ``(x=i, y=j)``.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInputError

# detection floor sits this many read-noise sd above the floor mean
_DETECT_MARGIN_SD = 3.25


@dataclass(frozen=True)
class CameraModel:
    """Sensor geometry, exposure settings and radiometric response."""

    width_px: int = 512
    height_px: int = 512
    pixel_pitch_um: float = 4.63
    frame_rate: float = 20.0
    exposure_s: float = 32e-6
    gain: float = 120.0
    bit_depth: int = 8
    noise_floor_mean: float = 4.0
    noise_floor_sd: float = 3.0
    saturation_power: float = 6.0e-6
    min_detect_power: float = 0.03e-6
    conversion_gain: float = 4.0  # DN per photo-electron; scales shot-noise variance

    def __post_init__(self):
        if self.width_px < 16 or self.height_px < 16:
            raise InvalidInputError("frame dimensions must be at least 16x16")
        if self.pixel_pitch_um <= 0:
            raise InvalidInputError("pixel_pitch_um must be positive")
        if self.frame_rate <= 0:
            raise InvalidInputError("frame_rate must be positive")
        if not 0 < self.min_detect_power < self.saturation_power:
            raise InvalidInputError("need 0 < min_detect_power < saturation_power")
        if self.bit_depth != 8:
            raise InvalidInputError("only 8-bit output frames are supported")

    @property
    def full_scale(self) -> int:
        return 2**self.bit_depth - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_px, self.width_px)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.width_px - 1) / 2.0, (self.height_px - 1) / 2.0)

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate


@dataclass(frozen=True)
class BeamModel:
    """Beacon spot on the sensor. ``waist_px`` is the 1/e^2 radius."""

    wavelength_nm: float = 638.0
    waist_px: float = 12.0
    optical_power: float = 5.55e-6

    def __post_init__(self):
        if self.waist_px <= 0:
            raise InvalidInputError("waist_px must be positive")
        if self.optical_power < 0:
            raise InvalidInputError("optical_power must be non-negative")


@dataclass(frozen=True)
class NoiseModel:
    """Sensor noise terms.

    ``fixed_pattern`` is a per-pixel offset map with the frame's shape (or
    ``None`` for no offset). ``read_noise`` draws temporal Gaussian noise with
    the camera's ``noise_floor_sd``.
    """

    fixed_pattern: np.ndarray | None = None
    salt_pepper_prob: float = 0.0
    salt_value: int = 255
    pepper_value: int = 0
    shot_noise: bool = False
    read_noise: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.salt_pepper_prob <= 1.0:
            raise InvalidInputError("salt_pepper_prob must lie in [0, 1]")

    def check_shape(self, cam: CameraModel) -> None:
        if self.fixed_pattern is not None and self.fixed_pattern.shape != cam.shape:
            raise InvalidInputError(
                f"fixed_pattern shape {self.fixed_pattern.shape} != frame shape {cam.shape}"
            )

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def realistic(
        cls,
        cam: CameraModel,
        seed: int = 0,
        pattern_sd: float = 2.0,
        salt_pepper_prob: float = 1e-3,
    ) -> "NoiseModel":
        """Fixed pattern around the camera floor plus all stochastic terms."""
        rng = np.random.default_rng(seed)
        pattern = cam.noise_floor_mean + pattern_sd * rng.standard_normal(cam.shape)
        pattern = np.clip(pattern, 0.0, cam.full_scale)
        return cls(
            fixed_pattern=pattern,
            salt_pepper_prob=salt_pepper_prob,
            shot_noise=True,
            read_noise=True,
            seed=seed,
        )


@dataclass
class Frame:
    pixels: np.ndarray
    timestamp: float = 0.0
    seq: int = 0

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@functools.lru_cache(maxsize=64)
def response_curvature(cam: CameraModel) -> float:
    """Curvature ``k`` of the saturating response curve.

    Chosen so that ``cam.min_detect_power`` yields a peak signal just above
    the detection floor (floor mean + 3.25 read-noise sd).
    """
    x = cam.min_detect_power / cam.saturation_power
    target = cam.noise_floor_mean + _DETECT_MARGIN_SD * cam.noise_floor_sd
    full = cam.full_scale
    if target <= full * x:
        # a linear response already clears the floor
        return 1e-9
    if target >= full:
        raise InvalidInputError("detection floor is above full scale")

    def excess(k):
        return full * math.expm1(-k * x) / math.expm1(-k) - target

    return brentq(excess, 1e-9, 1.0 / x * 50.0, xtol=1e-14, rtol=1e-14)


def camera_response(power, cam: CameraModel):
    """Mean signal (above the noise floor) that a pixel receiving ``power`` reports.

    Concave and saturating: ``full * (1 - exp(-k p/p_sat)) / (1 - exp(-k))``,
    equal to full scale at and above the saturation power. Accepts scalars or
    arrays.
    """
    p = np.asarray(power, dtype=np.float64)
    k = response_curvature(cam)
    x = np.clip(p, 0.0, cam.saturation_power) / cam.saturation_power
    value = cam.full_scale * np.expm1(-k * x) / math.expm1(-k)
    value = np.minimum(value, float(cam.full_scale))
    return float(value) if value.ndim == 0 else value


def spot_window(x: float, y: float, waist_px: float, cam: CameraModel):
    """Row/column slices bounding the rendered spot, clipped to the frame."""
    radius = int(math.ceil(3.0 * waist_px)) + 1
    cx, cy = int(round(x)), int(round(y))
    c0, c1 = max(cx - radius, 0), min(cx + radius + 1, cam.width_px)
    r0, r1 = max(cy - radius, 0), min(cy + radius + 1, cam.height_px)
    return slice(r0, r1), slice(c0, c1)


def spot_signal(true_pos, beam: BeamModel, cam: CameraModel):
    """Noise-free signal patch ``(rows, cols, values)``; ``None`` when off-frame.

    The Gaussian irradiance ``P * exp(-r^2 / (2 (w/2)^2))`` passes through the
    camera response pixel by pixel, so the centre pixel reads
    ``camera_response(P)`` and the spot widens as the core saturates.
    """
    x, y = true_pos
    rows, cols = spot_window(x, y, beam.waist_px, cam)
    if rows.start >= rows.stop or cols.start >= cols.stop or beam.optical_power <= 0:
        return None
    ii = np.arange(cols.start, cols.stop, dtype=np.float64) - x
    jj = np.arange(rows.start, rows.stop, dtype=np.float64) - y
    sigma = beam.waist_px / 2.0
    gx = np.exp(-(ii**2) / (2.0 * sigma**2))
    gy = np.exp(-(jj**2) / (2.0 * sigma**2))
    return rows, cols, camera_response(beam.optical_power * np.outer(gy, gx), cam)


def signal_image(true_pos, beam: BeamModel, cam: CameraModel) -> np.ndarray:
    """Full-frame noise-free, unquantized signal."""
    img = np.zeros(cam.shape)
    patch = spot_signal(true_pos, beam, cam)
    if patch is not None:
        rows, cols, values = patch
        img[rows, cols] = values
    return img


def render_frame(
    true_pos,
    beam: BeamModel,
    cam: CameraModel,
    noise: NoiseModel,
    occluded: bool,
    rng: np.random.Generator,
    *,
    seq: int = 0,
    timestamp: float = 0.0,
) -> Frame:
    """Render one quantized 8-bit frame.

    The random draws happen in a fixed order (read noise, shot noise,
    salt-and-pepper) so a given generator state always yields the same frame.
    """
    noise.check_shape(cam)
    h, w = cam.shape
    if noise.read_noise and cam.noise_floor_sd > 0:
        img = rng.standard_normal((h, w), dtype=np.float32)
        img *= np.float32(cam.noise_floor_sd)
    else:
        img = np.zeros((h, w), dtype=np.float32)
    if noise.fixed_pattern is not None:
        img += noise.fixed_pattern

    if not occluded:
        patch = spot_signal(true_pos, beam, cam)
        if patch is not None:
            rows, cols, signal = patch
            if noise.shot_noise:
                signal = signal + np.sqrt(cam.conversion_gain * signal) * rng.standard_normal(signal.shape)
            img[rows, cols] += signal

    np.rint(img, out=img)
    np.clip(img, 0.0, cam.full_scale, out=img)
    out = img.astype(np.uint8)

    if noise.salt_pepper_prob > 0:
        # same law as an independent per-pixel coin: binomial count, uniform positions
        n_hit = int(rng.binomial(h * w, noise.salt_pepper_prob))
        if n_hit:
            where = rng.choice(h * w, size=n_hit, replace=False)
            salt = rng.random(n_hit) < 0.5
            out.ravel()[where] = np.where(salt, noise.salt_value, noise.pepper_value).astype(np.uint8)

    return Frame(out, timestamp=timestamp, seq=seq)


def make_dark_frame(
    cam: CameraModel, noise: NoiseModel, n_avg: int, rng: np.random.Generator
) -> Frame:
    """Per-pixel mean of ``n_avg`` noise-only frames (float intensities)."""
    if n_avg < 1:
        raise InvalidInputError("n_avg must be >= 1")
    acc = np.zeros(cam.shape, dtype=np.float64)
    dummy = BeamModel(optical_power=0.0)
    for _ in range(n_avg):
        acc += render_frame((0.0, 0.0), dummy, cam, noise, True, rng).pixels
    return Frame(acc / n_avg)


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    if pixels.dtype == np.uint8:
        return pixels
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write a binary (P5, maxval 255) portable graymap."""
    data = to_uint8(np.asarray(pixels))
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P5":
        raise InvalidInputError(f"not a binary graymap: magic {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise InvalidInputError(f"unsupported maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).copy()


def frame_filename(seq: int) -> str:
    return f"frame_{seq:06d}.pgm"


def write_frame(directory, frame: Frame) -> Path:
    path = Path(directory) / frame_filename(frame.seq)
    os.makedirs(path.parent, exist_ok=True)
    write_pgm(path, frame.pixels)
    return path
