"""Beacon identification: dark subtraction, opening, Otsu, blob, moments."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DegenerateHistogramError, InvalidInputError
from .frames import Frame, write_pgm

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class PipelineConfig:
    opening_kernel: int = 3
    min_area: int = 5
    # Weakest accepted spot. Rectified read noise left after dark subtraction
    # rarely survives the opening above ~3 DN, and the clusters that do carry
    # far less summed intensity than even a 0.03 uW spot.
    min_peak: int = 4
    min_total: float = 64.0

    def __post_init__(self):
        if self.opening_kernel < 1 or self.opening_kernel % 2 == 0:
            raise InvalidInputError("opening_kernel must be odd and >= 1")
        if self.min_area < 1:
            raise InvalidInputError("min_area must be >= 1")
        if not 0 <= self.min_peak <= 255:
            raise InvalidInputError("min_peak must lie in [0, 255]")
        if self.min_total < 0:
            raise InvalidInputError("min_total must be non-negative")


@dataclass(frozen=True)
class Component:
    """Pixel set of one connected blob, as row (``ys``) and column (``xs``) indices."""

    ys: np.ndarray
    xs: np.ndarray

    @property
    def area(self) -> int:
        return int(self.xs.size)


@dataclass(frozen=True)
class Detection:
    centroid: tuple[float, float]
    area_px: int
    total_intensity: float
    threshold_used: int


def _pixels(frame) -> np.ndarray:
    return frame.pixels if isinstance(frame, Frame) else np.asarray(frame)


def dark_subtract(frame: Frame, dark: Frame) -> Frame:
    """Per-pixel ``max(frame - dark, 0)``, rounded back to 8 bits."""
    f, d = _pixels(frame), _pixels(dark)
    if f.shape != d.shape:
        raise InvalidInputError(f"frame shape {f.shape} != dark shape {d.shape}")
    diff = np.subtract(f, d, dtype=np.float64)
    np.rint(diff, out=diff)
    out = np.clip(diff, 0, 255, out=diff).astype(np.uint8)
    return Frame(out, getattr(frame, "timestamp", 0.0), getattr(frame, "seq", 0))


def morphological_open(frame: Frame, kernel: int) -> Frame:
    """Grayscale erosion then dilation over a ``kernel`` x ``kernel`` square.

    Borders replicate the edge pixel.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidInputError(f"opening kernel must be odd and >= 1, got {kernel}")
    px = _pixels(frame)
    if kernel == 1:
        out = px.copy()
    else:
        out = _window_filter(_window_filter(px, kernel, np.minimum), kernel, np.maximum)
    return Frame(out, getattr(frame, "timestamp", 0.0), getattr(frame, "seq", 0))


def _window_filter(px: np.ndarray, kernel: int, op) -> np.ndarray:
    """Separable square-window min or max with edge replication."""
    r = kernel // 2
    h, w = px.shape
    padded = np.pad(px, ((0, 0), (r, r)), mode="edge")
    rows = padded[:, 0:w].copy()
    for dx in range(1, kernel):
        op(rows, padded[:, dx : dx + w], out=rows)
    padded = np.pad(rows, ((r, r), (0, 0)), mode="edge")
    out = padded[0:h].copy()
    for dy in range(1, kernel):
        op(out, padded[dy : dy + h], out=out)
    return out


def _better(num_a: int, den_a: int, num_b: int, den_b: int) -> bool:
    # num_a/den_a > num_b/den_b with positive denominators
    return num_a * den_b > num_b * den_a


def otsu_threshold(frame: Frame) -> tuple[int, np.ndarray]:
    """Otsu threshold over the 256-bin histogram.

    Returns ``(t, mask)`` with ``mask = pixels > t``. ``t`` maximizes the
    between-class variance of the split ``{<= t}`` vs ``{> t}``; exact ties go
    to the lowest ``t``. Raises :class:`DegenerateHistogramError` when every
    pixel has the same value.
    """
    px = _pixels(frame)
    if px.size == 0:
        raise InvalidInputError("empty frame")
    vals = to_bins(px)
    hist = np.bincount(vals.ravel(), minlength=256).astype(np.int64)
    n_total = int(hist.sum())
    s_total = int(np.dot(hist, np.arange(256, dtype=np.int64)))

    n0 = np.cumsum(hist)
    s0 = np.cumsum(hist * np.arange(256, dtype=np.int64))
    valid = (n0 > 0) & (n0 < n_total)
    if not valid.any():
        raise DegenerateHistogramError("constant frame has no Otsu split")

    # between-class variance ∝ (S0*N - S*n0)^2 / (n0*n1); float pass to shortlist,
    # exact integer comparison to settle near-ties
    n0f = n0.astype(np.float64)
    num_f = (s0.astype(np.float64) * n_total - s_total * n0f) ** 2
    den_f = n0f * (n_total - n0f)
    score = np.full(256, -1.0)
    score[valid] = num_f[valid] / den_f[valid]
    best = score.max()
    shortlist = np.flatnonzero(valid & (score >= best * (1.0 - 1e-9)))

    t_best = -1
    num_best, den_best = 0, 1
    for t in shortlist:
        a, s = int(n0[t]), int(s0[t])
        num = (s * n_total - s_total * a) ** 2
        den = a * (n_total - a)
        if t_best < 0 or _better(num, den, num_best, den_best):
            t_best, num_best, den_best = int(t), num, den
    return t_best, px > t_best


def to_bins(px: np.ndarray) -> np.ndarray:
    if px.dtype == np.uint8:
        return px
    return np.clip(np.rint(px), 0, 255).astype(np.uint8)


def largest_component(mask: np.ndarray, intensity=None, min_area: int = 1) -> Component | None:
    """Largest 8-connected foreground blob.

    Ties on pixel count go to the larger total of ``intensity`` (if given),
    then to the smaller top-left bounding-box corner (row, then column).
    Returns ``None`` when there is no foreground or the winner is smaller than
    ``min_area``.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n == 0:
        return None
    index = np.arange(1, n + 1)
    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    candidates = index[areas == areas.max()]
    if candidates.size > 1:
        if intensity is not None:
            src = _pixels(intensity).astype(np.float64)
            totals = ndimage.sum_labels(src, labels, candidates)
            candidates = candidates[totals == totals.max()]
        if candidates.size > 1:
            boxes = ndimage.find_objects(labels)
            candidates = np.array(
                sorted(candidates, key=lambda lab: (boxes[lab - 1][0].start, boxes[lab - 1][1].start))
            )
    label = int(candidates[0])
    if areas[label - 1] < min_area:
        return None
    box = ndimage.find_objects(labels, max_label=label)[label - 1]
    ys, xs = np.nonzero(labels[box] == label)
    return Component(ys=ys + box[0].start, xs=xs + box[1].start)


def moments_centroid(component: Component, frame: Frame) -> tuple[float, float]:
    """Intensity-weighted first moments ``(sum I*x / sum I, sum I*y / sum I)``."""
    if component.area == 0:
        raise InvalidInputError("empty component")
    weights = _pixels(frame)[component.ys, component.xs].astype(np.float64)
    total = weights.sum()
    if total <= 0:
        raise InvalidInputError("component has zero total intensity")
    return float(np.dot(weights, component.xs) / total), float(np.dot(weights, component.ys) / total)


@dataclass
class PipelineStages:
    subtracted: Frame
    opened: Frame
    mask: np.ndarray | None
    threshold: int | None


def run_pipeline(frame: Frame, dark: Frame, cfg: PipelineConfig) -> tuple[Detection | None, PipelineStages]:
    subtracted = dark_subtract(frame, dark)
    opened = morphological_open(subtracted, cfg.opening_kernel)
    try:
        threshold, mask = otsu_threshold(opened)
    except DegenerateHistogramError:
        return None, PipelineStages(subtracted, opened, None, None)
    stages = PipelineStages(subtracted, opened, mask, threshold)
    component = largest_component(mask, opened, cfg.min_area)
    if component is None or int(opened.pixels[component.ys, component.xs].max()) < cfg.min_peak:
        return None, stages
    total = float(subtracted.pixels[component.ys, component.xs].sum())
    if total <= 0 or total < cfg.min_total:
        return None, stages
    centroid = moments_centroid(component, subtracted)
    return Detection(centroid, component.area, total, threshold), stages


def detect_beacon(frame: Frame, dark: Frame, cfg: PipelineConfig = PipelineConfig()) -> Detection | None:
    """Locate the beacon, or return ``None`` when nothing survives the pipeline.

    ``None`` is how occlusion shows up downstream.
    """
    detection, _ = run_pipeline(frame, dark, cfg)
    return detection


def dump_stages(directory, seq: int, stages: PipelineStages) -> None:
    """Write the intermediate images as ``{stage}_{seq:06d}.pgm``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_pgm(directory / f"subtracted_{seq:06d}.pgm", stages.subtracted.pixels)
    write_pgm(directory / f"opened_{seq:06d}.pgm", stages.opened.pixels)
    if stages.mask is not None:
        write_pgm(directory / f"mask_{seq:06d}.pgm", stages.mask.astype(np.uint8) * 255)
