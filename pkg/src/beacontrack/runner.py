"""Per-frame experiment loop and artifact writers.

Coordinates: the filter works in *sky* pixels (where the beacon would land
with the mirror at rest and the mount at its starting pointing). The sensor
sees ``sky - mount_offset - fsm_shift``; a detection is mapped back to sky
coordinates by adding the same two offsets.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .centroid import detect_beacon, dump_stages, run_pipeline
from .config import ExperimentConfig
from .control import closed_loop_step, pixel_to_angle
from .errors import AcquisitionError, ConfigError
from .frames import NoiseModel, make_dark_frame, render_frame, write_frame
from .kalman import (
    LearningWindow,
    ZenithFlipTrigger,
    build_model,
    rms_error,
    score_pair,
    step,
    zenith_flip,
)
from .qkd import SweepRow, rate_vs_loss_sweep, write_sweep_csv
from .trajectory import disturbed_position, is_visible, sample_times, true_position

TRACKING_COLUMNS = ("seq", "t", "x_meas", "y_meas", "x_est", "y_est", "x_true", "y_true", "coasting")
CONTROL_COLUMNS = ("seq", "t", "disturbance_px", "correction_angle_deg", "residual_px", "saturated", "handoff")
SEGMENTS = ("learning", "pre_occlusion", "coasting", "post_reacquisition")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class RunReport:
    label: str
    filter_kind: str
    seed: int
    optical_power: float
    rms_px: float
    rms_mrad: float
    segment_rms: dict
    segment_frames: dict
    residual_rms_px: float
    saturations: int
    handoffs: int
    frames_processed: int
    detections: int
    reacquisition_error_px: float | None
    reacquired_first_frame: bool | None
    wall_time_s: float
    tracking_rows: list = field(default_factory=list, repr=False)
    control_rows: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        """Deterministic scalar fields (no wall time, no traces)."""
        return {
            "label": self.label,
            "filter_kind": self.filter_kind,
            "seed": self.seed,
            "optical_power": self.optical_power,
            "rms_px": self.rms_px,
            "rms_mrad": self.rms_mrad,
            "residual_rms_px": self.residual_rms_px,
            "saturations": self.saturations,
            "handoffs": self.handoffs,
            "frames_processed": self.frames_processed,
            "detections": self.detections,
            "reacquisition_error_px": self.reacquisition_error_px,
            "reacquired_first_frame": self.reacquired_first_frame,
            **{f"frames_{k}": v for k, v in self.segment_frames.items()},
            **{f"rms_{k}": v for k, v in self.segment_rms.items()},
        }


def _noise_model(cfg: ExperimentConfig) -> NoiseModel:
    settings = cfg.noise
    if not settings.enabled:
        return NoiseModel.none()
    noise = NoiseModel.realistic(
        cfg.camera,
        seed=cfg.seed,
        pattern_sd=settings.pattern_sd,
        salt_pepper_prob=settings.salt_pepper_prob,
    )
    return replace(noise, shot_noise=settings.shot_noise, read_noise=settings.read_noise)


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _segment_of(has_estimate: bool, coasting: bool, seen_coast: bool) -> str:
    if not has_estimate:
        return "learning"
    if coasting:
        return "coasting"
    return "post_reacquisition" if seen_coast else "pre_occlusion"


def simulate(cfg: ExperimentConfig, q: float | None = None, r: float | None = None, *, artifacts: bool = True) -> RunReport:
    """Run the closed loop for one configuration (see :func:`run_experiment`)."""
    started = time.perf_counter()
    cam, beam, profile = cfg.camera, cfg.beam, cfg.profile
    q = cfg.filter.q if q is None else q
    r = cfg.filter.r if r is None else r
    model = build_model(cfg.filter.kind, cam.dt, q, r)

    streams = np.random.SeedSequence(cfg.seed).spawn(3)
    dark_rng = np.random.default_rng(streams[0])
    frame_rng = np.random.default_rng(streams[1])
    wander_rng = np.random.default_rng(streams[2])
    noise = _noise_model(cfg)
    dark = make_dark_frame(cam, noise, cfg.noise.dark_frames, dark_rng)

    out_dir = Path(cfg.run.out_dir)
    dump = artifacts and cfg.run.dump_frames
    if artifacts:
        os.makedirs(out_dir, exist_ok=True)

    fsm = cfg.fsm.build(cam.pixel_pitch_um)
    center = cam.center
    # the pass starts already acquired: the mount points at the beacon
    mount = np.array(true_position(profile, 0.0)) - np.array(center)
    learner = LearningWindow(size=cfg.filter.learning_window)
    trigger = ZenithFlipTrigger() if (cfg.filter.kind == "CJ" and cfg.filter.zenith_flip) else None
    state = None

    tracking, control = [], []
    hidden_before = False
    reacq_error, reacq_first = None, None
    saturations = handoffs = detections = 0

    for seq, t in enumerate(sample_times(profile, cam.frame_rate)):
        t = float(t)
        base = true_position(profile, t)
        sky = np.array(disturbed_position(base, cfg.disturbance, t))
        visible = is_visible(cfg.occlusion, base, t)
        shift = np.array(fsm.shift_px())
        sensor = sky + np.array(cfg.wander.sample(wander_rng)) - mount - shift

        frame = render_frame(tuple(sensor), beam, cam, noise, not visible, frame_rng, seq=seq, timestamp=t)
        if dump:
            write_frame(out_dir / "frames", frame)
            detection, stages = run_pipeline(frame, dark, cfg.pipeline)
            dump_stages(out_dir / "stages", seq, stages)
        else:
            detection = detect_beacon(frame, dark, cfg.pipeline)

        z = None
        if detection is not None:
            detections += 1
            z = np.asarray(detection.centroid) + mount + shift

        estimate = None
        coasting = False
        if state is None:
            learner.add(t, z)
            if learner.ready:
                state = learner.start(model, t)
            elif learner.failed:
                raise AcquisitionError(
                    f"only {len(learner.points)} detections in the first {learner.frames_seen} frames"
                )
        else:
            if visible and hidden_before and reacq_first is None:
                # first visible frame after the first occlusion: judge the coasted prior
                prior = model.A @ state.x
                reacq_error = float(math.hypot(prior[0] - sky[0], prior[1] - sky[1]))
                reacq_first = z is not None
            hidden_before = hidden_before or not visible
            coasting = z is None
            state, estimate = step(state, model, z)
            if trigger is not None and trigger.observe(state):
                state = zenith_flip(state)

        # control: centre the detection, or the filter estimate while blind
        residual = float(math.hypot(*(sensor - np.array(center))))
        correction = 0.0
        saturated = handoff = False
        if cfg.fsm.enabled:
            est_sensor = None
            if state is not None:
                pos = np.asarray(state.position)
                est_sensor = tuple(pos - mount - shift)
            before = fsm.angle
            fsm, cmd = closed_loop_step(detection, est_sensor, center, fsm)
            saturated, handoff = cmd.saturated, cmd.handoff
            if handoff:
                # the coarse mount takes over the whole pointing offset
                wanted = (before[0] + cmd.requested[0], before[1] + cmd.requested[1])
                mount = mount + np.array(fsm.shift_px(wanted))
                fsm = fsm.reset()
                handoffs += 1
            saturations += int(saturated)
            correction = fsm.angle[0]

        along = cfg.disturbance.offset(t) if cfg.disturbance.amplitude_px > 0 else 0.0
        tracking.append(
            (
                seq,
                t,
                None if z is None else z[0],
                None if z is None else z[1],
                None if estimate is None else estimate[0],
                None if estimate is None else estimate[1],
                sky[0],
                sky[1],
                coasting,
            )
        )
        control.append((seq, t, along, correction, residual, saturated, handoff))

    if state is None:
        raise AcquisitionError(f"learning window never filled ({len(learner.points)} detections)")

    report = _build_report(cfg, model, tracking, control, saturations, handoffs, detections, reacq_error, reacq_first)
    report.wall_time_s = time.perf_counter() - started
    if artifacts:
        _write_csv(out_dir / "tracking.csv", TRACKING_COLUMNS, tracking)
        _write_csv(out_dir / "control.csv", CONTROL_COLUMNS, control)
        _write_report(out_dir / "report.csv", report)
    return report


def _build_report(cfg, model, tracking, control, saturations, handoffs, detections, reacq_error, reacq_first) -> RunReport:
    by_segment = {name: [] for name in SEGMENTS}
    seen_coast = False
    for row in tracking:
        has_est = row[4] is not None
        coasting = row[8]
        seen_coast = seen_coast or coasting
        by_segment[_segment_of(has_est, coasting, seen_coast)].append(row)

    def seg_rms(rows):
        if not rows or rows[0][4] is None:
            return None
        return rms_error([(r[4], r[5]) for r in rows], [(r[6], r[7]) for r in rows])

    tracked = [r for r in tracking if r[4] is not None]
    rms_px = rms_error([(r[4], r[5]) for r in tracked], [(r[6], r[7]) for r in tracked])
    fsm = cfg.fsm.build(cfg.camera.pixel_pitch_um)
    rms_mrad = math.radians(pixel_to_angle(rms_px, fsm.pixel_pitch_um, fsm.distance_mm)) * 1e3
    residual_rms = float(np.sqrt(np.mean([row[4] ** 2 for row in control])))
    return RunReport(
        label=cfg.run.label,
        filter_kind=model.kind,
        seed=cfg.seed,
        optical_power=cfg.beam.optical_power,
        rms_px=rms_px,
        rms_mrad=rms_mrad,
        segment_rms={k: seg_rms(v) for k, v in by_segment.items()},
        segment_frames={k: len(v) for k, v in by_segment.items()},
        residual_rms_px=residual_rms,
        saturations=saturations,
        handoffs=handoffs,
        frames_processed=len(tracking),
        detections=detections,
        reacquisition_error_px=reacq_error,
        reacquired_first_frame=reacq_first,
        wall_time_s=0.0,
        tracking_rows=tracking,
        control_rows=control,
    )


def _write_report(path, report: RunReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in report.summary().items():
            writer.writerow([key, value if isinstance(value, str) else _fmt(value)])


@dataclass(frozen=True)
class TuneResult:
    q: float
    r: float
    rms: float
    table: tuple


def tune_from_calibration_pass(cfg: ExperimentConfig, *, write: bool = True) -> TuneResult:
    """Record a calibration pass, then grid-search ``(q, r)`` on its measurements.

    The pass runs with the configured fixed ``(q, r)``; the recorded centroids
    (sky coordinates) and truth are then replayed through every grid pair.
    """
    calib = simulate(cfg, artifacts=False)
    meas = [None if row[2] is None else (row[2], row[3]) for row in calib.tracking_rows]
    truth = [(row[6], row[7]) for row in calib.tracking_rows]
    grid = cfg.filter.grid
    flip = cfg.filter.kind == "CJ" and cfg.filter.zenith_flip
    table = []
    best = (math.inf, math.inf, math.inf)
    for q in sorted(grid.q_candidates):
        for r in sorted(grid.r_candidates):
            rms = score_pair(truth, meas, cfg.filter.kind, cfg.camera.dt, q, r, cfg.filter.learning_window, flip)
            table.append((q, r, rms))
            if rms < best[2]:
                best = (q, r, rms)
    if not math.isfinite(best[2]):
        raise AcquisitionError("no grid pair produced an estimate")
    result = TuneResult(best[0], best[1], best[2], tuple(table))
    if write:
        out = Path(cfg.run.out_dir)
        os.makedirs(out, exist_ok=True)
        _write_csv(out / "tuning.csv", ("q", "r", "rms_px"), table)
    return result


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Render, detect, filter, steer and log every frame of one pass.

    Writes ``tracking.csv``, ``control.csv`` and ``report.csv`` to the output
    directory (plus PGM frames and pipeline stages with ``dump_frames``).
    With ``filter.tune`` a calibration pass picks ``(q, r)`` first.

    Raises:
        AcquisitionError: the learning window could not be filled.
    """
    if cfg.filter.tune:
        best = tune_from_calibration_pass(cfg)
        return simulate(cfg, best.q, best.r)
    return simulate(cfg)


# --- multi-run helpers -------------------------------------------------------

COMPARE_COLUMNS = ("seed", "rms_low", "rms_high", "ratio")


def _differs_only_in_power(a: ExperimentConfig, b: ExperimentConfig) -> bool:
    strip = dict(beam=replace(a.beam, optical_power=0.0), run=a.run)
    return replace(a, **strip) == replace(b, beam=replace(b.beam, optical_power=0.0), run=a.run)


def compare_power_settings(cfg_low: ExperimentConfig, cfg_high: ExperimentConfig, seeds, *, write: bool = True) -> list[tuple]:
    """Paired runs over ``seeds``: rows of ``(seed, rms_low, rms_high, rms_low / rms_high)``."""
    if not _differs_only_in_power(cfg_low, cfg_high):
        raise ConfigError([("beam.optical_power", "compared configurations may differ only in beam power")])
    base = Path(cfg_low.run.out_dir)
    rows = []
    for seed in seeds:
        low = simulate(cfg_low.with_seed(seed).with_out(base / f"seed_{seed:03d}" / "low"), artifacts=write)
        high = simulate(cfg_high.with_seed(seed).with_out(base / f"seed_{seed:03d}" / "high"), artifacts=write)
        ratio = low.rms_px / high.rms_px if high.rms_px > 0 else math.inf
        rows.append((int(seed), low.rms_px, high.rms_px, ratio))
    if write:
        os.makedirs(base, exist_ok=True)
        _write_csv(base / "compare.csv", COMPARE_COLUMNS, rows)
    return rows


def run_sweep(cfg: ExperimentConfig, sigma_low: float | None = None, sigma_high: float | None = None, *, write: bool = True) -> list[SweepRow]:
    """Key rate vs loss; sigmas in radians default to the configured sweep values."""
    theta_d = cfg.link.theta_d
    cfg_low, cfg_high = cfg.sweep.sigma_rad(theta_d)
    sigma_low = cfg_low if sigma_low is None else sigma_low
    sigma_high = cfg_high if sigma_high is None else sigma_high
    rows = rate_vs_loss_sweep(cfg.sweep.loss_grid(), sigma_low, sigma_high, cfg.bb84, cfg.cv, cfg.link)
    if write:
        out = Path(cfg.run.out_dir)
        os.makedirs(out, exist_ok=True)
        write_sweep_csv(
            out / "sweep.csv", rows, sigma_low=sigma_low, sigma_high=sigma_high,
            bb84=cfg.bb84, cv=cfg.cv, geometry=cfg.link,
        )
    return rows


FIGURE_SCHEMAS = {
    "fig5_control.csv": ("FSM compensation of a mirror disturbance", ("run",) + CONTROL_COLUMNS),
    "fig6_cv_tracking.csv": ("CV-filter tracking: measured, estimated and true positions", ("run",) + TRACKING_COLUMNS),
    "fig7_cj_worms_eye.csv": ("CJ-filter pass in the zenith-centred view; coasting=1 marks occluded or blind-spot frames", ("run",) + TRACKING_COLUMNS),
    "fig8_cj_x_vs_t.csv": ("CJ-filter x coordinate against time", ("run", "t", "x_meas", "x_est", "x_true", "coasting")),
}


def emit_figures_data(reports, sweep, out_dir) -> dict:
    """Write one CSV per figure analog; returns ``{filename: row_count}``."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    rows = {name: [] for name in FIGURE_SCHEMAS}
    for report in reports:
        run = report.label or f"{report.filter_kind}_seed{report.seed}_P{report.optical_power:g}"
        rows["fig5_control.csv"] += [(run,) + tuple(r) for r in report.control_rows]
        if report.filter_kind == "CV":
            rows["fig6_cv_tracking.csv"] += [(run,) + tuple(r) for r in report.tracking_rows]
        else:
            rows["fig7_cj_worms_eye.csv"] += [(run,) + tuple(r) for r in report.tracking_rows]
            rows["fig8_cj_x_vs_t.csv"] += [(run, r[1], r[2], r[4], r[6], r[8]) for r in report.tracking_rows]
    counts = {}
    for name, (title, columns) in FIGURE_SCHEMAS.items():
        with open(out / name, "w", newline="") as fh:
            fh.write(f"# {title}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows[name]:
                writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])
        counts[name] = len(rows[name])
    with open(out / "fig9_key_rates.csv", "w", newline="") as fh:
        fh.write("# secret key rate per channel use vs channel loss (DV and CV, low and high beacon power)\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("loss_db", "r_dv_low", "r_dv_high", "k_cv_low", "k_cv_high"))
        for row in sweep or ():
            writer.writerow([_fmt(row.loss_db), _fmt(row.r_dv_low), _fmt(row.r_dv_high), _fmt(row.k_cv_low), _fmt(row.k_cv_high)])
    counts["fig9_key_rates.csv"] = len(sweep or ())
    return counts

