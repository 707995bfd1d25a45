"""Experiment configuration: a flat ``section.key = value`` text file.

Example::

    # high-power CV pass on a small frame
    run.seed = 7
    camera.width_px = 128
    camera.height_px = 128
    beam.optical_power = 5.55e-6
    profile.kind = CV
    occlusion.intervals = [(55.0, 60.0)]

Values are Python literals (numbers, tuples, lists, ``true``/``false``);
anything that does not parse as a literal is taken as a bare string.
Every problem found is reported together, keyed by its dotted field path.
"""

from __future__ import annotations

import ast
import dataclasses
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .centroid import PipelineConfig
from .control import FsmModel, calibrate_fsm
from .errors import ConfigError, InvalidInputError
from .frames import BeamModel, CameraModel
from .kalman import DEFAULT_Q_GRID, DEFAULT_R_GRID, LEARNING_WINDOW, TuningGrid
from .qkd import Bb84Params, CvqkdParams, LinkGeometry
from .trajectory import BeamWander, MirrorDisturbance, OcclusionSchedule, PassProfile


@dataclass(frozen=True)
class NoiseSettings:
    enabled: bool = True
    pattern_sd: float = 2.0
    salt_pepper_prob: float = 1e-3
    shot_noise: bool = True
    read_noise: bool = True
    dark_frames: int = 16

    def __post_init__(self):
        if self.pattern_sd < 0:
            raise InvalidInputError("pattern_sd must be non-negative")
        if not 0 <= self.salt_pepper_prob <= 1:
            raise InvalidInputError("salt_pepper_prob must lie in [0, 1]")
        if self.dark_frames < 1:
            raise InvalidInputError("dark_frames must be >= 1")


@dataclass(frozen=True)
class FilterSettings:
    kind: str = "CV"
    q: float = 1e-2
    r: float = 1.0
    tune: bool = False
    q_grid: tuple = DEFAULT_Q_GRID
    r_grid: tuple = DEFAULT_R_GRID
    learning_window: int = LEARNING_WINDOW
    zenith_flip: bool = True

    def __post_init__(self):
        if self.kind not in ("CV", "CJ"):
            raise InvalidInputError(f"kind must be CV or CJ, got {self.kind!r}")
        if self.q < 0 or self.r <= 0:
            raise InvalidInputError("need q >= 0 and r > 0")
        if self.learning_window < 2:
            raise InvalidInputError("learning_window must be >= 2")
        TuningGrid(tuple(self.q_grid), tuple(self.r_grid))

    @property
    def grid(self) -> TuningGrid:
        return TuningGrid(tuple(self.q_grid), tuple(self.r_grid))


@dataclass(frozen=True)
class FsmSettings:
    enabled: bool = True
    max_deflection_deg: float = 4.0
    theta_cal_deg: float = 1.0
    delta_x_mm: float = 1.7455
    latency_frames: int = 0
    gain: float = 1.0

    def __post_init__(self):
        self.build(4.63)

    def build(self, pixel_pitch_um: float) -> FsmModel:
        return FsmModel(
            max_deflection_deg=self.max_deflection_deg,
            distance_mm=calibrate_fsm(self.theta_cal_deg, self.delta_x_mm),
            pixel_pitch_um=pixel_pitch_um,
            latency_frames=self.latency_frames,
            gain=self.gain,
        )


@dataclass(frozen=True)
class SweepSettings:
    """Loss grid and pointing errors for the key-rate sweep.

    ``sigma_units`` says how ``sigma_low``/``sigma_high`` are expressed:
    ``theta_d`` (multiples of the receiver field of view), ``rad`` or ``mrad``.
    """

    loss_start_db: float = 10.0
    loss_stop_db: float = 50.0
    loss_step_db: float = 1.0
    sigma_low: float = 0.27107
    sigma_high: float = 0.02661
    sigma_units: str = "theta_d"

    def __post_init__(self):
        if self.loss_step_db <= 0 or self.loss_stop_db < self.loss_start_db:
            raise InvalidInputError("need loss_step_db > 0 and loss_stop_db >= loss_start_db")
        if self.sigma_units not in ("theta_d", "rad", "mrad"):
            raise InvalidInputError("sigma_units must be theta_d, rad or mrad")
        if self.sigma_low < 0 or self.sigma_high < 0:
            raise InvalidInputError("sigma values must be non-negative")

    def loss_grid(self) -> list[float]:
        n = int(math.floor((self.loss_stop_db - self.loss_start_db) / self.loss_step_db + 1e-9)) + 1
        return [self.loss_start_db + i * self.loss_step_db for i in range(n)]

    def sigma_rad(self, theta_d: float) -> tuple[float, float]:
        scale = {"theta_d": theta_d, "rad": 1.0, "mrad": 1e-3}[self.sigma_units]
        return self.sigma_low * scale, self.sigma_high * scale


@dataclass(frozen=True)
class CompareSettings:
    low_power: float = 0.03e-6
    high_power: float = 5.55e-6
    seeds: int = 20

    def __post_init__(self):
        if self.seeds < 1:
            raise InvalidInputError("seeds must be >= 1")
        if self.low_power < 0 or self.high_power < 0:
            raise InvalidInputError("powers must be non-negative")


@dataclass(frozen=True)
class RunSettings:
    seed: int | None = None
    out_dir: str = "out"
    dump_frames: bool = False
    label: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    camera: CameraModel = CameraModel()
    beam: BeamModel = BeamModel()
    noise: NoiseSettings = NoiseSettings()
    profile: PassProfile = PassProfile()
    occlusion: OcclusionSchedule = OcclusionSchedule()
    disturbance: MirrorDisturbance = MirrorDisturbance()
    wander: BeamWander = BeamWander()
    filter: FilterSettings = FilterSettings()
    fsm: FsmSettings = FsmSettings()
    pipeline: PipelineConfig = PipelineConfig()
    link: LinkGeometry = LinkGeometry()
    bb84: Bb84Params = Bb84Params()
    cv: CvqkdParams = CvqkdParams()
    sweep: SweepSettings = SweepSettings()
    compare: CompareSettings = CompareSettings()
    run: RunSettings = RunSettings()

    def __post_init__(self):
        problems = []
        if self.run.seed is None:
            problems.append(("run.seed", "a seed is required"))
        elif not isinstance(self.run.seed, int) or isinstance(self.run.seed, bool) or self.run.seed < 0:
            problems.append(("run.seed", f"expected a non-negative integer, got {self.run.seed!r}"))
        if self.occlusion.blind_spot_radius > 0 and self.occlusion.blind_spot_center is None:
            problems.append(("occlusion.blind_spot_center", "required when blind_spot_radius > 0"))
        if problems:
            raise ConfigError(problems)

    @property
    def seed(self) -> int:
        return int(self.run.seed)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, seed=int(seed)))

    def with_power(self, power: float) -> "ExperimentConfig":
        return replace(self, beam=replace(self.beam, optical_power=float(power)))

    def with_out(self, out_dir) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, out_dir=str(out_dir)))


SECTIONS = {f.name: f.default for f in fields(ExperimentConfig)}


def _parse_value(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(text.strip())
    except (ValueError, SyntaxError):
        return text.strip()


def _coerce(value, default):
    """Fit a parsed literal to the type of the field's default value."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise TypeError(f"expected true/false, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise TypeError(f"expected an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise TypeError(f"expected a number, got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        return str(value)
    if isinstance(default, tuple) or default is None:
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        if isinstance(value, tuple) or value is None or default is None:
            return value
        raise TypeError(f"expected a tuple, got {value!r}")
    return value


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from config-file text.

    ``overrides`` maps dotted keys to already-parsed values (CLI flags).
    """
    problems: list[tuple[str, str]] = []
    entries: dict[str, dict[str, tuple[str, object]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append((f"line {lineno}", f"expected 'section.key = value', got {raw.strip()!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key.count(".") != 1:
            problems.append((key or f"line {lineno}", "key must look like section.field"))
            continue
        section, name = key.split(".")
        entries.setdefault(section, {})[name] = (key, _parse_value(value))
    for key, value in (overrides or {}).items():
        section, name = key.split(".")
        entries.setdefault(section, {})[name] = (key, value)

    origin_given = "origin_px" in entries.get("profile", {})
    built = {}
    for section, default in SECTIONS.items():
        given = entries.pop(section, {})
        kwargs = {}
        known = {f.name: f for f in fields(type(default))}
        for name, (path, value) in given.items():
            if name not in known:
                problems.append((path, "unknown field"))
                continue
            try:
                kwargs[name] = _coerce(value, getattr(default, name))
            except TypeError as exc:
                problems.append((path, str(exc)))
        try:
            built[section] = replace(default, **kwargs)
        except (InvalidInputError, TypeError, ValueError) as exc:
            problems.append((section, str(exc)))
    for section, given in entries.items():
        for name, (path, _) in given.items():
            problems.append((path, "unknown section"))
    if problems:
        raise ConfigError(problems)

    if not origin_given:
        # start the pass at the frame centre unless told otherwise
        built["profile"] = replace(built["profile"], origin_px=built["camera"].center)
    return ExperimentConfig(**built)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([("--config", f"cannot read {path}: {exc.strerror}")]) from exc
    return parse_config_text(text, overrides)


def format_config(cfg: ExperimentConfig) -> str:
    """Serialize back to the flat key-value format (round-trips through the parser)."""
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            value = getattr(obj, f.name)
            if dataclasses.is_dataclass(value) or f.name == "fixed_pattern":
                continue
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, str):
                text = repr(value)
            else:
                text = repr(value)
            lines.append(f"{section}.{f.name} = {text}")
    return "\n".join(lines) + "\n"


def default_config(seed: int = 0, **sections) -> ExperimentConfig:
    """Defaults with the pass starting at the frame centre; keyword args replace whole sections."""
    camera = sections.get("camera", CameraModel())
    profile = sections.pop("profile", PassProfile(origin_px=camera.center))
    run = sections.pop("run", RunSettings(seed=seed))
    return ExperimentConfig(profile=profile, run=run, **sections)
