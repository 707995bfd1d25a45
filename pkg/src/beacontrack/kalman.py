"""Constant-velocity (4-state) and constant-jerk (8-state) Kalman tracking.

State layout is ``[x, y, vx, vy]`` for CV and
``[x, y, vx, vy, ax, ay, jx, jy]`` for CJ; positions are pixels and the
derivatives use seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, InvalidOperationError, NumericalFailureError

LEARNING_WINDOW = 100
LEARNING_DEADLINE = 150
LEARNING_MINIMUM = 10

DEFAULT_Q_GRID = tuple(10.0**e for e in range(-4, 3))
DEFAULT_R_GRID = tuple(10.0**e for e in range(-2, 3))


@dataclass(frozen=True)
class FilterModel:
    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    dt: float
    q: float
    r: float

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def kind(self) -> str:
        return "CV" if self.dim == 4 else "CJ"


@dataclass(frozen=True)
class FilterState:
    x: np.ndarray
    P: np.ndarray
    k: int = 0

    @property
    def position(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[1])

    @property
    def velocity(self) -> tuple[float, float]:
        return float(self.x[2]), float(self.x[3])


def _check_noise(dt: float, q: float, r: float) -> None:
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if q < 0 or r < 0:
        raise InvalidInputError("noise variances must be non-negative")


def _position_selector(dim: int) -> np.ndarray:
    H = np.zeros((2, dim))
    H[0, 0] = H[1, 1] = 1.0
    return H


def build_cv_model(dt: float, q: float, r: float) -> FilterModel:
    _check_noise(dt, q, r)
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    return FilterModel(A, _position_selector(4), q * np.eye(4), r * np.eye(2), dt, q, r)


def build_cj_model(dt: float, q: float, r: float) -> FilterModel:
    _check_noise(dt, q, r)
    A = np.eye(8)
    for axis in (0, 1):
        A[axis, 2 + axis] = dt
        A[axis, 4 + axis] = dt**2 / 2.0
        A[axis, 6 + axis] = dt**3 / 6.0
        A[2 + axis, 4 + axis] = dt
        A[2 + axis, 6 + axis] = dt**2 / 2.0
        A[4 + axis, 6 + axis] = dt
    return FilterModel(A, _position_selector(8), q * np.eye(8), r * np.eye(2), dt, q, r)


def build_model(kind: str, dt: float, q: float, r: float) -> FilterModel:
    if kind == "CV":
        return build_cv_model(dt, q, r)
    if kind == "CJ":
        return build_cj_model(dt, q, r)
    raise InvalidInputError(f"filter kind must be CV or CJ, got {kind!r}")


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _check_dims(state: FilterState, model: FilterModel) -> None:
    if state.x.shape != (model.dim,) or state.P.shape != (model.dim, model.dim):
        raise InvalidInputError(
            f"state of dim {state.x.shape[0]} does not match {model.dim}-state model"
        )


def predict(state: FilterState, model: FilterModel) -> FilterState:
    """Propagate one frame: ``x <- A x``, ``P <- A P A^T + Q``."""
    _check_dims(state, model)
    A = model.A
    x = A @ state.x
    P = _symmetrize(A @ state.P @ A.T + model.Q)
    return FilterState(x, P, state.k + 1)


def innovation(state: FilterState, z, model: FilterModel) -> tuple[np.ndarray, np.ndarray]:
    """Innovation ``z - H x`` and its covariance ``H P H^T + R``."""
    nu = np.asarray(z, dtype=np.float64) - model.H @ state.x
    S = model.H @ state.P @ model.H.T + model.R
    return nu, S


def update(state: FilterState, z, model: FilterModel) -> FilterState:
    """Measurement correction with gain ``K = P H^T (H P H^T + R)^-1``."""
    _check_dims(state, model)
    nu, S = innovation(state, z, model)
    PHt = state.P @ model.H.T
    try:
        K = np.linalg.solve(S, PHt.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("innovation covariance is singular") from exc
    if not np.all(np.isfinite(K)):
        raise NumericalFailureError("non-finite Kalman gain")
    x = state.x + K @ nu
    P = _symmetrize((np.eye(model.dim) - K @ model.H) @ state.P)
    return FilterState(x, P, state.k)


def step(state: FilterState, model: FilterModel, z=None) -> tuple[FilterState, tuple[float, float]]:
    """Predict, then update when a measurement is present (coast otherwise)."""
    state = predict(state, model)
    if z is not None:
        state = update(state, z, model)
    return state, state.position


def init_filter(
    first_measurements: Sequence,
    model: FilterModel,
    times: Sequence[float] | None = None,
) -> FilterState:
    """Initial state from the learning window.

    Position is the last measurement; velocity is the least-squares slope of
    the window (the plain finite difference when there are two points).
    Higher derivatives start at zero with inflated variance.
    """
    pts = np.asarray(first_measurements, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise InvalidInputError("init_filter needs at least two (x, y) measurements")
    if times is None:
        t = np.arange(pts.shape[0]) * model.dt
    else:
        t = np.asarray(times, dtype=np.float64)
    tc = t - t.mean()
    denom = float(np.dot(tc, tc))
    if denom <= 0:
        raise InvalidInputError("learning-window times must not all coincide")
    velocity = tc @ (pts - pts.mean(axis=0)) / denom

    x = np.zeros(model.dim)
    x[0:2] = pts[-1]
    x[2:4] = velocity
    r = model.r
    pos_var = r
    vel_var = 2.0 * r / model.dt**2
    diag = [pos_var, pos_var, vel_var, vel_var] + [10.0 * vel_var] * (model.dim - 4)
    return FilterState(x, np.diag(diag), 0)


_FLIP = np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0])


def zenith_flip(state: FilterState) -> FilterState:
    """Negate the acceleration components and their covariance cross-terms (``D P D``)."""
    if state.x.shape[0] != 8:
        raise InvalidOperationError("zenith flip applies to the 8-state model only")
    x = state.x * _FLIP
    P = state.P * np.outer(_FLIP, _FLIP)
    return FilterState(x, P, state.k)


@dataclass
class ZenithFlipTrigger:
    """Fires once, after the filtered speed has peaked.

    The peak counts as found once the speed has stayed below its running
    maximum for ``hysteresis`` consecutive frames. Frames before ``arm_after``
    are ignored so start-up transients cannot trigger it.
    """

    hysteresis: int = 5
    arm_after: int = 20
    fired: bool = False
    _seen: int = 0
    _peak: float = 0.0
    _below: int = 0

    def observe(self, state: FilterState) -> bool:
        if self.fired:
            return False
        self._seen += 1
        speed = math.hypot(state.x[2], state.x[3])
        if self._seen <= self.arm_after or speed >= self._peak:
            self._peak = max(self._peak, speed)
            self._below = 0
            return False
        self._below += 1
        if self._below >= self.hysteresis:
            self.fired = True
            return True
        return False


@dataclass
class LearningWindow:
    """Collects the first detections before the filter starts.

    Ready after ``size`` detections, or at frame ``deadline`` with at least
    ``minimum`` detections; past the deadline with fewer it has failed.
    """

    size: int = LEARNING_WINDOW
    deadline: int = LEARNING_DEADLINE
    minimum: int = LEARNING_MINIMUM
    points: list = field(default_factory=list)
    times: list = field(default_factory=list)
    frames_seen: int = 0

    def add(self, t: float, z) -> None:
        self.frames_seen += 1
        if z is not None:
            self.points.append((float(z[0]), float(z[1])))
            self.times.append(float(t))

    @property
    def ready(self) -> bool:
        if len(self.points) >= self.size:
            return True
        return self.frames_seen >= self.deadline and len(self.points) >= max(self.minimum, 2)

    @property
    def failed(self) -> bool:
        return self.frames_seen >= self.deadline and not self.ready

    def start(self, model: FilterModel, t_now: float) -> FilterState:
        """Initial state propagated from the last detection to ``t_now``."""
        state = init_filter(self.points, model, self.times)
        lag = int(round((t_now - self.times[-1]) / model.dt))
        for _ in range(lag):
            state = predict(state, model)
        return replace(state, k=0)


def run_filter(
    measurements: Sequence,
    model: FilterModel,
    window: int = LEARNING_WINDOW,
    flip: bool = False,
) -> list:
    """Filter a measurement sequence (``None`` = occluded frame).

    Returns per-frame posterior position estimates; frames consumed by the
    learning window yield ``None``. Raises ``AcquisitionError`` via the caller
    when the window never fills, here signalled by an all-``None`` result.
    """
    learner = LearningWindow(size=window)
    trigger = ZenithFlipTrigger() if flip and model.dim == 8 else None
    state = None
    out: list = []
    for k, z in enumerate(measurements):
        t = k * model.dt
        if state is None:
            learner.add(t, z)
            if learner.ready:
                state = learner.start(model, t)
            out.append(None)
            continue
        state, est = step(state, model, z)
        if trigger is not None and trigger.observe(state):
            state = zenith_flip(state)
        out.append(est)
    return out


def rms_error(estimates: Sequence, truth: Sequence) -> float:
    """Root-mean-square Euclidean distance between paired positions."""
    if len(estimates) != len(truth):
        raise InvalidInputError(f"length mismatch: {len(estimates)} vs {len(truth)}")
    if len(estimates) == 0:
        raise InvalidInputError("rms_error needs at least one pair")
    e = np.asarray(estimates, dtype=np.float64)
    g = np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.mean(np.sum((e - g) ** 2, axis=1))))


@dataclass(frozen=True)
class TuningGrid:
    q_candidates: tuple[float, ...] = DEFAULT_Q_GRID
    r_candidates: tuple[float, ...] = DEFAULT_R_GRID

    def __post_init__(self):
        if not self.q_candidates or not self.r_candidates:
            raise InvalidInputError("tuning grid must be non-empty")
        if min(self.q_candidates) <= 0 or min(self.r_candidates) <= 0:
            raise InvalidInputError("tuning candidates must be positive")


def score_pair(truth, measurements, kind: str, dt: float, q: float, r: float, window: int, flip: bool) -> float:
    model = build_model(kind, dt, q, r)
    est = run_filter(measurements, model, window=window, flip=flip)
    pairs = [(e, g) for e, g in zip(est, truth) if e is not None]
    if not pairs:
        return math.inf
    e, g = zip(*pairs)
    return rms_error(e, g)


def tune_grid_search(
    truth: Sequence,
    measurements: Sequence,
    grid: TuningGrid,
    kind: str,
    dt: float,
    window: int = LEARNING_WINDOW,
    flip: bool = False,
) -> tuple[float, float, float]:
    """Exhaustive ``(q, r)`` search minimizing estimate-vs-truth RMS.

    Ties go to the smaller ``q``, then the smaller ``r``.
    """
    if len(truth) != len(measurements):
        raise InvalidInputError("truth and measurements must be aligned")
    best = (math.inf, math.inf, math.inf)
    for q in sorted(grid.q_candidates):
        for r in sorted(grid.r_candidates):
            rms = score_pair(truth, measurements, kind, dt, q, r, window, flip)
            if rms < best[2]:
                best = (q, r, rms)
    if not math.isfinite(best[2]):
        # no pair produced an estimate; report the lexicographically first
        best = (min(grid.q_candidates), min(grid.r_candidates), math.inf)
    return best
