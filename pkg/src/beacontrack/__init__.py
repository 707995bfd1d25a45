"""Beacon tracking simulator: synthetic frames, centroiding, Kalman tracking,
steering-mirror control and tracking-limited QKD key rates."""

from .centroid import Detection, PipelineConfig, detect_beacon
from .config import ExperimentConfig, default_config, load_config, parse_config_text
from .control import FsmCommand, FsmModel, calibrate_fsm, closed_loop_step, command_fsm, pixel_to_angle
from .errors import (
    AcquisitionError,
    ConfigError,
    DegenerateHistogramError,
    InvalidInputError,
    InvalidOperationError,
    NumericalFailureError,
)
from .frames import BeamModel, CameraModel, Frame, NoiseModel, camera_response, render_frame
from .kalman import FilterModel, FilterState, build_cj_model, build_cv_model, tune_grid_search
from .qkd import Bb84Params, CvqkdParams, LinkGeometry, bb84_key_rate, cv_key_rate, tracking_efficiency
from .runner import RunReport, compare_power_settings, emit_figures_data, run_experiment
from .trajectory import MirrorDisturbance, OcclusionSchedule, PassProfile, true_position

__version__ = "0.1.0"
