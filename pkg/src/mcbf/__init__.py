"""High order control barrier functions for systems with multiple control inputs."""
from . import backend  # noqa: F401
from .barrier import ClassK, HOCBFSpec, detect_relative_degree_set, hocbf_row, linear
from .dynamics import AffineControlSystem, ControlBounds, UnicycleParams, make_unicycle, step_integrate
from .integral import build_ihocbf, ihocbf_rows
from .qp import QPProblem, solve
from .sim import ScenarioConfig, TrajectoryLog, run, safety_metrics
from .transform import CenterTransformParams, make_center_transform, transform_row

__version__ = "0.1.0"

__all__ = [
    "backend", "AffineControlSystem", "CenterTransformParams", "ClassK", "ControlBounds", "HOCBFSpec",
    "QPProblem", "ScenarioConfig", "TrajectoryLog", "UnicycleParams", "build_ihocbf",
    "detect_relative_degree_set", "hocbf_row", "ihocbf_rows", "linear", "make_center_transform",
    "make_unicycle", "run", "safety_metrics", "solve", "step_integrate", "transform_row",
]
