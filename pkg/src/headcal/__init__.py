"""Head-anchored AR calibration: RGB-D face scaling, PnP head pose and world-frame model placement."""

from .camera import CameraIntrinsics, backproject, project
from .errors import CalibrationError, HeadCalError
from .face_model import CanonicalModel, ScalingFactors, default_model
from .pipeline import CalibrationInput, CalibrationResult, calibrate, model_points_in_world
from .pnp import Correspondence, PnPConfig, PnPSolution, solve_pnp
from .transforms import FrameId, TaggedTransform, compose, invert

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "backproject",
    "project",
    "CalibrationError",
    "HeadCalError",
    "CanonicalModel",
    "ScalingFactors",
    "default_model",
    "CalibrationInput",
    "CalibrationResult",
    "calibrate",
    "model_points_in_world",
    "Correspondence",
    "PnPConfig",
    "PnPSolution",
    "solve_pnp",
    "FrameId",
    "TaggedTransform",
    "compose",
    "invert",
]
