"""One-shot virtual-to-real calibration.

RGB-D landmarks give a metric face size, the canonical model is scaled to it,
the headset view gives the head pose by PnP, and the SLAM pose closes the
chain to the virtual world.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, TypeVar

import numpy as np
from numpy.typing import NDArray

from . import face_model as fm
from .camera import CameraIntrinsics, backproject_depth
from .errors import CalibrationError, HeadCalError
from .pnp import Correspondence, PnPConfig, PnPSolution, solve_pnp
from .transforms import TaggedTransform, invert, model_to_head_convention, solve_world_pose

T = TypeVar("T")

__all__ = [
    "CalibrationInput",
    "CalibrationResult",
    "calibrate",
    "model_points_in_world",
]


@dataclass(frozen=True, eq=False)
class CalibrationInput:
    rgbd_landmarks: Mapping[str, tuple[tuple[float, float], float]]  # id -> ((u, v), depth_mm)
    rgbd_intrinsics: CameraIntrinsics
    headset_landmarks: Mapping[str, tuple[float, float]]
    headset_intrinsics: CameraIntrinsics
    slam_pose: TaggedTransform
    model: fm.CanonicalModel = field(default_factory=fm.default_model)
    pnp_config: PnPConfig = field(default_factory=PnPConfig)


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    world_pose: TaggedTransform
    uniform_scale: float
    head_pose: PnPSolution
    scaling: fm.ScalingFactors
    measurement: fm.FaceMeasurement
    rgbd_points: dict[str, NDArray[np.float64]]
    object_points: dict[str, NDArray[np.float64]]


def _stage(name: str, fn: Callable[..., T], *args) -> T:
    try:
        return fn(*args)
    except (HeadCalError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise CalibrationError(name, exc) from exc


def _backproject_all(landmarks, intr) -> dict[str, NDArray[np.float64]]:
    return {lid: backproject_depth(intr, px, d) for lid, (px, d) in landmarks.items()}


def _correspondences(object_points, headset_landmarks) -> list[Correspondence]:
    # P_i = P_j: the headset sees the same static head the RGB-D camera measured.
    shared = [lid for lid in object_points if lid in headset_landmarks]
    return [Correspondence(lid, object_points[lid], headset_landmarks[lid]) for lid in shared]


def calibrate(inp: CalibrationInput) -> CalibrationResult:
    """Run the full chain; any failure is re-raised as ``CalibrationError`` labelled with its stage."""
    model = inp.model
    rgbd_points = _stage("backproject", _backproject_all, inp.rgbd_landmarks, inp.rgbd_intrinsics)
    measurement = _stage("measure_face", fm.measure_face, rgbd_points, model)
    scaling = _stage("scaling_factors", fm.scaling_factors, measurement, model)
    object_points = _stage("scale_landmarks", fm.scale_landmarks, model, scaling)
    corr = _stage("correspondences", _correspondences, object_points, inp.headset_landmarks)
    head_pose = _stage("solve_pnp", solve_pnp, corr, inp.headset_intrinsics, inp.pnp_config)
    world_pose = _stage("solve_world_pose", solve_world_pose, head_pose.pose, inp.slam_pose)
    return CalibrationResult(
        world_pose=world_pose,
        uniform_scale=fm.uniform_model_scale(scaling),
        head_pose=head_pose,
        scaling=scaling,
        measurement=measurement,
        rgbd_points=rgbd_points,
        object_points=object_points,
    )


def model_points_in_world(
    result: CalibrationResult, model: fm.CanonicalModel
) -> dict[str, NDArray[np.float64]]:
    """Where the rendered, uniformly scaled model puts each landmark in the world frame.

    The model is drawn in its own left-handed frame, so each canonical
    landmark is first expressed in ``V`` and scaled by ``uniform_scale``.
    """
    to_model = invert(model_to_head_convention())
    ids = model.ids
    in_model = to_model.apply(model.points(ids)) * result.uniform_scale
    world = result.world_pose.apply(in_model)
    return dict(zip(ids, world))

