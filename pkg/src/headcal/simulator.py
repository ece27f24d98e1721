"""Synthetic scenes with known ground truth, and closed-loop calibration trials.

Random streams
--------------
Every integer seed feeds ``numpy.random.SeedSequence(seed)``, which is split
with ``spawn(4)`` into four PCG64 streams, in this order:

0. ``scene``   - head scale, camera poses and the SLAM pose
1. ``pixel``   - standard normals, shape (2 views, N landmarks, 2 axes)
2. ``depth``   - standard normals, shape (N,)
3. ``dropout`` - uniforms on [0, 1), shape (2 views, N landmarks)

The pixel, depth and dropout draws are always made in full, whatever the
noise levels, so changing a sigma rescales the same underlying noise.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation

from . import face_model as fm
from .camera import CameraIntrinsics, project
from .errors import CalibrationError, InfeasibleRangeError
from .evaluation import FEATURE_LANDMARKS, FeatureId
from .pipeline import CalibrationInput, calibrate, model_points_in_world
from .pnp import PnPConfig
from .transforms import FrameId, TaggedTransform, compose, invert, rot_x, rot_y, rot_z, rotation_angle

STREAMS = ("scene", "pixel", "depth", "dropout")
MAX_ATTEMPTS = 1000
IMAGE_MARGIN_PX = 20.0

DEFAULT_HEADSET = CameraIntrinsics(fx=900.0, fy=900.0, cx=640.0, cy=480.0, width=1280, height=960)
DEFAULT_RGBD = CameraIntrinsics(fx=615.0, fy=615.0, cx=320.0, cy=240.0, width=640, height=480)

__all__ = [
    "PoseRanges",
    "ScaleRanges",
    "NoiseConfig",
    "SyntheticScene",
    "TrialResult",
    "rng_streams",
    "generate_scene",
    "render_observations",
    "run_trial",
    "run_trials",
    "summarize",
    "trials_csv",
]


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


@dataclass(frozen=True)
class PoseRanges:
    """Head pose relative to a camera: Euler angles in degrees, offsets in mm."""

    yaw_deg: tuple[float, float] = (-40.0, 40.0)
    pitch_deg: tuple[float, float] = (-40.0, 40.0)
    roll_deg: tuple[float, float] = (-20.0, 20.0)
    x_mm: tuple[float, float] = (-60.0, 60.0)
    y_mm: tuple[float, float] = (-60.0, 60.0)
    z_mm: tuple[float, float] = (400.0, 900.0)

    def __post_init__(self) -> None:
        for name in ("yaw_deg", "pitch_deg", "roll_deg", "x_mm", "y_mm", "z_mm"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise InfeasibleRangeError(f"{name} range ({lo}, {hi}) is empty")
        lo, hi = self.z_mm
        if lo < 300 or hi > 1500:
            raise InfeasibleRangeError(f"head distance range ({lo}, {hi}) mm outside [300, 1500]")

    @classmethod
    def fixed(cls, yaw=0.0, pitch=0.0, roll=0.0, x=0.0, y=0.0, z=600.0) -> "PoseRanges":
        return cls((yaw, yaw), (pitch, pitch), (roll, roll), (x, x), (y, y), (z, z))


RGBD_POSE_RANGES = PoseRanges(
    yaw_deg=(-20.0, 20.0),
    pitch_deg=(-15.0, 15.0),
    roll_deg=(-10.0, 10.0),
    x_mm=(-40.0, 40.0),
    y_mm=(-40.0, 40.0),
    z_mm=(450.0, 700.0),
)


@dataclass(frozen=True)
class ScaleRanges:
    """Overall head scale ``s`` in [low, high]; ``a_x = s(1+d)``, ``a_y = s(1-d)``, ``|d| <= anisotropy``."""

    low: float = 0.6
    high: float = 1.0
    anisotropy: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.low <= self.high:
            raise InfeasibleRangeError(f"scale range ({self.low}, {self.high}) is empty or non-positive")
        if not 0 <= self.anisotropy < 1:
            raise InfeasibleRangeError("anisotropy must lie in [0, 1)")

    @classmethod
    def fixed(cls, s: float = 1.0) -> "ScaleRanges":
        return cls(s, s, 0.0)


@dataclass(frozen=True)
class NoiseConfig:
    pixel_sigma: float = 0.0
    depth_sigma: float = 0.0
    dropout_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pixel_sigma < 0 or self.depth_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    seed: int
    model: fm.CanonicalModel
    true_face_scale: fm.ScalingFactors
    true_head_pose: TaggedTransform  # T_C<-H, headset camera
    true_slam_pose: TaggedTransform  # T_W<-C
    headset_intrinsics: CameraIntrinsics
    rgbd_intrinsics: CameraIntrinsics
    rgbd_from_head: NDArray[np.float64]  # 4x4, head frame -> RGB-D camera frame

    @property
    def ids(self) -> list[str]:
        return self.model.ids

    def head_points(self) -> NDArray[np.float64]:
        """Real head landmarks in the head frame, (N, 3) in model id order."""
        return self.model.points() * np.array(self.true_face_scale.as_tuple())

    def rgbd_points(self) -> NDArray[np.float64]:
        m = self.rgbd_from_head
        return self.head_points() @ m[:3, :3].T + m[:3, 3]

    def headset_points(self) -> NDArray[np.float64]:
        return self.true_head_pose.apply(self.head_points())

    def world_points(self) -> NDArray[np.float64]:
        return compose(self.true_slam_pose, self.true_head_pose).apply(self.head_points())


@dataclass(frozen=True, eq=False)
class TrialResult:
    scene_seed: int
    noise_seed: int
    ok: bool
    error: str | None = None
    failed_stage: str | None = None
    overlay_error_mm: dict[str, float] = field(default_factory=dict)
    image_error_px: dict[str, float] = field(default_factory=dict)
    rotation_error_rad: float = math.nan
    translation_error_mm: float = math.nan
    uniform_scale: float = math.nan
    true_scale: tuple[float, float, float] = (math.nan, math.nan, math.nan)

    def feature_overlay_mm(self) -> dict[str, float]:
        return {f.value: self.overlay_error_mm.get(lid, math.nan) for f, lid in FEATURE_LANDMARKS.items()}

    def feature_image_px(self) -> dict[str, float]:
        return {f.value: self.image_error_px.get(lid, math.nan) for f, lid in FEATURE_LANDMARKS.items()}

    def mean_feature_overlay_mm(self) -> float:
        return float(np.mean(list(self.feature_overlay_mm().values()))) if self.ok else math.nan


def _sample_pose(rng: np.random.Generator, ranges: PoseRanges) -> NDArray[np.float64]:
    yaw, pitch, roll = (math.radians(rng.uniform(*r)) for r in (ranges.yaw_deg, ranges.pitch_deg, ranges.roll_deg))
    t = np.array([rng.uniform(*ranges.x_mm), rng.uniform(*ranges.y_mm), rng.uniform(*ranges.z_mm)])
    m = np.eye(4)
    m[:3, :3] = rot_z(roll) @ rot_x(pitch) @ rot_y(yaw)
    m[:3, 3] = t
    return m


def _visible(points_cam: NDArray[np.float64], intr: CameraIntrinsics) -> bool:
    if np.any(points_cam[:, 2] <= 0):
        return False
    uv = project(intr, points_cam)
    return bool(
        np.all(uv[:, 0] >= IMAGE_MARGIN_PX)
        and np.all(uv[:, 0] <= intr.width - 1 - IMAGE_MARGIN_PX)
        and np.all(uv[:, 1] >= IMAGE_MARGIN_PX)
        and np.all(uv[:, 1] <= intr.height - 1 - IMAGE_MARGIN_PX)
    )


def generate_scene(
    seed: int,
    pose_ranges: PoseRanges = PoseRanges(),
    scale_ranges: ScaleRanges = ScaleRanges(),
    *,
    rgbd_pose_ranges: PoseRanges = RGBD_POSE_RANGES,
    model: fm.CanonicalModel | None = None,
    headset_intrinsics: CameraIntrinsics = DEFAULT_HEADSET,
    rgbd_intrinsics: CameraIntrinsics = DEFAULT_RGBD,
) -> SyntheticScene:
    """Deterministic ground-truth scene with the whole head visible in both cameras.

    Raises ``InfeasibleRangeError`` if 1000 pose draws never keep every
    landmark inside both images.
    """
    model = model or fm.default_model()
    rng = rng_streams(seed)["scene"]

    s = rng.uniform(scale_ranges.low, scale_ranges.high)
    d = rng.uniform(-scale_ranges.anisotropy, scale_ranges.anisotropy)
    scale = fm.ScalingFactors(s * (1 + d), s * (1 - d))
    head = model.points() * np.array(scale.as_tuple())

    for _ in range(MAX_ATTEMPTS):
        headset = _sample_pose(rng, pose_ranges)
        rgbd = _sample_pose(rng, rgbd_pose_ranges)
        cam_pts = head @ headset[:3, :3].T + headset[:3, 3]
        rgbd_pts = head @ rgbd[:3, :3].T + rgbd[:3, 3]
        if _visible(cam_pts, headset_intrinsics) and _visible(rgbd_pts, rgbd_intrinsics):
            break
    else:
        raise InfeasibleRangeError(f"no pose in range kept all landmarks in view after {MAX_ATTEMPTS} attempts")

    quat = rng.standard_normal(4)
    slam_r = Rotation.from_quat(quat / np.linalg.norm(quat)).as_matrix()
    slam_t = rng.uniform(-1500.0, 1500.0, size=3)

    return SyntheticScene(
        seed=seed,
        model=model,
        true_face_scale=scale,
        true_head_pose=TaggedTransform(FrameId.HEAD, FrameId.CAMERA, headset),
        true_slam_pose=TaggedTransform.from_rt(slam_r, slam_t, FrameId.CAMERA, FrameId.WORLD),
        headset_intrinsics=headset_intrinsics,
        rgbd_intrinsics=rgbd_intrinsics,
        rgbd_from_head=rgbd,
    )


def render_observations(
    scene: SyntheticScene, noise: NoiseConfig, pnp_config: PnPConfig | None = None
) -> CalibrationInput:
    """Noisy detector-style observations of the scene in both cameras."""
    streams = rng_streams(noise.seed)
    ids = scene.ids
    n = len(ids)
    pixel_z = streams["pixel"].standard_normal((2, n, 2))
    depth_z = streams["depth"].standard_normal(n)
    drop_u = streams["dropout"].random((2, n))
    protected = {*scene.model.width_pair, *scene.model.length_pair}

    rgbd_cam = scene.rgbd_points()
    rgbd_uv = project(scene.rgbd_intrinsics, rgbd_cam) + noise.pixel_sigma * pixel_z[0]
    rgbd_depth = rgbd_cam[:, 2] + noise.depth_sigma * depth_z
    head_uv = project(scene.headset_intrinsics, scene.headset_points()) + noise.pixel_sigma * pixel_z[1]

    def kept(view: int, i: int) -> bool:
        return ids[i] in protected or drop_u[view, i] >= noise.dropout_rate

    rgbd_obs = {
        ids[i]: ((float(rgbd_uv[i, 0]), float(rgbd_uv[i, 1])), float(rgbd_depth[i]))
        for i in range(n)
        if kept(0, i)
    }
    head_obs = {ids[i]: (float(head_uv[i, 0]), float(head_uv[i, 1])) for i in range(n) if kept(1, i)}
    return CalibrationInput(
        rgbd_landmarks=rgbd_obs,
        rgbd_intrinsics=scene.rgbd_intrinsics,
        headset_landmarks=head_obs,
        headset_intrinsics=scene.headset_intrinsics,
        slam_pose=scene.true_slam_pose,
        model=scene.model,
        pnp_config=pnp_config or PnPConfig(),
    )


def run_trial(
    scene: SyntheticScene, noise: NoiseConfig, pnp_config: PnPConfig | None = None
) -> TrialResult:
    """Calibrate from rendered observations and score the overlay against ground truth.

    A calibration failure yields a record with ``ok=False`` instead of raising.
    """
    inp = render_observations(scene, noise, pnp_config)
    try:
        result = calibrate(inp)
    except CalibrationError as exc:
        return TrialResult(
            scene.seed,
            noise.seed,
            ok=False,
            error=str(exc),
            failed_stage=exc.stage,
            true_scale=scene.true_face_scale.as_tuple(),
        )

    ids = scene.ids
    true_world = scene.world_points()
    placed = model_points_in_world(result, scene.model)
    overlay = {lid: float(np.linalg.norm(placed[lid] - true_world[i])) for i, lid in enumerate(ids)}

    cam_from_world = invert(scene.true_slam_pose)
    true_cam = cam_from_world.apply(true_world)
    placed_cam = cam_from_world.apply(np.array([placed[lid] for lid in ids]))
    image_err = {}
    for i, lid in enumerate(ids):
        if true_cam[i, 2] > 0 and placed_cam[i, 2] > 0:
            duv = project(scene.headset_intrinsics, placed_cam[i]) - project(scene.headset_intrinsics, true_cam[i])
            image_err[lid] = float(np.linalg.norm(duv))
        else:
            image_err[lid] = math.nan

    est = result.head_pose.pose
    return TrialResult(
        scene.seed,
        noise.seed,
        ok=True,
        overlay_error_mm=overlay,
        image_error_px=image_err,
        rotation_error_rad=rotation_angle(scene.true_head_pose.rotation, est.rotation),
        translation_error_mm=float(np.linalg.norm(scene.true_head_pose.translation - est.translation)),
        uniform_scale=result.uniform_scale,
        true_scale=scene.true_face_scale.as_tuple(),
    )


def run_trials(
    n_trials: int,
    seed: int,
    pixel_sigma: float = 0.0,
    depth_sigma: float = 0.0,
    dropout_rate: float = 0.0,
    *,
    pose_ranges: PoseRanges = PoseRanges(),
    scale_ranges: ScaleRanges = ScaleRanges(),
    pnp_config: PnPConfig | None = None,
    model: fm.CanonicalModel | None = None,
) -> list[TrialResult]:
    """Trial ``i`` uses ``seed + i`` for both its scene and its noise streams."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    out = []
    for i in range(n_trials):
        s = seed + i
        scene = generate_scene(s, pose_ranges, scale_ranges, model=model)
        noise = NoiseConfig(pixel_sigma, depth_sigma, dropout_rate, seed=s)
        out.append(run_trial(scene, noise, pnp_config))
    return out


def _nan_stat(fn, values: Sequence[float]) -> float | None:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    return float(fn(v)) if v.size else None


def summarize(trials: Sequence[TrialResult]) -> dict:
    ok = [t for t in trials if t.ok]
    per_feature = {}
    for f in FeatureId:
        vals = [t.feature_overlay_mm()[f.value] for t in ok]
        px = [t.feature_image_px()[f.value] for t in ok]
        per_feature[f.value] = {
            "median_overlay_mm": _nan_stat(np.median, vals),
            "mean_overlay_mm": _nan_stat(np.mean, vals),
            "median_image_px": _nan_stat(np.median, px),
            "mean_image_px": _nan_stat(np.mean, px),
        }
    feat_means = [t.mean_feature_overlay_mm() for t in ok]
    all_lm = [e for t in ok for e in t.overlay_error_mm.values()]
    return {
        "n_trials": len(trials),
        "n_failed": len(trials) - len(ok),
        "failed_stages": sorted({t.failed_stage for t in trials if not t.ok and t.failed_stage}),
        "features": per_feature,
        "median_feature_overlay_mm": _nan_stat(np.median, feat_means),
        "mean_feature_overlay_mm": _nan_stat(np.mean, feat_means),
        "median_landmark_overlay_mm": _nan_stat(np.median, all_lm),
        "max_landmark_overlay_mm": _nan_stat(np.max, all_lm),
        "median_rotation_error_rad": _nan_stat(np.median, [t.rotation_error_rad for t in ok]),
        "median_translation_error_mm": _nan_stat(np.median, [t.translation_error_mm for t in ok]),
    }


TRIAL_COLUMNS = [
    "trial",
    "seed",
    "landmark",
    "feature",
    "status",
    "overlay_error_mm",
    "image_error_px",
    "rotation_error_rad",
    "translation_error_mm",
    "uniform_scale",
]


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def trials_csv(trials: Sequence[TrialResult], ids: Sequence[str]) -> str:
    """One row per trial per landmark; floats use ``repr`` so output is byte-stable."""
    feature_of = {lid: f.value for f, lid in FEATURE_LANDMARKS.items()}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRIAL_COLUMNS)
    for k, t in enumerate(trials):
        status = "ok" if t.ok else f"failed:{t.failed_stage}"
        for lid in ids:
            writer.writerow(
                [
                    k,
                    t.scene_seed,
                    lid,
                    feature_of.get(lid, ""),
                    status,
                    _fmt(t.overlay_error_mm.get(lid, math.nan)),
                    _fmt(t.image_error_px.get(lid, math.nan)),
                    _fmt(t.rotation_error_rad),
                    _fmt(t.translation_error_mm),
                    _fmt(t.uniform_scale),
                ]
            )
    return buf.getvalue()
