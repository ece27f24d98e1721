"""JSON/CSV file formats: loading with full validation, and writers.

Every loader reports problems as ``ValidationError(file, field, rule)`` or
``ParseError(file, message, line, column)``; nothing is silently coerced.
"""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import face_model as fm
from .camera import CameraIntrinsics
from .errors import InvalidTransformError, ParseError, ValidationError
from .evaluation import ErrorSample, FeatureId, HeadSize
from .pipeline import CalibrationInput, CalibrationResult, model_points_in_world
from .pnp import PnPConfig
from .transforms import FrameId, TaggedTransform

__all__ = [
    "LandmarkFile",
    "RunManifest",
    "read_json",
    "load_intrinsics",
    "load_landmarks",
    "load_pose",
    "load_canonical_model",
    "load_head_sizes",
    "load_samples",
    "load_manifest",
    "build_calibration_input",
    "intrinsics_to_dict",
    "landmarks_to_dict",
    "pose_to_dict",
    "result_to_dict",
    "write_json",
    "write_samples",
    "packaged_path",
    "reference_overlay_stats",
    "reference_samples",
    "SAMPLE_COLUMNS",
]

SAMPLE_COLUMNS = ["participant", "pose", "feature", "annot_u", "annot_v", "det_u", "det_v"]
PNP_FIELDS = {"max_iterations": int, "convergence_tol": float, "damping_init": float, "min_points": int}


@dataclass(frozen=True)
class LandmarkFile:
    camera: str
    image_size: tuple[int, int]
    landmarks: dict[str, tuple[float, float, float | None]]  # id -> (u, v, depth_mm)


@dataclass(frozen=True)
class RunManifest:
    rgbd_intrinsics: Path
    headset_intrinsics: Path
    rgbd_landmarks: Path
    headset_landmarks: Path
    slam_pose: Path
    canonical_model: Path | None = None
    pnp: dict[str, Any] = field(default_factory=dict)
    output_dir: Path = Path(".")
    source: Path | None = None


# ---------------------------------------------------------------------------
# primitives


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ValidationError(str(path), "<file>", "file does not exist") from None
    except OSError as exc:
        raise ValidationError(str(path), "<file>", f"cannot read: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), exc.msg, exc.lineno, exc.colno) from None


def _obj(data: Any, file: str, where: str = "<root>") -> dict:
    if not isinstance(data, dict):
        raise ValidationError(file, where, "must be a JSON object")
    return data


def _get(data: dict, key: str, file: str, prefix: str = "") -> Any:
    if key not in data:
        raise ValidationError(file, prefix + key, "required field is missing")
    return data[key]


def _number(value: Any, file: str, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(file, name, f"must be a number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise ValidationError(file, name, "must be finite")
    return float(value)


def _integer(value: Any, file: str, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(file, name, f"must be an integer, got {value!r}")
    return value


def _numbers(value: Any, n: int, file: str, name: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise ValidationError(file, name, f"must be a list of {n} numbers")
    return [_number(v, file, f"{name}[{i}]") for i, v in enumerate(value)]


# ---------------------------------------------------------------------------
# loaders


def intrinsics_from_dict(data: Any, file: str) -> CameraIntrinsics:
    data = _obj(data, file)
    vals = {k: _number(_get(data, k, file), file, k) for k in ("fx", "fy", "cx", "cy")}
    width = _integer(_get(data, "width", file), file, "width")
    height = _integer(_get(data, "height", file), file, "height")
    rules = [
        ("width", width > 0, "must be > 0"),
        ("height", height > 0, "must be > 0"),
        ("fx", vals["fx"] > 0, "must be > 0"),
        ("fy", vals["fy"] > 0, "must be > 0"),
        ("cx", 0 < vals["cx"] < width, f"must satisfy 0 < cx < width ({width})"),
        ("cy", 0 < vals["cy"] < height, f"must satisfy 0 < cy < height ({height})"),
    ]
    for name, ok, rule in rules:
        if not ok:
            raise ValidationError(file, name, rule)
    return CameraIntrinsics(width=width, height=height, **vals)


def load_intrinsics(path: str | Path) -> CameraIntrinsics:
    return intrinsics_from_dict(read_json(path), str(path))


def load_landmarks(path: str | Path, expect_camera: str | None = None) -> LandmarkFile:
    file = str(path)
    data = _obj(read_json(path), file)
    camera = _get(data, "camera", file)
    if camera not in ("rgbd", "headset"):
        raise ValidationError(file, "camera", 'must be "rgbd" or "headset"')
    if expect_camera is not None and camera != expect_camera:
        raise ValidationError(file, "camera", f'expected "{expect_camera}", got "{camera}"')
    size = _get(data, "image_size", file)
    if not isinstance(size, list) or len(size) != 2:
        raise ValidationError(file, "image_size", "must be [width_px, height_px]")
    width = _integer(size[0], file, "image_size[0]")
    height = _integer(size[1], file, "image_size[1]")
    if width <= 0 or height <= 0:
        raise ValidationError(file, "image_size", "must be positive")
    entries = _get(data, "landmarks", file)
    if not isinstance(entries, list):
        raise ValidationError(file, "landmarks", "must be a list")

    out: dict[str, tuple[float, float, float | None]] = {}
    for i, entry in enumerate(entries):
        where = f"landmarks[{i}]"
        entry = _obj(entry, file, where)
        lid = _get(entry, "id", file, where + ".")
        if not isinstance(lid, (str, int)) or isinstance(lid, bool):
            raise ValidationError(file, where + ".id", "must be a string or integer")
        lid = str(lid)
        if lid in out:
            raise ValidationError(file, where + ".id", f"duplicate landmark id {lid!r}")
        u = _number(_get(entry, "u", file, where + "."), file, where + ".u")
        v = _number(_get(entry, "v", file, where + "."), file, where + ".v")
        if not (0 <= u < width and 0 <= v < height):
            raise ValidationError(file, f"{where} (id {lid!r})", f"pixel ({u}, {v}) outside image {width}x{height}")
        depth = None
        if camera == "rgbd":
            depth = _number(_get(entry, "depth_mm", file, where + "."), file, where + ".depth_mm")
            if not depth > 0:
                raise ValidationError(file, f"{where}.depth_mm (id {lid!r})", "depth_mm must be > 0")
        elif "depth_mm" in entry:
            raise ValidationError(file, f"{where}.depth_mm (id {lid!r})", "only rgbd landmarks carry depth")
        out[lid] = (u, v, depth)
    return LandmarkFile(camera, (width, height), out)


def pose_from_dict(data: Any, file: str) -> TaggedTransform:
    data = _obj(data, file)
    frames = {}
    for key in ("from", "to"):
        value = _get(data, key, file)
        try:
            frames[key] = FrameId.parse(value)
        except ValueError as exc:
            raise ValidationError(file, key, str(exc)) from None
    rotation = _numbers(_get(data, "rotation", file), 9, file, "rotation")
    translation = _numbers(_get(data, "translation_mm", file), 3, file, "translation_mm")
    try:
        return TaggedTransform.from_rt(np.reshape(rotation, (3, 3)), translation, frames["from"], frames["to"])
    except InvalidTransformError as exc:
        raise ValidationError(file, "rotation", str(exc)) from None


def load_pose(path: str | Path) -> TaggedTransform:
    return pose_from_dict(read_json(path), str(path))


def load_canonical_model(path: str | Path) -> fm.CanonicalModel:
    file = str(path)
    data = _obj(read_json(path), file)
    w_o = _number(_get(data, "w_o_mm", file), file, "w_o_mm")
    l_o = _number(_get(data, "l_o_mm", file), file, "l_o_mm")
    pairs = {}
    for key in ("width_pair", "length_pair"):
        pair = _get(data, key, file)
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValidationError(file, key, "must list exactly two landmark ids")
        pairs[key] = tuple(str(p) for p in pair)
    entries = _get(data, "landmarks", file)
    if not isinstance(entries, list):
        raise ValidationError(file, "landmarks", "must be a list")
    landmarks = {}
    for i, entry in enumerate(entries):
        where = f"landmarks[{i}]"
        entry = _obj(entry, file, where)
        lid = str(_get(entry, "id", file, where + "."))
        if lid in landmarks:
            raise ValidationError(file, where + ".id", f"duplicate landmark id {lid!r}")
        landmarks[lid] = [
            _number(_get(entry, k, file, where + "."), file, f"{where}.{k}") for k in ("x_mm", "y_mm", "z_mm")
        ]
    try:
        return fm.CanonicalModel(landmarks, w_o, l_o, pairs["width_pair"], pairs["length_pair"])
    except ValueError as exc:
        raise ValidationError(file, "<model>", str(exc)) from None


def load_head_sizes(path: str | Path) -> dict[str, HeadSize]:
    file = str(path)
    data = read_json(path)
    if not isinstance(data, list):
        raise ValidationError(file, "<root>", "must be a JSON list")
    out = {}
    for i, entry in enumerate(data):
        where = f"[{i}]"
        entry = _obj(entry, file, where)
        participant = str(_get(entry, "participant", file, where + "."))
        if participant in out:
            raise ValidationError(file, where + ".participant", f"duplicate participant {participant!r}")
        vals = {}
        for k in ("width_px", "length_px", "width_mm", "length_mm"):
            vals[k] = _number(_get(entry, k, file, where + "."), file, f"{where}.{k}")
            if vals[k] <= 0:
                raise ValidationError(file, f"{where}.{k}", "must be > 0")
        out[participant] = HeadSize(**vals)
    return out


def load_samples(path: str | Path) -> list[ErrorSample]:
    file = str(path)
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise ValidationError(file, "<file>", "file does not exist") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in SAMPLE_COLUMNS if c not in header]
        if missing:
            raise ParseError(file, f"missing column(s): {', '.join(missing)}", 1)
        out = []
        for row in reader:
            line = reader.line_num
            try:
                pose = int(row["pose"])
                coords = [float(row[c]) for c in ("annot_u", "annot_v", "det_u", "det_v")]
            except (TypeError, ValueError) as exc:
                raise ParseError(file, f"bad number: {exc}", line) from None
            if not all(math.isfinite(c) for c in coords):
                raise ValidationError(file, f"line {line}", "coordinates must be finite")
            try:
                feature = FeatureId(row["feature"])
            except ValueError:
                raise ValidationError(file, f"line {line}: feature", f"unknown feature {row['feature']!r}") from None
            out.append(ErrorSample(row["participant"], pose, feature, tuple(coords[:2]), tuple(coords[2:])))
    return out


def _pnp_config(overrides: Any, file: str) -> PnPConfig:
    overrides = _obj(overrides, file, "pnp")
    kwargs = {}
    for key, value in overrides.items():
        if key not in PNP_FIELDS:
            raise ValidationError(file, f"pnp.{key}", f"unknown option; expected one of {sorted(PNP_FIELDS)}")
        kwargs[key] = (
            _integer(value, file, f"pnp.{key}") if PNP_FIELDS[key] is int else _number(value, file, f"pnp.{key}")
        )
    try:
        return PnPConfig(**kwargs)
    except ValueError as exc:
        raise ValidationError(file, "pnp", str(exc)) from None


def load_manifest(path: str | Path) -> RunManifest:
    """Load a run manifest; relative paths resolve against the manifest's directory."""
    file = str(path)
    data = _obj(read_json(path), file)
    base = Path(path).parent

    def ref(key: str, required: bool = True) -> Path | None:
        if key not in data:
            if required:
                raise ValidationError(file, key, "required field is missing")
            return None
        value = data[key]
        if not isinstance(value, str):
            raise ValidationError(file, key, "must be a path string")
        p = Path(value)
        p = p if p.is_absolute() else base / p
        if not p.is_file():
            raise ValidationError(file, key, f"referenced file {p} does not exist")
        return p

    pnp = data.get("pnp", {})
    _pnp_config(pnp, file)
    out_dir = data.get("output_dir", ".")
    if not isinstance(out_dir, str):
        raise ValidationError(file, "output_dir", "must be a path string")
    out_path = Path(out_dir)
    return RunManifest(
        rgbd_intrinsics=ref("rgbd_intrinsics"),
        headset_intrinsics=ref("headset_intrinsics"),
        rgbd_landmarks=ref("rgbd_landmarks"),
        headset_landmarks=ref("headset_landmarks"),
        slam_pose=ref("slam_pose"),
        canonical_model=ref("canonical_model", required=False),
        pnp=dict(pnp),
        output_dir=out_path if out_path.is_absolute() else base / out_path,
        source=Path(path),
    )


def build_calibration_input(manifest: RunManifest) -> CalibrationInput:
    rgbd_intr = load_intrinsics(manifest.rgbd_intrinsics)
    head_intr = load_intrinsics(manifest.headset_intrinsics)
    rgbd = load_landmarks(manifest.rgbd_landmarks, expect_camera="rgbd")
    head = load_landmarks(manifest.headset_landmarks, expect_camera="headset")
    for lm, intr, p in ((rgbd, rgbd_intr, manifest.rgbd_landmarks), (head, head_intr, manifest.headset_landmarks)):
        if lm.image_size != (intr.width, intr.height):
            raise ValidationError(
                str(p), "image_size", f"{list(lm.image_size)} does not match intrinsics {intr.width}x{intr.height}"
            )
    slam = load_pose(manifest.slam_pose)
    if (slam.src, slam.dst) != (FrameId.CAMERA, FrameId.WORLD):
        raise ValidationError(str(manifest.slam_pose), "from/to", f"SLAM pose must map C to W, got {slam.tag}")
    model = load_canonical_model(manifest.canonical_model) if manifest.canonical_model else fm.default_model()
    return CalibrationInput(
        rgbd_landmarks={k: ((u, v), d) for k, (u, v, d) in rgbd.landmarks.items()},
        rgbd_intrinsics=rgbd_intr,
        headset_landmarks={k: (u, v) for k, (u, v, _) in head.landmarks.items()},
        headset_intrinsics=head_intr,
        slam_pose=slam,
        model=model,
        pnp_config=_pnp_config(manifest.pnp, str(manifest.source or "<manifest>")),
    )


# ---------------------------------------------------------------------------
# writers


def intrinsics_to_dict(intr: CameraIntrinsics) -> dict:
    return intr.to_dict()


def landmarks_to_dict(camera: str, image_size: tuple[int, int], landmarks: dict) -> dict:
    """``landmarks`` maps id -> (u, v) for headset files or ((u, v), depth) for rgbd files."""
    entries = []
    for lid, value in landmarks.items():
        if camera == "rgbd":
            (u, v), d = value
            entries.append({"id": lid, "u": float(u), "v": float(v), "depth_mm": float(d)})
        else:
            u, v = value
            entries.append({"id": lid, "u": float(u), "v": float(v)})
    return {"camera": camera, "image_size": list(image_size), "landmarks": entries}


def pose_to_dict(t: TaggedTransform) -> dict:
    return {
        "from": t.src.value,
        "to": t.dst.value,
        "rotation": [float(x) for x in t.rotation.reshape(-1)],
        "translation_mm": [float(x) for x in t.translation],
    }


def result_to_dict(result: CalibrationResult, model: fm.CanonicalModel) -> dict:
    hp = result.head_pose
    return {
        "world_pose": pose_to_dict(result.world_pose),
        "uniform_scale": result.uniform_scale,
        "scaling": {"a_x": result.scaling.a_x, "a_y": result.scaling.a_y, "a_z": result.scaling.a_z},
        "measurement": {"w_mm": result.measurement.w, "l_mm": result.measurement.l},
        "head_pose": {
            "pose": pose_to_dict(hp.pose),
            "reprojection_rms_px": hp.reprojection_rms,
            "iterations": hp.iterations,
            "converged": hp.converged,
            "init_method": hp.init_method,
        },
        "model_landmarks_world_mm": {k: [float(x) for x in p] for k, p in model_points_in_world(result, model).items()},
    }


def write_json(path: str | Path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def write_samples(path: str | Path, samples) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLE_COLUMNS)
        for s in samples:
            writer.writerow(
                [s.participant, s.pose, FeatureId(s.feature).value, *(repr(float(x)) for x in s.annotated), *(repr(float(x)) for x in s.detected)]
            )
    return path


def packaged_path(name: str) -> Path:
    """Filesystem path of a fixture shipped in ``headcal/data``."""
    return Path(str(resources.files("headcal.data").joinpath(name)))


def reference_overlay_stats() -> dict:
    """Published per-participant overlay statistics (pixel and mm cells, pose counts, pooled row)."""
    return read_json(packaged_path("overlay_reference_stats.json"))


def reference_samples() -> list[ErrorSample]:
    """Sample-level fixture rebuilt from the reference per-feature pixel means and stds."""
    from .evaluation import samples_with_moments

    out = []
    for entry in reference_overlay_stats()["participants"]:
        moments = {
            f.value: (entry["features"][f.value]["mean_px"], entry["features"][f.value]["std_px"]) for f in FeatureId
        }
        out.extend(samples_with_moments(entry["participant"], moments, entry["n_poses"]))
    return out
