"""Overlay-error statistics for annotated vs detected facial landmarks.

Pixel errors are converted to millimetres with a per-participant ratio taken
from the measured head size. By default the ratio is ``width_mm / width_px``;
``mode="avg"`` averages the width and length ratios instead.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyGroupError, UnknownParticipantError

ALL = "All"
MEAN_ROW = "Mean"
MM_RATIO_MODES = ("width", "avg")
REPORT_COLUMNS = ["participant", "n_poses", "feature", "mean_px", "mean_mm", "std_px", "std_mm"]

__all__ = [
    "ALL",
    "FeatureId",
    "FEATURE_LANDMARKS",
    "HeadSize",
    "ErrorSample",
    "FeatureStats",
    "pixel_error",
    "px_to_mm",
    "participant_stats",
    "pooled_stats",
    "mean_row",
    "emit_report",
    "round2",
    "samples_with_moments",
]


class FeatureId(str, enum.Enum):
    F1 = "F1"  # left eye corner
    F2 = "F2"  # chin
    F3 = "F3"  # right eye corner


FEATURE_LANDMARKS = {
    FeatureId.F1: "left_eye_outer",
    FeatureId.F2: "chin",
    FeatureId.F3: "right_eye_outer",
}

_FEATURE_ORDER = [f.value for f in FeatureId] + [ALL]


@dataclass(frozen=True)
class HeadSize:
    width_px: float
    length_px: float
    width_mm: float
    length_mm: float

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")

    def mm_per_px(self, mode: str = "width") -> float:
        if mode == "width":
            return self.width_mm / self.width_px
        if mode == "avg":
            return (self.width_mm / self.width_px + self.length_mm / self.length_px) / 2
        raise ValueError(f"unknown mm-ratio mode {mode!r}; expected one of {MM_RATIO_MODES}")


@dataclass(frozen=True)
class ErrorSample:
    participant: str
    pose: int
    feature: FeatureId
    annotated: tuple[float, float]
    detected: tuple[float, float]


@dataclass(frozen=True)
class FeatureStats:
    n: int
    mean_px: float
    std_px: float
    mean_mm: float
    std_mm: float
    n_poses: int = 0


def pixel_error(sample: ErrorSample) -> float:
    du = sample.annotated[0] - sample.detected[0]
    dv = sample.annotated[1] - sample.detected[1]
    return math.hypot(du, dv)


def px_to_mm(err_px: float, size: HeadSize, mode: str = "width") -> float:
    return err_px * size.mm_per_px(mode)


def _stats_from_errors(errors: Sequence[float], n_poses: int, ratio: float) -> FeatureStats:
    if len(errors) == 0:
        raise EmptyGroupError("cannot summarise an empty group")
    e = np.asarray(errors, dtype=float)
    mean = float(np.mean(e))
    std = float(np.std(e))  # population convention
    return FeatureStats(len(e), mean, std, mean * ratio, std * ratio, n_poses)


def participant_stats(
    samples: Iterable[ErrorSample],
    sizes: Mapping[str, HeadSize],
    mode: str = "width",
) -> dict[tuple[str, str], FeatureStats]:
    """Mean/std per (participant, feature), plus an ``All`` group pooling a participant's samples.

    Raises ``UnknownParticipantError`` naming any participant without a head size.
    """
    by_group: dict[tuple[str, str], list[float]] = defaultdict(list)
    poses: dict[tuple[str, str], set[int]] = defaultdict(set)
    for s in samples:
        feature = FeatureId(s.feature).value
        err = pixel_error(s)
        for key in ((s.participant, feature), (s.participant, ALL)):
            by_group[key].append(err)
            poses[key].add(s.pose)

    missing = sorted({p for p, _ in by_group} - set(sizes))
    if missing:
        raise UnknownParticipantError(f"no head size for participant(s): {', '.join(missing)}")

    out = {}
    for participant in sorted({p for p, _ in by_group}):
        ratio = sizes[participant].mm_per_px(mode)
        for feature in _FEATURE_ORDER:
            key = (participant, feature)
            if key in by_group:
                out[key] = _stats_from_errors(by_group[key], len(poses[key]), ratio)
    return out


def pooled_stats(per_participant: Sequence[tuple[int, float, float]]) -> tuple[float, float]:
    """Combine ``(n, mean, std)`` groups into the mean and std of the pooled population."""
    if not per_participant:
        raise EmptyGroupError("no groups to pool")
    ns = np.array([g[0] for g in per_participant], dtype=float)
    means = np.array([g[1] for g in per_participant], dtype=float)
    stds = np.array([g[2] for g in per_participant], dtype=float)
    if np.any(ns < 1):
        raise ValueError("every group needs n >= 1")
    total = ns.sum()
    mean = float(ns @ means / total)
    var = float(ns @ (stds**2 + (means - mean) ** 2) / total)
    return mean, math.sqrt(var)


def mean_row(stats: Mapping[tuple[str, str], FeatureStats]) -> dict[str, FeatureStats]:
    """Pose-count-weighted pooling of each feature column across participants."""
    columns: dict[str, list[FeatureStats]] = defaultdict(list)
    for (_, feature), st in stats.items():
        columns[feature].append(st)
    out = {}
    for feature in sorted(columns, key=_feature_rank):
        rows = columns[feature]
        weights = [st.n_poses or st.n for st in rows]
        mean_px, std_px = pooled_stats([(w, st.mean_px, st.std_px) for w, st in zip(weights, rows)])
        mean_mm, std_mm = pooled_stats([(w, st.mean_mm, st.std_mm) for w, st in zip(weights, rows)])
        out[feature] = FeatureStats(
            sum(st.n for st in rows), mean_px, std_px, mean_mm, std_mm, sum(weights)
        )
    return out


def _feature_rank(feature: str) -> int:
    return _FEATURE_ORDER.index(feature) if feature in _FEATURE_ORDER else len(_FEATURE_ORDER)


def round2(x: float) -> str:
    """Two decimals, half away from zero on the shortest decimal repr."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def emit_report(
    stats: Mapping[tuple[str, str], FeatureStats],
    out_dir: str | Path,
    stem: str = "overlay_report",
    mode: str = "width",
) -> tuple[Path, Path]:
    """Write a tabular CSV (2 decimals) and a full-precision JSON; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(stats.items(), key=lambda kv: (kv[0][0], _feature_rank(kv[0][1])))
    pooled = mean_row(stats) if stats else {}

    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for (participant, feature), st in ordered:
            writer.writerow(_csv_row(participant, feature, st))
        for feature, st in pooled.items():
            writer.writerow(_csv_row(MEAN_ROW, feature, st))

    json_path = out_dir / f"{stem}.json"
    doc = {
        "mm_ratio": mode,
        "std_convention": "population",
        "rows": [
            {"participant": p, "feature": f, **asdict(st)} for (p, f), st in ordered
        ],
        "mean": [{"participant": MEAN_ROW, "feature": f, **asdict(st)} for f, st in pooled.items()],
    }
    json_path.write_text(json.dumps(doc, indent=2) + "\n")
    return csv_path, json_path


def _csv_row(participant: str, feature: str, st: FeatureStats) -> list[str]:
    return [
        participant,
        str(st.n_poses or st.n),
        feature,
        round2(st.mean_px),
        round2(st.mean_mm),
        round2(st.std_px),
        round2(st.std_mm),
    ]


def _unit_moment_offsets(n: int) -> NDArray[np.float64]:
    """``n`` values with mean exactly 0 and population std 1 (up to rounding)."""
    if n == 1:
        return np.zeros(1)
    k = n // 2
    a = math.sqrt(n / (2 * k))
    z = np.concatenate([np.full(k, a), np.full(k, -a), np.zeros(n - 2 * k)])
    # interleave so consecutive poses alternate above/below the mean
    order = np.argsort(np.arange(n) % 2, kind="stable")
    out = np.empty(n)
    out[order] = z
    return out


def samples_with_moments(
    participant: str,
    moments: Mapping[FeatureId | str, tuple[float, float]],
    n_poses: int,
    origin: tuple[float, float] = (640.0, 480.0),
) -> list[ErrorSample]:
    """Deterministic samples whose per-feature pixel errors have the given population mean and std.

    Used to rebuild a sample-level fixture from reference summary statistics.
    """
    z = _unit_moment_offsets(n_poses)
    out = []
    for pose in range(n_poses):
        for j, (feature, (mean, std)) in enumerate(moments.items()):
            err = float(mean + std * z[(pose + j) % n_poses])
            if err < 0:
                raise ValueError(f"mean {mean} and std {std} imply a negative error")
            theta = 2 * math.pi * ((pose * 7 + j * 3) % 36) / 36
            det = (origin[0] + (pose % 20) * 4.0, origin[1] + (pose // 20) * 4.0)
            ann = (det[0] + err * math.cos(theta), det[1] + err * math.sin(theta))
            out.append(ErrorSample(participant, pose, FeatureId(feature), ann, det))
    return out
