"""Canonical face landmarks, face measurement and per-axis model scaling.

Model axes: x runs across the face (width), y from forehead to chin
(length), z into the head (depth). The nose tip is the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

from .errors import MissingLandmarkError, NonPositiveMeasurementError

NOSE_TIP = "nose_tip"
PAIR_TOL_MM = 1e-6

__all__ = [
    "NOSE_TIP",
    "CanonicalModel",
    "FaceMeasurement",
    "ScalingFactors",
    "default_model",
    "measure_face",
    "scaling_factors",
    "scale_landmarks",
    "uniform_model_scale",
]


@dataclass(frozen=True, eq=False)
class CanonicalModel:
    landmarks: Mapping[str, NDArray[np.float64]]
    w_o: float
    l_o: float
    width_pair: tuple[str, str]
    length_pair: tuple[str, str]
    origin_id: str = NOSE_TIP

    def __post_init__(self) -> None:
        pts = {}
        for key, p in self.landmarks.items():
            a = np.array(p, dtype=float).reshape(3)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"landmark {key!r} has non-finite coordinates")
            a.setflags(write=False)
            pts[str(key)] = a
        object.__setattr__(self, "landmarks", pts)
        object.__setattr__(self, "width_pair", tuple(self.width_pair))
        object.__setattr__(self, "length_pair", tuple(self.length_pair))

        if self.origin_id not in pts:
            raise ValueError(f"model has no {self.origin_id!r} landmark")
        if np.any(pts[self.origin_id] != 0.0):
            raise ValueError(f"{self.origin_id!r} must sit at the origin")
        if not (self.w_o > 0 and self.l_o > 0):
            raise ValueError("model dimensions must be positive")
        for name, pair, expected in (
            ("width_pair", self.width_pair, self.w_o),
            ("length_pair", self.length_pair, self.l_o),
        ):
            if len(pair) != 2:
                raise ValueError(f"{name} must name two landmarks")
            for lid in pair:
                if lid not in pts:
                    raise ValueError(f"{name} references unknown landmark {lid!r}")
            dist = float(np.linalg.norm(pts[pair[0]] - pts[pair[1]]))
            if abs(dist - expected) > PAIR_TOL_MM:
                raise ValueError(f"{name} spans {dist} mm but the model declares {expected} mm")

    @property
    def ids(self) -> list[str]:
        return list(self.landmarks)

    def points(self, ids=None) -> NDArray[np.float64]:
        ids = self.ids if ids is None else ids
        return np.array([self.landmarks[i] for i in ids])

    @classmethod
    def from_dict(cls, data: dict) -> "CanonicalModel":
        return cls(
            landmarks={
                str(lm["id"]): (lm["x_mm"], lm["y_mm"], lm["z_mm"]) for lm in data["landmarks"]
            },
            w_o=float(data["w_o_mm"]),
            l_o=float(data["l_o_mm"]),
            width_pair=tuple(data["width_pair"]),
            length_pair=tuple(data["length_pair"]),
        )

    def to_dict(self) -> dict:
        return {
            "w_o_mm": self.w_o,
            "l_o_mm": self.l_o,
            "width_pair": list(self.width_pair),
            "length_pair": list(self.length_pair),
            "landmarks": [
                {"id": k, "x_mm": float(p[0]), "y_mm": float(p[1]), "z_mm": float(p[2])}
                for k, p in self.landmarks.items()
            ],
        }


@dataclass(frozen=True)
class FaceMeasurement:
    w: float
    l: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.l > 0):
            raise NonPositiveMeasurementError(f"face measurement must be positive, got w={self.w}, l={self.l}")


@dataclass(frozen=True)
class ScalingFactors:
    """Per-axis model scaling; ``a_z`` is always the mean of ``a_x`` and ``a_y``."""

    a_x: float
    a_y: float
    a_z: float | None = None

    def __post_init__(self) -> None:
        mean = (self.a_x + self.a_y) / 2
        if self.a_z is None:
            object.__setattr__(self, "a_z", mean)
        elif self.a_z != mean:
            raise ValueError(f"a_z={self.a_z} must equal (a_x + a_y) / 2 = {mean}")
        if not (self.a_x > 0 and self.a_y > 0):
            raise ValueError(f"scaling factors must be positive, got {self.as_tuple()}")

    @classmethod
    def uniform(cls, s: float) -> "ScalingFactors":
        return cls(s, s, s)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a_x, self.a_y, self.a_z)

    @property
    def matrix(self) -> NDArray[np.float64]:
        return np.diag(self.as_tuple())


_DEFAULT_MODEL: CanonicalModel | None = None


def default_model() -> CanonicalModel:
    """The shipped synthetic 160 x 230 mm landmark set."""
    global _DEFAULT_MODEL
    if _DEFAULT_MODEL is None:
        text = resources.files("headcal.data").joinpath("canonical_model.json").read_text()
        _DEFAULT_MODEL = CanonicalModel.from_dict(json.loads(text))
    return _DEFAULT_MODEL


def measure_face(points: Mapping[str, NDArray[np.float64]], model: CanonicalModel) -> FaceMeasurement:
    for lid in (*model.width_pair, *model.length_pair):
        if lid not in points:
            raise MissingLandmarkError(lid)

    def dist(pair):
        return float(np.linalg.norm(np.asarray(points[pair[0]], float) - np.asarray(points[pair[1]], float)))

    return FaceMeasurement(w=dist(model.width_pair), l=dist(model.length_pair))


def scaling_factors(meas: FaceMeasurement, model: CanonicalModel) -> ScalingFactors:
    if not (meas.w > 0 and meas.l > 0):
        raise NonPositiveMeasurementError(f"face measurement must be positive, got w={meas.w}, l={meas.l}")
    a_x = meas.w / model.w_o
    a_y = meas.l / model.l_o
    return ScalingFactors(a_x, a_y, (a_x + a_y) / 2)


def scale_landmarks(model: CanonicalModel, s: ScalingFactors) -> dict[str, NDArray[np.float64]]:
    factors = np.array(s.as_tuple())
    return {k: p * factors for k, p in model.landmarks.items()}


def uniform_model_scale(s: ScalingFactors) -> float:
    """The single factor applied to the rendered model so its shape is preserved."""
    return s.a_z
