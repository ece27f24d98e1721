"""Pinhole camera: projection, depth lookup and depth backprojection.

Pixel coordinates are continuous; pixel ``(i, j)`` covers the centre at
integer ``(u, v) = (i, j)``. Depth is stored in millimetres with 0 meaning
"no measurement".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidDepthError, NonPositiveDepthError, OutOfBoundsError

__all__ = [
    "CameraIntrinsics",
    "DepthImage",
    "project",
    "backproject",
    "backproject_depth",
    "depth_at",
    "in_image",
]


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not 0 < self.cx < self.width:
            raise ValueError(f"cx={self.cx} outside (0, {self.width})")
        if not 0 < self.cy < self.height:
            raise ValueError(f"cy={self.cy} outside (0, {self.height})")

    @property
    def K(self) -> NDArray[np.float64]:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> NDArray[np.float64]:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Row-major depth map, ``data[v, u]`` in millimetres."""

    width: int
    height: int
    data: NDArray[np.float64]

    def __post_init__(self) -> None:
        d = np.array(self.data, dtype=float)
        if d.size != self.width * self.height:
            raise ValueError(f"depth data has {d.size} values, expected {self.width}x{self.height}")
        d = d.reshape(self.height, self.width)
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise ValueError("depths must be finite and >= 0")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def constant(cls, width: int, height: int, depth_mm: float) -> "DepthImage":
        return cls(width, height, np.full((height, width), float(depth_mm)))


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def in_image(intr: CameraIntrinsics, px: ArrayLike) -> NDArray[np.bool_]:
    """True where ``0 <= u < width`` and ``0 <= v < height``."""
    p = np.asarray(px, dtype=float)
    u, v = p[..., 0], p[..., 1]
    return (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)


def project(intr: CameraIntrinsics, points: ArrayLike) -> NDArray[np.float64]:
    """Pinhole projection of camera-frame point(s) (3,) or (N, 3) to pixels."""
    p = np.asarray(points, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepthError(f"cannot project point with z <= 0 (min z = {np.min(z)})")
    u = intr.fx * p[..., 0] / z + intr.cx
    v = intr.fy * p[..., 1] / z + intr.cy
    return np.stack([u, v], axis=-1)


def depth_at(depth: DepthImage, px: ArrayLike) -> float:
    """Nearest-neighbour depth lookup (round half away from zero, clamped to the last row/column)."""
    u, v = (float(c) for c in np.asarray(px, dtype=float).reshape(2))
    if not (0 <= u < depth.width and 0 <= v < depth.height):
        raise OutOfBoundsError(f"pixel ({u}, {v}) outside {depth.width}x{depth.height} image")
    i = min(_round_half_away(u), depth.width - 1)
    j = min(_round_half_away(v), depth.height - 1)
    d = float(depth.data[j, i])
    if d == 0:
        raise InvalidDepthError(f"no depth at pixel ({u}, {v})")
    return d


def backproject_depth(intr: CameraIntrinsics, px: ArrayLike, depth_mm: float) -> NDArray[np.float64]:
    """Lift a pixel with known depth to a camera-frame point: ``d * K^-1 [u, v, 1]``."""
    u, v = (float(c) for c in np.asarray(px, dtype=float).reshape(2))
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise OutOfBoundsError(f"pixel ({u}, {v}) outside {intr.width}x{intr.height} image")
    if not depth_mm > 0:
        raise InvalidDepthError(f"invalid depth {depth_mm} at pixel ({u}, {v})")
    # z is exactly depth_mm: the last row of K^-1 is [0, 0, 1].
    return np.array([(u - intr.cx) / intr.fx * depth_mm, (v - intr.cy) / intr.fy * depth_mm, depth_mm])


def backproject(intr: CameraIntrinsics, px: ArrayLike, depth: DepthImage) -> NDArray[np.float64]:
    return backproject_depth(intr, px, depth_at(depth, px))
