"""Frame-tagged rigid transforms and the model-to-world calibration chain.

Every transform is written ``T_dst<-src``: it maps points expressed in the
``src`` frame into the ``dst`` frame. The four frames are the headset camera
``C``, the real head ``H`` (nose tip at the origin), the left-handed virtual
model ``V`` and the virtual world ``W``.

Reflections (det -1) are only legal on transforms that cross the handedness
boundary, i.e. exactly one of ``src``/``dst`` is ``V``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation

from .errors import FrameMismatchError, InvalidTransformError

ORTHO_TOL = 1e-9

__all__ = [
    "FrameId",
    "TaggedTransform",
    "axis_angle_to_matrix",
    "matrix_to_axis_angle",
    "rot_x",
    "rot_y",
    "rot_z",
    "rotation_angle",
    "compose",
    "invert",
    "model_to_head_convention",
    "solve_world_pose",
]


class FrameId(str, enum.Enum):
    CAMERA = "C"
    HEAD = "H"
    VIRTUAL_MODEL = "V"
    WORLD = "W"

    @classmethod
    def parse(cls, value: "str | FrameId") -> "FrameId":
        if isinstance(value, FrameId):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown frame {value!r}; expected one of C, H, V, W") from None


def _crosses_handedness(src: FrameId, dst: FrameId) -> bool:
    return (src is FrameId.VIRTUAL_MODEL) != (dst is FrameId.VIRTUAL_MODEL)


def axis_angle_to_matrix(rotvec: ArrayLike) -> NDArray[np.float64]:
    """Rotation matrix for an axis-angle vector (radians, axis scaled by angle)."""
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix()


def matrix_to_axis_angle(rotation: ArrayLike) -> NDArray[np.float64]:
    return Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_rotvec()


def rot_x(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_angle(r_a: ArrayLike, r_b: ArrayLike) -> float:
    """Geodesic distance between two rotations, in radians."""
    rel = np.asarray(r_a, dtype=float).T @ np.asarray(r_b, dtype=float)
    return float(np.linalg.norm(Rotation.from_matrix(rel).as_rotvec()))


@dataclass(frozen=True, eq=False)
class TaggedTransform:
    """A 4x4 homogeneous transform ``T_dst<-src`` in millimetres.

    The matrix is validated on construction (bottom row, orthonormal rotation
    block, determinant sign) and stored read-only.
    """

    src: FrameId
    dst: FrameId
    matrix: NDArray[np.float64]

    def __post_init__(self) -> None:
        src = FrameId.parse(self.src)
        dst = FrameId.parse(self.dst)
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise InvalidTransformError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidTransformError("matrix has non-finite entries")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidTransformError(f"bottom row must be [0, 0, 0, 1], got {m[3].tolist()}")
        r = m[:3, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL:
            raise InvalidTransformError("rotation block is not orthonormal")
        det = np.linalg.det(r)
        if _crosses_handedness(src, dst):
            if abs(abs(det) - 1.0) > ORTHO_TOL:
                raise InvalidTransformError(f"rotation block has det {det:.12g}; expected +-1")
        elif abs(det - 1.0) > ORTHO_TOL:
            raise InvalidTransformError(
                f"{src.value}->{dst.value} must be a proper rotation (det +1), got det {det:.12g}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_rt(
        cls,
        rotation: ArrayLike,
        translation: ArrayLike,
        src: FrameId | str,
        dst: FrameId | str,
    ) -> "TaggedTransform":
        m = np.eye(4)
        m[:3, :3] = np.asarray(rotation, dtype=float).reshape(3, 3)
        m[:3, 3] = np.asarray(translation, dtype=float).reshape(3)
        return cls(src, dst, m)

    @classmethod
    def from_axis_angle(
        cls,
        rotvec: ArrayLike,
        translation: ArrayLike,
        src: FrameId | str,
        dst: FrameId | str,
    ) -> "TaggedTransform":
        return cls.from_rt(axis_angle_to_matrix(rotvec), translation, src, dst)

    @classmethod
    def identity(cls, src: FrameId | str, dst: FrameId | str) -> "TaggedTransform":
        return cls(src, dst, np.eye(4))

    @classmethod
    def translation_only(
        cls, translation: ArrayLike, src: FrameId | str, dst: FrameId | str
    ) -> "TaggedTransform":
        return cls.from_rt(np.eye(3), translation, src, dst)

    @property
    def rotation(self) -> NDArray[np.float64]:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> NDArray[np.float64]:
        return self.matrix[:3, 3]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.rotation))

    @property
    def tag(self) -> str:
        return f"{self.src.value}->{self.dst.value}"

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        """Map a point (3,) or points (N, 3) from ``src`` into ``dst``."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def allclose(self, other: "TaggedTransform", atol: float = 1e-9) -> bool:
        return (
            self.src is other.src
            and self.dst is other.dst
            and bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))
        )

    def __repr__(self) -> str:
        return f"TaggedTransform({self.tag}, R={self.rotation.tolist()}, t={self.translation.tolist()})"


def compose(a: TaggedTransform, b: TaggedTransform) -> TaggedTransform:
    """``a . b``: apply ``b`` first, then ``a``. Requires ``b.dst == a.src``."""
    if a.src is not b.dst:
        raise FrameMismatchError(
            f"cannot compose {a.tag} after {b.tag}: {b.tag} ends in {b.dst.value} "
            f"but {a.tag} starts from {a.src.value}"
        )
    return TaggedTransform(b.src, a.dst, a.matrix @ b.matrix)


def invert(t: TaggedTransform) -> TaggedTransform:
    # R^-1 = R^T holds for reflections in O(3) as well.
    r_inv = t.rotation.T
    return TaggedTransform.from_rt(r_inv, -r_inv @ t.translation, t.dst, t.src)


def model_to_head_convention() -> TaggedTransform:
    """``T_H<-V``: flip the model's z axis, then rotate 180 degrees about y.

    The composite rotation block is diag(-1, 1, 1) with zero translation; both
    frames share the nose-tip origin.
    """
    flip_z = np.diag([1.0, 1.0, -1.0])
    # rot_y(pi) carries ~1e-16 off-diagonal noise; the exact matrix is diag(-1, 1, -1).
    half_turn_y = np.diag([-1.0, 1.0, -1.0])
    return TaggedTransform.from_rt(half_turn_y @ flip_z, np.zeros(3), FrameId.VIRTUAL_MODEL, FrameId.HEAD)


def solve_world_pose(
    t_head_in_camera: TaggedTransform, t_camera_in_world: TaggedTransform
) -> TaggedTransform:
    """World pose of the virtual model, ``T_W<-V = T_W<-C . T_C<-H . T_H<-V``."""
    if (t_head_in_camera.src, t_head_in_camera.dst) != (FrameId.HEAD, FrameId.CAMERA):
        raise FrameMismatchError(f"head pose must be tagged H->C, got {t_head_in_camera.tag}")
    if (t_camera_in_world.src, t_camera_in_world.dst) != (FrameId.CAMERA, FrameId.WORLD):
        raise FrameMismatchError(f"SLAM pose must be tagged C->W, got {t_camera_in_world.tag}")
    return compose(compose(t_camera_in_world, t_head_in_camera), model_to_head_convention())
