import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headcal.errors import FrameMismatchError, InvalidTransformError
from headcal.transforms import (
    FrameId,
    TaggedTransform,
    axis_angle_to_matrix,
    compose,
    invert,
    matrix_to_axis_angle,
    model_to_head_convention,
    rot_y,
    rot_z,
    rotation_angle,
    solve_world_pose,
)

from conftest import random_rotation, random_transform

C, H, V, W = FrameId.CAMERA, FrameId.HEAD, FrameId.VIRTUAL_MODEL, FrameId.WORLD


def translation(t, src=H, dst=C):
    return TaggedTransform.translation_only(t, src, dst)


def test_compose_identities_gives_identity_tagged_by_outer_frames():
    out = compose(TaggedTransform.identity(C, W), TaggedTransform.identity(H, C))
    assert (out.src, out.dst) == (H, W)
    np.testing.assert_array_equal(out.matrix, np.eye(4))


def test_compose_pure_translations_adds():
    out = compose(translation([1, 2, 3], C, W), translation([4, 5, 6], H, C))
    np.testing.assert_allclose(out.translation, [5, 7, 9])
    np.testing.assert_array_equal(out.rotation, np.eye(3))


def test_compose_matches_hand_multiplied_matrices():
    a = TaggedTransform.from_rt(rot_y(math.pi / 2), [100, 0, 0], C, W)
    b = TaggedTransform.from_rt(rot_z(math.pi / 2), [0, 50, 0], H, C)
    # R_y(90) = [[0,0,1],[0,1,0],[-1,0,0]], R_z(90) = [[0,-1,0],[1,0,0],[0,0,1]]
    expected = np.array(
        [
            [0.0, 0.0, 1.0, 100.0],
            [1.0, 0.0, 0.0, 50.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    np.testing.assert_allclose(compose(a, b).matrix, expected, atol=1e-12)


def test_compose_rejects_mismatched_frames():
    with pytest.raises(FrameMismatchError):
        compose(TaggedTransform.identity(C, W), TaggedTransform.identity(V, H))


def test_invert_identity_and_translation():
    np.testing.assert_array_equal(invert(TaggedTransform.identity(H, C)).matrix, np.eye(4))
    inv = invert(translation([1, 2, 3]))
    assert (inv.src, inv.dst) == (C, H)
    np.testing.assert_allclose(inv.translation, [-1, -2, -3])


def test_invert_matches_general_matrix_inverse(rng):
    for _ in range(20):
        t = random_transform(rng, H, C)
        np.testing.assert_allclose(invert(t).matrix, np.linalg.inv(t.matrix), atol=1e-9)


def test_convention_examples():
    conv = model_to_head_convention()
    assert (conv.src, conv.dst) == (V, H)
    assert conv.det == -1.0
    np.testing.assert_array_equal(conv.apply([1.0, 2.0, 3.0]), [-1.0, 2.0, 3.0])
    np.testing.assert_array_equal(conv.apply([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])


def test_convention_involution_is_exact(rng):
    m = model_to_head_convention().matrix
    pts = rng.uniform(-1e3, 1e3, (100, 3))
    twice = (pts @ m[:3, :3].T) @ m[:3, :3].T
    np.testing.assert_array_equal(twice, pts)


def test_solve_world_pose_identity_chain_is_the_convention():
    out = solve_world_pose(TaggedTransform.identity(H, C), TaggedTransform.identity(C, W))
    assert (out.src, out.dst) == (V, W)
    np.testing.assert_array_equal(out.matrix, model_to_head_convention().matrix)


def test_solve_world_pose_translated_head():
    out = solve_world_pose(translation([0, 0, 500]), TaggedTransform.identity(C, W))
    expected = np.diag([-1.0, 1.0, 1.0, 1.0])
    expected[2, 3] = 500.0
    np.testing.assert_allclose(out.matrix, expected)


def test_solve_world_pose_requires_tags():
    with pytest.raises(FrameMismatchError):
        solve_world_pose(TaggedTransform.identity(C, H), TaggedTransform.identity(C, W))


def test_reflections_only_allowed_across_the_virtual_frame():
    refl = np.diag([-1.0, 1.0, 1.0])
    with pytest.raises(InvalidTransformError):
        TaggedTransform.from_rt(refl, [0, 0, 0], H, C)
    with pytest.raises(InvalidTransformError):
        TaggedTransform.from_rt(refl, [0, 0, 0], W, C)
    assert TaggedTransform.from_rt(refl, [0, 0, 0], V, H).det == -1.0
    assert TaggedTransform.from_rt(refl, [0, 0, 0], H, V).det == -1.0
    # a V-crossing chain still carries exactly one reflection
    chain = solve_world_pose(TaggedTransform.identity(H, C), TaggedTransform.identity(C, W))
    assert chain.det == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize(
    "matrix",
    [
        np.diag([1.0, 1.0, 1.0001]),
        np.array([[1.0, 1e-6, 0], [0, 1, 0], [0, 0, 1]]),
    ],
)
def test_non_orthonormal_rotation_rejected(matrix):
    with pytest.raises(InvalidTransformError):
        TaggedTransform.from_rt(matrix, [0, 0, 0], H, C)


def test_bad_bottom_row_and_non_finite_rejected():
    m = np.eye(4)
    m[3, 0] = 1.0
    with pytest.raises(InvalidTransformError):
        TaggedTransform(H, C, m)
    with pytest.raises(InvalidTransformError):
        TaggedTransform.from_rt(np.eye(3), [np.nan, 0, 0], H, C)


def test_transform_is_read_only():
    t = TaggedTransform.identity(H, C)
    with pytest.raises(ValueError):
        t.matrix[0, 3] = 1.0


def test_axis_angle_round_trip(rng):
    for _ in range(50):
        r = random_rotation(rng, max_angle=3.0)
        np.testing.assert_allclose(axis_angle_to_matrix(matrix_to_axis_angle(r)), r, atol=1e-12)
    t = TaggedTransform.from_axis_angle([0, 0, math.pi / 2], [1, 2, 3], H, C)
    np.testing.assert_allclose(t.rotation, rot_z(math.pi / 2), atol=1e-15)


def test_rotation_angle_is_geodesic():
    assert rotation_angle(np.eye(3), rot_z(0.3)) == pytest.approx(0.3, abs=1e-15)


def test_frame_parse():
    assert FrameId.parse("V") is V
    with pytest.raises(ValueError):
        FrameId.parse("Q")


angles = st.floats(-math.pi, math.pi, allow_nan=False)
vec = st.tuples(*[st.floats(-1e3, 1e3, allow_nan=False)] * 3)


@settings(max_examples=100, deadline=None)
@given(st.tuples(angles, angles, angles), vec)
def test_inverse_property(rv, t):
    x = TaggedTransform.from_axis_angle(np.array(rv) / 2, t, H, C)
    np.testing.assert_allclose(compose(x, invert(x)).matrix, np.eye(4), atol=1e-9)
    np.testing.assert_allclose(compose(invert(x), x).matrix, np.eye(4), atol=1e-9)
    r = compose(x, invert(x)).rotation
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
