import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headcal import face_model as fm
from headcal.errors import MissingLandmarkError, NonPositiveMeasurementError

from conftest import random_rotation

MODEL = fm.default_model()


def test_default_model_invariants():
    np.testing.assert_array_equal(MODEL.landmarks["nose_tip"], [0.0, 0.0, 0.0])
    assert (MODEL.w_o, MODEL.l_o) == (160.0, 230.0)
    meas = fm.measure_face(MODEL.landmarks, MODEL)
    assert (meas.w, meas.l) == pytest.approx((160.0, 230.0), abs=1e-6)


def test_measure_face_homogeneous_and_isometry_invariant(rng):
    half = {k: 0.5 * p for k, p in MODEL.landmarks.items()}
    meas = fm.measure_face(half, MODEL)
    assert (meas.w, meas.l) == pytest.approx((80.0, 115.0), abs=1e-12)
    for _ in range(10):
        r = random_rotation(rng)
        t = rng.uniform(-100, 100, 3)
        moved = {k: r @ p + t for k, p in MODEL.landmarks.items()}
        meas = fm.measure_face(moved, MODEL)
        assert (meas.w, meas.l) == pytest.approx((160.0, 230.0), abs=1e-9)


def test_measure_face_names_missing_landmark():
    pts = dict(MODEL.landmarks)
    del pts["chin"]
    with pytest.raises(MissingLandmarkError, match="chin"):
        fm.measure_face(pts, MODEL)


@pytest.mark.parametrize(
    "w,l,expected",
    [
        (160.0, 230.0, (1.0, 1.0, 1.0)),
        (320.0, 460.0, (2.0, 2.0, 2.0)),
    ],
)
def test_scaling_factors_exact_cases(w, l, expected):
    assert fm.scaling_factors(fm.FaceMeasurement(w, l), MODEL).as_tuple() == expected


def test_scaling_factors_participant_one():
    s = fm.scaling_factors(fm.FaceMeasurement(125.0, 145.0), MODEL)
    assert round(s.a_x, 6) == 0.781250
    assert round(s.a_y, 6) == 0.630435
    assert round(s.a_z, 6) == 0.705842
    assert fm.uniform_model_scale(s) == s.a_z


def test_scaling_factors_rejects_non_positive():
    with pytest.raises(NonPositiveMeasurementError):
        fm.FaceMeasurement(0.0, 230.0)


def test_scale_landmarks_examples():
    assert all(np.array_equal(p, MODEL.landmarks[k]) for k, p in fm.scale_landmarks(MODEL, fm.ScalingFactors(1.0, 1.0)).items())
    s = fm.ScalingFactors(0.78125, 0.630435)
    probe = fm.CanonicalModel(
        {"nose_tip": [0, 0, 0], "a": [-80, 0, 0], "b": [80, 0, 0], "c": [0, -115, 0], "d": [0, 115, 0]},
        160.0,
        230.0,
        ("a", "b"),
        ("c", "d"),
    )
    out = fm.scale_landmarks(probe, s)
    np.testing.assert_allclose(out["b"], [62.5, 0, 0])
    np.testing.assert_array_equal(out["nose_tip"], [0, 0, 0])


def test_uniform_model_scale_examples():
    assert fm.uniform_model_scale(fm.ScalingFactors(1.0, 1.0)) == 1.0
    assert fm.uniform_model_scale(fm.ScalingFactors(0.78125, 0.630435)) == pytest.approx(0.705842, abs=1e-6)
    assert fm.uniform_model_scale(fm.ScalingFactors(2.0, 4.0)) == 3.0


def test_scaling_factors_reject_inconsistent_az():
    with pytest.raises(ValueError):
        fm.ScalingFactors(2.0, 4.0, 3.5)


def test_canonical_model_validation():
    pts = {"nose_tip": [0, 0, 0], "a": [-80, 0, 0], "b": [80, 0, 0], "c": [0, -115, 0], "d": [0, 115, 0]}
    with pytest.raises(ValueError):
        fm.CanonicalModel(pts, 150.0, 230.0, ("a", "b"), ("c", "d"))
    with pytest.raises(ValueError):
        fm.CanonicalModel({**pts, "nose_tip": [1, 0, 0]}, 160.0, 230.0, ("a", "b"), ("c", "d"))
    with pytest.raises(ValueError):
        fm.CanonicalModel(pts, 160.0, 230.0, ("a", "zz"), ("c", "d"))


def test_model_dict_round_trip():
    again = fm.CanonicalModel.from_dict(MODEL.to_dict())
    assert again.ids == MODEL.ids
    np.testing.assert_array_equal(again.points(), MODEL.points())


sizes = st.floats(40.0, 400.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(sizes, sizes)
def test_measure_after_scaling_recovers_measurement(w, l):
    # pair offsets lie along x and y, so recovery is exact up to one rounding of w / w_o * w_o
    s = fm.scaling_factors(fm.FaceMeasurement(w, l), MODEL)
    got = fm.measure_face(fm.scale_landmarks(MODEL, s), MODEL)
    assert got.w == pytest.approx(w, rel=1e-15)
    assert got.l == pytest.approx(l, rel=1e-15)
    assert min(s.a_x, s.a_y) <= s.a_z <= max(s.a_x, s.a_y)


@settings(max_examples=100, deadline=None)
@given(sizes, sizes, st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_anisotropic_measurement_bound_for_rotated_pairs(w, l, rx, ry, rz):
    # with pair offsets off the axes the measurement stays within the factor envelope
    from headcal.transforms import axis_angle_to_matrix

    r = axis_angle_to_matrix([rx, ry, rz])
    rotated = fm.CanonicalModel({k: r @ p for k, p in MODEL.landmarks.items()}, 160.0, 230.0, MODEL.width_pair, MODEL.length_pair)
    s = fm.scaling_factors(fm.FaceMeasurement(w, l), rotated)
    got = fm.measure_face(fm.scale_landmarks(rotated, s), rotated)
    lo, hi = min(s.as_tuple()), max(s.as_tuple())
    assert lo * 160 * (1 - 1e-12) <= got.w <= hi * 160 * (1 + 1e-12)
    assert lo * 230 * (1 - 1e-12) <= got.l <= hi * 230 * (1 + 1e-12)
