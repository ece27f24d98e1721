import numpy as np
import pytest

from headcal.camera import CameraIntrinsics
from headcal.transforms import FrameId, TaggedTransform, axis_angle_to_matrix


def random_rotation(rng: np.random.Generator, max_angle: float = np.pi) -> np.ndarray:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return axis_angle_to_matrix(axis * rng.uniform(0, max_angle))


def random_transform(rng, src, dst, t_scale: float = 500.0) -> TaggedTransform:
    return TaggedTransform.from_rt(random_rotation(rng), rng.uniform(-t_scale, t_scale, 3), src, dst)


@pytest.fixture
def intr600() -> CameraIntrinsics:
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


FRAMES = list(FrameId)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
