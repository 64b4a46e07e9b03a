import numpy as np
import pytest

from camray.cameras import CameraModel
from camray.synthesis import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


# One representative camera per lens category, plus ERP.
CATEGORY_CAMERAS = {
    "pinhole": CameraModel("pinhole", 832, 480, xfov_deg=100.0),
    "wide": CameraModel("ucm", 832, 480, xfov_deg=125.0, xi=0.7),
    "fisheye": CameraModel("ucm", 832, 480, xfov_deg=160.0, xi=1.5),
    "extreme": CameraModel("ucm", 832, 480, xfov_deg=200.0, xi=2.3),
}


@pytest.fixture(params=sorted(CATEGORY_CAMERAS))
def category_camera(request):
    return CATEGORY_CAMERAS[request.param]


@pytest.fixture
def erp_camera():
    return CameraModel("erp", 512, 256)


def random_pose(rng):
    from camray.geometry import Pose, Rotation3

    return Pose(Rotation3.random(rng), rng.normal(scale=2.0, size=3))


def assert_rotation(m, tol=1e-9):
    np.testing.assert_allclose(m.T @ m, np.eye(3), atol=tol)
    assert np.linalg.det(m) > 0
