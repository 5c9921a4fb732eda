import warnings

import pytest

from catastereo import fov, simulator
from catastereo.calibration import calibrate


@pytest.fixture(scope="session")
def ref_cfg():
    return fov.AdapterConfig.reference()


@pytest.fixture(scope="session")
def sim(ref_cfg):
    return simulator.build_rig(ref_cfg)


@pytest.fixture(scope="session")
def session(sim):
    return simulator.generate_chessboard_session(sim, n_views=14, sigma=0.0, seed=7)


@pytest.fixture(scope="session")
def calib(session):
    return calibrate(session.observations)


@pytest.fixture(scope="session")
def subject(sim):
    body = simulator.skeleton_template(1.8)
    return simulator.place_subject(sim, body, 4.0)


@pytest.fixture(autouse=True)
def _quiet_distance_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="subject at")
        yield
