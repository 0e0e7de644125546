import pytest

from relaxo.bloch import PulseParams, PulseTarget
from relaxo.trajectory import integrate_optimal

BASE_PARAMS = PulseParams(R=1.0, r=0.6, eps=1e-3)


@pytest.fixture(scope="session")
def base_params():
    return BASE_PARAMS


@pytest.fixture(scope="session")
def traj_pi2():
    return integrate_optimal(PulseTarget.HalfPi, BASE_PARAMS)


@pytest.fixture(scope="session")
def traj_pi():
    return integrate_optimal(PulseTarget.Pi, BASE_PARAMS)


@pytest.fixture(scope="session")
def trajectories(traj_pi2, traj_pi):
    return {PulseTarget.HalfPi: traj_pi2, PulseTarget.Pi: traj_pi}
