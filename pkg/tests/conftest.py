import numpy as np
import pytest

from passlqr.certify import PassivityMode
from passlqr.plant import LtiPlant


@pytest.fixture(scope="session")
def demo_plant():
    """Two-state plant with a single control input and scalar disturbance port."""
    return LtiPlant(
        A=[[-2.0, -1.0], [-1.0, -3.0]],
        B_u=[[1.0], [2.0]],
        B_d=[[2.0], [1.0]],
        C=[[0.0, 1.0]],
        D=[[0.0]],
        Q=np.eye(2),
        R=[[2.0]],
        name="coupled_two_state",
    )


@pytest.fixture(scope="session")
def nonconvex_plant():
    """Plant whose passivating-gain set is nonconvex (2x2 gain)."""
    return LtiPlant(
        A=np.eye(2),
        B_u=np.eye(2),
        B_d=[[1.0], [0.0]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
        Q=np.eye(2),
        R=np.eye(2),
        name="nonconvex_witness",
    )


@pytest.fixture(scope="session")
def easy_plant():
    """Stable symmetric plant whose LQR optimum already passivates."""
    return LtiPlant(
        A=-np.eye(2),
        B_u=np.eye(2),
        B_d=[[1.0], [0.0]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
        Q=np.eye(2),
        R=np.eye(2),
        name="already_passive",
    )


@pytest.fixture(scope="session")
def nonstrict():
    return PassivityMode.nonstrict()


@pytest.fixture(scope="session")
def strict():
    return PassivityMode.strict()
