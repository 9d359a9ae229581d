import numpy as np
import pytest

from homesale.closed_form import MarketParams
from homesale.stochastic import CirParams, DemandParams

# Reference defaults used across the suite: the waiting-time analysis
# block and the simulation block.
R_DEFAULT = 140.0
L_DEFAULT = 180.0
GAMMA_DEFAULT = 0.1


@pytest.fixture
def market():
    return MarketParams(lam=5.0, mu=5.0, r=0.1, p_min=100.0, p_max=200.0)


@pytest.fixture
def sim_cir():
    return CirParams(kappa=0.25, theta=0.1, sigma=0.08, r0=0.09)


@pytest.fixture
def sim_demand():
    return DemandParams(k1=0.5, k2=1000.0)


def three_sigma(label, analytic, mean, stderr, sigmas=3.0):
    """Assert an analytic value sits inside the MC band."""
    z = (analytic - mean) / stderr
    assert abs(z) <= sigmas, (
        f"{label}: analytic={analytic:.6f} mc={mean:.6f}+-{stderr:.6f} z={z:.2f}")
