import numpy as np
import pytest

from aggdiff.core import Params
from aggdiff.potentials import newtonian_kernel
from aggdiff.stationary import solve_stationary

P23 = Params(2.0, 3)


@pytest.fixture(scope="session")
def p23():
    return P23


@pytest.fixture(scope="session")
def stationary_m2(p23):
    """Unit-mass steady state for m=2, d=3 with the bare kernel (reused widely)."""
    return solve_stationary(p23, newtonian_kernel(), 1.0, n=800, domain_radius=6.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
