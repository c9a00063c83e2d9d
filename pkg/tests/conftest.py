"""Shared pytest fixtures for fbcap tests.

The worked channels are solved once per session; the sweeps dominate runtime.
"""

import pytest

from fbcap.bounds import solve_sweep
from fbcap.control import stable_unstable_split, youla_controller
from fbcap.pipeline import synthesis_lower_bound
from fbcap.spectra import NoiseModel
from fbcap.synthesis import synthesize

POWER = 10.0
M = 40

# Published convergence table for H(z) = 1 + 0.1 z^-1 + 0.5 z^-2 at P = 10, m = 40.
MA2_TABLE = {
    1: (1.953615794213734, 1.837997383645331),
    2: (1.919419110833023, 1.919133474756371),
    3: (1.919395054344304, 1.919215947145071),
    4: (1.919358863350398, 1.919358573743238),
    5: (1.919358787261653, 1.919358689375164),
    6: (1.919358744798872, 1.919358744265310),
}
MA1_CAPACITY = 1.7688
MA2_POLE = complex(-0.2057, 1.9340)


@pytest.fixture(scope="session")
def ma1():
    return NoiseModel(num=(1.0, 0.1))


@pytest.fixture(scope="session")
def ma2():
    return NoiseModel(num=(1.0, 0.1, 0.5))


@pytest.fixture(scope="session")
def ma1_sweep(ma1):
    return solve_sweep(ma1, POWER, M, [6], lower_bound=synthesis_lower_bound(ma1, POWER))


@pytest.fixture(scope="session")
def ma2_sweep(ma2):
    return solve_sweep(ma2, POWER, M, range(1, 7), lower_bound=synthesis_lower_bound(ma2, POWER))


@pytest.fixture(scope="session")
def ma2_final(ma2, ma2_sweep):
    final = ma2_sweep[-1]
    return synthesize(final.solution, final.grid, ma2, POWER)


@pytest.fixture(scope="session")
def ma2_controller(ma2_final):
    return youla_controller(ma2_final[0])


@pytest.fixture(scope="session")
def ma2_scheme(ma2_controller):
    return stable_unstable_split(ma2_controller)
