import numpy as np
import pytest

from gridflow.controller import load_events
from gridflow.data import bundled
from gridflow.netmodel import load_network, parse_case
from gridflow.powerflow import build_admittance, solve

TWO_BUS_CASE = """
[meta]
name two_bus

[bus]
1 slack 1.0 0 0 0 0   0   1.0
2 pq    1.0 0 0 0 0.5 0.2 1.0

[branch]
1 2 0.01 0.1 0.0

[source]
2 -0.5 0.5 0.05 2.0 100 1.0

[weights]
1 1 0.0005
"""

# no load, no charging, slack at 1 p.u.: every flow is exactly zero
IDLE_CASE = """
[meta]
name idle

[bus]
1 slack 1.0 0 0 0 0 0 1.0
2 pq    1.0 0 0 0 0 0 1.0
3 pq    1.0 0 0 0 0 0 1.0

[branch]
1 2 0.01 0.1 0.0
2 3 0.02 0.2 0.0

[source]
3 -0.5 0.5 0.0 0.0 0.0 1.0
"""


@pytest.fixture(scope="session")
def net9():
    return load_network(bundled("ieee9.case"))


@pytest.fixture(scope="session")
def y9(net9):
    return build_admittance(net9)


@pytest.fixture(scope="session")
def sol9(net9, y9):
    return solve(net9, y9, np.zeros(len(net9.sources)))


@pytest.fixture(scope="session")
def load_steps():
    return load_events(bundled("ieee9_load_steps.events"))


@pytest.fixture
def two_bus():
    return parse_case(TWO_BUS_CASE)


@pytest.fixture
def idle_net():
    return parse_case(IDLE_CASE)
