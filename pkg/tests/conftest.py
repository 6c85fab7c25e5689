import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sdpass.sim import pendulum_closed_loop, pendulum_design

settings.register_profile(
    "sdpass", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("sdpass")

R = 0.4
QSTAR = math.pi / 2


@pytest.fixture(scope="session")
def pendulum():
    return pendulum_design(R, QSTAR)


@pytest.fixture(scope="session")
def design(pendulum):
    return pendulum[2]


@pytest.fixture(scope="session")
def loop():
    return pendulum_closed_loop(R, QSTAR)


def slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(np.abs(ys)), 1)[0])
