import numpy as np
import pytest

from backdiff import linear_beta_schedule, make_blend_trigger, solve_trojan_coefficients
from backdiff.process import BENIGN, trojan_mode


@pytest.fixture(scope="session")
def schedule():
    return linear_beta_schedule(1000, 1e-4, 0.02)


@pytest.fixture(scope="session")
def coeffs(schedule):
    return solve_trojan_coefficients(schedule)


@pytest.fixture(scope="session")
def blend_trigger():
    return make_blend_trigger(np.array([1.0, -1.0]), 0.6)


@pytest.fixture(scope="session")
def trojan(blend_trigger):
    return trojan_mode(blend_trigger)


@pytest.fixture(scope="session")
def both_modes(trojan):
    return (BENIGN, trojan)
