import pytest

from buckdr.buck import build_plant, default_box, default_params
from buckdr.design import build_weights, t_mask, tune_structured
from buckdr.lti import default_grid


@pytest.fixture(scope="session")
def nominal():
    return default_params()


@pytest.fixture(scope="session")
def box(nominal):
    return default_box(nominal)


@pytest.fixture(scope="session")
def plant(nominal):
    return build_plant(nominal)


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def weights(nominal):
    return build_weights(nominal.omega_sw)


@pytest.fixture(scope="session")
def mask(nominal):
    return t_mask(0.1 * nominal.V_pk, nominal.V_pk, nominal.omega_sw)


@pytest.fixture(scope="session")
def tuned(plant, nominal, weights, mask):
    return tune_structured(plant, nominal.k_FF, weights, mask)
