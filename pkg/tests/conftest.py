import numpy as np
import pytest

from fockspace import make_coherent, make_fock, make_squeezed_coherent, make_superposition, random_superposition
from measurement import default_plan, measure_plan


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def vacuum():
    return make_fock(0, 0, 8)


@pytest.fixture
def horizontal():
    return make_coherent(1.0, 0.0, 20)


@pytest.fixture
def elliptic():
    return make_coherent(1.0, 0.5j, 20)


@pytest.fixture
def twin_photons():
    return make_fock(1, 1, 8)


@pytest.fixture
def squeezed():
    return make_squeezed_coherent(0.5, 0.2, 0.3, 30)


@pytest.fixture
def superposition():
    return make_superposition(
        [(0, 0, 0.6), (1, 2, 0.3 - 0.4j), (3, 1, 0.5j), (2, 2, -0.2 + 0.1j)], 12
    )


def _family_states():
    rng = np.random.default_rng(7)
    return {
        'coherent': make_coherent(1.2 * np.exp(0.4j), -0.7 + 0.5j, 25),
        'squeezed': make_squeezed_coherent(0.4 - 0.3j, 0.6j, 0.35 * np.exp(1.1j), 30),
        'fock': make_fock(3, 2, 12),
        'superposition': random_superposition(6, 12, rng),
    }


FAMILY_STATES = _family_states()


@pytest.fixture(params=sorted(FAMILY_STATES))
def family_state(request):
    """One state from each test family (coherent, squeezed, Fock, superposition)."""
    return FAMILY_STATES[request.param]


@pytest.fixture
def identity_plan():
    return default_plan(include_identities=True)


@pytest.fixture
def exact_records(family_state, identity_plan):
    return measure_plan(family_state, identity_plan)
