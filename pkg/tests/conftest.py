import pytest

from src.island_resonances.potential import (
    canonical_normalized,
    find_saddle_and_normalize,
    harmonic_spec,
    island_1d_spec,
    quadratic_saddle_spec,
)
from src.island_resonances.utils.grid import GridSpec


@pytest.fixture(scope="session")
def harmonic_1d():
    return harmonic_spec(1)


@pytest.fixture(scope="session")
def island_1d():
    spec, _ = find_saddle_and_normalize(island_1d_spec(), (0.0,))
    return spec


@pytest.fixture(scope="session")
def canonical():
    spec, _ = canonical_normalized()
    return spec


@pytest.fixture(scope="session")
def model_saddle():
    return find_saddle_and_normalize(quadratic_saddle_spec((1.0,)), (0.0, 0.0))


@pytest.fixture
def island_grid():
    return GridSpec(dimension=1, half_width=4.0, points=128, h=0.05)


@pytest.fixture
def harmonic_grid():
    return GridSpec(dimension=1, half_width=8.0, points=256, h=0.1)
