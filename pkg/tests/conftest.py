import numpy as np
import pytest

from charfront.goursat import CharGrid, Rectangle
from charfront.iface import extract_sigma, solve_fields
from charfront.pipeline import singular_grid
from charfront.pulse import PulseData, PulseProfile, TracefreeSym2

UNIT = Rectangle(0.0, 1.0, 0.0, 1.0)


def unit_grid(n):
    return CharGrid.uniform(UNIT, n + 1, n + 1)


@pytest.fixture(scope="session")
def linear_data():
    return PulseData(PulseProfile.linear(1.0), (TracefreeSym2(1.0, 0.0),))


@pytest.fixture(scope="session")
def bump_data():
    return PulseData(PulseProfile.bump(0.05, 1.0), (TracefreeSym2(1.0, 0.0), TracefreeSym2(0.6, 0.3)))


@pytest.fixture(scope="session")
def linear_state_256(linear_data):
    return solve_fields(linear_data, 0, unit_grid(256))


@pytest.fixture(scope="session")
def bump_singular(bump_data):
    """State and Sigma field on a graded grid reaching sigma = 5e-4, last v-line."""
    geom = bump_data.geometry(0)
    grid = singular_grid(geom, 1.0, 512, 1024, 1e-3, support=bump_data.profile.support_hint)
    st = solve_fields(bump_data, 0, grid)
    sf = extract_sigma(st.Hprime, geom, grid, v_indices=[grid.nv - 1])
    return st, sf, geom


@pytest.fixture(scope="session")
def linear_singular(linear_data):
    geom = linear_data.geometry(0)
    grid = singular_grid(geom, 1.0, 256, 512, 1e-3)
    st = solve_fields(linear_data, 0, grid)
    sf = extract_sigma(st.Hprime, geom, grid, v_indices=[grid.nv - 1])
    return st, sf, geom


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
