import numpy as np
import pytest

from cw.grid import discretize_domain


@pytest.fixture(scope="session")
def unit_square_16():
    return discretize_domain({"shape": "rectangle", "extents": [(0, 1), (0, 1)]}, 16)


@pytest.fixture(scope="session")
def square_sym_64():
    return discretize_domain({"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]}, 64)


@pytest.fixture(scope="session")
def disk_32():
    return discretize_domain({"shape": "disk", "center": (0, 0), "radius": 1.0}, 32)


@pytest.fixture(scope="session")
def disk_64():
    return discretize_domain({"shape": "disk", "center": (0, 0), "radius": 1.0}, 64)


@pytest.fixture(scope="session")
def ball_12():
    return discretize_domain({"shape": "ball", "center": (0, 0, 2.0), "radius": 1.0}, 12)


def weighted_rel_l2(grid, u, v, interior_only=True):
    sel = grid.interior_indices if interior_only else np.arange(grid.num_nodes)
    w = grid.interior_weights[sel]
    num = np.sqrt(np.sum(w * np.abs(u[sel] - v[sel]) ** 2))
    den = np.sqrt(np.sum(w * np.abs(v[sel]) ** 2))
    return num / den
