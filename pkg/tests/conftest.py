from __future__ import annotations

import pytest

from coopvar.grid import build_grid, build_weight
from coopvar.linops import FULL, ZERO_ONLY, ShiftedOperator
from coopvar.nonlocal_solver import NonlocalProblem

INTERVAL_1D = {"kind": "interval", "bounds": [0.3, 0.7]}
ANNULUS_2D = {"kind": "annulus", "center": [0.5, 0.5], "r_inner": 0.25, "r_outer": 0.4}


def grid_1d(n=65):
    return build_grid(1, [[0.0, 1.0]], [n], INTERVAL_1D)


def grid_2d(n=24):
    return build_grid(2, [[0.0, 1.0], [0.0, 1.0]], [n, n], ANNULUS_2D)


class Setup:
    def __init__(self, grid):
        self.grid = grid
        self.weight = build_weight(grid, "mollified_bump")
        self.op = ShiftedOperator(grid, FULL)
        self.op_zero = ShiftedOperator(grid, ZERO_ONLY)

    def problem(self, lam=0.0):
        return NonlocalProblem(self.grid, self.weight, lam=lam, op=self.op, op_zero=self.op_zero)


@pytest.fixture(scope="session")
def s1d():
    return Setup(grid_1d(65))


@pytest.fixture(scope="session")
def s1d129():
    return Setup(grid_1d(129))


@pytest.fixture(scope="session")
def s2d():
    return Setup(grid_2d(24))


@pytest.fixture(scope="session", params=["1d", "2d"])
def canon(request, s1d, s2d):
    return s1d if request.param == "1d" else s2d
