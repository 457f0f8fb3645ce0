import numpy as np
import pytest
from scipy.stats import norm

import pmelab as pl


@pytest.fixture(scope="session")
def heat():
    return pl.preset("linear-heat")


@pytest.fixture(scope="session")
def cubic():
    return pl.preset("cubic-tanh")


@pytest.fixture(scope="session")
def mesh400():
    return pl.Mesh(-8.0, 8.0, 400)


@pytest.fixture(scope="session")
def gauss_u0(mesh400):
    return pl.project_density(norm(0, 0.5).pdf, mesh400)


@pytest.fixture(scope="session")
def solver_cfg():
    return pl.SolverConfig(dt=1e-3, T=0.5, checkpoint_times=tuple(np.linspace(0.0, 0.5, 11)))


@pytest.fixture(scope="session")
def heat_solution(gauss_u0, heat, solver_cfg):
    return pl.solve(gauss_u0, heat, solver_cfg)


@pytest.fixture(scope="session")
def heat_traj(heat_solution):
    return heat_solution.trajectory


@pytest.fixture(scope="session")
def cubic_solution(gauss_u0, cubic, solver_cfg):
    return pl.solve(gauss_u0, cubic, solver_cfg)


@pytest.fixture(scope="session")
def cubic_traj(cubic_solution):
    return cubic_solution.trajectory
