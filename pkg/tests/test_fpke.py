import numpy as np
import pytest
from scipy.stats import norm

import pmelab as pl
from pmelab.coefficients import CoefficientSet, DiffusionA, beta_from_powers, drift_from_kind, rate_from_kind
from pmelab.errors import ConfigurationError, DomainError, DomainTooSmallError, SolverError
from pmelab.fpke import _advance, _newton_residual, _newton_tridiag


def test_single_step_conserves_mass(gauss_u0, heat):
    cfg = pl.SolverConfig(dt=1e-3, T=1e-3)
    u1 = pl.step(gauss_u0, 0.0, heat, cfg)
    assert pl.mass(u1) == pytest.approx(1.0, abs=1e-10)
    assert u1.values.min() >= 0.0


def test_constant_interior_is_newton_fixed_point(heat):
    # flat plateau away from its edges stays put: Lap(beta(const)) = 0 there
    mesh = pl.Mesh(-8.0, 8.0, 400)
    u0 = pl.project_density(lambda x: ((x >= -2) & (x <= 2)).astype(float), mesh)
    cfg = pl.SolverConfig(dt=1e-3, T=1e-3, newton_tol=1e-13)
    u1 = pl.step(u0, 0.0, heat, cfg)
    interior = np.abs(mesh.centers) < 0.9
    np.testing.assert_allclose(u1.values[interior], u0.values[interior], atol=1e-12)


def test_one_step_richardson_consistency(gauss_u0, cubic):
    def stepped(dt, k):
        cfg = pl.SolverConfig(dt=dt, T=1.0)
        u = gauss_u0
        for _ in range(k):
            u = pl.step(u, 0.0, cubic, cfg)
        return u

    diff_coarse = pl.l1_distance(stepped(2e-3, 1), stepped(1e-3, 2))
    diff_fine = pl.l1_distance(stepped(1e-3, 1), stepped(5e-4, 2))
    ratio = diff_coarse / diff_fine
    assert 2.8 <= ratio <= 4.5


def test_heat_kernel_oracle(heat_traj, mesh400):
    # beta(r) = r turns the flow into the heat equation: variance grows by 2t
    target = pl.project_density(norm(0, np.sqrt(0.25 + 2 * 0.5)).pdf, mesh400)
    assert pl.l1_distance(heat_traj.frames[-1], target) <= 1e-2


def test_solve_monitors_mass_and_positivity(heat_solution):
    m = heat_solution.monitors
    n_steps = m.step.size
    assert m.mass_drift <= n_steps * 1e-12
    assert m.min_value >= -1e-12
    for frame in heat_solution.trajectory.frames:
        assert pl.mass(frame) == pytest.approx(1.0, abs=1e-8)


def test_cubic_solution_self_convergence(gauss_u0, cubic):
    def run(n_cells, dt):
        mesh = pl.Mesh(-8.0, 8.0, n_cells)
        u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
        cfg = pl.SolverConfig(dt=dt, T=0.5)
        return pl.solve(u0, cubic, cfg).trajectory.frames[-1]

    def restrict(frame, factor):
        mesh = pl.Mesh(-8.0, 8.0, frame.mesh.n_cells // factor)
        vals = frame.values.reshape(-1, factor).mean(axis=1)
        return pl.GridFunction(mesh, vals, is_density=True)

    coarse = run(200, 2e-3)
    mid = run(400, 1e-3)
    fine = run(800, 5e-4)
    d_coarse = pl.l1_distance(coarse, restrict(mid, 2))
    d_fine = pl.l1_distance(restrict(mid, 2), restrict(fine, 4))
    assert d_fine < d_coarse


def test_max_principle_without_transport(heat_solution, gauss_u0):
    m = heat_solution.monitors
    peaks = np.concatenate([[gauss_u0.values.max()], m.max_u])
    assert np.all(np.diff(peaks) <= 1e-12)


def test_max_principle_with_dead_rate(gauss_u0):
    # b = 0 kills the transport term even though E is nonzero
    beta = beta_from_powers([1.0, 0.0, 1.0], gamma0=1.0)
    coeffs = CoefficientSet(
        beta=beta, a=DiffusionA(beta), b=rate_from_kind("zero"),
        E=drift_from_kind("neg_tanh"), lipschitz_a_local=10.0,
    )
    cfg = pl.SolverConfig(dt=1e-3, T=0.1)
    result = pl.solve(gauss_u0, coeffs, cfg)
    peaks = np.concatenate([[gauss_u0.values.max()], result.monitors.max_u])
    assert np.all(np.diff(peaks) <= cfg.newton_tol + 1e-12)


def _dense_jacobian(lower, diag, upper):
    n = diag.size
    full = np.diag(diag)
    full[np.arange(1, n), np.arange(n - 1)] = lower[1:]
    full[np.arange(n - 1), np.arange(1, n)] = upper[:-1]
    return full


def test_newton_jacobian_matches_finite_differences(cubic):
    rng = np.random.default_rng(0)
    dx = 0.05
    kappa = 1e-3 / dx**2
    for _ in range(5):
        v = rng.uniform(0.0, 1.2, 24)
        rhs = np.zeros_like(v)
        analytic = _dense_jacobian(*_newton_tridiag(v, kappa, cubic))
        fd = np.empty_like(analytic)
        h = 1e-6
        for j in range(v.size):
            e = np.zeros_like(v)
            e[j] = h
            fd[:, j] = (
                _newton_residual(v + e, rhs, kappa, cubic, dx)
                - _newton_residual(v - e, rhs, kappa, cubic, dx)
            ) / (2 * h)
        err = np.abs(analytic - fd) / (1.0 + np.abs(analytic))
        assert err.max() <= 1e-5


def test_assembled_diagonal_clears_nondegeneracy_floor(cubic):
    rng = np.random.default_rng(1)
    dx = 0.01
    kappa = 1e-3 / dx**2
    v = rng.uniform(0.0, 1.0, 64)
    _, diag, _ = _newton_tridiag(v, kappa, cubic)
    assert np.abs(diag).min() >= cubic.gamma0 * kappa * (1.0 - 1e-8)


def test_elimination_pivots_are_tracked(gauss_u0, cubic):
    cfg = pl.SolverConfig(dt=1e-3, T=1e-3)
    _, stats = _advance(gauss_u0.values, gauss_u0.mesh, cubic, cfg)
    # column dominance keeps every pivot at or above 1
    assert stats.min_pivot >= 1.0 - 1e-9


def test_cfl_violation_is_a_configuration_error(gauss_u0, cubic):
    cfg = pl.SolverConfig(dt=0.05, T=0.1)
    with pytest.raises(ConfigurationError, match="CFL"):
        pl.step(gauss_u0, 0.0, cubic, cfg)


def test_newton_stall_reports_residual(gauss_u0, cubic):
    cfg = pl.SolverConfig(dt=1e-3, T=1e-3, newton_tol=1e-30, newton_max_iter=3)
    with pytest.raises(SolverError, match="residual"):
        pl.step(gauss_u0, 0.0, cubic, cfg)


def test_boundary_mass_guard(heat):
    mesh = pl.Mesh(-2.0, 2.0, 100)
    u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
    cfg = pl.SolverConfig(dt=1e-4, T=1e-4)
    with pytest.raises(DomainTooSmallError):
        pl.step(u0, 0.0, heat, cfg)


def test_solve_requires_aligned_checkpoints(gauss_u0, heat):
    cfg = pl.SolverConfig(dt=1e-3, T=0.5, checkpoint_times=(0.0, 0.2505, 0.5))
    with pytest.raises(ConfigurationError):
        pl.solve(gauss_u0, heat, cfg)


# ---------------------------------------------------------------------------
# weak form
# ---------------------------------------------------------------------------

def test_bump_function_shape():
    phi = pl.WeakFormTestFunction(center=0.5, radius=2.0)
    assert phi.eval(0.5) == pytest.approx(1.0)
    assert phi.eval(0.5 + 2.0) == 0.0
    assert phi.eval(np.asarray([-1.6, 2.6])).tolist() == [0.0, 0.0]
    assert phi.grad(0.5 - 2.0001) == 0.0


def test_bump_derivatives_match_finite_differences():
    phi = pl.WeakFormTestFunction(center=0.0, radius=1.5)
    x = np.linspace(-1.3, 1.3, 401)
    h = 1e-5
    fd_grad = (phi.eval(x + h) - phi.eval(x - h)) / (2 * h)
    fd_lap = (phi.eval(x + h) - 2 * phi.eval(x) + phi.eval(x - h)) / h**2
    assert np.abs(phi.grad(x) - fd_grad).max() <= 1e-5
    assert np.abs(phi.laplacian(x) - fd_lap).max() <= 1e-4


def test_weak_form_residual_vanishes_at_time_zero(heat_traj, heat):
    phi = pl.WeakFormTestFunction(center=0.0, radius=3.0)
    assert pl.weak_form_residual(heat_traj, phi, heat, 0.0) == 0.0


def test_weak_form_requires_checkpoint_time(heat_traj, heat):
    phi = pl.WeakFormTestFunction(center=0.0, radius=3.0)
    with pytest.raises(DomainError):
        pl.weak_form_residual(heat_traj, phi, heat, 0.123)


def test_weak_form_residual_on_analytic_trajectory(heat):
    # frames taken from the exact heat kernel, bypassing the solver: the
    # residual is pure quadrature error and drops ~4x per spacing halving
    mesh = pl.Mesh(-8.0, 8.0, 800)
    phi = pl.WeakFormTestFunction(center=0.0, radius=3.0)
    residuals = []
    for n_cp in (3, 5):
        times = np.linspace(0.0, 0.5, n_cp)
        frames = tuple(
            pl.project_density(norm(0, np.sqrt(0.25 + 2 * t)).pdf, mesh) for t in times
        )
        traj = pl.DensityTrajectory(mesh, tuple(times), frames)
        residuals.append(pl.weak_form_residual(traj, phi, heat, 0.5))
    assert residuals[0] / residuals[1] >= 3.0


def test_weak_form_residual_shrinks_under_refinement(cubic):
    def residual(n_cells, dt, n_cp):
        mesh = pl.Mesh(-8.0, 8.0, n_cells)
        u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
        cfg = pl.SolverConfig(dt=dt, T=0.5, checkpoint_times=tuple(np.linspace(0, 0.5, n_cp)))
        traj = pl.solve(u0, cubic, cfg).trajectory
        phi = pl.WeakFormTestFunction(center=0.0, radius=2.0)
        return pl.weak_form_residual(traj, phi, cubic, 0.5)

    coarse = residual(400, 1e-3, 3)
    fine = residual(800, 5e-4, 5)
    assert coarse / fine >= 3.0
