"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; every tolerance is pinned here and nowhere else.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import norm

import pmelab as pl
from pmelab.cli import bundled_scenario_path, parse_config, run_scenario
from pmelab.coefficients import BetaFunction, DiffusionA
from pmelab.fpke import _newton_residual, _newton_tridiag
from pmelab.verify import _certificate_from_fields


def _report(num: int, name: str, elapsed: float, limit: float) -> None:
    print(f"[acceptance] criterion {num} ({name}): PASS in {elapsed:.2f}s (limit {limit:.0f}s)")
    assert elapsed < limit, f"criterion {num} exceeded its {limit:.0f}s budget ({elapsed:.2f}s)"


BUNDLED = ("heat-superposition.json", "cubic-full.json")


@pytest.fixture(scope="module")
def bundled_runs(tmp_path_factory):
    runs = {}
    for name in BUNDLED:
        with open(bundled_scenario_path(name), encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        out_dir = tmp_path_factory.mktemp(name.replace(".json", ""))
        runs[name] = (run_scenario(cfg, output_dir=str(out_dir)), out_dir)
    return runs


def test_criterion_1_heat_kernel_oracle():
    started = time.perf_counter()
    mesh = pl.Mesh(-8.0, 8.0, 400)
    u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
    cfg = pl.SolverConfig(dt=1e-3, T=0.5)
    traj = pl.solve(u0, pl.preset("linear-heat"), cfg).trajectory
    target = pl.project_density(norm(0, math.sqrt(0.25 + 2 * 0.5)).pdf, mesh)
    distance = pl.l1_distance(traj.frames[-1], target)
    assert distance <= 1e-2, f"L1 distance {distance} above 1e-2"
    _report(1, "heat-kernel oracle", time.perf_counter() - started, 10.0)


def test_criterion_2_conservation_and_positivity(bundled_runs):
    for name, (summary, out_dir) in bundled_runs.items():
        assert summary.all_passed, f"bundled scenario {name} did not pass"
        rows = (out_dir / "monitors.csv").read_text().strip().split("\n")[1:]
        mass = np.asarray([float(r.split(",")[2]) for r in rows])
        min_u = np.asarray([float(r.split(",")[3]) for r in rows])
        assert np.abs(mass - 1.0).max() <= 1e-8, name
        assert min_u.min() >= -1e-12, name
    print("[acceptance] criterion 2 (conservation and positivity): PASS "
          f"on {len(bundled_runs)} bundled scenarios")


def test_bundled_scenarios_write_expected_artifacts(bundled_runs):
    summary, out_dir = bundled_runs["heat-superposition.json"]
    expected = {"trajectory.csv", "monitors.csv", "ensemble.csv", "superposition.csv", "summary.txt"}
    present = {p.name for p in out_dir.iterdir()}
    assert expected <= present
    summary, out_dir = bundled_runs["cubic-full.json"]
    assert {"coupling.csv", "lipschitz.csv", "weak_form.csv"} <= {p.name for p in out_dir.iterdir()}


def test_criterion_3_weak_form_residual_refinement():
    started = time.perf_counter()
    coeffs = pl.preset("cubic-tanh")
    phi = pl.WeakFormTestFunction(center=0.0, radius=2.0)

    def residual(n_cells, dt, n_cp):
        mesh = pl.Mesh(-8.0, 8.0, n_cells)
        u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
        cfg = pl.SolverConfig(dt=dt, T=0.5, checkpoint_times=tuple(np.linspace(0, 0.5, n_cp)))
        traj = pl.solve(u0, coeffs, cfg).trajectory
        return pl.weak_form_residual(traj, phi, coeffs, 0.5)

    coarse = residual(400, 1e-3, 3)
    fine = residual(800, 5e-4, 5)
    factor = coarse / fine
    assert factor >= 3.0, f"residual only dropped by {factor:.2f}x"
    _report(3, f"weak-form refinement, factor {factor:.1f}", time.perf_counter() - started, 60.0)


def test_criterion_4_superposition():
    started = time.perf_counter()
    mesh = pl.Mesh(-8.0, 8.0, 400)
    u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
    heat = pl.preset("linear-heat")
    cfg = pl.SolverConfig(dt=1e-3, T=0.5, checkpoint_times=tuple(np.linspace(0, 0.5, 11)))
    traj = pl.solve(u0, heat, cfg).trajectory
    kde = pl.KdeConfig()
    terminal = {}
    for n in (10_000, 40_000):
        driver = pl.BrownianDriver.from_horizon(n, 1e-3, 0.5, seed=2024)
        ens0 = pl.sample_initial(u0, n, seed=2024)
        checkpoints = pl.simulate_decoupled(ens0, traj, heat, driver)
        terminal[n] = pl.superposition_report(traj, checkpoints, mesh, kde).terminal_distance
    assert terminal[10_000] <= 0.05, f"terminal distance {terminal[10_000]}"
    assert terminal[40_000] <= terminal[10_000] + 0.005, (
        f"N=40000 distance {terminal[40_000]} vs {terminal[10_000]} + 0.005"
    )
    _report(4, "superposition", time.perf_counter() - started, 120.0)


def test_criterion_5_discrete_pathwise_uniqueness():
    started = time.perf_counter()
    mesh = pl.Mesh(-8.0, 8.0, 400)
    u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
    heat = pl.preset("linear-heat")
    cfg = pl.SolverConfig(dt=1e-3, T=0.5, checkpoint_times=tuple(np.linspace(0, 0.5, 11)))
    traj = pl.solve(u0, heat, cfg).trajectory
    rerun = pl.coupling_experiment(heat, traj, u0, seed=7, n=1000, dt_levels=[1e-3])
    assert rerun.sup_path_distance == 0.0, "identical basis rerun must coincide exactly"
    halved = pl.coupling_experiment(heat, traj, u0, seed=7, n=1000, dt_levels=[2e-3, 1e-3])
    assert halved.sup_path_distance == 0.0, "additive scheme must telescope exactly"
    _report(5, "discrete pathwise uniqueness", time.perf_counter() - started, 30.0)


def test_criterion_6_strong_functional_refinement():
    started = time.perf_counter()
    mesh = pl.Mesh(-8.0, 8.0, 400)
    u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
    cubic = pl.preset("cubic-tanh")
    cfg = pl.SolverConfig(dt=1e-3, T=0.5, checkpoint_times=tuple(np.linspace(0, 0.5, 11)))
    traj = pl.solve(u0, cubic, cfg).trajectory
    report = pl.coupling_experiment(
        cubic, traj, u0, seed=11, n=1000, dt_levels=[1e-2, 5e-3, 2.5e-3]
    )
    assert report.strictly_decreasing, f"distances {report.distances_by_level} not decreasing"
    _report(6, "strong-functional refinement", time.perf_counter() - started, 120.0)


def test_criterion_7_lipschitz_certificate():
    started = time.perf_counter()
    cubic = pl.preset("cubic-tanh")
    exponents = (math.inf, math.inf, 1.0, 1.0)
    sups = []
    for n_cells, dt in ((400, 1e-3), (800, 5e-4)):
        mesh = pl.Mesh(-8.0, 8.0, n_cells)
        u0 = pl.project_density(norm(0, 0.5).pdf, mesh)
        cfg = pl.SolverConfig(dt=dt, T=0.5, checkpoint_times=tuple(np.linspace(0, 0.5, 11)))
        traj = pl.solve(u0, cubic, cfg).trajectory
        cert = pl.lipschitz_certificate(traj, cubic, R=3.0, exponents=exponents,
                                        n_pairs=10_000, seed=5)
        assert cert.violation_rate == 0.0, f"violations at {n_cells} cells"
        sups.append(cert.f_r_sup)
    change = abs(sups[1] - sups[0])
    assert change <= 0.2 * max(max(sups), 1e-30), f"sup f_R moved {sups[0]} -> {sups[1]}"
    _report(7, "lipschitz certificate", time.perf_counter() - started, 60.0)


def test_criterion_8_maximal_function_brute_force():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(8, 257))
        mesh = pl.Mesh(0.0, 1.0, n)
        vals = rng.random(n)
        r_max = float(rng.uniform(mesh.dx, 0.5))
        fast = pl.maximal_function(pl.GridFunction(mesh, vals), r_max).values
        n_radii = int(np.floor(r_max / mesh.dx + 1e-12))
        brute = np.empty(n)
        for i in range(n):
            best = -np.inf
            for m in range(1, n_radii + 1):
                a = max(0, i - (m - 1))
                b = min(n - 1, i + (m - 1))
                avg = np.sum(vals[a:b + 1]) / (b - a + 1)
                if avg > best:
                    best = avg
            brute[i] = best
        np.testing.assert_array_equal(fast, brute)
    _report(8, "maximal function equals brute force", time.perf_counter() - started, 10.0)


def test_criterion_9_coefficient_validator():
    started = time.perf_counter()
    for name in pl.PRESET_NAMES:
        report = pl.validate_conditions(pl.preset(name), (-5.0, 5.0), 10_000, seed=0)
        assert report.all_passed, f"preset {name}:\n{report}"
    beta = BetaFunction(
        eval=lambda r: np.asarray(r, dtype=np.float64) ** 3,
        deriv=lambda r: 3.0 * np.asarray(r, dtype=np.float64) ** 2,
        gamma0=0.1,
    )
    degenerate = pl.CoefficientSet(
        beta=beta, a=DiffusionA(beta), b=pl.preset("linear-heat").b,
        E=pl.preset("linear-heat").E, lipschitz_a_local=100.0,
    )
    report = pl.validate_conditions(degenerate, (-1.0, 1.0), 10_000, seed=0)
    mono = report.check("beta_monotone")
    assert not mono.passed
    assert mono.witness is not None and max(abs(w) for w in mono.witness) < 0.5
    _report(9, "coefficient validator", time.perf_counter() - started, 5.0)


def test_criterion_10_newton_jacobian_check():
    started = time.perf_counter()
    cubic = pl.preset("cubic-tanh")
    rng = np.random.default_rng(17)
    dx = 0.05
    kappa = 1e-3 / dx**2
    h = 1e-6
    worst = 0.0
    for _ in range(50):
        v = rng.uniform(0.0, 1.2, 20)
        rhs = np.zeros_like(v)
        lower, diag, upper = _newton_tridiag(v, kappa, cubic)
        dense = np.diag(diag)
        dense[np.arange(1, v.size), np.arange(v.size - 1)] = lower[1:]
        dense[np.arange(v.size - 1), np.arange(1, v.size)] = upper[:-1]
        fd = np.empty_like(dense)
        for j in range(v.size):
            e = np.zeros_like(v)
            e[j] = h
            fd[:, j] = (
                _newton_residual(v + e, rhs, kappa, cubic, dx)
                - _newton_residual(v - e, rhs, kappa, cubic, dx)
            ) / (2 * h)
        worst = max(worst, float((np.abs(dense - fd) / (1.0 + np.abs(dense))).max()))
    assert worst <= 1e-5, f"relative Jacobian error {worst}"
    _report(10, "newton jacobian check", time.perf_counter() - started, 5.0)
