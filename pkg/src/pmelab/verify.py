"""Desk-scale experiments that probe the behavior the theory predicts.

* superposition: kernel-density estimates of simulated ensembles against
  the solver's density frames, checkpoint by checkpoint.
* coupling: two runs on the same probability basis (same initial ensemble,
  same Brownian path) compared in the pathwise supremum, including
  step-halving chains that consume the identical noise.
* one-sided Lipschitz certificate: empirical calibration of a weight
  f_R built from local maximal functions of the coefficient gradients,
  such that 2(x-y)(F(x)-F(y)) + |s(x)-s(y)|^2 <= (f_R(x)+f_R(y))|x-y|^2
  holds on sampled triples inside a ball.
* bounded density: the discrete sup-norm of a trajectory, the hypothesis
  under which the coupling experiment speaks to uniqueness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .coefficients import CoefficientSet
from .errors import ConfigurationError, DomainError
from .grid import DensityTrajectory, GridFunction, Mesh, l1_distance
from .particles import (
    BrownianDriver,
    KdeConfig,
    ParticleEnsemble,
    kde_density,
    resolve_bandwidth,
    sample_initial,
    simulate_decoupled,
)

_ALIGN_TOL = 1e-9


# ---------------------------------------------------------------------------
# superposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuperpositionReport:
    checkpoint_times: tuple[float, ...]
    l1_distances: tuple[float, ...]
    n_particles: int
    kde_bandwidths: tuple[float, ...]

    @property
    def terminal_distance(self) -> float:
        return self.l1_distances[-1]

    def to_rows(self) -> list[tuple[str, str, str]]:
        rows = [("superposition", "n_particles", str(self.n_particles))]
        for t, d, h in zip(self.checkpoint_times, self.l1_distances, self.kde_bandwidths):
            rows.append(("superposition", f"l1[t={t:g}]", f"{d:.17g}"))
            rows.append(("superposition", f"bandwidth[t={t:g}]", f"{h:.17g}"))
        return rows

    def summary_lines(self) -> list[str]:
        return [
            f"superposition: N={self.n_particles}, "
            f"terminal l1 distance {self.terminal_distance:.6g}, "
            f"max {max(self.l1_distances):.6g}"
        ]


def superposition_report(traj: DensityTrajectory, checkpoints: Sequence[ParticleEnsemble],
                         mesh: Mesh, kde: KdeConfig) -> SuperpositionReport:
    """L1 distance between the KDE of each ensemble and the matching frame."""
    if len(checkpoints) != len(traj.times):
        raise ConfigurationError(
            f"{len(checkpoints)} ensembles do not align with {len(traj.times)} checkpoints"
        )
    distances = []
    bandwidths = []
    for ens, t, frame in zip(checkpoints, traj.times, traj.frames):
        if abs(ens.t - t) > _ALIGN_TOL * max(1.0, traj.T):
            raise ConfigurationError(f"ensemble at t={ens.t} does not align with checkpoint t={t}")
        h = resolve_bandwidth(kde, ens.positions)
        est = kde_density(ens, mesh, KdeConfig(bandwidth=h, kernel=kde.kernel))
        distances.append(l1_distance(est, frame))
        bandwidths.append(h)
    return SuperpositionReport(
        checkpoint_times=tuple(traj.times),
        l1_distances=tuple(distances),
        n_particles=checkpoints[0].n,
        kde_bandwidths=tuple(bandwidths),
    )


# ---------------------------------------------------------------------------
# coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingReport:
    sup_path_distance: float
    refinement_levels: tuple[float, ...]
    distances_by_level: tuple[float, ...]
    strictly_decreasing: bool
    n_particles: int
    seed: int

    def to_rows(self) -> list[tuple[str, str, str]]:
        rows = [
            ("coupling", "sup_path_distance", f"{self.sup_path_distance:.17g}"),
            ("coupling", "strictly_decreasing", str(self.strictly_decreasing).lower()),
            ("coupling", "n_particles", str(self.n_particles)),
            ("coupling", "seed", str(self.seed)),
        ]
        for lvl, d in zip(self.refinement_levels, self.distances_by_level):
            rows.append(("coupling", f"distance[dt={lvl:g}]", f"{d:.17g}"))
        return rows

    def summary_lines(self) -> list[str]:
        pairs = ", ".join(
            f"dt={lvl:g}: {d:.6g}"
            for lvl, d in zip(self.refinement_levels, self.distances_by_level)
        )
        return [
            f"coupling: sup path distance {self.sup_path_distance:.6g} ({pairs}); "
            f"strictly decreasing: {self.strictly_decreasing}"
        ]


def _sup_distance(run_a: Sequence[ParticleEnsemble], run_b: Sequence[ParticleEnsemble]) -> float:
    d = 0.0
    for ea, eb in zip(run_a, run_b):
        d = max(d, float(np.abs(ea.positions - eb.positions).max()))
    return d


def coupling_experiment(coeffs: CoefficientSet, traj: DensityTrajectory, u0: GridFunction,
                        seed: int, n: int, dt_levels: Sequence[float]) -> CouplingReport:
    """Pathwise comparison of runs sharing one basis across a halving chain.

    The driver lives on the finest level; a coarser level consumes the same
    increments with its coefficients refreshed only every ``dt_level``.  A
    single-entry chain runs the identical configuration twice (the
    determinism check).  Distances are sup over particles and checkpoints.
    """
    levels = tuple(float(d) for d in dt_levels)
    if not levels:
        raise ConfigurationError("dt_levels must not be empty")
    for da, db in zip(levels, levels[1:]):
        if abs(da / db - 2.0) > 1e-12:
            raise ConfigurationError(f"dt_levels must halve: {da} -> {db} does not")
    dt_fine = levels[-1]
    driver = BrownianDriver.from_horizon(n, dt_fine, traj.T, seed)
    ens0 = sample_initial(u0, n, seed)

    runs = []
    for lvl in levels:
        refresh = int(round(lvl / dt_fine))
        runs.append(simulate_decoupled(ens0, traj, coeffs, driver, coefficient_refresh=refresh))
    if len(levels) == 1:
        rerun = simulate_decoupled(ens0, traj, coeffs, driver, coefficient_refresh=1)
        distances = (_sup_distance(runs[0], rerun),)
        level_tags = (levels[0],)
    else:
        distances = tuple(
            _sup_distance(runs[i], runs[i + 1]) for i in range(len(levels) - 1)
        )
        level_tags = levels[:-1]
    decreasing = all(a > b for a, b in zip(distances, distances[1:]))
    return CouplingReport(
        sup_path_distance=max(distances),
        refinement_levels=level_tags,
        distances_by_level=distances,
        strictly_decreasing=decreasing,
        n_particles=n,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# local maximal function
# ---------------------------------------------------------------------------

def maximal_function(g: GridFunction, R_max: float) -> GridFunction:
    """Pointwise max over radii r = dx, 2dx, ..., R_max of the average of g
    over cells strictly within r; windows are clipped at the box edges.

    The radius-dx window is the cell itself, so Mg >= g pointwise.
    """
    vals = g.values
    dx = g.mesh.dx
    if vals.min() < 0.0:
        raise DomainError("maximal_function requires nonnegative input")
    if R_max < dx * (1.0 - 1e-12):
        raise DomainError(f"R_max={R_max} is below one cell width {dx}")
    n_radii = int(math.floor(R_max / dx + 1e-12))
    n = vals.size
    out = vals.copy()
    for m in range(2, n_radii + 1):
        half = m - 1
        width = 2 * m - 1
        if width <= n:
            win = sliding_window_view(vals, width).sum(axis=-1) / width
            np.maximum(out[half:n - half], win, out=out[half:n - half])
        for i in list(range(min(half, n))) + list(range(max(n - half, half), n)):
            a = max(0, i - half)
            b = min(n - 1, i + half)
            avg = np.sum(vals[a:b + 1]) / (b - a + 1)
            if avg > out[i]:
                out[i] = avg
    return GridFunction(g.mesh, out, is_density=False)


# ---------------------------------------------------------------------------
# one-sided Lipschitz certificate
# ---------------------------------------------------------------------------

def _duality_check(p: float, q: float, p_prime: float, q_prime: float) -> None:
    for name, v in (("p", p), ("q", q), ("p'", p_prime), ("q'", q_prime)):
        if not (v >= 1.0):
            raise ConfigurationError(f"exponent {name}={v} must be in [1, inf]")

    def inv(v: float) -> float:
        return 0.0 if math.isinf(v) else 1.0 / v

    if abs(inv(p) + inv(p_prime) - 1.0) > 1e-12 or abs(inv(q) + inv(q_prime) - 1.0) > 1e-12:
        raise ConfigurationError(
            f"exponents must be dual: 1/{p}+1/{p_prime} and 1/{q}+1/{q_prime} must equal 1"
        )


@dataclass(frozen=True)
class LipschitzCertificate:
    radius: float
    p: float
    q: float
    p_prime: float
    q_prime: float
    f_r_grids: tuple[GridFunction, ...]
    violation_rate: float
    margin_stats: tuple[float, float, float]
    calibrated_c: float
    f_r_norm: float
    f_r_sup: float
    n_pairs: int
    seed: int

    def to_rows(self) -> list[tuple[str, str, str]]:
        return [
            ("lipschitz", "radius", f"{self.radius:.17g}"),
            ("lipschitz", "exponents", f"({self.p:g},{self.q:g},{self.p_prime:g},{self.q_prime:g})"),
            ("lipschitz", "violation_rate", f"{self.violation_rate:.17g}"),
            ("lipschitz", "calibrated_c", f"{self.calibrated_c:.17g}"),
            ("lipschitz", "f_r_norm", f"{self.f_r_norm:.17g}"),
            ("lipschitz", "f_r_sup", f"{self.f_r_sup:.17g}"),
            ("lipschitz", "margin_min", f"{self.margin_stats[0]:.17g}"),
            ("lipschitz", "margin_median", f"{self.margin_stats[1]:.17g}"),
            ("lipschitz", "margin_max", f"{self.margin_stats[2]:.17g}"),
            ("lipschitz", "n_pairs", str(self.n_pairs)),
            ("lipschitz", "seed", str(self.seed)),
        ]

    def summary_lines(self) -> list[str]:
        return [
            f"lipschitz certificate: violation rate {self.violation_rate:.6g} at "
            f"C={self.calibrated_c:.6g}, ||f_R|| = {self.f_r_norm:.6g} "
            f"(sup {self.f_r_sup:.6g}) on B_{self.radius:g}"
        ]


def _interp(field: np.ndarray, mesh: Mesh, pts: np.ndarray) -> np.ndarray:
    # linear interpolation keeps difference quotients controlled by the
    # discrete gradient, which is exactly what f_R is built from
    return np.interp(pts, mesh.centers, field)


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros(times.size)
    if times.size == 1:
        return np.ones(1)
    w[0] = (times[1] - times[0]) / 2.0
    w[-1] = (times[-1] - times[-2]) / 2.0
    if times.size > 2:
        w[1:-1] = (times[2:] - times[:-2]) / 2.0
    return w


def _lq_lp_norm(grids: Sequence[np.ndarray], times: np.ndarray, mesh: Mesh,
                R: float, p: float, q: float) -> float:
    ball = np.abs(mesh.centers) <= R
    per_time = []
    for vals in grids:
        v = vals[ball]
        if math.isinf(p):
            per_time.append(float(v.max()) if v.size else 0.0)
        else:
            per_time.append(float((np.abs(v) ** p).sum() * mesh.dx) ** (1.0 / p))
    per_time = np.asarray(per_time)
    if math.isinf(q):
        return float(per_time.max())
    w = _trapezoid_weights(times)
    return float((w * per_time**q).sum() ** (1.0 / q))


def _certificate_from_fields(times: Sequence[float], drift_fields: Sequence[np.ndarray],
                             sigma_fields: Sequence[np.ndarray], mesh: Mesh, R: float,
                             exponents: tuple[float, float, float, float],
                             n_pairs: int, seed: int) -> LipschitzCertificate:
    p, q, p_prime, q_prime = (float(e) for e in exponents)
    _duality_check(p, q, p_prime, q_prime)
    if n_pairs < 1000:
        raise DomainError("need at least 1000 sampled triples")
    if R > mesh.half_width * (1.0 + 1e-12):
        raise DomainError(f"radius {R} exceeds the mesh half-width {mesh.half_width}")

    times_arr = np.asarray([float(t) for t in times])
    n_times = times_arr.size
    dx = mesh.dx
    shapes = []
    for fvals, svals in zip(drift_fields, sigma_fields):
        grad_f = np.abs(np.gradient(fvals, dx))
        grad_s = np.abs(np.gradient(svals, dx))
        m_f = maximal_function(GridFunction(mesh, grad_f), R).values
        m_s = maximal_function(GridFunction(mesh, grad_s), R).values
        shapes.append(m_f + m_s * m_s)

    rng = np.random.default_rng(seed)
    t_idx = rng.integers(0, n_times, n_pairs)
    xs = rng.uniform(-R, R, n_pairs)
    ys = rng.uniform(-R, R, n_pairs)

    lhs = np.empty(n_pairs)
    denom = np.empty(n_pairs)
    for k in range(n_times):
        m = t_idx == k
        if not m.any():
            continue
        fx = _interp(drift_fields[k], mesh, xs[m])
        fy = _interp(drift_fields[k], mesh, ys[m])
        sx = _interp(sigma_fields[k], mesh, xs[m])
        sy = _interp(sigma_fields[k], mesh, ys[m])
        wx = _interp(shapes[k], mesh, xs[m])
        wy = _interp(shapes[k], mesh, ys[m])
        diff = xs[m] - ys[m]
        lhs[m] = 2.0 * diff * (fx - fy) + (sx - sy) ** 2
        denom[m] = (wx + wy) * diff * diff

    usable = (denom > 0.0) & (lhs > 0.0)
    c = float((lhs[usable] / denom[usable]).max()) if usable.any() else 0.0
    slack = 1e-12 * (1.0 + np.abs(lhs))
    violations = lhs > c * denom + slack
    margins = c * denom - lhs

    f_r_vals = [c * s for s in shapes]
    f_r_grids = tuple(GridFunction(mesh, v) for v in f_r_vals)
    ball = np.abs(mesh.centers) <= R
    f_r_sup = max(float(v[ball].max()) for v in f_r_vals) if ball.any() else 0.0
    return LipschitzCertificate(
        radius=R,
        p=p,
        q=q,
        p_prime=p_prime,
        q_prime=q_prime,
        f_r_grids=f_r_grids,
        violation_rate=float(violations.sum()) / n_pairs,
        margin_stats=(float(margins.min()), float(np.median(margins)), float(margins.max())),
        calibrated_c=c,
        f_r_norm=_lq_lp_norm(f_r_vals, times_arr, mesh, R, p, q),
        f_r_sup=f_r_sup,
        n_pairs=n_pairs,
        seed=seed,
    )


def lipschitz_certificate(traj: DensityTrajectory, coeffs: CoefficientSet, R: float,
                          exponents: tuple[float, float, float, float],
                          n_pairs: int, seed: int) -> LipschitzCertificate:
    """Calibrate the smallest constant C such that the one-sided estimate
    holds on ``n_pairs`` sampled (t, x, y) triples, with the weight
    f_R = C * (M|grad F| + (M|grad s|)^2) built per checkpoint from local
    maximal functions of the discrete coefficient gradients."""
    mesh = traj.mesh
    x = mesh.centers
    e_vals = np.asarray(coeffs.E.eval(x), dtype=np.float64)
    drift_fields = []
    sigma_fields = []
    for frame in traj.frames:
        u = frame.values
        drift_fields.append(e_vals * np.asarray(coeffs.b.eval(u), dtype=np.float64))
        sigma_fields.append(np.sqrt(2.0 * np.asarray(coeffs.a(u), dtype=np.float64)))
    return _certificate_from_fields(
        traj.times, drift_fields, sigma_fields, mesh, R, exponents, n_pairs, seed
    )


def bounded_density_check(traj: DensityTrajectory) -> float:
    """Discrete sup-norm of the trajectory over all checkpoints and cells."""
    return max(float(frame.values.max()) for frame in traj.frames)
