"""Mass-conservative solver for the density flow

    d/dt u + d/dx ( E b(u) u ) = d2/dx2 beta(u)

on a uniform 1-D mesh, plus a residual checker for its integral (weak)
formulation against smooth compactly supported test functions.

Scheme: operator splitting per time step.  The transport term uses an
explicit conservative upwind flux evaluated at the current state (CFL
checked against the global bound on |E b|); the diffusion term is backward
Euler, solved by damped Newton on the cell values with an analytic
tridiagonal Jacobian.  Boundary faces carry zero flux for both terms, so
the update telescopes and mass is conserved to Newton tolerance.  Because
beta' >= gamma0 > 0, the Newton matrix is an M-matrix with column-dominance
gap 1; elimination pivots are checked against gamma0*dt/dx^2 and a lost
pivot aborts the solve.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coefficients import CoefficientSet
from .errors import ConfigurationError, DomainError, DomainTooSmallError, SolverError
from .grid import (
    DensityTrajectory,
    GridFunction,
    Mesh,
    density_from_values,
    format_float,
)

_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    newton_tol: float = 1e-12
    newton_max_iter: int = 30
    checkpoint_times: tuple[float, ...] | None = None
    boundary_mass_tol: float = 1e-8

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.T >= self.dt:
            raise ConfigurationError("T must be at least dt")
        if not self.newton_tol > 0:
            raise ConfigurationError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ConfigurationError("newton_max_iter must be at least 1")
        if not self.boundary_mass_tol > 0:
            raise ConfigurationError("boundary_mass_tol must be positive")
        cps = self.checkpoint_times
        if cps is None:
            cps = (0.0, self.T)
        cps = tuple(float(t) for t in cps)
        if cps[0] != 0.0 or abs(cps[-1] - self.T) > _SNAP_TOL * max(1.0, self.T):
            raise ConfigurationError("checkpoint times must contain 0 and T")
        if any(t1 >= t2 for t1, t2 in zip(cps, cps[1:])):
            raise ConfigurationError("checkpoint times must be strictly increasing")
        object.__setattr__(self, "checkpoint_times", cps)


def steps_for(time: float, dt: float, what: str = "time") -> int:
    """Map ``time`` to a whole number of steps of size ``dt`` or fail."""
    n = int(round(time / dt))
    if abs(n * dt - time) > _SNAP_TOL * max(1.0, abs(time)):
        raise ConfigurationError(f"{what} {time} is not a multiple of dt={dt}")
    return n


# ---------------------------------------------------------------------------
# smooth bump test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakFormTestFunction:
    """C^2 bump phi(x) = exp(1 - 1/(1 - s^2)), s = (x - center)/radius,
    supported on |s| < 1 and equal to 1 at the center."""

    center: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError("bump radius must be positive")

    def _pieces(self, x):
        s = (np.asarray(x, dtype=np.float64) - self.center) / self.radius
        one_minus = 1.0 - s * s
        # below this the bump underflows anyway; avoids overflow in 1/(1-s^2)
        inside = one_minus > 1.5e-3
        safe = np.where(inside, one_minus, 1.0)
        phi = np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)
        return s, safe, inside, phi

    def eval(self, x):
        return self._pieces(x)[3]

    def grad(self, x):
        s, safe, inside, phi = self._pieces(x)
        dpsi = -2.0 * s / safe**2
        return np.where(inside, phi * dpsi / self.radius, 0.0)

    def laplacian(self, x):
        s, safe, inside, phi = self._pieces(x)
        dpsi = -2.0 * s / safe**2
        d2psi = -2.0 * (1.0 + 3.0 * s * s) / safe**3
        return np.where(inside, phi * (d2psi + dpsi * dpsi) / self.radius**2, 0.0)


# ---------------------------------------------------------------------------
# one time step
# ---------------------------------------------------------------------------

def _transport_divergence(values: np.ndarray, mesh: Mesh, coeffs: CoefficientSet) -> np.ndarray:
    """Conservative upwind divergence of E b(u) u; zero boundary fluxes."""
    w = np.asarray(coeffs.b.eval(values), dtype=np.float64) * values
    e_face = np.asarray(coeffs.E.eval(mesh.faces[1:-1]), dtype=np.float64)
    flux = np.zeros(mesh.n_cells + 1)
    flux[1:-1] = np.maximum(e_face, 0.0) * w[:-1] + np.minimum(e_face, 0.0) * w[1:]
    return (flux[1:] - flux[:-1]) / mesh.dx


def _beta_laplacian(beta_vals: np.ndarray, dx: float) -> np.ndarray:
    """Second difference of beta values with zero-flux boundary faces."""
    out = np.empty_like(beta_vals)
    out[1:-1] = beta_vals[2:] - 2.0 * beta_vals[1:-1] + beta_vals[:-2]
    out[0] = beta_vals[1] - beta_vals[0]
    out[-1] = beta_vals[-2] - beta_vals[-1]
    return out / (dx * dx)


def _newton_residual(v: np.ndarray, rhs: np.ndarray, kappa_dx2: float,
                     coeffs: CoefficientSet, dx: float) -> np.ndarray:
    """G(v) = v - dt * Lap(beta(v)) - rhs, with kappa_dx2 = dt/dx^2."""
    beta_vals = np.asarray(coeffs.beta.eval(v), dtype=np.float64)
    return v - kappa_dx2 * dx * dx * _beta_laplacian(beta_vals, dx) - rhs


def _newton_tridiag(v: np.ndarray, kappa_dx2: float, coeffs: CoefficientSet):
    """Analytic Jacobian of the Newton residual as (lower, diag, upper) bands."""
    slope = np.asarray(coeffs.beta.deriv(v), dtype=np.float64)
    n = v.size
    diag = 1.0 + 2.0 * kappa_dx2 * slope
    diag[0] = 1.0 + kappa_dx2 * slope[0]
    diag[-1] = 1.0 + kappa_dx2 * slope[-1]
    lower = np.empty(n)
    upper = np.empty(n)
    lower[1:] = -kappa_dx2 * slope[:-1]
    upper[:-1] = -kappa_dx2 * slope[1:]
    lower[0] = 0.0
    upper[-1] = 0.0
    return lower, diag, upper


def _thomas_solve(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                  rhs: np.ndarray, diag_floor: float) -> tuple[np.ndarray, float]:
    """Tridiagonal elimination without pivoting; tracks the smallest pivot.

    The assembled diagonal must clear ``diag_floor`` (the non-degeneracy
    bound gamma0*dt/dx^2; the true diagonal is 1 + c*dt/dx^2*beta' with
    c in {1, 2}, so this is slack).  Elimination pivots themselves stay
    at or above the column-dominance gap 1, and only a genuinely lost
    pivot aborts.
    """
    n = diag.size
    if float(np.abs(diag).min()) < diag_floor:
        raise SolverError(
            f"assembled diagonal {float(np.abs(diag).min()):.3e} fell below "
            f"the non-degeneracy floor {diag_floor:.3e}"
        )
    lo = lower.tolist()
    di = diag.tolist()
    up = upper.tolist()
    rh = rhs.tolist()
    cp = [0.0] * n
    xp = [0.0] * n
    piv = di[0]
    min_piv = abs(piv)
    cp[0] = up[0] / piv
    xp[0] = rh[0] / piv
    for i in range(1, n):
        piv = di[i] - lo[i] * cp[i - 1]
        ap = abs(piv)
        if ap < min_piv:
            min_piv = ap
        cp[i] = up[i] / piv
        xp[i] = (rh[i] - lo[i] * xp[i - 1]) / piv
    if min_piv < 1e-12 or not np.isfinite(min_piv):
        raise SolverError(f"tridiagonal elimination lost its pivot ({min_piv:.3e})")
    x = [0.0] * n
    x[-1] = xp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = xp[i] - cp[i] * x[i + 1]
    return np.asarray(x), min_piv


@dataclass(frozen=True)
class StepStats:
    newton_iters: int
    min_pivot: float
    mass: float
    min_u: float
    max_u: float
    boundary_mass: float


def _check_cfl(mesh: Mesh, coeffs: CoefficientSet, dt: float) -> None:
    speed = coeffs.drift_sup
    if dt * speed / mesh.dx > 1.0:
        raise ConfigurationError(
            f"transport CFL violated: dt*sup|E b|/dx = {dt * speed / mesh.dx:.3g} > 1"
        )


def _boundary_mass(values: np.ndarray, dx: float) -> float:
    return float((values[0] + values[-1]) * dx)


def _advance(values: np.ndarray, mesh: Mesh, coeffs: CoefficientSet,
             cfg: SolverConfig) -> tuple[np.ndarray, StepStats]:
    dt = cfg.dt
    dx = mesh.dx
    bmass = _boundary_mass(values, dx)
    if bmass >= cfg.boundary_mass_tol:
        raise DomainTooSmallError(
            f"boundary mass {bmass:.3e} exceeds tolerance {cfg.boundary_mass_tol:.3e}; "
            "enlarge the computational box"
        )
    _check_cfl(mesh, coeffs, dt)

    rhs = values - dt * _transport_divergence(values, mesh, coeffs)
    kappa = dt / (dx * dx)
    pivot_floor = coeffs.gamma0 * kappa * (1.0 - 1e-8)

    v = values.copy()
    res = _newton_residual(v, rhs, kappa, coeffs, dx)
    res_norm = float(np.abs(res).max())
    min_pivot = np.inf
    iters = 0
    while res_norm > cfg.newton_tol:
        if iters >= cfg.newton_max_iter:
            raise SolverError(
                f"Newton stalled at residual {res_norm:.3e} "
                f"after {iters} iterations (tol {cfg.newton_tol:.1e})"
            )
        lower, diag, upper = _newton_tridiag(v, kappa, coeffs)
        delta, piv = _thomas_solve(lower, diag, upper, -res, pivot_floor)
        min_pivot = min(min_pivot, piv)
        # halve the step while the residual grows, up to 5 levels
        best_v, best_res, best_norm = None, None, np.inf
        scale = 1.0
        for _ in range(6):
            trial = v + scale * delta
            trial_res = _newton_residual(trial, rhs, kappa, coeffs, dx)
            trial_norm = float(np.abs(trial_res).max())
            if not np.isfinite(trial_norm):
                raise SolverError("Newton iteration produced non-finite values")
            if trial_norm < best_norm:
                best_v, best_res, best_norm = trial, trial_res, trial_norm
            if trial_norm < res_norm:
                break
            scale *= 0.5
        v, res, res_norm = best_v, best_res, best_norm
        iters += 1

    stats = StepStats(
        newton_iters=iters,
        min_pivot=float(min_pivot),
        mass=float(v.sum() * dx),
        min_u=float(v.min()),
        max_u=float(v.max()),
        boundary_mass=_boundary_mass(v, dx),
    )
    return v, stats


def step(u: GridFunction, t: float, coeffs: CoefficientSet, cfg: SolverConfig) -> GridFunction:
    """Advance one time step of size ``cfg.dt`` starting from the density ``u``."""
    if not u.is_density:
        raise DomainError("step requires a density-flagged grid function")
    new_values, _ = _advance(u.values, u.mesh, coeffs, cfg)
    return density_from_values(u.mesh, new_values)


# ---------------------------------------------------------------------------
# full solve with monitors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SolverMonitors:
    """Per-step diagnostics of a solve, on the raw (unclipped) state."""

    step: np.ndarray
    t: np.ndarray
    mass: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    newton_iters: np.ndarray
    boundary_mass: np.ndarray
    grad_l2_accum: float

    @property
    def mass_drift(self) -> float:
        return float(np.abs(self.mass - 1.0).max()) if self.mass.size else 0.0

    @property
    def min_value(self) -> float:
        return float(self.min_u.min()) if self.min_u.size else 0.0

    def write_csv(self, path: str | os.PathLike) -> None:
        lines = ["step,t,mass,min_u,max_u,newton_iters,boundary_mass"]
        for k in range(self.step.size):
            lines.append(
                ",".join(
                    [
                        str(int(self.step[k])),
                        format_float(self.t[k]),
                        format_float(self.mass[k]),
                        format_float(self.min_u[k]),
                        format_float(self.max_u[k]),
                        str(int(self.newton_iters[k])),
                        format_float(self.boundary_mass[k]),
                    ]
                )
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True, eq=False)
class SolveResult:
    trajectory: DensityTrajectory
    monitors: SolverMonitors


def solve(u0: GridFunction, coeffs: CoefficientSet, cfg: SolverConfig) -> SolveResult:
    """March from ``u0`` to ``cfg.T`` and checkpoint at ``cfg.checkpoint_times``.

    Checkpoint frames are clipped at 0 and renormalized before the density
    flag is set; monitors record the raw state, so a genuine positivity or
    mass failure stays visible.
    """
    if not u0.is_density:
        raise DomainError("solve requires a density-flagged initial condition")
    mesh = u0.mesh
    _check_cfl(mesh, coeffs, cfg.dt)
    n_steps = steps_for(cfg.T, cfg.dt, "horizon T")
    checkpoint_steps = {}
    for tc in cfg.checkpoint_times:
        checkpoint_steps[steps_for(tc, cfg.dt, f"checkpoint {tc}")] = tc

    values = u0.values.copy()
    frames = [u0]
    times = [0.0]
    rows = {k: [] for k in ("step", "t", "mass", "min_u", "max_u", "newton_iters", "boundary_mass")}
    grad_accum = 0.0
    dx = mesh.dx
    for n in range(1, n_steps + 1):
        values, stats = _advance(values, mesh, coeffs, cfg)
        grad = np.diff(values) / dx
        grad_accum += cfg.dt * float((grad * grad).sum() * dx)
        rows["step"].append(n)
        rows["t"].append(n * cfg.dt)
        rows["mass"].append(stats.mass)
        rows["min_u"].append(stats.min_u)
        rows["max_u"].append(stats.max_u)
        rows["newton_iters"].append(stats.newton_iters)
        rows["boundary_mass"].append(stats.boundary_mass)
        if n in checkpoint_steps:
            frames.append(density_from_values(mesh, values))
            times.append(checkpoint_steps[n])

    monitors = SolverMonitors(
        step=np.asarray(rows["step"], dtype=np.int64),
        t=np.asarray(rows["t"]),
        mass=np.asarray(rows["mass"]),
        min_u=np.asarray(rows["min_u"]),
        max_u=np.asarray(rows["max_u"]),
        newton_iters=np.asarray(rows["newton_iters"], dtype=np.int64),
        boundary_mass=np.asarray(rows["boundary_mass"]),
        grad_l2_accum=grad_accum,
    )
    trajectory = DensityTrajectory(mesh, tuple(times), tuple(frames))
    return SolveResult(trajectory=trajectory, monitors=monitors)


# ---------------------------------------------------------------------------
# weak-form residual
# ---------------------------------------------------------------------------

def weak_form_residual(traj: DensityTrajectory, phi: WeakFormTestFunction,
                       coeffs: CoefficientSet, t: float) -> float:
    """Defect of the integral identity at checkpoint ``t``.

    |int phi u_t - int phi u_0 - int_0^t int E b(u) phi' u - int_0^t int beta(u) phi''|

    Space integrals are midpoint sums on the mesh; time integrals are
    trapezoid sums over the checkpoints up to ``t``, so the returned value
    includes that quadrature error rather than hiding it.
    """
    k_end = traj.index_at(t)
    mesh = traj.mesh
    x = mesh.centers
    dx = mesh.dx
    phi_vals = phi.eval(x)
    dphi = phi.grad(x)
    ddphi = phi.laplacian(x)
    e_vals = np.asarray(coeffs.E.eval(x), dtype=np.float64)

    integrand = np.empty(k_end + 1)
    for k in range(k_end + 1):
        u = traj.frames[k].values
        transport = float((e_vals * np.asarray(coeffs.b.eval(u)) * u * dphi).sum() * dx)
        diffusion = float((np.asarray(coeffs.beta.eval(u)) * ddphi).sum() * dx)
        integrand[k] = transport + diffusion

    time_integral = float(np.trapezoid(integrand, np.asarray(traj.times[: k_end + 1])))
    head = float((phi_vals * traj.frames[k_end].values).sum() * dx)
    tail = float((phi_vals * traj.frames[0].values).sum() * dx)
    return abs(head - tail - time_integral)


def write_trajectory_csv(traj: DensityTrajectory, path: str | os.PathLike) -> None:
    """Long-format CSV ``t,x,u`` over all checkpoints and cells."""
    lines = ["t,x,u"]
    for tk, frame in zip(traj.times, traj.frames):
        ts = format_float(tk)
        for x, v in zip(traj.mesh.centers, frame.values):
            lines.append(f"{ts},{format_float(x)},{format_float(v)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
