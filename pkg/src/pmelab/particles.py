"""Euler-Maruyama particle dynamics driven by a density-evaluated drift and
diffusion.

Two modes.  Decoupled: the density entering the coefficients is read from a
precomputed trajectory, frozen between checkpoints.  Self-consistent: the
density is re-estimated from the ensemble itself by Gaussian KDE before each
step.  Noise comes from a counter-based driver, so every simulation is a
pure function of (initial ensemble, driver, coefficients): rerunning an
identical configuration reproduces every position bit for bit, and runs at
different step sizes can consume exactly the same Brownian path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coefficients import CoefficientSet
from .errors import ConfigurationError, DomainError, SolverError
from .grid import DensityTrajectory, GridFunction, Mesh, density_from_values, sample_at
from .rng import keyed_normals

_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class BrownianDriver:
    """Per-particle Gaussian increments N(0, dt) on a fixed time grid.

    Increments are keyed by (seed, particle, step): regenerating any single
    increment gives the identical value, independent of how many particles
    or steps are queried around it.  ``zero_noise`` swaps every increment
    for 0.0 (handy for drift-only tests).
    """

    n_particles: int
    dt: float
    n_steps: int
    seed: int
    zero_noise: bool = False

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigurationError("driver needs at least one particle")
        if not self.dt > 0:
            raise ConfigurationError("driver dt must be positive")
        if self.n_steps < 1:
            raise ConfigurationError("driver needs at least one step")

    @classmethod
    def from_horizon(cls, n_particles: int, dt: float, T: float, seed: int,
                     zero_noise: bool = False) -> "BrownianDriver":
        n = int(round(T / dt))
        if abs(n * dt - T) > _SNAP_TOL * max(1.0, T):
            raise ConfigurationError(f"horizon T={T} is not a multiple of dt={dt}")
        return cls(n_particles, dt, n, seed, zero_noise)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def time_grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def increments(self, step: int) -> np.ndarray:
        """All particles' increments for one step."""
        if not 0 <= step < self.n_steps:
            raise DomainError(f"step {step} outside [0, {self.n_steps})")
        if self.zero_noise:
            return np.zeros(self.n_particles)
        idx = np.arange(self.n_particles, dtype=np.uint64)
        return math.sqrt(self.dt) * keyed_normals(self.seed, step, idx)

    def increment(self, particle: int, step: int) -> float:
        """Single increment, regenerated from its key."""
        if not 0 <= particle < self.n_particles:
            raise DomainError(f"particle {particle} outside [0, {self.n_particles})")
        if not 0 <= step < self.n_steps:
            raise DomainError(f"step {step} outside [0, {self.n_steps})")
        if self.zero_noise:
            return 0.0
        idx = np.asarray([particle], dtype=np.uint64)
        return float(math.sqrt(self.dt) * keyed_normals(self.seed, step, idx)[0])


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    t: float
    driver_seed: int
    mode: str = "decoupled"

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64, copy=True)
        if pos.ndim != 1 or pos.size < 1:
            raise DomainError("positions must be a nonempty 1-D array")
        if not np.all(np.isfinite(pos)):
            raise DomainError("particle positions must be finite")
        if self.mode not in ("decoupled", "self_consistent"):
            raise DomainError(f"unknown ensemble mode {self.mode!r}")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: float | str = "silverman"
    kernel: str = "gaussian"

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ConfigurationError(
                    f"unknown bandwidth rule {self.bandwidth!r}; use 'silverman' or a number"
                )
        elif not self.bandwidth > 0:
            raise ConfigurationError("explicit bandwidth must be positive")
        if self.kernel != "gaussian":
            raise ConfigurationError(f"unknown kernel {self.kernel!r}")


def silverman_bandwidth(positions: np.ndarray) -> float:
    """1.06 * sample std * n^(-1/5)."""
    sd = float(np.std(positions, ddof=1))
    return 1.06 * sd * positions.size ** (-0.2)


def resolve_bandwidth(cfg: KdeConfig, positions: np.ndarray) -> float:
    if isinstance(cfg.bandwidth, str):
        h = silverman_bandwidth(positions)
    else:
        h = float(cfg.bandwidth)
    if not h > 0:
        raise DomainError("KDE bandwidth degenerated to 0 (all particles coincide?)")
    return h


def sample_initial(u0: GridFunction, n: int, seed: int) -> ParticleEnsemble:
    """Inverse-CDF sampling of a cell-averaged density, uniform within cells."""
    if not u0.is_density:
        raise DomainError("sample_initial requires a density")
    if n < 1:
        raise DomainError("need at least one particle")
    mesh = u0.mesh
    cdf = np.concatenate([[0.0], np.cumsum(u0.values) * mesh.dx])
    cdf /= cdf[-1]
    v = np.random.default_rng(seed).random(n)
    cell = np.clip(np.searchsorted(cdf, v, side="right") - 1, 0, mesh.n_cells - 1)
    gap = cdf[cell + 1] - cdf[cell]
    frac = np.where(gap > 0.0, (v - cdf[cell]) / np.where(gap > 0.0, gap, 1.0), 0.5)
    positions = mesh.x_min + (cell + frac) * mesh.dx
    return ParticleEnsemble(positions, t=0.0, driver_seed=seed)


def kde_density(ens: ParticleEnsemble, mesh: Mesh, cfg: KdeConfig) -> GridFunction:
    """Gaussian-kernel density estimate at cell centers, unit mass on the mesh."""
    if ens.n < 2:
        raise DomainError("KDE needs at least two particles")
    h = resolve_bandwidth(cfg, ens.positions)
    centers = mesh.centers
    pos = ens.positions
    out = np.empty(mesh.n_cells)
    norm = 1.0 / (ens.n * h * math.sqrt(2.0 * math.pi))
    block = max(1, 2_000_000 // max(1, pos.size))
    for start in range(0, mesh.n_cells, block):
        stop = min(start + block, mesh.n_cells)
        z = (centers[start:stop, None] - pos[None, :]) / h
        out[start:stop] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return density_from_values(mesh, out)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _frozen_coefficients(positions: np.ndarray, density: GridFunction,
                         coeffs: CoefficientSet) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate drift and diffusion at the given positions and density."""
    rho = sample_at(density, positions)
    drift = np.asarray(coeffs.E.eval(positions), dtype=np.float64) * np.asarray(
        coeffs.b.eval(rho), dtype=np.float64
    )
    sigma = np.sqrt(2.0 * np.asarray(coeffs.a(rho), dtype=np.float64))
    sigma_floor = math.sqrt(2.0 * coeffs.gamma0) * (1.0 - 1e-12)
    if sigma.min() < sigma_floor:
        raise SolverError(
            f"diffusion fell below sqrt(2*gamma0): {sigma.min():.6g} < {sigma_floor:.6g}"
        )
    drift_cap = coeffs.drift_sup * (1.0 + 1e-12)
    if np.abs(drift).max() > drift_cap:
        raise SolverError(
            f"drift exceeded its bound: {np.abs(drift).max():.6g} > {coeffs.drift_sup:.6g}"
        )
    return drift, sigma


def _check_finite(positions: np.ndarray) -> np.ndarray:
    bad = np.flatnonzero(~np.isfinite(positions))
    if bad.size:
        raise SolverError(f"particle {int(bad[0])} left the real line (non-finite update)")
    return positions


def em_step(ens: ParticleEnsemble, density: GridFunction, coeffs: CoefficientSet,
            driver: BrownianDriver, step_index: int) -> ParticleEnsemble:
    """One explicit update x' = x + E(x) b(rho(x)) dt + sqrt(2 a(rho(x))) dW."""
    if not density.is_density:
        raise DomainError("em_step requires a density-flagged grid function")
    if driver.n_particles != ens.n:
        raise ConfigurationError("driver and ensemble particle counts differ")
    drift, sigma = _frozen_coefficients(ens.positions, density, coeffs)
    dw = driver.increments(step_index)
    new_pos = ens.positions + drift * driver.dt + sigma * dw
    return ParticleEnsemble(
        _check_finite(new_pos),
        t=ens.t + driver.dt,
        driver_seed=ens.driver_seed,
        mode=ens.mode,
    )


def simulate_decoupled(ens0: ParticleEnsemble, traj: DensityTrajectory,
                       coeffs: CoefficientSet, driver: BrownianDriver,
                       coefficient_refresh: int = 1) -> list[ParticleEnsemble]:
    """Drive the ensemble along a fixed density trajectory.

    The density is frozen at the latest checkpoint at or before the current
    time.  ``coefficient_refresh`` sets how many driver steps share one
    coefficient evaluation: the effective update step is refresh * driver.dt
    while the noise is always consumed at driver granularity.  Runs whose
    refresh factors differ therefore share the exact same Brownian path
    increment by increment, which is what makes step-halving coupling
    comparisons meaningful (and exact for state-independent coefficients).
    Returns ensembles at every trajectory checkpoint.
    """
    if driver.n_particles != ens0.n:
        raise ConfigurationError("driver and ensemble particle counts differ")
    if coefficient_refresh < 1:
        raise ConfigurationError("coefficient_refresh must be at least 1")
    if abs(driver.T - traj.T) > _SNAP_TOL * max(1.0, traj.T):
        raise ConfigurationError("driver horizon does not match the trajectory")
    checkpoint_steps = {}
    for tk in traj.times:
        k = int(round(tk / driver.dt))
        if abs(k * driver.dt - tk) > _SNAP_TOL * max(1.0, traj.T):
            raise ConfigurationError(
                f"driver grid does not hit checkpoint t={tk} (dt={driver.dt})"
            )
        if k % coefficient_refresh != 0:
            raise ConfigurationError(
                f"checkpoint t={tk} does not align with refresh factor {coefficient_refresh}"
            )
        checkpoint_steps[k] = tk
    if driver.n_steps % coefficient_refresh != 0:
        raise ConfigurationError("driver step count must be a multiple of the refresh factor")

    out = [ParticleEnsemble(ens0.positions, t=0.0, driver_seed=driver.seed, mode="decoupled")]
    x = ens0.positions.copy()
    drift = sigma = None
    for k in range(driver.n_steps):
        if k % coefficient_refresh == 0:
            frame = traj.frames[traj.latest_index_leq(k * driver.dt)]
            drift, sigma = _frozen_coefficients(x, frame, coeffs)
        x = x + drift * driver.dt + sigma * driver.increments(k)
        if (k + 1) in checkpoint_steps:
            out.append(
                ParticleEnsemble(
                    _check_finite(x),
                    t=checkpoint_steps[k + 1],
                    driver_seed=driver.seed,
                    mode="decoupled",
                )
            )
    return out


def simulate_self_consistent(ens0: ParticleEnsemble, coeffs: CoefficientSet,
                             driver: BrownianDriver, kde: KdeConfig, mesh: Mesh,
                             checkpoint_times: Sequence[float] | None = None
                             ) -> list[ParticleEnsemble]:
    """Re-estimate the density from the ensemble by KDE before every step."""
    if ens0.n < 100:
        raise DomainError("self-consistent mode needs at least 100 particles for the KDE")
    if driver.n_particles != ens0.n:
        raise ConfigurationError("driver and ensemble particle counts differ")
    if checkpoint_times is None:
        checkpoint_times = (0.0, driver.T)
    checkpoint_steps = {}
    for tk in checkpoint_times:
        k = int(round(tk / driver.dt))
        if abs(k * driver.dt - tk) > _SNAP_TOL * max(1.0, driver.T):
            raise ConfigurationError(f"driver grid does not hit checkpoint t={tk}")
        checkpoint_steps[k] = float(tk)

    out = []
    if 0 in checkpoint_steps:
        out.append(
            ParticleEnsemble(ens0.positions, t=0.0, driver_seed=driver.seed,
                             mode="self_consistent")
        )
    x = ens0.positions.copy()
    for k in range(driver.n_steps):
        density = kde_density(
            ParticleEnsemble(x, t=k * driver.dt, driver_seed=driver.seed,
                             mode="self_consistent"),
            mesh,
            kde,
        )
        drift, sigma = _frozen_coefficients(x, density, coeffs)
        x = x + drift * driver.dt + sigma * driver.increments(k)
        if (k + 1) in checkpoint_steps:
            out.append(
                ParticleEnsemble(
                    _check_finite(x),
                    t=checkpoint_steps[k + 1],
                    driver_seed=driver.seed,
                    mode="self_consistent",
                )
            )
    return out


def write_ensemble_csv(checkpoints: Sequence[ParticleEnsemble], path) -> None:
    """Long-format CSV ``t,particle_id,x``."""
    from .grid import format_float

    lines = ["t,particle_id,x"]
    for ens in checkpoints:
        ts = format_float(ens.t)
        for pid, x in enumerate(ens.positions):
            lines.append(f"{ts},{pid},{format_float(x)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
