"""Uniform 1-D meshes and cell-averaged grid functions.

A ``GridFunction`` is piecewise constant on the cells of a ``Mesh``.  When
flagged ``is_density`` it is nonnegative with unit mass and serves as the
canonical everywhere-defined version of a probability density: ``sample_at``
returns the cell value inside the box and 0 outside, which keeps any
coefficient evaluated through it bounded by construction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

_MASS_TOL = 1e-10


@dataclass(frozen=True)
class Mesh:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise DomainError("mesh needs x_min < x_max")
        if self.n_cells < 4:
            raise DomainError("mesh needs at least 4 cells")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        c = self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx
        c.setflags(write=False)
        return c

    @property
    def faces(self) -> np.ndarray:
        f = self.x_min + np.arange(self.n_cells + 1) * self.dx
        f.setflags(write=False)
        return f

    @property
    def half_width(self) -> float:
        return 0.5 * (self.x_max - self.x_min)


@dataclass(frozen=True, eq=False)
class GridFunction:
    mesh: Mesh
    values: np.ndarray
    is_density: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.shape != (self.mesh.n_cells,):
            raise DomainError(
                f"expected {self.mesh.n_cells} cell values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("grid function values must be finite")
        if self.is_density:
            if vals.min() < 0.0:
                raise DomainError("density values must be nonnegative")
            m = vals.sum() * self.mesh.dx
            if abs(m - 1.0) > _MASS_TOL:
                raise DomainError(f"density mass {m!r} is not within {_MASS_TOL} of 1")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def project_density(f: Callable[[np.ndarray], np.ndarray], mesh: Mesh) -> GridFunction:
    """Sample ``f`` at cell centers, clip at 0 and rescale to unit mass."""
    vals = np.asarray(f(mesh.centers), dtype=np.float64)
    if vals.shape != (mesh.n_cells,):
        raise DomainError("initial density callable must be vectorized over x")
    if not np.all(np.isfinite(vals)):
        raise DomainError("initial density produced non-finite values")
    vals = np.maximum(vals, 0.0)
    total = vals.sum() * mesh.dx
    if total <= 0.0:
        raise DomainError("initial density has zero mass on the mesh")
    return GridFunction(mesh, vals / total, is_density=True)


def density_from_values(mesh: Mesh, values: np.ndarray) -> GridFunction:
    """Clip raw cell values at 0 and rescale to unit mass."""
    vals = np.maximum(np.asarray(values, dtype=np.float64), 0.0)
    total = vals.sum() * mesh.dx
    if total <= 0.0:
        raise DomainError("cannot normalize values with zero total mass")
    return GridFunction(mesh, vals / total, is_density=True)


def mass(u: GridFunction) -> float:
    return float(u.values.sum() * u.mesh.dx)


def l1_distance(u: GridFunction, v: GridFunction) -> float:
    if u.mesh != v.mesh:
        raise DomainError("l1_distance requires a common mesh")
    return float(np.abs(u.values - v.values).sum() * u.mesh.dx)


def sample_at(u: GridFunction, x):
    """Piecewise-constant evaluation; 0 outside [x_min, x_max]."""
    arr = np.asarray(x, dtype=np.float64)
    mesh = u.mesh
    idx = np.floor((arr - mesh.x_min) / mesh.dx).astype(np.int64)
    inside = (arr >= mesh.x_min) & (arr <= mesh.x_max)
    idx = np.clip(idx, 0, mesh.n_cells - 1)
    out = np.where(inside, u.values[idx], 0.0)
    if arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class DensityTrajectory:
    mesh: Mesh
    times: tuple[float, ...]
    frames: tuple[GridFunction, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times or times[0] != 0.0:
            raise DomainError("trajectory times must start at 0")
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise DomainError("trajectory times must be strictly increasing")
        if len(self.frames) != len(times):
            raise DomainError("one frame per checkpoint time is required")
        for fr in self.frames:
            if fr.mesh != self.mesh:
                raise DomainError("all frames must live on the trajectory mesh")
            if not fr.is_density:
                raise DomainError("all frames must be densities")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def T(self) -> float:
        return self.times[-1]

    def index_at(self, t: float, tol: float = 1e-9) -> int:
        """Index of the checkpoint equal to ``t`` (within ``tol``)."""
        for k, tk in enumerate(self.times):
            if abs(tk - t) <= tol:
                return k
        raise DomainError(f"t={t} is not a checkpoint time")

    def frame_at(self, t: float) -> GridFunction:
        return self.frames[self.index_at(t)]

    def latest_index_leq(self, t: float, tol: float = 1e-9) -> int:
        """Index of the latest checkpoint time <= t (within ``tol``)."""
        k = -1
        for i, tk in enumerate(self.times):
            if tk <= t + tol:
                k = i
        if k < 0:
            raise DomainError(f"no checkpoint at or before t={t}")
        return k


def format_float(v: float) -> str:
    return f"{v:.17g}"


def write_grid_csv(u: GridFunction, path: str | os.PathLike) -> None:
    """CSV with header ``x,value``, one row per cell center."""
    lines = ["x,value"]
    for x, v in zip(u.mesh.centers, u.values):
        lines.append(f"{format_float(x)},{format_float(v)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
