"""Scenario runner.

``pmelab run config.json`` parses a strict JSON config, solves the density
flow, simulates the particle system, runs the requested experiments and
writes plot-friendly CSVs plus a human-readable summary.  Unknown keys are
rejected so a typo in a tolerance can never silently pass an experiment.

Exit codes: 0 success, 1 experiment failure, 2 configuration error,
3 runtime/solver error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .coefficients import (
    CoefficientSet,
    DiffusionA,
    PRESET_NAMES,
    beta_from_powers,
    drift_from_kind,
    preset,
    rate_from_kind,
)
from .errors import ConfigurationError, PmelabError, SolverError
from .fpke import SolverConfig, WeakFormTestFunction, solve, weak_form_residual, write_trajectory_csv
from .grid import Mesh, project_density
from .particles import (
    BrownianDriver,
    KdeConfig,
    sample_initial,
    simulate_decoupled,
    simulate_self_consistent,
    write_ensemble_csv,
)
from .verify import (
    coupling_experiment,
    lipschitz_certificate,
    superposition_report,
)

_TIMESTAMP_PREFIX = "generated_at:"


# ---------------------------------------------------------------------------
# config model
# ---------------------------------------------------------------------------

def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigurationError(f"unknown key {key!r} in {where}")


def _get(section: dict, key: str, kind, default, where: str):
    if key not in section:
        if default is _REQUIRED:
            raise ConfigurationError(f"missing required key {key!r} in {where}")
        return default
    val = section[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return int(val)
    if kind is str and isinstance(val, str):
        return val
    if kind is list and isinstance(val, list):
        return val
    if kind is dict and isinstance(val, dict):
        return val
    raise ConfigurationError(f"key {key!r} in {where} must be of type {kind.__name__}")


class _Required:
    pass


_REQUIRED = _Required()


@dataclass(frozen=True)
class InitialSpec:
    kind: str
    mean: float = 0.0
    sd: float = 0.5
    lo: float = 0.0
    hi: float = 1.0

    def pdf(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.kind == "gaussian":
            mean, sd = self.mean, self.sd

            def _gauss(x):
                z = (np.asarray(x, dtype=np.float64) - mean) / sd
                return np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))

            return _gauss
        lo, hi = self.lo, self.hi

        def _uniform(x):
            x = np.asarray(x, dtype=np.float64)
            return np.where((x >= lo) & (x <= hi), 1.0 / (hi - lo), 0.0)

        return _uniform


@dataclass(frozen=True)
class CoefficientsSpec:
    preset: str | None = None
    beta_powers: tuple[float, ...] | None = None
    gamma0: float | None = None
    rate: str | None = None
    drift: str | None = None
    lipschitz_a_local: float | None = None

    def build(self) -> CoefficientSet:
        if self.preset is not None:
            return preset(self.preset)
        beta = beta_from_powers(self.beta_powers, self.gamma0)
        return CoefficientSet(
            beta=beta,
            a=DiffusionA(beta),
            b=rate_from_kind(self.rate),
            E=drift_from_kind(self.drift),
            lipschitz_a_local=self.lipschitz_a_local,
            name="custom",
        )


@dataclass(frozen=True)
class ParticlesSpec:
    n: int = 10_000
    seed: int = 0
    mode: str = "decoupled"
    kde_bandwidth: float | str = "silverman"
    dt: float | None = None


@dataclass(frozen=True)
class SuperpositionExperiment:
    tolerance: float
    kind: str = "superposition"


@dataclass(frozen=True)
class CouplingExperiment:
    dt_levels: tuple[float, ...]
    n: int
    seed: int
    max_sup_distance: float | None = None
    require_decreasing: bool = True
    kind: str = "coupling"


@dataclass(frozen=True)
class WeakFormExperiment:
    center: float
    radius: float
    t: float
    max_residual: float
    kind: str = "weak_form_residual"


@dataclass(frozen=True)
class LipschitzExperiment:
    radius: float
    exponents: tuple[float, float, float, float]
    n_pairs: int
    seed: int
    max_violation_rate: float = 0.0
    kind: str = "lipschitz_certificate"


Experiment = (
    SuperpositionExperiment | CouplingExperiment | WeakFormExperiment | LipschitzExperiment
)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    coefficients: CoefficientsSpec
    mesh: Mesh
    initial: InitialSpec
    solver: SolverConfig
    particles: ParticlesSpec
    experiments: tuple[Experiment, ...]
    output_dir: str | None = None


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _parse_coefficients(section: dict) -> CoefficientsSpec:
    where = "coefficients"
    _reject_unknown(section, {"preset", "beta_powers", "gamma0", "rate", "drift",
                              "lipschitz_a_local"}, where)
    name = _get(section, "preset", str, None, where)
    if name is not None:
        if len(section) > 1:
            raise ConfigurationError("a preset cannot be combined with inline coefficients")
        preset(name)  # fail early on unknown names
        return CoefficientsSpec(preset=name)
    powers = _get(section, "beta_powers", list, _REQUIRED, where)
    return CoefficientsSpec(
        beta_powers=tuple(float(c) for c in powers),
        gamma0=_get(section, "gamma0", float, _REQUIRED, where),
        rate=_get(section, "rate", str, "zero", where),
        drift=_get(section, "drift", str, "zero", where),
        lipschitz_a_local=_get(section, "lipschitz_a_local", float, _REQUIRED, where),
    )


def _parse_mesh(section: dict) -> Mesh:
    _reject_unknown(section, {"x_min", "x_max", "n_cells"}, "mesh")
    try:
        return Mesh(
            x_min=_get(section, "x_min", float, -8.0, "mesh"),
            x_max=_get(section, "x_max", float, 8.0, "mesh"),
            n_cells=_get(section, "n_cells", int, 400, "mesh"),
        )
    except PmelabError as exc:
        raise ConfigurationError(f"mesh: {exc}") from exc


def _parse_initial(section: dict) -> InitialSpec:
    where = "initial"
    kind = _get(section, "kind", str, "gaussian", where)
    if kind == "gaussian":
        _reject_unknown(section, {"kind", "mean", "sd"}, where)
        sd = _get(section, "sd", float, 0.5, where)
        if not sd > 0:
            raise ConfigurationError("initial: sd must be positive")
        return InitialSpec(kind="gaussian", mean=_get(section, "mean", float, 0.0, where), sd=sd)
    if kind == "uniform":
        _reject_unknown(section, {"kind", "lo", "hi"}, where)
        lo = _get(section, "lo", float, 0.0, where)
        hi = _get(section, "hi", float, 1.0, where)
        if not lo < hi:
            raise ConfigurationError("initial: uniform support needs lo < hi")
        return InitialSpec(kind="uniform", lo=lo, hi=hi)
    raise ConfigurationError(f"initial: unknown kind {kind!r} (gaussian or uniform)")


def _parse_solver(section: dict) -> SolverConfig:
    where = "solver"
    _reject_unknown(section, {"dt", "T", "newton_tol", "newton_max_iter",
                              "checkpoint_times", "n_checkpoints", "boundary_mass_tol"}, where)
    dt = _get(section, "dt", float, 1e-3, where)
    horizon = _get(section, "T", float, 0.5, where)
    cps = _get(section, "checkpoint_times", list, None, where)
    if cps is None:
        n_cp = _get(section, "n_checkpoints", int, 11, where)
        if n_cp < 2:
            raise ConfigurationError("solver: n_checkpoints must be at least 2")
        cps = np.linspace(0.0, horizon, n_cp).tolist()
    elif "n_checkpoints" in section:
        raise ConfigurationError("solver: give checkpoint_times or n_checkpoints, not both")
    try:
        return SolverConfig(
            dt=dt,
            T=horizon,
            newton_tol=_get(section, "newton_tol", float, 1e-12, where),
            newton_max_iter=_get(section, "newton_max_iter", int, 30, where),
            checkpoint_times=tuple(float(t) for t in cps),
            boundary_mass_tol=_get(section, "boundary_mass_tol", float, 1e-8, where),
        )
    except PmelabError as exc:
        raise ConfigurationError(f"solver: {exc}") from exc


def _parse_particles(section: dict) -> ParticlesSpec:
    where = "particles"
    _reject_unknown(section, {"n", "seed", "mode", "kde_bandwidth", "dt"}, where)
    n = _get(section, "n", int, 10_000, where)
    if n < 1:
        raise ConfigurationError("particles: n must be positive")
    mode = _get(section, "mode", str, "decoupled", where)
    if mode not in ("decoupled", "self_consistent"):
        raise ConfigurationError(f"particles: unknown mode {mode!r}")
    bw = section.get("kde_bandwidth", "silverman")
    if isinstance(bw, str):
        if bw != "silverman":
            raise ConfigurationError("particles: kde_bandwidth must be 'silverman' or a number")
    elif isinstance(bw, (int, float)) and not isinstance(bw, bool):
        bw = float(bw)
        if not bw > 0:
            raise ConfigurationError("particles: kde_bandwidth must be positive")
    else:
        raise ConfigurationError("particles: kde_bandwidth must be 'silverman' or a number")
    return ParticlesSpec(
        n=n,
        seed=_get(section, "seed", int, 0, where),
        mode=mode,
        kde_bandwidth=bw,
        dt=_get(section, "dt", float, None, where),
    )


def _parse_exponent(v, where: str) -> float:
    if isinstance(v, str):
        if v == "inf":
            return math.inf
        raise ConfigurationError(f"{where}: exponent strings must be 'inf', got {v!r}")
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise ConfigurationError(f"{where}: exponents must be numbers or 'inf'")


def _parse_experiment(section: dict, idx: int, solver: SolverConfig) -> Experiment:
    where = f"experiments[{idx}]"
    kind = _get(section, "type", str, _REQUIRED, where)
    if kind == "superposition":
        _reject_unknown(section, {"type", "tolerance"}, where)
        return SuperpositionExperiment(tolerance=_get(section, "tolerance", float, _REQUIRED, where))
    if kind == "coupling":
        _reject_unknown(section, {"type", "dt_levels", "n", "seed", "max_sup_distance",
                                  "require_decreasing"}, where)
        levels = _get(section, "dt_levels", list, _REQUIRED, where)
        raw_max = section.get("max_sup_distance")
        if raw_max is not None and (isinstance(raw_max, bool) or not isinstance(raw_max, (int, float))):
            raise ConfigurationError(f"{where}: max_sup_distance must be a number")
        decreasing = section.get("require_decreasing", True)
        if not isinstance(decreasing, bool):
            raise ConfigurationError(f"{where}: require_decreasing must be a boolean")
        return CouplingExperiment(
            dt_levels=tuple(float(d) for d in levels),
            n=_get(section, "n", int, 1000, where),
            seed=_get(section, "seed", int, 0, where),
            max_sup_distance=None if raw_max is None else float(raw_max),
            require_decreasing=decreasing,
        )
    if kind == "weak_form_residual":
        _reject_unknown(section, {"type", "center", "radius", "t", "max_residual"}, where)
        t_raw = section.get("t", "T")
        if isinstance(t_raw, str):
            if t_raw != "T":
                raise ConfigurationError(f"{where}: t must be a number or 'T'")
            t_val = solver.T
        elif isinstance(t_raw, (int, float)) and not isinstance(t_raw, bool):
            t_val = float(t_raw)
        else:
            raise ConfigurationError(f"{where}: t must be a number or 'T'")
        return WeakFormExperiment(
            center=_get(section, "center", float, 0.0, where),
            radius=_get(section, "radius", float, _REQUIRED, where),
            t=t_val,
            max_residual=_get(section, "max_residual", float, _REQUIRED, where),
        )
    if kind == "lipschitz_certificate":
        _reject_unknown(section, {"type", "radius", "exponents", "n_pairs", "seed",
                                  "max_violation_rate"}, where)
        exps = _get(section, "exponents", list, ["inf", "inf", 1, 1], where)
        if len(exps) != 4:
            raise ConfigurationError(f"{where}: exponents must be [p, q, p', q']")
        return LipschitzExperiment(
            radius=_get(section, "radius", float, _REQUIRED, where),
            exponents=tuple(_parse_exponent(v, where) for v in exps),
            n_pairs=_get(section, "n_pairs", int, 10_000, where),
            seed=_get(section, "seed", int, 0, where),
            max_violation_rate=_get(section, "max_violation_rate", float, 0.0, where),
        )
    raise ConfigurationError(f"{where}: unknown experiment type {kind!r}")


def parse_config(text: str) -> ScenarioConfig:
    """Parse and fully validate a JSON scenario; unknown keys are errors."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("top-level config must be a JSON object")
    _reject_unknown(doc, {"name", "coefficients", "mesh", "initial", "solver",
                          "particles", "experiments", "output_dir"}, "config")
    coefficients = _parse_coefficients(_get(doc, "coefficients", dict, _REQUIRED, "config"))
    solver = _parse_solver(_get(doc, "solver", dict, {}, "config"))
    raw_experiments = _get(doc, "experiments", list, [], "config")
    for i, e in enumerate(raw_experiments):
        if not isinstance(e, dict):
            raise ConfigurationError(f"experiments[{i}] must be an object")
    experiments = tuple(_parse_experiment(e, i, solver) for i, e in enumerate(raw_experiments))
    return ScenarioConfig(
        name=_get(doc, "name", str, "scenario", "config"),
        coefficients=coefficients,
        mesh=_parse_mesh(_get(doc, "mesh", dict, {}, "config")),
        initial=_parse_initial(_get(doc, "initial", dict, {}, "config")),
        solver=solver,
        particles=_parse_particles(_get(doc, "particles", dict, {}, "config")),
        experiments=experiments,
        output_dir=_get(doc, "output_dir", str, None, "config"),
    )


def _exponent_json(v: float):
    return "inf" if math.isinf(v) else v


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical JSON for a config, with all defaults made explicit."""
    doc: dict = {"name": cfg.name}
    if cfg.coefficients.preset is not None:
        doc["coefficients"] = {"preset": cfg.coefficients.preset}
    else:
        doc["coefficients"] = {
            "beta_powers": list(cfg.coefficients.beta_powers),
            "gamma0": cfg.coefficients.gamma0,
            "rate": cfg.coefficients.rate,
            "drift": cfg.coefficients.drift,
            "lipschitz_a_local": cfg.coefficients.lipschitz_a_local,
        }
    doc["mesh"] = {"x_min": cfg.mesh.x_min, "x_max": cfg.mesh.x_max, "n_cells": cfg.mesh.n_cells}
    if cfg.initial.kind == "gaussian":
        doc["initial"] = {"kind": "gaussian", "mean": cfg.initial.mean, "sd": cfg.initial.sd}
    else:
        doc["initial"] = {"kind": "uniform", "lo": cfg.initial.lo, "hi": cfg.initial.hi}
    doc["solver"] = {
        "dt": cfg.solver.dt,
        "T": cfg.solver.T,
        "newton_tol": cfg.solver.newton_tol,
        "newton_max_iter": cfg.solver.newton_max_iter,
        "checkpoint_times": list(cfg.solver.checkpoint_times),
        "boundary_mass_tol": cfg.solver.boundary_mass_tol,
    }
    doc["particles"] = {
        "n": cfg.particles.n,
        "seed": cfg.particles.seed,
        "mode": cfg.particles.mode,
        "kde_bandwidth": cfg.particles.kde_bandwidth,
    }
    if cfg.particles.dt is not None:
        doc["particles"]["dt"] = cfg.particles.dt
    exps = []
    for e in cfg.experiments:
        if isinstance(e, SuperpositionExperiment):
            exps.append({"type": "superposition", "tolerance": e.tolerance})
        elif isinstance(e, CouplingExperiment):
            entry = {
                "type": "coupling",
                "dt_levels": list(e.dt_levels),
                "n": e.n,
                "seed": e.seed,
                "require_decreasing": e.require_decreasing,
            }
            if e.max_sup_distance is not None:
                entry["max_sup_distance"] = e.max_sup_distance
            exps.append(entry)
        elif isinstance(e, WeakFormExperiment):
            exps.append({
                "type": "weak_form_residual",
                "center": e.center,
                "radius": e.radius,
                "t": e.t,
                "max_residual": e.max_residual,
            })
        else:
            exps.append({
                "type": "lipschitz_certificate",
                "radius": e.radius,
                "exponents": [_exponent_json(v) for v in e.exponents],
                "n_pairs": e.n_pairs,
                "seed": e.seed,
                "max_violation_rate": e.max_violation_rate,
            })
    doc["experiments"] = exps
    if cfg.output_dir is not None:
        doc["output_dir"] = cfg.output_dir
    return json.dumps(doc, indent=2)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentOutcome:
    name: str
    passed: bool
    detail: str
    artifact: str


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    wall_time: float
    experiments: tuple[ExperimentOutcome, ...]
    artifacts: tuple[str, ...]
    output_dir: str

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.experiments)


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_report_csv(path: str, rows: Sequence[tuple[str, str, str]]) -> None:
    lines = ["report_type,key,value"]
    lines += [",".join(row) for row in rows]
    _write_atomic(path, "\n".join(lines) + "\n")


def _run_experiment(exp: Experiment, ctx: dict) -> ExperimentOutcome:
    out_dir = ctx["out_dir"]
    if isinstance(exp, SuperpositionExperiment):
        report = superposition_report(ctx["traj"], ctx["checkpoints"], ctx["mesh"], ctx["kde"])
        path = os.path.join(out_dir, "superposition.csv")
        _write_report_csv(path, report.to_rows())
        passed = report.terminal_distance <= exp.tolerance
        detail = (
            f"terminal l1 {report.terminal_distance:.6g} vs tolerance {exp.tolerance:g}"
        )
        return ExperimentOutcome("superposition", passed, detail, path)
    if isinstance(exp, CouplingExperiment):
        report = coupling_experiment(
            ctx["coeffs"], ctx["traj"], ctx["u0"], exp.seed, exp.n, exp.dt_levels
        )
        path = os.path.join(out_dir, "coupling.csv")
        _write_report_csv(path, report.to_rows())
        passed = True
        parts = [f"sup distance {report.sup_path_distance:.6g}"]
        if exp.max_sup_distance is not None:
            passed &= report.sup_path_distance <= exp.max_sup_distance
            parts.append(f"bound {exp.max_sup_distance:g}")
        if exp.require_decreasing and len(exp.dt_levels) > 1:
            passed &= report.strictly_decreasing
            parts.append(f"strictly decreasing: {report.strictly_decreasing}")
        return ExperimentOutcome("coupling", passed, ", ".join(parts), path)
    if isinstance(exp, WeakFormExperiment):
        phi = WeakFormTestFunction(center=exp.center, radius=exp.radius)
        residual = weak_form_residual(ctx["traj"], phi, ctx["coeffs"], exp.t)
        path = os.path.join(out_dir, "weak_form.csv")
        _write_report_csv(
            path,
            [
                ("weak_form", "t", f"{exp.t:.17g}"),
                ("weak_form", "center", f"{exp.center:.17g}"),
                ("weak_form", "radius", f"{exp.radius:.17g}"),
                ("weak_form", "residual", f"{residual:.17g}"),
            ],
        )
        passed = residual <= exp.max_residual
        detail = f"residual {residual:.6g} vs bound {exp.max_residual:g} at t={exp.t:g}"
        return ExperimentOutcome("weak_form_residual", passed, detail, path)
    if isinstance(exp, LipschitzExperiment):
        cert = lipschitz_certificate(
            ctx["traj"], ctx["coeffs"], exp.radius, exp.exponents, exp.n_pairs, exp.seed
        )
        path = os.path.join(out_dir, "lipschitz.csv")
        _write_report_csv(path, cert.to_rows())
        passed = cert.violation_rate <= exp.max_violation_rate
        detail = (
            f"violation rate {cert.violation_rate:.6g} at C={cert.calibrated_c:.6g}, "
            f"||f_R|| = {cert.f_r_norm:.6g}"
        )
        return ExperimentOutcome("lipschitz_certificate", passed, detail, path)
    raise ConfigurationError(f"unhandled experiment {exp!r}")


def run_scenario(cfg: ScenarioConfig, output_dir: str | None = None, jobs: int = 1) -> RunSummary:
    """Execute solve -> simulate -> experiments and write all artifacts."""
    out_dir = output_dir or cfg.output_dir or "out"
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    try:
        coeffs = cfg.coefficients.build()
        mesh = cfg.mesh
        u0 = project_density(cfg.initial.pdf(), mesh)
        result = solve(u0, coeffs, cfg.solver)
        traj = result.trajectory

        trajectory_path = os.path.join(out_dir, "trajectory.csv")
        write_trajectory_csv(traj, trajectory_path)
        monitors_path = os.path.join(out_dir, "monitors.csv")
        result.monitors.write_csv(monitors_path)
        artifacts = [trajectory_path, monitors_path]

        pcfg = cfg.particles
        driver = BrownianDriver.from_horizon(
            pcfg.n, pcfg.dt or cfg.solver.dt, cfg.solver.T, pcfg.seed
        )
        ens0 = sample_initial(u0, pcfg.n, pcfg.seed)
        kde = KdeConfig(bandwidth=pcfg.kde_bandwidth)
        if pcfg.mode == "decoupled":
            checkpoints = simulate_decoupled(ens0, traj, coeffs, driver)
        else:
            checkpoints = simulate_self_consistent(
                ens0, coeffs, driver, kde, mesh,
                checkpoint_times=cfg.solver.checkpoint_times,
            )
        ensemble_path = os.path.join(out_dir, "ensemble.csv")
        write_ensemble_csv(checkpoints, ensemble_path)
        artifacts.append(ensemble_path)

        ctx = {
            "out_dir": out_dir,
            "coeffs": coeffs,
            "mesh": mesh,
            "u0": u0,
            "traj": traj,
            "checkpoints": checkpoints,
            "kde": kde,
        }
        if jobs > 1 and len(cfg.experiments) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(lambda e: _run_experiment(e, ctx), cfg.experiments))
        else:
            outcomes = [_run_experiment(e, ctx) for e in cfg.experiments]
        artifacts += [o.artifact for o in outcomes]
    except PmelabError as exc:
        _write_atomic(
            os.path.join(out_dir, "summary.txt"),
            f"scenario: {cfg.name}\nerror: {exc}\n",
        )
        raise

    wall = time.perf_counter() - started
    summary = RunSummary(
        scenario=cfg.name,
        wall_time=wall,
        experiments=tuple(outcomes),
        artifacts=tuple(artifacts + [os.path.join(out_dir, "summary.txt")]),
        output_dir=out_dir,
    )
    lines = [f"scenario: {cfg.name}"]
    lines.append(
        f"{_TIMESTAMP_PREFIX} {datetime.datetime.now().isoformat()} wall_time_s={wall:.3f}"
    )
    lines.append(f"mass_drift: {result.monitors.mass_drift:.6g}")
    lines.append(f"min_value: {result.monitors.min_value:.6g}")
    lines.append(f"grad_l2_accum: {result.monitors.grad_l2_accum:.6g}")
    for o in summary.experiments:
        lines.append(f"experiment {o.name}: {'PASS' if o.passed else 'FAIL'} ({o.detail})")
    lines.append("artifacts: " + ", ".join(os.path.basename(a) for a in summary.artifacts))
    _write_atomic(os.path.join(out_dir, "summary.txt"), "\n".join(lines) + "\n")
    return summary


def bundled_scenario_path(name: str) -> str:
    """Filesystem path of a scenario shipped with the package."""
    ref = resources.files("pmelab").joinpath("scenarios", name)
    if not ref.is_file():
        raise ConfigurationError(f"no bundled scenario named {name!r}")
    return str(ref)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmelab",
        description="Density-flow solver, particle simulator and verification experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a scenario config")
    run_p.add_argument("config", help="path to a JSON scenario")
    run_p.add_argument("--output-dir", default=None, help="override the output directory")
    run_p.add_argument("--jobs", type=int, default=1, help="parallel experiment workers")
    val_p = sub.add_parser("validate", help="parse and validate a config without running")
    val_p.add_argument("config", help="path to a JSON scenario")
    sub.add_parser("presets", help="list coefficient presets")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "presets":
        for name in PRESET_NAMES:
            print(name)
        return 0

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(f"ok: scenario {cfg.name!r} is valid")
        return 0

    try:
        summary = run_scenario(cfg, output_dir=args.output_dir, jobs=args.jobs)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except PmelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    for o in summary.experiments:
        print(f"{o.name}: {'PASS' if o.passed else 'FAIL'} ({o.detail})")
    print(f"wrote {len(summary.artifacts)} artifacts to {summary.output_dir}")
    return 0 if summary.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
