"""Numerical lab for a porous-medium density flow with nonlinear transport
and the matching density-coupled particle dynamics.

The package solves d/dt u + div(E b(u) u) = Lap(beta(u)) on a 1-D box,
simulates the particle system whose drift E(x) b(u(x)) and diffusion
sqrt(2 beta(u(x))/u(x)) read the density pointwise, and runs verification
experiments: marginal-law superposition, shared-noise coupling across step
refinements, and an empirical one-sided Lipschitz certificate.
"""

from .coefficients import (
    BetaFunction,
    CoefficientSet,
    ConditionCheck,
    DiffusionA,
    DriftField,
    PRESET_NAMES,
    RateB,
    ValidationReport,
    beta_from_powers,
    eval_a,
    preset,
    validate_conditions,
)
from .errors import (
    ConfigurationError,
    DomainError,
    DomainTooSmallError,
    PmelabError,
    SolverError,
)
from .fpke import (
    SolveResult,
    SolverConfig,
    SolverMonitors,
    WeakFormTestFunction,
    solve,
    step,
    weak_form_residual,
)
from .grid import (
    DensityTrajectory,
    GridFunction,
    Mesh,
    l1_distance,
    mass,
    project_density,
    sample_at,
)
from .particles import (
    BrownianDriver,
    KdeConfig,
    ParticleEnsemble,
    em_step,
    kde_density,
    sample_initial,
    simulate_decoupled,
    simulate_self_consistent,
)
from .verify import (
    CouplingReport,
    LipschitzCertificate,
    SuperpositionReport,
    bounded_density_check,
    coupling_experiment,
    lipschitz_certificate,
    maximal_function,
    superposition_report,
)

__version__ = "0.1.0"
