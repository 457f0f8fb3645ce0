"""Model coefficients and their numerical validators.

The flow couples a monotone flux function ``beta`` (the diffusion
nonlinearity), the induced diffusion coefficient ``a(r) = beta(r)/r``, a
bounded nonnegative rate ``b`` and a bounded drift field ``E``.  All
callables must be pure and accept numpy arrays.  ``validate_conditions``
certifies the structural assumptions (monotonicity of beta, bounds on b and
E, local Lipschitz continuity of a) on a user-declared range by dense
sampling and reports a margin and witness point for each check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, DomainError

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BetaFunction:
    """Monotone flux with slope bounded below by ``gamma0``."""

    eval: Func
    deriv: Func
    gamma0: float

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ConfigurationError("gamma0 must be positive")
        b0 = float(self.eval(np.float64(0.0)))
        if b0 != 0.0:
            raise ConfigurationError(f"beta(0) must be exactly 0, got {b0}")


@dataclass(frozen=True)
class DiffusionA:
    """Diffusion coefficient a(r) = beta(r)/r with the removable singularity
    at r = 0 replaced by beta'(0) below the threshold ``epsilon_a``."""

    beta: BetaFunction
    epsilon_a: float = 1e-8

    def __post_init__(self):
        if not self.epsilon_a > 0:
            raise ConfigurationError("epsilon_a must be positive")

    def __call__(self, r):
        arr = np.asarray(r, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise DomainError("a(r) requires finite input")
        small = np.abs(arr) <= self.epsilon_a
        safe = np.where(small, 1.0, arr)
        slope0 = float(self.beta.deriv(np.float64(0.0)))
        vals = np.asarray(self.beta.eval(safe), dtype=np.float64)
        out = np.where(small, slope0, vals / safe)
        if arr.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class RateB:
    """Bounded C^1 rate, 0 <= b <= sup_bound."""

    eval: Func
    deriv: Func
    sup_bound: float


@dataclass(frozen=True)
class DriftField:
    """Bounded drift with an analytic divergence.

    ``div_neg_bound`` bounds the negative part of the divergence; the
    positive part only needs to stay finite on the validation range.
    """

    eval: Func
    div_eval: Func
    sup_bound: float
    div_neg_bound: float
    dim: int = 1


@dataclass(frozen=True)
class CoefficientSet:
    """The full coefficient tuple, immutable and safe to share."""

    beta: BetaFunction
    a: DiffusionA
    b: RateB
    E: DriftField
    lipschitz_a_local: float
    lipschitz_interval: tuple[float, float] = (-5.0, 5.0)
    name: str = "custom"

    def __post_init__(self):
        if not self.lipschitz_a_local > 0:
            raise ConfigurationError("lipschitz_a_local must be positive")
        lo, hi = self.lipschitz_interval
        if not lo < hi:
            raise ConfigurationError("lipschitz_interval must be nondegenerate")

    @property
    def gamma0(self) -> float:
        return self.beta.gamma0

    @property
    def drift_sup(self) -> float:
        """Global bound on |E(x) * b(r)|."""
        return self.E.sup_bound * self.b.sup_bound


def eval_a(coeffs: CoefficientSet, r):
    """Evaluate the diffusion coefficient a(r); scalar in, scalar out."""
    return coeffs.a(r)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionCheck:
    """One validated assumption: nonnegative margin means the check passed."""

    name: str
    passed: bool
    margin: float
    witness: object = None
    note: str = ""

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"{self.name}: {status} (margin={self.margin:.3e}, witness={self.witness})"


@dataclass(frozen=True)
class ValidationReport:
    range: tuple[float, float]
    n_samples: int
    seed: int
    checks: tuple[ConditionCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        head = (
            f"validation on [{self.range[0]}, {self.range[1]}] "
            f"({self.n_samples} samples, seed {self.seed})"
        )
        return "\n".join([head] + ["  " + str(c) for c in self.checks])


def _sample_points(lo: float, hi: float, n: int, rng: np.random.Generator) -> np.ndarray:
    # deterministic lattice plus random fill; always include endpoints and,
    # if covered, a cluster near 0 where monotonicity degeneracies hide
    n_lattice = max(2, n // 2)
    pts = [np.linspace(lo, hi, n_lattice), rng.uniform(lo, hi, n - n_lattice)]
    if lo < 0.0 < hi:
        scale = min(hi, -lo)
        pts.append(np.linspace(-scale * 1e-3, scale * 1e-3, 21))
    return np.unique(np.concatenate(pts))


def _pairs(samples: np.ndarray, n_pairs: int, rng: np.random.Generator):
    i = rng.integers(0, samples.size, n_pairs)
    j = rng.integers(0, samples.size, n_pairs)
    keep = i != j
    r1 = np.concatenate([samples[i[keep]], samples[:-1]])
    r2 = np.concatenate([samples[j[keep]], samples[1:]])
    return r1, r2


def _max_rel_err(exact: np.ndarray, approx: np.ndarray) -> tuple[float, int]:
    err = np.abs(exact - approx) / (1.0 + np.abs(exact))
    k = int(np.argmax(err))
    return float(err[k]), k


def validate_conditions(
    coeffs: CoefficientSet,
    range: tuple[float, float],
    n_samples: int = 10_000,
    seed: int = 0,
) -> ValidationReport:
    """Certify the structural assumptions on ``range`` by sampling.

    Checks, in order: beta vanishes at 0 and matches its derivative
    (C^1 consistency), beta is gamma0-monotone, a is bounded below by
    gamma0, b is bounded into [0, sup_bound] and C^1-consistent, E and the
    negative part of div E respect their declared bounds, div E matches a
    finite-difference cross-check, |div E| is finite on the range (recorded
    as a surrogate for an integrability split), and a is Lipschitz with the
    declared constant on the declared interval.  Failures are report
    entries, never exceptions.
    """
    lo, hi = float(range[0]), float(range[1])
    if not lo < hi:
        raise DomainError("validation range must be nondegenerate")
    if n_samples < 2:
        raise DomainError("n_samples must be at least 2")
    rng = np.random.default_rng(seed)
    r = _sample_points(lo, hi, n_samples, rng)
    x = _sample_points(lo, hi, n_samples, rng)
    checks: list[ConditionCheck] = []

    # beta(0) = 0 exactly
    b0 = float(coeffs.beta.eval(np.float64(0.0)))
    checks.append(
        ConditionCheck("beta_vanishes_at_zero", b0 == 0.0, 0.0 if b0 == 0.0 else -abs(b0), 0.0)
    )

    # beta' consistent with central differences (C^1 witness)
    h = 1e-5 * np.maximum(1.0, np.abs(r))
    fd = (coeffs.beta.eval(r + h) - coeffs.beta.eval(r - h)) / (2.0 * h)
    err, k = _max_rel_err(np.asarray(coeffs.beta.deriv(r), dtype=float), fd)
    checks.append(
        ConditionCheck("beta_c1_consistency", err <= 1e-6, 1e-6 - err, float(r[k]))
    )

    # gamma0-monotonicity of beta on sampled pairs
    r1, r2 = _pairs(r, n_samples, rng)
    dbeta = np.asarray(coeffs.beta.eval(r1) - coeffs.beta.eval(r2), dtype=float)
    dr = r1 - r2
    quot = dbeta * dr / (dr * dr)
    k = int(np.argmin(quot))
    observed_gamma = float(quot[k])
    checks.append(
        ConditionCheck(
            "beta_monotone",
            observed_gamma - coeffs.gamma0 >= 0.0,
            observed_gamma - coeffs.gamma0,
            (float(r1[k]), float(r2[k])),
            note=f"observed monotonicity constant {observed_gamma:.6g}",
        )
    )

    # induced non-degeneracy of a
    a_vals = np.asarray(coeffs.a(r), dtype=float)
    k = int(np.argmin(a_vals))
    checks.append(
        ConditionCheck(
            "a_nondegenerate",
            float(a_vals[k]) - coeffs.gamma0 >= -1e-12,
            float(a_vals[k]) - coeffs.gamma0,
            float(r[k]),
        )
    )

    # rate bounds and C^1 consistency
    b_vals = np.asarray(coeffs.b.eval(r), dtype=float)
    low = float(b_vals.min())
    high = float(b_vals.max())
    margin = min(low, coeffs.b.sup_bound - high)
    witness = float(r[int(np.argmin(b_vals))]) if low <= coeffs.b.sup_bound - high else float(r[int(np.argmax(b_vals))])
    checks.append(ConditionCheck("rate_bounds", margin >= 0.0, margin, witness))
    fd = (coeffs.b.eval(r + h) - coeffs.b.eval(r - h)) / (2.0 * h)
    err, k = _max_rel_err(np.asarray(coeffs.b.deriv(r), dtype=float), fd)
    checks.append(
        ConditionCheck("rate_c1_consistency", err <= 1e-6, 1e-6 - err, float(r[k]))
    )

    # drift bound
    e_vals = np.abs(np.asarray(coeffs.E.eval(x), dtype=float))
    k = int(np.argmax(e_vals))
    checks.append(
        ConditionCheck(
            "drift_bound",
            coeffs.E.sup_bound - float(e_vals[k]) >= 0.0,
            coeffs.E.sup_bound - float(e_vals[k]),
            float(x[k]),
        )
    )

    # bound on the negative part of div E
    div_vals = np.asarray(coeffs.E.div_eval(x), dtype=float)
    neg = np.maximum(-div_vals, 0.0)
    k = int(np.argmax(neg))
    checks.append(
        ConditionCheck(
            "div_negative_part_bound",
            coeffs.E.div_neg_bound - float(neg[k]) >= 0.0,
            coeffs.E.div_neg_bound - float(neg[k]),
            float(x[k]),
        )
    )

    # analytic divergence against central differences of E
    hx = 1e-5 * np.maximum(1.0, np.abs(x))
    fd = (np.asarray(coeffs.E.eval(x + hx), dtype=float) - np.asarray(coeffs.E.eval(x - hx), dtype=float)) / (2.0 * hx)
    err, k = _max_rel_err(div_vals, fd)
    checks.append(
        ConditionCheck("div_consistency", err <= 1e-5, 1e-5 - err, float(x[k]))
    )

    # pointwise |div E| bound, recorded in lieu of an integrability split
    sup_div = float(np.abs(div_vals).max())
    checks.append(
        ConditionCheck(
            "div_pointwise_surrogate",
            math.isfinite(sup_div),
            math.inf if math.isfinite(sup_div) else -math.inf,
            float(x[int(np.argmax(np.abs(div_vals)))]),
            note=f"surrogate check: sup |div E| = {sup_div:.6g} on the range",
        )
    )

    # local Lipschitz certificate for a on the declared interval
    llo, lhi = coeffs.lipschitz_interval
    llo, lhi = max(llo, lo), min(lhi, hi)
    if llo < lhi:
        rl = np.linspace(llo, lhi, max(2, n_samples // 4))
        rl = np.concatenate([rl, rng.uniform(llo, lhi, max(2, n_samples // 4))])
        p1, p2 = _pairs(np.unique(rl), n_samples // 2, rng)
        da = np.abs(np.asarray(coeffs.a(p1), dtype=float) - np.asarray(coeffs.a(p2), dtype=float))
        quot = da / np.abs(p1 - p2)
        k = int(np.argmax(quot))
        margin = coeffs.lipschitz_a_local - float(quot[k])
        checks.append(
            ConditionCheck(
                "a_local_lipschitz",
                margin >= -1e-9 * coeffs.lipschitz_a_local,
                margin,
                (float(p1[k]), float(p2[k])),
            )
        )
    else:
        checks.append(
            ConditionCheck(
                "a_local_lipschitz",
                True,
                math.inf,
                None,
                note="declared interval does not meet the validation range",
            )
        )

    return ValidationReport((lo, hi), n_samples, seed, tuple(checks))


# ---------------------------------------------------------------------------
# building blocks and presets
# ---------------------------------------------------------------------------

def beta_from_powers(powers: Sequence[float], gamma0: float) -> BetaFunction:
    """beta(r) = sum_k c_k r^k with k starting at 1, so beta(0) = 0."""
    coeffs = tuple(float(c) for c in powers)
    if not coeffs:
        raise ConfigurationError("beta needs at least one power coefficient")

    def _eval(r):
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        for k in reversed(range(len(coeffs))):
            out = out * r + coeffs[k]
        return out * r

    def _deriv(r):
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        for k in reversed(range(len(coeffs))):
            out = out * r + (k + 1) * coeffs[k]
        return out

    return BetaFunction(eval=_eval, deriv=_deriv, gamma0=float(gamma0))


def rate_from_kind(kind: str) -> RateB:
    if kind == "zero":
        return RateB(
            eval=lambda r: np.zeros_like(np.asarray(r, dtype=np.float64)),
            deriv=lambda r: np.zeros_like(np.asarray(r, dtype=np.float64)),
            sup_bound=0.0,
        )
    if kind == "rational":
        return RateB(
            eval=lambda r: 1.0 / (1.0 + np.asarray(r, dtype=np.float64) ** 2),
            deriv=lambda r: -2.0 * np.asarray(r, dtype=np.float64)
            / (1.0 + np.asarray(r, dtype=np.float64) ** 2) ** 2,
            sup_bound=1.0,
        )
    if kind == "logistic":
        return RateB(
            eval=lambda r: expit(np.asarray(r, dtype=np.float64)),
            deriv=lambda r: expit(np.asarray(r, dtype=np.float64))
            * expit(-np.asarray(r, dtype=np.float64)),
            sup_bound=1.0,
        )
    raise ConfigurationError(
        f"unknown rate kind {kind!r}; valid kinds: logistic, rational, zero"
    )


def drift_from_kind(kind: str) -> DriftField:
    if kind == "zero":
        return DriftField(
            eval=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
            div_eval=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
            sup_bound=0.0,
            div_neg_bound=0.0,
        )
    if kind == "neg_tanh":
        # E(x) = -tanh(x), div E = tanh(x)^2 - 1 in [-1, 0)
        return DriftField(
            eval=lambda x: -np.tanh(np.asarray(x, dtype=np.float64)),
            div_eval=lambda x: np.tanh(np.asarray(x, dtype=np.float64)) ** 2 - 1.0,
            sup_bound=1.0,
            div_neg_bound=1.0,
        )
    if kind == "sin_gauss":
        # E(x) = sin(x) exp(-x^2); numerically max|E| ~ 0.3967 and
        # max (div E)^- ~ 0.4511, bounds carry a little headroom
        def _e(x):
            x = np.asarray(x, dtype=np.float64)
            return np.sin(x) * np.exp(-(x ** 2))

        def _div(x):
            x = np.asarray(x, dtype=np.float64)
            return np.exp(-(x ** 2)) * (np.cos(x) - 2.0 * x * np.sin(x))

        return DriftField(eval=_e, div_eval=_div, sup_bound=0.40, div_neg_bound=0.46)
    raise ConfigurationError(
        f"unknown drift kind {kind!r}; valid kinds: neg_tanh, sin_gauss, zero"
    )


def _make_linear_heat() -> CoefficientSet:
    beta = beta_from_powers([1.0], gamma0=1.0)
    return CoefficientSet(
        beta=beta,
        a=DiffusionA(beta),
        b=rate_from_kind("zero"),
        E=drift_from_kind("zero"),
        lipschitz_a_local=1.0,
        name="linear-heat",
    )


def _make_cubic_tanh() -> CoefficientSet:
    beta = beta_from_powers([1.0, 0.0, 1.0], gamma0=1.0)
    # a(r) = 1 + r^2, so a' = 2r and 10 is the Lipschitz constant on [-5, 5]
    return CoefficientSet(
        beta=beta,
        a=DiffusionA(beta),
        b=rate_from_kind("rational"),
        E=drift_from_kind("neg_tanh"),
        lipschitz_a_local=10.0,
        name="cubic-tanh",
    )


def _make_logistic_b() -> CoefficientSet:
    beta = beta_from_powers([2.0], gamma0=2.0)
    return CoefficientSet(
        beta=beta,
        a=DiffusionA(beta),
        b=rate_from_kind("logistic"),
        E=drift_from_kind("sin_gauss"),
        lipschitz_a_local=1.0,
        name="logistic-b",
    )


_PRESETS = {
    "linear-heat": _make_linear_heat,
    "cubic-tanh": _make_cubic_tanh,
    "logistic-b": _make_logistic_b,
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str) -> CoefficientSet:
    """Return a named coefficient preset."""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}"
        ) from None
    return factory()
