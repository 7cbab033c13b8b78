"""
Nonlocal constants of motion and the closed-form first integrals built on them.

EDUCATIONAL NOTE - The two-term structure
-----------------------------------------
For a solution q(t) of the Euler-Lagrange equation and any smooth family of
perturbed motions q_lambda with q_0 = q, the quantity

    B(t) - I(t),   I(t) = int_{t0}^{t} dL/dlambda(s, q_lambda(s), ...) ds

is constant. For first-order Lagrangians B = dL/dq' . delta; for order N

    B = sum_{j=1}^{N} sum_{k=0}^{j-1} (-1)^k d^k/dt^k (dL/dq^(j)) . delta^(j-k-1).

B is *local* (it only needs the state at t), I is *nonlocal* (it remembers
the whole history since t0). When the integrand is itself a total derivative
or a constant, I collapses and a classical first integral appears:

* time-shift on autonomous L     -> energy (N = 1) or K1 (any N)
* rho-condition dL/dq^(i) = rho_i d^i/dt^i dL/dq  -> K2
* integrand identically mu        -> B(t) - mu t  (K3)

Hypotheses are validated before evaluation (strict mode). Turning strict mode
off is meant for exploration and logs a warning.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import stencils
from .core import (
    ArityError,
    DimensionError,
    HypothesisError,
    JetState,
    OrderError,
    ParameterError,
    SpanError,
    Trajectory,
)
from .families import PerturbationFamily, integrand
from .integrate import attach_integral, integral_term
from .lagrangian import LagrangianSpec, eval_lagrangian, partial_wrt_jet, total_derivative_along
from .systems import Potential

logger = logging.getLogger(__name__)

VISCOUS_LABEL = "viscous"


@dataclass(frozen=True)
class NonlocalSample:
    """Boundary term, integral term and their difference at one instant."""

    t: float
    boundary_term: float
    integral_term: float

    @property
    def value(self) -> float:
        return self.boundary_term - self.integral_term


@dataclass(frozen=True)
class RhoParams:
    """Constants rho_1..rho_N of the rho-condition."""

    rho: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(r) for r in self.rho)
        if not values:
            raise ArityError("rho needs at least one entry")
        if not all(np.isfinite(values)):
            raise ParameterError(f"rho entries must be finite, got {values}")
        object.__setattr__(self, "rho", values)

    def __len__(self) -> int:
        return len(self.rho)


def _as_rho(rho) -> RhoParams:
    return rho if isinstance(rho, RhoParams) else RhoParams(tuple(rho))


# --- generic nonlocal constants -----------------------------------------------


def boundary_term(spec: LagrangianSpec, fam: PerturbationFamily, traj: Trajectory, t: float) -> float:
    """
    Local part of the nonlocal constant for an order-N Lagrangian:

        sum_{j=1}^{N} sum_{k=0}^{j-1} (-1)^k (d/dt)^k [dL/dq^(j)] . delta^(j-k-1)

    Args:
        spec: Lagrangian of order N.
        fam: Perturbation family supplying delta^(0..N-1).
        traj: Motion of spec; total derivatives use its dense output.
        t: Evaluation time (needs stencil clearance for N > 1).

    Returns:
        The boundary term at t.
    """
    N = spec.order
    variation = fam(traj, t, N - 1)
    if len(variation) < N:
        raise ArityError(f"Family '{fam.name}' returned {len(variation)} variation jets, need {N}")
    total = 0.0
    for j in range(1, N + 1):
        for k in range(j):
            momentum = total_derivative_along(traj, lambda s, j=j: partial_wrt_jet(spec, s, j), k, t)
            total += (-1) ** k * float(np.dot(momentum, variation[j - k - 1]))
    return total


def nonlocal_constant_2nd(
    spec: LagrangianSpec, fam: PerturbationFamily, traj: Trajectory, t: float
) -> NonlocalSample:
    """
    dL/dq'(t) . delta(t) - I(t) for first-order Lagrangians.

    Args:
        spec: First-order Lagrangian.
        fam: Family whose integrand was attached to traj.
        traj: Trajectory carrying I(t) (see attach_quadrature).
        t: Any time in the span.

    Returns:
        NonlocalSample with the boundary and integral parts kept apart.
    """
    if spec.order != 1:
        raise OrderError(f"nonlocal_constant_2nd needs a first-order Lagrangian, got N={spec.order}")
    delta = fam(traj, t, 0)[0]
    momentum = total_derivative_along(traj, lambda s: partial_wrt_jet(spec, s, 1), 0, t)
    boundary = 0.0 + float(np.dot(momentum, delta))
    return NonlocalSample(t, boundary, integral_term(traj, t))


def nonlocal_constant_higher(
    spec: LagrangianSpec, fam: PerturbationFamily, traj: Trajectory, t: float
) -> NonlocalSample:
    """Boundary term minus I(t) for a Lagrangian of any order N."""
    return NonlocalSample(t, boundary_term(spec, fam, traj, t), integral_term(traj, t))


# --- energy and the time-shift integral --------------------------------------


def energy(spec: LagrangianSpec, state: JetState) -> float:
    """E = dL/dq' . q' - L for an autonomous first-order Lagrangian."""
    if spec.order != 1:
        raise OrderError(f"energy needs a first-order Lagrangian, got N={spec.order}")
    if not spec.autonomous:
        raise HypothesisError(f"Lagrangian '{spec.name}' depends on t explicitly; energy is not conserved")
    momentum = partial_wrt_jet(spec, state, 1)
    return 0.0 + float(np.dot(momentum, state.jets[1])) - eval_lagrangian(spec, state)


def k1_timeshift(spec: LagrangianSpec, traj: Trajectory, t: float) -> float:
    """
    First integral from the time-shift family on an autonomous Lagrangian:

        K1 = sum_{i=1}^{N} sum_{k=0}^{i-1} (-1)^k d^k/dt^k (dL/dq^(i)) . q^(i-k) - L

    Needs no quadrature: the time-shift integrand is dL/dt, so I(t) = L(t) - L(t0).

    Args:
        spec: Autonomous Lagrangian of any order.
        traj: Motion of spec.
        t: Evaluation time (needs stencil clearance for N > 1).

    Returns:
        K1 at t.

    Raises:
        HypothesisError: spec depends on t explicitly.
    """
    if not spec.autonomous:
        raise HypothesisError(f"Lagrangian '{spec.name}' is not autonomous; K1 requires time invariance")
    state = traj.sample(t)
    jets = state.jets if state.order >= spec.order else tuple(traj.jets_upto(t, spec.order))
    total = 0.0
    for i in range(1, spec.order + 1):
        for k in range(i):
            momentum = total_derivative_along(traj, lambda s, i=i: partial_wrt_jet(spec, s, i), k, t)
            total += (-1) ** k * float(np.dot(momentum, jets[i - k]))
    return total - eval_lagrangian(spec, state)


# --- rho-condition and K2 ------------------------------------------------------


def compute_F(spec: LagrangianSpec, rho, traj: Trajectory, t: float, ell: int) -> np.ndarray:
    """
    F^(0) = sum_{j=1}^{N} (-1)^{j+1} d^{j-1}/dt^{j-1} dL/dq^(j),
    F^(l) = d^{l-1}/dt^{l-1} dL/dq for 1 <= l <= 2N.

    `rho` is accepted for signature symmetry with k2_space; F does not depend on it.
    """
    N = spec.order
    if ell < 0 or ell > 2 * N:
        raise IndexError(f"ell={ell} out of range 0..{2 * N}")
    if ell == 0:
        F = np.zeros(spec.dim)
        for j in range(1, N + 1):
            term = total_derivative_along(traj, lambda s, j=j: partial_wrt_jet(spec, s, j), j - 1, t)
            F = F + (-1) ** (j + 1) * term
        return F
    return total_derivative_along(traj, lambda s: partial_wrt_jet(spec, s, 0), ell - 1, t)


def rho_residuals(spec: LagrangianSpec, rho, traj: Trajectory, t: float) -> List[float]:
    """||dL/dq^(i) - rho_i d^i/dt^i dL/dq|| for i = 1..N at t."""
    params = _as_rho(rho)
    if len(params) != spec.order:
        raise ArityError(f"rho has {len(params)} entries, Lagrangian order is {spec.order}")
    state = traj.sample(t)
    out = []
    for i, r in enumerate(params.rho, start=1):
        lhs = partial_wrt_jet(spec, state, i)
        rhs = total_derivative_along(traj, lambda s: partial_wrt_jet(spec, s, 0), i, t)
        out.append(float(np.linalg.norm(lhs - r * rhs)))
    return out


def check_rho_condition(
    spec: LagrangianSpec,
    rho,
    traj: Trajectory,
    times: Optional[Sequence[float]] = None,
    n_samples: int = 20,
) -> float:
    """
    Max residual of the rho-condition over sampled interior times.

    Args:
        spec: Lagrangian of order N.
        rho: N real parameters.
        traj: Motion of spec.
        times: Evaluation times; defaults to n_samples evenly spaced interior times.
        n_samples: Grid size when times is omitted.

    Returns:
        max_t max_i ||dL/dq^(i) - rho_i d^i/dt^i dL/dq||.
    """
    if times is None:
        times = traj.interior_times(stencils.clearance(spec.order), count=n_samples)
    worst = max(max(rho_residuals(spec, rho, traj, t)) for t in times)
    logger.debug("rho-condition residual for '%s': %.3e", spec.name, worst)
    return worst


def k2_space(
    spec: LagrangianSpec,
    rho,
    traj: Trajectory,
    t: float,
    strict: bool = True,
    tol: float = 1e-5,
) -> float:
    """
    K2 = sum_i rho_i [ sum_{k=0}^{i-1} (-1)^k F^(i+k+1) . F^(i-k-1) - |F^(i)|^2 / 2 ] - |F^(0)|^2 / 2

    In strict mode the rho-condition is checked at t first and a violation
    raises HypothesisError.

    Args:
        spec: Lagrangian of order N.
        rho: N real parameters satisfying the rho-condition along traj.
        traj: Motion of spec.
        t: Evaluation time; F^(2N) needs the clearance of a (2N-1)-th derivative.
        strict: Check the rho-condition at t before evaluating.
        tol: Admissible rho-condition residual in strict mode.

    Returns:
        K2 at t.
    """
    params = _as_rho(rho)
    if len(params) != spec.order:
        raise ArityError(f"rho has {len(params)} entries, Lagrangian order is {spec.order}")
    if strict:
        residual = max(rho_residuals(spec, params, traj, t))
        if residual > tol:
            raise HypothesisError(
                f"rho-condition violated at t={t}: residual {residual:.3e} > {tol:.1e}"
            )

    F = [compute_F(spec, params, traj, t, ell) for ell in range(2 * spec.order + 1)]
    total = 0.0
    for i, r in enumerate(params.rho, start=1):
        inner = 0.0
        for k in range(i):
            inner += (-1) ** k * float(np.dot(F[i + k + 1], F[i - k - 1]))
        total += r * (inner - 0.5 * float(np.dot(F[i], F[i])))
    return total - 0.5 * float(np.dot(F[0], F[0]))


# --- constant-integrand families -------------------------------------------------


def k3_mu(
    spec: LagrangianSpec,
    fam: PerturbationFamily,
    traj: Trajectory,
    t: float,
    strict: bool = True,
    tol: float = 1e-6,
) -> float:
    """
    Boundary term minus mu*t for a family whose integrand is constant mu.

    Args:
        spec: Lagrangian of any order.
        fam: Family declaring mu.
        traj: Motion of spec; no quadrature is needed.
        t: Evaluation time.
        strict: Check |integrand - mu| <= tol at t first.
        tol: Admissible integrand deviation in strict mode.

    Returns:
        K3 at t.

    Raises:
        HypothesisError: fam.mu is missing, or the strict check fails.
    """
    if fam.mu is None:
        raise HypothesisError(f"Family '{fam.name}' declares no constant mu")
    if strict:
        deviation = abs(integrand(spec, fam, traj, t) - fam.mu)
        if deviation > tol:
            raise HypothesisError(
                f"Integrand of '{fam.name}' deviates from mu={fam.mu} by {deviation:.3e} at t={t}"
            )
    return boundary_term(spec, fam, traj, t) - fam.mu * t


def angular_momentum(state: JetState, m: float = 1.0) -> float:
    """m det(q, q') for planar motion."""
    if state.dim != 2:
        raise DimensionError(f"Angular momentum needs a planar state, got n={state.dim}")
    q, v = state.jets[0], state.jets[1]
    return m * float(q[0] * v[1] - q[1] * v[0])


# --- viscous dissipation -----------------------------------------------------------


def _check_viscous(m: float, k: float):
    if m <= 0:
        raise ParameterError(f"Mass must be > 0, got m={m}")
    if k < 0:
        raise ParameterError(f"Viscous coefficient must be >= 0, got k={k}")


def attach_viscous_quadrature(
    traj: Trajectory, m: float, k: float, U: Potential, tol: Optional[float] = None
) -> Trajectory:
    """Attach J(t) = int_{t0}^{t} e^{2ks/m} U(q(s)) ds."""
    _check_viscous(m, k)

    def weighted(s: float) -> float:
        return float(np.exp(2 * k * s / m) * U.value(traj.sample(s).q))

    return attach_integral(traj, weighted, VISCOUS_LABEL, tol)


def viscous_quantity(m: float, k: float, U: Potential, state: JetState) -> float:
    """e^{2kt/m} (m |q'|^2 + 2 U(q))."""
    v = state.jets[1]
    return float(np.exp(2 * k * state.t / m) * (m * np.dot(v, v) + 2 * U.value(state.q)))


def viscous_constant(m: float, k: float, U: Potential, traj: Trajectory, t: float) -> float:
    """
    e^{2kt/m}(m |q'(t)|^2 + 2U(q(t))) + 4 (k/m) int_t^{t0} e^{2ks/m} U(q(s)) ds,
    constant along solutions of m q'' = -k q' - grad U(q).

    Args:
        m: Mass (> 0).
        k: Viscous coefficient (>= 0).
        U: Potential of the motion.
        traj: Trajectory carrying the weighted integral from attach_viscous_quadrature.
        t: Any time in the span.

    Returns:
        The constant's value at t.
    """
    _check_viscous(m, k)
    if traj.quadrature_label != VISCOUS_LABEL:
        raise ValueError("Trajectory carries no viscous quadrature; call attach_viscous_quadrature first")
    # int_t^{t0} = -int_{t0}^{t}
    return viscous_quantity(m, k, U, traj.sample(t)) - 4 * (k / m) * integral_term(traj, t)


@dataclass(frozen=True)
class MonotonicityResult:
    """Outcome of the backward monotonicity and velocity-estimate checks."""

    passed: bool
    first_violation_time: Optional[float]
    estimate_passed: bool
    estimate_violation_time: Optional[float]
    sample_count: int

    @property
    def ok(self) -> bool:
        return self.passed and self.estimate_passed

    def to_dict(self) -> dict:
        return {
            "monotone": self.passed,
            "first_violation_time": self.first_violation_time,
            "estimate_holds": self.estimate_passed,
            "estimate_violation_time": self.estimate_violation_time,
            "sample_count": self.sample_count,
        }


def _require_nonnegative(U: Potential, states: Sequence[JetState]):
    for s in states:
        u = U.value(s.q)
        if u < 0:
            raise HypothesisError(f"Potential is negative (U={u:.3e}) at q={s.q.tolist()}, t={s.t}")


def monotonicity_check(
    m: float, k: float, U: Potential, traj: Trajectory, tol: float = 1e-9
) -> MonotonicityResult:
    """
    For t <= t0 check that e^{2kt/m}(m|q'|^2 + 2U) is nondecreasing in t and
    that m|q'(t)|^2 <= e^{2k(t0-t)/m}(m|q'(t0)|^2 + 2U(q(t0))).

    Args:
        m, k: Mass and viscous coefficient.
        U: Nonnegative potential.
        traj: Backward trajectory of the viscous system.
        tol: Relative slack for both comparisons.

    Returns:
        MonotonicityResult with the violation closest to t0 for each check.
    """
    _check_viscous(m, k)
    states = [s for s in traj.samples if s.t <= traj.t0]
    if len(states) < 2:
        raise ParameterError("monotonicity_check needs a backward trajectory (samples with t < t0)")
    _require_nonnegative(U, states)

    states.sort(key=lambda s: s.t)
    quantity = np.array([viscous_quantity(m, k, U, s) for s in states])
    steps = np.diff(quantity)
    slack = tol * np.maximum(1.0, np.abs(quantity[1:]))
    bad = np.flatnonzero(steps < -slack)
    # Scan from t0 backwards so the reported violation is the one closest to t0
    first_violation = float(states[bad[-1]].t) if bad.size else None

    start = traj.samples[0]
    bound0 = m * float(np.dot(start.jets[1], start.jets[1])) + 2 * U.value(start.q)
    estimate_violation = None
    for s in reversed(states):
        kinetic = m * float(np.dot(s.jets[1], s.jets[1]))
        bound = np.exp(2 * k * (traj.t0 - s.t) / m) * bound0
        if kinetic > bound + tol * max(1.0, bound):
            estimate_violation = float(s.t)
            break

    result = MonotonicityResult(
        passed=first_violation is None,
        first_violation_time=first_violation,
        estimate_passed=estimate_violation is None,
        estimate_violation_time=estimate_violation,
        sample_count=len(states),
    )
    logger.info(
        "Monotonicity: %s, velocity estimate: %s (%d samples)",
        "PASS" if result.passed else f"FAIL at t={first_violation}",
        "PASS" if result.estimate_passed else f"FAIL at t={estimate_violation}",
        len(states),
    )
    return result


def energy_decay_check(m: float, k: float, U: Potential, traj: Trajectory, tol: float = 1e-9) -> Optional[float]:
    """
    Forward in time E = m|q'|^2/2 + U(q) is non-increasing (dE/dt = -k|q'|^2).
    Returns the first time where it increases, or None.
    """
    _check_viscous(m, k)
    states = sorted((s for s in traj.samples if s.t >= traj.t0), key=lambda s: s.t)
    if len(states) < 2:
        raise ParameterError("energy_decay_check needs a forward trajectory")
    E = np.array([0.5 * m * float(np.dot(s.jets[1], s.jets[1])) + U.value(s.q) for s in states])
    rises = np.flatnonzero(np.diff(E) > tol * np.maximum(1.0, np.abs(E[:-1])))
    return float(states[rises[0] + 1].t) if rises.size else None


# --- series helpers ------------------------------------------------------------------


def evaluate_series(
    fn: Callable[[float], float], times: Sequence[float]
) -> List[Tuple[float, float]]:
    """(t, fn(t)) pairs; times where a stencil leaves the span give NaN."""
    out = []
    skipped = 0
    for t in times:
        try:
            out.append((float(t), float(fn(t))))
        except SpanError:
            out.append((float(t), float("nan")))
            skipped += 1
    if skipped:
        logger.debug("%d of %d samples lack stencil clearance", skipped, len(out))
    return out


def finite_series(series: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    return [(t, v) for t, v in series if np.isfinite(v)]


def max_time_derivative(series: Sequence[Tuple[float, float]]) -> float:
    """Max |dv/dt| estimated by central differences over a (t, v) grid."""
    data = finite_series(series)
    if len(data) < 3:
        raise ArityError("Need at least 3 finite samples to estimate a time derivative")
    t = np.array([p[0] for p in data])
    v = np.array([p[1] for p in data])
    return float(np.max(np.abs(np.gradient(v, t))))
