"""
Adaptive Runge-Kutta integration of explicit Euler-Lagrange closures and the
quadrature of nonlocal integral terms.

EDUCATIONAL NOTE - From order 2N to first order
-----------------------------------------------
An order-N Lagrangian gives an ODE q^(2N) = closure(t, q, ..., q^(2N-1)).
Stacking y = (q, q', ..., q^(2N-1)) turns it into 2N*n first-order equations

    y' = (q', q'', ..., q^(2N-1), closure(t, y)),

which we step with the Dormand-Prince 5(4) pair. Each step yields a fifth
order solution plus an embedded fourth order one; their difference estimates
the local error. The step is accepted when

    max_i |e_i| / (abs_tol + rel_tol * max(|y_i|, |y_new_i|)) <= 1

and the next step is scaled by 0.9 * err^(-1/5), clamped to [0.2, 5].

EDUCATIONAL NOTE - Why quadrature after the fact?
-------------------------------------------------
The nonlocal term I(t) = int_{t0}^{t} dL/dlambda ds depends on the family.
Co-integrating it as an extra state would tie a trajectory to one family, so
instead we integrate it afterwards on the dense output, step by step, with a
5-point Gauss-Lobatto rule. One trajectory then serves any number of families.

The rule is exact for polynomials of degree 7, so comparing a panel with the
sum over its two halves gives an error estimate that is already below the
tolerance on most integrator steps; the endpoints and midpoint of neighbouring
panels are evaluated once. A family whose integrand equals its declared
constant mu at every node (rotation on a central potential, for instance)
needs no quadrature at all: I(t) = mu (t - t0).
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from .core import ArityError, JetState, ParameterError, SpanError, Trajectory
from .families import PerturbationFamily, integrand
from .lagrangian import LagrangianSpec

logger = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DP_B_HAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
DP_E = DP_B - DP_B_HAT

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
ERROR_EXPONENT = -1.0 / 5.0

# 5-point Gauss-Lobatto rule on [-1, 1]
LOBATTO_NODES = np.array([-1.0, -np.sqrt(3 / 7), 0.0, np.sqrt(3 / 7), 1.0])
LOBATTO_WEIGHTS = np.array([1 / 10, 49 / 90, 32 / 45, 49 / 90, 1 / 10])
QUADRATURE_MAX_DEPTH = 12


class IntegrationError(RuntimeError):
    """Integration stopped early; `last_valid_time` is the last accepted time."""

    def __init__(self, message: str, last_valid_time: float):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class StiffnessError(IntegrationError):
    """Step size underflow or step budget exhausted."""


class BlowUpError(IntegrationError):
    """The state became non-finite or exceeded the blow-up threshold."""


@dataclass(frozen=True)
class IntegratorConfig:
    """
    Tolerances and limits of the adaptive integrator.

    Attributes:
        rel_tol, abs_tol: Mixed error tolerance per step.
        initial_step: First trial step size.
        max_steps: Budget of accepted plus rejected steps.
        direction: Optional 'forward'/'backward' guard checked against t_end.
        blowup_threshold: Largest admissible |state| component.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    initial_step: float = 1e-3
    max_steps: int = 10_000_000
    direction: Optional[str] = None
    blowup_threshold: float = 1e100

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ParameterError("Integrator tolerances must be > 0")
        if self.max_steps <= 0:
            raise ParameterError("max_steps must be > 0")
        if self.initial_step <= 0:
            raise ParameterError("initial_step must be > 0")
        if self.direction not in (None, "forward", "backward"):
            raise ParameterError(f"direction must be 'forward' or 'backward', got {self.direction!r}")

    @property
    def quadrature_tol(self) -> float:
        return 0.1 * min(self.rel_tol, self.abs_tol)


class DormandPrince:
    """Stepper for y' = f(t, y) with FSAL and max-norm error control."""

    def __init__(self, rhs: Callable[[float, np.ndarray], np.ndarray], cfg: IntegratorConfig):
        self.rhs = rhs
        self.cfg = cfg

    def step(self, t: float, y: np.ndarray, f0: np.ndarray, h: float):
        """One trial step. Returns (y_new, f_new, err_norm)."""
        k = [f0]
        for stage in range(1, 7):
            dy = h * np.dot(DP_A[stage], np.array(k))
            k.append(self.rhs(t + DP_C[stage] * h, y + dy))
        stages = np.array(k)
        # Stage 7 is evaluated at the fifth-order solution (FSAL)
        y_new = y + h * np.dot(DP_A[6], stages[:6])
        err = h * np.dot(DP_E, stages)
        scale = self.cfg.abs_tol + self.cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            norm = float(np.max(np.abs(err) / scale))
        return y_new, stages[6], norm

    @staticmethod
    def next_factor(err_norm: float, accepted: bool) -> float:
        if err_norm == 0.0:
            return MAX_FACTOR
        factor = SAFETY * err_norm ** ERROR_EXPONENT
        upper = MAX_FACTOR if accepted else 1.0
        return min(upper, max(MIN_FACTOR, factor))


def integrate(
    spec: LagrangianSpec,
    initial: JetState,
    t_end: float,
    cfg: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """
    Integrate the explicit closure of `spec` from `initial` to `t_end`.

    Forward and backward runs are both supported; backward trajectories keep
    decreasing sample times.

    Args:
        spec: Lagrangian with an explicit closure for q^(2N).
        initial: Jets q, ..., q^(2N-1) at the start time.
        t_end: Final time; below initial.t integrates backward.
        cfg: Tolerances and limits (defaults to IntegratorConfig()).

    Returns:
        Trajectory with one sample per accepted step and q^(2N) as dense-output top.

    Raises:
        StiffnessError: step size underflow or exhausted step budget.
        BlowUpError: non-finite or runaway state. Both carry the last accepted time.
    """
    cfg = cfg or IntegratorConfig()
    if spec.closure is None:
        raise ValueError(f"Lagrangian '{spec.name}' has no explicit closure to integrate")
    M, n = spec.state_order, spec.dim
    if initial.order < M:
        raise ArityError(f"Initial state needs jets 0..{M}, got order {initial.order}")
    if initial.dim != n:
        raise ArityError(f"Initial state dimension {initial.dim} != {n}")

    t0 = initial.t
    direction = 1.0 if t_end >= t0 else -1.0
    if cfg.direction is not None:
        expected = 1.0 if cfg.direction == "forward" else -1.0
        if expected != direction and t_end != t0:
            raise ParameterError(
                f"Configured direction '{cfg.direction}' disagrees with t0={t0}, t_end={t_end}"
            )
    if t_end == t0:
        raise ParameterError("t_end must differ from the initial time")

    closure = spec.closure

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        jets = y.reshape(M + 1, n)
        top = np.asarray(closure(t, list(jets)), dtype=float).reshape(n)
        return np.concatenate([y[n:], top])

    stepper = DormandPrince(rhs, cfg)
    y = np.concatenate([np.asarray(j, dtype=float) for j in initial.jets[: M + 1]])
    f = rhs(t0, y)

    times: List[float] = [t0]
    states: List[np.ndarray] = [y.copy()]
    tops: List[np.ndarray] = [f[-n:].copy()]

    t = t0
    h = direction * min(cfg.initial_step, abs(t_end - t0))
    rejected = 0
    accepted = 0
    saw_nonfinite = False

    logger.info(
        "Integrating '%s' (N=%d, n=%d) from t=%g to t=%g (rtol=%.1e, atol=%.1e)",
        spec.name, spec.order, n, t0, t_end, cfg.rel_tol, cfg.abs_tol,
    )

    while direction * (t_end - t) > 0:
        if accepted + rejected >= cfg.max_steps:
            raise StiffnessError(f"Step budget of {cfg.max_steps} exhausted at t={t}", t)
        if abs(h) < 16 * np.finfo(float).eps * max(1.0, abs(t)):
            if saw_nonfinite:
                raise BlowUpError(f"Solution escapes to infinity near t={t}", t)
            raise StiffnessError(f"Step size underflow at t={t} (h={h:.3e})", t)

        if direction * (t + h - t_end) > 0:
            h = t_end - t

        with np.errstate(over="ignore", invalid="ignore"):
            try:
                y_new, f_new, err = stepper.step(t, y, f, h)
            except (OverflowError, ZeroDivisionError, FloatingPointError):
                y_new, f_new, err = y, f, np.inf

        if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
            saw_nonfinite = True
            rejected += 1
            h *= MIN_FACTOR
            continue

        if err <= 1.0:
            t_new = t_end if abs(t_end - (t + h)) <= 4 * np.finfo(float).eps * max(1.0, abs(t_end)) else t + h
            if np.max(np.abs(y_new)) > cfg.blowup_threshold:
                raise BlowUpError(
                    f"State exceeded {cfg.blowup_threshold:.1e} at t={t_new}; last valid time t={t}", t
                )
            t, y, f = t_new, y_new, f_new
            times.append(t)
            states.append(y.copy())
            tops.append(f[-n:].copy())
            accepted += 1
            saw_nonfinite = False
            h *= stepper.next_factor(err, accepted=True)
            if accepted % 10000 == 0:
                logger.debug("  %d steps accepted, t=%g, h=%.3e", accepted, t, h)
        else:
            rejected += 1
            h *= stepper.next_factor(err, accepted=False)

    logger.info("Integration finished: %d accepted, %d rejected steps.", accepted, rejected)

    return Trajectory(
        t0=t0,
        times=np.array(times),
        jets=np.array(states).reshape(len(times), M + 1, n),
        top=np.array(tops),
        closure=closure,
        tolerance=min(cfg.rel_tol, cfg.abs_tol),
        system=spec.name,
    )


# --- quadrature -----------------------------------------------------------------


def _lobatto(f: Callable[[float], float], a: float, b: float, cache: Dict[float, float]) -> float:
    """5-point Gauss-Lobatto value on [a, b]; endpoints and midpoint are shared through `cache`."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    offset = half * LOBATTO_NODES[3]
    nodes = (a, mid - offset, mid, mid + offset, b)
    values = []
    for s in nodes:
        if s not in cache:
            cache[s] = f(s)
        values.append(cache[s])
    return half * float(np.dot(LOBATTO_WEIGHTS, values))


def adaptive_lobatto(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float,
    depth: int = 0,
    cache: Optional[Dict[float, float]] = None,
    whole: Optional[float] = None,
) -> float:
    """
    Integral of f over [a, b] by adaptive 5-point Gauss-Lobatto quadrature.

    The panel value is compared with the sum over its two halves; when they
    differ by more than `tol` each half is refined with tol / 2.

    Args:
        f: Scalar integrand.
        a, b: Interval ends; b < a gives the negative of the integral over [b, a].
        tol: Absolute tolerance for the interval.
        depth: Current bisection depth (stops at QUADRATURE_MAX_DEPTH with a warning).
        cache: Integrand values by abscissa, shared between neighbouring panels.
        whole: Panel value already known to the caller.

    Returns:
        The refined integral (the sum over the two halves).
    """
    cache = {} if cache is None else cache
    if whole is None:
        whole = _lobatto(f, a, b, cache)
    mid = 0.5 * (a + b)
    left = _lobatto(f, a, mid, cache)
    right = _lobatto(f, mid, b, cache)
    halves = left + right
    if abs(halves - whole) <= tol:
        return halves
    if depth >= QUADRATURE_MAX_DEPTH:
        logger.warning("Quadrature depth limit reached on [%g, %g]", a, b)
        return halves
    return adaptive_lobatto(f, a, mid, 0.5 * tol, depth + 1, cache, left) + adaptive_lobatto(
        f, mid, b, 0.5 * tol, depth + 1, cache, right
    )


def attach_integral(
    traj: Trajectory,
    func: Callable[[float], float],
    label: str,
    tol: Optional[float] = None,
    cache: Optional[Dict[float, float]] = None,
) -> Trajectory:
    """
    Accumulate I(t_i) = int_{t0}^{t_i} func(s) ds on every step of the dense output.

    Args:
        traj: Trajectory whose steps define the quadrature panels.
        func: Scalar integrand of time.
        label: Name stored as `quadrature_label` on the result.
        tol: Absolute tolerance per step (default 0.1 * trajectory tolerance).
        cache: Known integrand values by time, e.g. at the nodes.

    Returns:
        A copy of `traj` carrying the accumulated values and the integrand.
    """
    tol = 0.1 * traj.tolerance if tol is None else tol
    cache = {} if cache is None else cache
    values = np.zeros(len(traj))
    acc = 0.0
    for i in range(1, len(traj)):
        a, b = float(traj.times[i - 1]), float(traj.times[i])
        acc += adaptive_lobatto(func, a, b, tol, cache=cache)
        values[i] = acc
    logger.debug("Attached quadrature '%s': I(t_end) = %.12g (%d integrand calls)", label, acc, len(cache))
    return traj.with_quadrature(values, func, label)


def attach_quadrature(
    traj: Trajectory,
    spec: LagrangianSpec,
    fam: PerturbationFamily,
    tol: Optional[float] = None,
) -> Trajectory:
    """
    Trajectory enriched with I(t) = int_{t0}^{t} integrand(s) ds for the family.

    When the family declares a constant mu and the integrand equals mu at every
    node (to within tol over the whole span), I(t) = mu (t - t0) is stored
    directly and no adaptive quadrature runs. Otherwise the node values seed
    the quadrature cache.

    Args:
        traj: Solution trajectory.
        spec: Lagrangian the trajectory solves.
        fam: Perturbation family.
        tol: Absolute tolerance per step (default 0.1 * trajectory tolerance).

    Returns:
        A copy of `traj` labelled `family:<name>`.
    """
    label = f"family:{fam.name}"
    tol = 0.1 * traj.tolerance if tol is None else tol

    def func(s: float) -> float:
        return integrand(spec, fam, traj, s)

    cache: Dict[float, float] = {}
    if fam.mu is not None:
        for s in traj.times:
            cache[float(s)] = func(float(s))
        deviation = max(abs(v - fam.mu) for v in cache.values())
        if deviation * abs(traj.t_end - traj.t0) <= tol:
            logger.debug(
                "Integrand of '%s' equals mu=%g at all %d nodes (max deviation %.1e); I(t) = mu (t - t0)",
                fam.name, fam.mu, len(traj), deviation,
            )
            return traj.with_quadrature(fam.mu * (traj.times - traj.t0), func, label)
    return attach_integral(traj, func, label, tol, cache)


def integral_term(traj: Trajectory, t: float, tol: Optional[float] = None) -> float:
    """
    I(t) for any t in the span; exact stored value at the nodes.

    Between nodes the stored value at the preceding node is extended by an
    adaptive Lobatto integral up to t.

    Args:
        traj: Trajectory carrying a quadrature (see attach_quadrature).
        t: Time inside the span.
        tol: Absolute tolerance of the partial panel.

    Returns:
        The accumulated integral from t0 to t.
    """
    if traj.quadrature is None or traj.integrand is None:
        raise ValueError("Trajectory carries no quadrature; call attach_quadrature first")
    idx = traj.node_index(t)
    if idx is not None:
        return float(traj.quadrature[idx])
    if not traj.contains(t):
        lo, hi = traj.span
        raise SpanError(f"t={t} lies outside the trajectory span [{lo}, {hi}]")
    # Start from the node just before t (in integration order)
    progress = traj.orientation * (traj.times - t)
    before = np.flatnonzero(progress < 0)
    i = int(before[-1]) if before.size else 0
    tol = 0.1 * traj.tolerance if tol is None else tol
    return float(traj.quadrature[i]) + adaptive_lobatto(traj.integrand, float(traj.times[i]), t, tol)


def taylor_trajectory(
    spec: LagrangianSpec, initial: JetState, radius: float = 0.25, nodes: int = 21
) -> Trajectory:
    """
    Local polynomial motion around initial.t, without integration.

    The Taylor polynomial of degree 2N uses the initial jets plus the closure
    value q^(2N). It agrees with the true solution to that order at the
    centre, which is enough to evaluate hypotheses (rho-condition, constant
    mu) at the initial instant. The span starts at initial.t - radius.
    """
    if spec.closure is None:
        raise ValueError(f"Lagrangian '{spec.name}' has no explicit closure")
    M = spec.state_order
    if initial.order < M:
        raise ArityError(f"Initial state needs jets 0..{M}, got order {initial.order}")
    coeffs = list(initial.jets[: M + 1])
    coeffs.append(np.asarray(spec.closure(initial.t, coeffs), dtype=float).reshape(initial.dim))

    times = np.linspace(initial.t - radius, initial.t + radius, nodes)
    jets = np.empty((nodes, M + 1, initial.dim))
    for s_idx, s in enumerate(times):
        dt = s - initial.t
        for j in range(M + 1):
            jets[s_idx, j] = sum(
                coeffs[i] * dt ** (i - j) / math.factorial(i - j) for i in range(j, M + 2)
            )
    top = np.tile(coeffs[-1], (nodes, 1))
    return Trajectory(
        t0=float(times[0]),
        times=times,
        jets=jets,
        top=top,
        closure=spec.closure,
        system=spec.name,
    )
