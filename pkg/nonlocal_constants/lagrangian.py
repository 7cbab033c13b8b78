"""
Lagrangians of arbitrary order N, their jet-slot partials, total time
derivatives along trajectories and the Euler-Lagrange residual.

The higher-order Euler-Lagrange equation reads

    sum_{k=0}^{N} (-1)^k d^k/dt^k dL/dq^(k) = 0,

an ODE of order 2N. It is never solved implicitly here: every integrable
LagrangianSpec carries an explicit closure for q^(2N). Specs without a closure
still support evaluation, residual checks and constants on trajectories
produced elsewhere.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import dual, stencils
from .core import (
    ArityError,
    Closure,
    DimensionError,
    JetState,
    NumericError,
    ParameterError,
    SpanError,
    Trajectory,
)

logger = logging.getLogger(__name__)

LagrangianFunction = Callable[[float, Sequence[np.ndarray]], float]


@dataclass(frozen=True)
class LagrangianSpec:
    """
    An order-N Lagrangian on R^n.

    Attributes:
        order: N >= 1, highest jet L depends on.
        dim: n >= 1.
        evaluate: (t, [q, q', ..., q^(N)]) -> scalar. Must accept numpy object
            arrays of DualNumber (plain numpy arithmetic does).
        closure: optional (t, [q, ..., q^(2N-1)]) -> q^(2N).
        autonomous: True when L does not depend on t explicitly.
    """

    order: int
    dim: int
    evaluate: LagrangianFunction
    closure: Optional[Closure] = None
    autonomous: bool = False
    name: str = "custom"
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ParameterError(f"Lagrangian order must be >= 1, got {self.order}")
        if self.dim < 1:
            raise ParameterError(f"Dimension must be >= 1, got {self.dim}")

    @property
    def state_order(self) -> int:
        """Jet order M = 2N - 1 of the equivalent first-order state."""
        return 2 * self.order - 1


def linear_combination(
    alpha: float, first: LagrangianSpec, beta: float, second: LagrangianSpec
) -> LagrangianSpec:
    """alpha*L1 + beta*L2 (no closure: the combined EL equation is not known explicitly)."""
    if first.dim != second.dim:
        raise DimensionError(f"Cannot combine dimensions {first.dim} and {second.dim}")
    order = max(first.order, second.order)

    def evaluate(t, jets):
        return alpha * first.evaluate(t, jets[: first.order + 1]) + beta * second.evaluate(
            t, jets[: second.order + 1]
        )

    return LagrangianSpec(
        order=order,
        dim=first.dim,
        evaluate=evaluate,
        autonomous=first.autonomous and second.autonomous,
        name=f"{alpha}*{first.name}+{beta}*{second.name}",
    )


def _slot_jets(spec: LagrangianSpec, state: JetState) -> List[np.ndarray]:
    if state.order < spec.order:
        raise ArityError(
            f"Lagrangian of order {spec.order} needs jets up to q^({spec.order}), "
            f"state has order {state.order}"
        )
    if state.dim != spec.dim:
        raise DimensionError(f"State dimension {state.dim} != Lagrangian dimension {spec.dim}")
    return list(state.jets[: spec.order + 1])


def eval_lagrangian(spec: LagrangianSpec, state: JetState) -> float:
    """L(t, q, ..., q^(N)) at a jet state."""
    value = float(dual.real_part(spec.evaluate(state.t, _slot_jets(spec, state))))
    if not np.isfinite(value):
        raise NumericError(f"Lagrangian '{spec.name}' is not finite at t={state.t}")
    return value


def partial_wrt_jet(spec: LagrangianSpec, state: JetState, j: int) -> np.ndarray:
    """
    dL/dq^(j) as an n-vector, one dual-number pass per coordinate.
    """
    if j < 0 or j > spec.order:
        raise IndexError(f"Jet slot j={j} out of range 0..{spec.order}")
    jets = _slot_jets(spec, state)
    zeros = [np.zeros(spec.dim) for _ in jets]

    def lagrangian(seeded):
        return spec.evaluate(state.t, seeded)

    grad = np.empty(spec.dim)
    for c in range(spec.dim):
        direction = [z.copy() for z in zeros]
        direction[j][c] = 1.0
        grad[c] = dual.directional_derivative(lagrangian, jets, direction)
    return grad


def directional_jet_derivative(
    spec: LagrangianSpec, state: JetState, variation: Sequence[np.ndarray]
) -> float:
    """sum_j dL/dq^(j) . variation[j] for j = 0..N in a single forward pass."""
    jets = _slot_jets(spec, state)
    if len(variation) < len(jets):
        raise ArityError(
            f"Variation supplies {len(variation)} jets, Lagrangian needs {len(jets)}"
        )
    return dual.directional_derivative(
        lambda seeded: spec.evaluate(state.t, seeded), jets, variation[: len(jets)]
    )


def total_derivative_along(
    traj: Trajectory,
    f: Callable[[JetState], np.ndarray],
    k: int,
    t: float,
    h: Optional[float] = None,
) -> np.ndarray:
    """
    k-th total time derivative of s -> f(sample_jets(traj, s)) at t.

    Uses one direct central stencil for d^k/dt^k (never nested first
    derivatives). Raises SpanError when the stencil would leave the span.
    """
    if k < 0:
        raise ValueError(f"Derivative order must be >= 0, got {k}")
    if k == 0:
        return np.asarray(f(traj.sample(t)), dtype=float)
    step = stencils.stencil_step(k) if h is None else h
    reach = stencils.clearance(k, step)
    if not traj.contains(t, reach):
        lo, hi = traj.span
        raise SpanError(
            f"Stencil for d^{k}/dt^{k} at t={t} (reach {reach:.3g}) leaves span [{lo}, {hi}]"
        )
    return np.asarray(
        stencils.differentiate(lambda s: np.asarray(f(traj.sample(s)), dtype=float), t, k, step),
        dtype=float,
    )


def el_residual(spec: LagrangianSpec, traj: Trajectory, t: float) -> np.ndarray:
    """sum_{k=0}^{N} (-1)^k d^k/dt^k dL/dq^(k) at t; near zero on true solutions."""
    residual = np.zeros(spec.dim)
    for k in range(spec.order + 1):
        term = total_derivative_along(traj, lambda s, k=k: partial_wrt_jet(spec, s, k), k, t)
        residual += (-1) ** k * term
    return residual


def residual_clearance(spec: LagrangianSpec) -> float:
    """Margin from the span ends that el_residual needs."""
    return stencils.clearance(spec.order)
