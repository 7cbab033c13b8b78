"""
Perturbation families q_lambda(t) with q_0 = q.

Every formula for the nonlocal constants uses a family only through its
first variation at lambda = 0, so a family is represented by the map

    (trajectory, t, J) -> [delta^(0), ..., delta^(J)],
    delta^(j) = d/dlambda q_lambda^(j)(t) at lambda = 0.

Since d/dlambda and d/dt commute, delta^(j+1) is the time derivative of
delta^(j) along the trajectory.

Custom families are plain callables with the same signature. They may be
called from several threads at once and must therefore be reentrant.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import comb

from .core import ArityError, DimensionError, HypothesisError, JetState, Trajectory
from .lagrangian import LagrangianSpec, directional_jet_derivative

logger = logging.getLogger(__name__)

VariationFunction = Callable[[Trajectory, float, int], List[np.ndarray]]

# Rotation generator G: (x, y) -> (-y, x)
ROTATION_GENERATOR = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class PerturbationFamily:
    """
    A family given by its variation jets, plus an optional constant mu such
    that dL/dlambda at lambda = 0 equals mu along motions.
    """

    name: str
    variation: VariationFunction
    mu: Optional[float] = None
    params: Dict[str, float] = field(default_factory=dict)

    def __call__(self, traj: Trajectory, t: float, max_order: int) -> List[np.ndarray]:
        return self.variation(traj, t, max_order)


def rotation_variation(traj: Trajectory, t: float, J: int) -> List[np.ndarray]:
    """delta^(j) = G q^(j)(t) for the planar rotation family."""
    if traj.dim != 2:
        raise DimensionError(f"The rotation family needs a planar system (n=2), got n={traj.dim}")
    return [ROTATION_GENERATOR @ q for q in traj.jets_upto(t, J)]


def timeshift_variation(traj: Trajectory, t: float, J: int) -> List[np.ndarray]:
    """delta^(j) = q^(j+1)(t) for q_lambda(t) = q(t + lambda)."""
    return list(traj.jets_upto(t, J + 1)[1:])


def exp_timeshift_variation(traj: Trajectory, t: float, J: int, a: float) -> List[np.ndarray]:
    """
    Variation of q_lambda(t) = q(t + lambda e^{a t}).

    delta^(0) = e^{at} q'(t) and, by the Leibniz rule,
    delta^(j) = sum_{i=0}^{j} C(j, i) a^{j-i} e^{at} q^(i+1)(t).
    """
    jets = traj.jets_upto(t, J + 1)
    scale = np.exp(a * t)
    out = []
    for j in range(J + 1):
        acc = np.zeros(traj.dim)
        for i in range(j + 1):
            acc = acc + comb(j, i, exact=True) * a ** (j - i) * jets[i + 1]
        out.append(scale * acc)
    return out


def polynomial_variation(
    traj: Trajectory, t: float, J: int, coefficients: np.ndarray
) -> List[np.ndarray]:
    """
    Additive family q_lambda = q + lambda p(t) with p(t) = sum_r c_r t^r.

    `coefficients` has shape (degree+1, n); delta^(j) = p^(j)(t).
    """
    coefficients = np.asarray(coefficients, dtype=float).reshape(-1, traj.dim)
    out = []
    for j in range(J + 1):
        deriv = np.polynomial.polynomial.polyder(coefficients, m=j, axis=0) if j else coefficients
        if deriv.shape[0] == 0:
            out.append(np.zeros(traj.dim))
        else:
            out.append(np.polynomial.polynomial.polyval(t, deriv))
    return out


def null_variation(traj: Trajectory, t: float, J: int) -> List[np.ndarray]:
    return [np.zeros(traj.dim) for _ in range(J + 1)]


# --- family constructors ----------------------------------------------------


def rotation_family(mu: Optional[float] = 0.0) -> PerturbationFamily:
    """Planar rotation family; mu = 0 for rotation-invariant Lagrangians."""
    return PerturbationFamily("rotation", rotation_variation, mu=mu)


def timeshift_family(mu: Optional[float] = None) -> PerturbationFamily:
    return PerturbationFamily("timeshift", timeshift_variation, mu=mu)


def exp_timeshift_family(a: float, mu: Optional[float] = None) -> PerturbationFamily:
    def variation(traj, t, J):
        return exp_timeshift_variation(traj, t, J, a)

    return PerturbationFamily("exp_timeshift", variation, mu=mu, params={"a": float(a)})


def polynomial_family(coefficients: Sequence[Sequence[float]], mu: Optional[float] = None) -> PerturbationFamily:
    """
    Additive family q + lambda p(t).

    Args:
        coefficients: Rows c_0, ..., c_d of p(t) = sum_r c_r t^r, each of length n.
        mu: Constant value of the integrand, when known.
    """
    coeffs = np.array(coefficients, dtype=float)

    def variation(traj, t, J):
        return polynomial_variation(traj, t, J, coeffs)

    return PerturbationFamily("polynomial", variation, mu=mu, params={"degree": coeffs.shape[0] - 1})


def null_family() -> PerturbationFamily:
    return PerturbationFamily("null", null_variation, mu=0.0)


FAMILIES: Dict[str, Callable[..., PerturbationFamily]] = {
    "rotation": rotation_family,
    "timeshift": timeshift_family,
    "exp_timeshift": exp_timeshift_family,
    "polynomial": polynomial_family,
    "null": null_family,
}


def make_family(name: str, **params) -> PerturbationFamily:
    """
    Build a registered family by name.

    Args:
        name: Key of FAMILIES.
        **params: Keyword arguments of the family constructor (e.g. a, mu, coefficients).

    Returns:
        The PerturbationFamily.

    Raises:
        KeyError: Unknown name.
    """
    if name not in FAMILIES:
        raise KeyError(f"Unknown family '{name}'. Known: {', '.join(sorted(FAMILIES))}")
    return FAMILIES[name](**params)


# --- integrand ----------------------------------------------------------------


def integrand(
    spec: LagrangianSpec, fam: PerturbationFamily, traj: Trajectory, t: float
) -> float:
    """
    d/dlambda L(t, q_lambda, ..., q_lambda^(N)) at lambda = 0
    = sum_j dL/dq^(j) . delta^(j)  (chain rule, one dual pass).

    Args:
        spec: Lagrangian of order N.
        fam: Family providing delta^(0..N).
        traj: Motion of spec.
        t: Evaluation time.

    Returns:
        The integrand of the nonlocal constant at t.
    """
    variation = fam(traj, t, spec.order)
    if len(variation) < spec.order + 1:
        raise ArityError(f"Family '{fam.name}' returned {len(variation)} variation jets")
    state = traj.sample(t)
    if state.order < spec.order:
        state = JetState(state.t, tuple(traj.jets_upto(t, spec.order)))
    return directional_jet_derivative(spec, state, variation)


def validate_mu(
    spec: LagrangianSpec,
    fam: PerturbationFamily,
    traj: Trajectory,
    times: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
    n_samples: int = 50,
) -> float:
    """
    Check the constant-integrand hypothesis.

    Args:
        spec: Lagrangian of the motion.
        fam: Family declaring mu.
        traj: Motion of spec.
        times: Check times; defaults to n_samples evenly spaced over the span.
        tol: Admissible |integrand - mu|.
        n_samples: Grid size when times is omitted.

    Returns:
        The max |integrand - mu| over the check times.

    Raises:
        HypothesisError: fam.mu is missing or the deviation exceeds tol.
    """
    if fam.mu is None:
        raise HypothesisError(f"Family '{fam.name}' declares no constant mu")
    if times is None:
        lo, hi = traj.span
        times = np.linspace(lo, hi, n_samples)
    worst = max(abs(integrand(spec, fam, traj, t) - fam.mu) for t in times)
    logger.debug("mu check for family '%s': max deviation %.3e", fam.name, worst)
    if worst > tol:
        raise HypothesisError(
            f"Integrand of family '{fam.name}' deviates from mu={fam.mu} by {worst:.3e} (tol {tol:.1e})"
        )
    return worst
