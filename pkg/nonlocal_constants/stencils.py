"""
Central finite-difference stencils for total time derivatives.

EDUCATIONAL NOTE - Why direct k-th derivative stencils?
-------------------------------------------------------
A k-th derivative can be estimated by applying a first-derivative stencil k
times, but every application divides the sampling noise by h again and the
stencil widths add up. A direct stencil for d^k/dt^k solves one small linear
system (a truncated Taylor expansion) and divides by h^k exactly once.

For a stencil with offsets o_i (in units of h) we want weights w_i with

    sum_i w_i * o_i^r / r! = 1 if r == k else 0,   r = 0 .. n_points - 1

so that sum_i w_i f(t + o_i h) / h^k = f^(k)(t) + O(h^accuracy).

The step balances truncation error (~h^4) against evaluation noise (~eps/h^k):
h ~ eps^(1/(k+4)). Below 1e-3 nothing is gained on our dense outputs.

The default step is therefore

    h_k = max(MIN_STEP, STEP_SCALE * DENSE_NOISE^(1/(k+4))),  STEP_SCALE = 1.

The textbook prefactor of 10 (h_k = 10 * eps^(1/(k+4))) puts every k in the
truncation-dominated regime on dense outputs at tolerance 1e-10, where the
K2 drift of the Pais-Uhlenbeck oscillator grows. Callers that need the
prefactor can pass `scale=10` to stencil_step.
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ACCURACY = 4
MAX_DERIVATIVE = 4

# Floor for the stencil step and noise level of dense-output evaluations.
MIN_STEP = 1e-3
DENSE_NOISE = 1e-14
STEP_SCALE = 1.0


@lru_cache(maxsize=None)
def central_coefficients(k: int, accuracy: int = ACCURACY) -> Tuple[np.ndarray, np.ndarray]:
    """
    Offsets and weights of the central stencil for the k-th derivative.

    Args:
        k: Derivative order (1..MAX_DERIVATIVE).
        accuracy: Even order of accuracy.

    Returns:
        (offsets, weights) as read-only float arrays.
    """
    if k < 1 or k > MAX_DERIVATIVE:
        raise ValueError(f"Stencil derivative order must be in 1..{MAX_DERIVATIVE}, got {k}")
    if accuracy <= 0 or accuracy % 2:
        raise ValueError(f"Central stencils need a positive even accuracy, got {accuracy}")

    n_points = 2 * ((k + 1) // 2) - 1 + accuracy
    radius = n_points // 2
    offsets = np.arange(-radius, radius + 1, dtype=float)

    # Taylor system: rows are powers, columns are stencil points
    matrix = np.array(
        [[o ** row / math.factorial(row) for o in offsets] for row in range(n_points)]
    )
    rhs = np.zeros(n_points)
    rhs[k] = 1.0
    weights = np.linalg.solve(matrix, rhs)
    # Symmetric stencils: kill the round-off in weights that should vanish
    weights[np.abs(weights) < 1e-12] = 0.0

    offsets.setflags(write=False)
    weights.setflags(write=False)
    return offsets, weights


def stencil_radius(k: int) -> int:
    """Number of steps the k-th derivative stencil reaches on each side."""
    if k == 0:
        return 0
    offsets, _ = central_coefficients(k)
    return int(offsets[-1])


def stencil_step(k: int, noise: float = DENSE_NOISE, scale: float = STEP_SCALE) -> float:
    """Default step h for the k-th derivative: max(MIN_STEP, scale * noise^(1/(k+4)))."""
    if k <= 0:
        return 0.0
    return max(MIN_STEP, scale * noise ** (1.0 / (k + 4)))


def clearance(k: int, h: Optional[float] = None) -> float:
    """Distance from t that the k-th derivative stencil needs on each side."""
    if k == 0:
        return 0.0
    step = stencil_step(k) if h is None else h
    return stencil_radius(k) * step


def differentiate(
    func: Callable[[float], Union[float, np.ndarray]],
    t: float,
    k: int,
    h: Optional[float] = None,
) -> Union[float, np.ndarray]:
    """
    k-th derivative of func at t with the central stencil of accuracy 4.

    func may return scalars or arrays; k = 0 simply evaluates func(t).
    """
    if k == 0:
        return func(t)
    step = stencil_step(k) if h is None else h
    offsets, weights = central_coefficients(k)

    total = None
    for offset, weight in zip(offsets, weights):
        if weight == 0.0:
            continue
        term = weight * np.asarray(func(t + offset * step), dtype=float)
        total = term if total is None else total + term
    return total / step ** k
