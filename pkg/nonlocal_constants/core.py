"""
Jet and trajectory data model shared by every other module.

A *jet* is the list of time derivatives (q, q', ..., q^(M)) of a motion at one
instant. An order-N Lagrangian produces an Euler-Lagrange equation of order 2N,
so a trajectory stores jets of order M = 2N - 1: exactly the state of the
equivalent first-order system.

EDUCATIONAL NOTE - Hermite dense output
---------------------------------------
Because every derivative channel q^(j) is itself a state component, the
integrator hands us, at each accepted step, the values of q and of all its
derivatives up to q^(M+1) (the last one from the explicit closure). A Hermite
interpolant matching all of them at both ends of a step is a polynomial of
degree 2M+3 whose derivatives reproduce the jets. The jets at an arbitrary t
are read off as derivatives of that single polynomial, so the interpolated
jets stay mutually consistent (q^(j+1) really is the derivative of q^(j)),
which is what the finite-difference machinery downstream relies on.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BPoly

from . import stencils

logger = logging.getLogger(__name__)

Closure = Callable[[float, Sequence[np.ndarray]], np.ndarray]

# Interpolated states kept per trajectory; quadrature and stencils revisit times
SAMPLE_CACHE_SIZE = 4096


class SpanError(ValueError):
    """Requested time (or stencil) leaves the trajectory span."""


class ArityError(ValueError):
    """Not enough jets or values for the requested operation."""


class DimensionError(ValueError):
    """Configuration-space dimension does not fit the operation."""


class OrderError(ValueError):
    """Evaluator used with a Lagrangian of the wrong order."""


class ParameterError(ValueError):
    """Invalid physical or numerical parameter."""


class NumericError(ValueError):
    """A function evaluation produced a non-finite value."""


class HypothesisError(ValueError):
    """A conservation hypothesis (rho-condition, constant mu, U >= 0) is violated."""


@dataclass(frozen=True, eq=False)
class JetState:
    """Time plus the jets (q, q', ..., q^(M)) at that instant."""

    t: float
    jets: Tuple[np.ndarray, ...]

    def __post_init__(self):
        arrays = tuple(np.array(j, dtype=float).reshape(-1) for j in self.jets)
        if len(arrays) < 2:
            raise ArityError(f"A jet needs at least q and q', got {len(arrays)} vector(s)")
        n = arrays[0].size
        if n < 1:
            raise DimensionError("Jet vectors must have dimension >= 1")
        for j, arr in enumerate(arrays):
            if arr.size != n:
                raise DimensionError(f"Jet {j} has dimension {arr.size}, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"Jet {j} contains non-finite entries at t={self.t}")
            arr.setflags(write=False)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "jets", arrays)

    @property
    def order(self) -> int:
        return len(self.jets) - 1

    @property
    def dim(self) -> int:
        return self.jets[0].size

    @property
    def q(self) -> np.ndarray:
        return self.jets[0]

    def truncated(self, order: int) -> "JetState":
        """Same instant, jets 0..order only."""
        if order > self.order:
            raise ArityError(f"Cannot truncate a jet of order {self.order} to order {order}")
        return JetState(self.t, self.jets[: order + 1])

    def as_array(self) -> np.ndarray:
        return np.stack(self.jets)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Dense solution of an Euler-Lagrange equation.

    Node data is stored as arrays: `times` (S,), `jets` (S, M+1, n) and, when
    known, `top` (S, n) = q^(M+1) at the nodes. `quadrature` holds the
    accumulated integral I(t_i) = int_{t0}^{t_i} integrand(s) ds once a
    family (or another integrand) has been attached.

    Times are strictly increasing or strictly decreasing; backward runs keep
    their natural (decreasing) order.
    """

    t0: float
    times: np.ndarray
    jets: np.ndarray
    top: Optional[np.ndarray] = None
    closure: Optional[Closure] = None
    quadrature: Optional[np.ndarray] = None
    integrand: Optional[Callable[[float], float]] = None
    quadrature_label: str = ""
    tolerance: float = 1e-10
    system: str = ""
    dense: Any = field(default=None, repr=False)
    _interpolated: Any = field(default=None, init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        jets = np.asarray(self.jets, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ArityError("A trajectory needs at least 2 samples")
        if jets.ndim != 3 or jets.shape[0] != times.size:
            raise ArityError(f"Jets must have shape (samples, M+1, n), got {jets.shape}")
        if jets.shape[1] < 2:
            raise ArityError("Trajectory jets must have order M >= 1")
        steps = np.diff(times)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("Sample times must be strictly increasing or strictly decreasing")
        if float(self.t0) != times[0]:
            raise ValueError(f"t0={self.t0} must equal the first sample time {times[0]}")

        top = None
        if self.top is not None:
            top = np.asarray(self.top, dtype=float).reshape(times.size, jets.shape[2])

        quadrature = None
        if self.quadrature is not None:
            quadrature = np.asarray(self.quadrature, dtype=float)
            if quadrature.shape != times.shape:
                raise ArityError("Quadrature must have one value per sample")
            if quadrature[0] != 0.0:
                raise ValueError("Quadrature must vanish at t0")
            quadrature.setflags(write=False)

        for arr in (times, jets, top):
            if arr is not None:
                arr.setflags(write=False)

        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "jets", jets)
        object.__setattr__(self, "top", top)
        object.__setattr__(self, "quadrature", quadrature)
        if self.dense is None:
            object.__setattr__(self, "dense", self._build_dense())
        object.__setattr__(self, "_interpolated", lru_cache(maxsize=SAMPLE_CACHE_SIZE)(self._interpolate))

    def _build_dense(self) -> BPoly:
        derivs = self.jets
        if self.top is not None:
            derivs = np.concatenate([self.jets, self.top[:, None, :]], axis=1)
        x, y = self.times, derivs
        if self.orientation < 0:
            x, y = x[::-1], y[::-1]
        return BPoly.from_derivatives(x, list(y), extrapolate=False)

    # --- shape -----------------------------------------------------------

    @property
    def order(self) -> int:
        """Jet order M stored at the nodes."""
        return self.jets.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.jets.shape[2]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def orientation(self) -> int:
        return 1 if self.times[-1] > self.times[0] else -1

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.times.min()), float(self.times.max())

    @property
    def samples(self) -> List[JetState]:
        return [JetState(t, tuple(j)) for t, j in zip(self.times, self.jets)]

    def __len__(self) -> int:
        return self.times.size

    # --- evaluation --------------------------------------------------------

    def contains(self, t: float, margin: float = 0.0) -> bool:
        lo, hi = self.span
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        return lo + margin - slack <= t <= hi - margin + slack

    def _clamp(self, t: float) -> float:
        if not self.contains(t):
            lo, hi = self.span
            raise SpanError(f"t={t} lies outside the trajectory span [{lo}, {hi}]")
        lo, hi = self.span
        return min(max(t, lo), hi)

    def node_index(self, t: float) -> Optional[int]:
        hits = np.flatnonzero(self.times == t)
        return int(hits[0]) if hits.size else None

    def sample(self, t: float) -> JetState:
        """JetState at t from the dense output; node values are returned verbatim."""
        t = self._clamp(float(t))
        idx = self.node_index(t)
        if idx is not None:
            return JetState(t, tuple(self.jets[idx]))
        return self._interpolated(t)

    def _interpolate(self, t: float) -> JetState:
        return JetState(t, tuple(self.dense(t, nu=j) for j in range(self.order + 1)))

    def jets_upto(self, t: float, order: int) -> List[np.ndarray]:
        """
        Jets q..q^(order) at t, possibly beyond the stored order M.

        q^(M+1) comes from the closure; higher jets differentiate the closure
        output along the dense output with central stencils.
        """
        state = self.sample(t)
        jets = list(state.jets[: order + 1])
        if order <= self.order:
            return jets
        if self.closure is None:
            raise ArityError(
                f"Jets up to order {order} requested but the trajectory stores order "
                f"{self.order} and carries no closure"
            )

        def top(s: float) -> np.ndarray:
            return np.asarray(self.closure(s, list(self.sample(s).jets)), dtype=float)

        jets.append(top(state.t))
        for extra in range(1, order - self.order):
            if not self.contains(state.t, stencils.clearance(extra)):
                raise SpanError(
                    f"Jet of order {self.order + 1 + extra} at t={state.t} needs stencil "
                    f"clearance {stencils.clearance(extra):.3g}"
                )
            jets.append(np.asarray(stencils.differentiate(top, state.t, extra), dtype=float))
        return jets

    def with_quadrature(
        self, values: np.ndarray, integrand: Callable[[float], float], label: str
    ) -> "Trajectory":
        """Copy of this trajectory carrying the accumulated integral values."""
        return replace(self, quadrature=values, integrand=integrand, quadrature_label=label)

    def interior_times(self, margin: float, count: Optional[int] = None) -> np.ndarray:
        """Sample times at least `margin` away from both ends (optionally `count` evenly spaced)."""
        lo, hi = self.span
        if hi - lo <= 2 * margin:
            raise SpanError(f"Span [{lo}, {hi}] too short for margin {margin}")
        if count is not None:
            grid = np.linspace(lo + margin, hi - margin, count)
            return grid if self.orientation > 0 else grid[::-1]
        mask = (self.times >= lo + margin) & (self.times <= hi - margin)
        return self.times[mask]


@dataclass(frozen=True)
class DriftReport:
    """How far a candidate constant wanders from its value at t0."""

    reference_value: float
    max_abs_drift: float
    max_rel_drift: float
    sample_count: int

    def within(self, budget: float) -> bool:
        return self.max_rel_drift <= budget

    def to_dict(self) -> dict:
        return {
            "reference_value": self.reference_value,
            "max_abs_drift": self.max_abs_drift,
            "max_rel_drift": self.max_rel_drift,
            "sample_count": self.sample_count,
        }


def sample_jets(traj: Trajectory, t: float) -> JetState:
    """Interpolated JetState at t (exact at sample nodes)."""
    return traj.sample(t)


def drift_report(values: Sequence[Tuple[float, float]]) -> DriftReport:
    """
    Drift statistics of a (time, value) series relative to its first entry.

    max_rel_drift is normalized by max(1, |v0|) so constants near zero are
    judged on an absolute scale.
    """
    if len(values) < 2:
        raise ArityError(f"drift_report needs at least 2 values, got {len(values)}")
    series = np.array([v for _, v in values], dtype=float)
    reference = float(series[0])
    max_abs = float(np.max(np.abs(series - reference)))
    return DriftReport(
        reference_value=reference,
        max_abs_drift=max_abs,
        max_rel_drift=max_abs / max(1.0, abs(reference)),
        sample_count=int(series.size),
    )
