"""
Catalog of concrete Lagrangian systems with explicit closures, plus the
closed-form Pais-Uhlenbeck first integrals used as oracles.

EDUCATIONAL NOTE - The Pais-Uhlenbeck oscillator
------------------------------------------------
The second-order Lagrangian

    L = 1/2 |q''|^2 - 1/2 (w1^2 + w2^2) |q'|^2 + 1/2 w1^2 w2^2 |q|^2

yields the fourth-order equation q'''' + (w1^2 + w2^2) q'' + w1^2 w2^2 q = 0,
whose solutions superpose oscillations at both frequencies. Its energy K1 is
not bounded below (the famous "ghost"), yet the system is integrable: K2
and, in the plane, the rotational K3 are further first integrals. For
w1 = 1, w2 = 2 and q = cos t one gets K1 = -3/2 and K2 = 6; for the circular
motion q = (cos t, sin t) K3 = -3.

EDUCATIONAL NOTE - Dissipation as a time-dependent Lagrangian
-------------------------------------------------------------
Linear drag m q'' = -k q' - grad U(q) has no autonomous Lagrangian, but the
time-dependent one L = e^{kt/m} (m |q'|^2 / 2 - U(q)) produces exactly this
equation (the exponential factor supplies the -k q' term).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import dual
from .core import ArityError, DimensionError, JetState, ParameterError
from .lagrangian import LagrangianSpec

logger = logging.getLogger(__name__)


# --- potentials ---------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """
    Scalar potential U(q) with exact gradient.

    Calling the potential works on plain and on dual-number input, so it can
    be used inside a Lagrangian evaluation.
    """

    name: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    params: Dict[str, float] = field(default_factory=dict)

    def __call__(self, q):
        return dual.lift(self.value, self.gradient, q)


@dataclass(frozen=True)
class RadialPotential:
    """U(t, r) with dU/dr, for central forces."""

    name: str
    value: Callable[[float, float], float]
    derivative: Callable[[float, float], float]
    autonomous: bool = True

    def as_potential(self, t: float) -> Potential:
        """Freeze time and lift to a potential on the plane."""

        def value(q):
            return self.value(t, float(np.linalg.norm(q)))

        def gradient(q):
            r = float(np.linalg.norm(q))
            if r == 0.0:
                return np.zeros_like(q)
            return self.derivative(t, r) * q / r

        return Potential(self.name, value, gradient)


def zero_potential() -> Potential:
    return Potential("zero", lambda q: 0.0, lambda q: np.zeros_like(q))


def harmonic_potential(stiffness: float = 1.0) -> Potential:
    """U = c |q|^2 / 2."""
    return Potential(
        "harmonic",
        lambda q: 0.5 * stiffness * float(np.dot(q, q)),
        lambda q: stiffness * q,
        {"stiffness": stiffness},
    )


def quartic_potential(strength: float = 1.0) -> Potential:
    """U = c |q|^4; negative c gives an unbounded-below potential."""
    return Potential(
        "quartic",
        lambda q: strength * float(np.dot(q, q)) ** 2,
        lambda q: 4.0 * strength * float(np.dot(q, q)) * q,
        {"strength": strength},
    )


def negative_quartic_potential(strength: float = 1.0) -> Potential:
    """U = -c |q|^4, violates U >= 0; backward solutions escape in finite time."""
    pot = quartic_potential(-strength)
    return Potential("negative_quartic", pot.value, pot.gradient, {"strength": strength})


def harmonic_radial(omega: float = 1.0) -> RadialPotential:
    """U(r) = omega^2 r^2 / 2."""
    return RadialPotential(
        "harmonic_radial", lambda t, r: 0.5 * omega**2 * r * r, lambda t, r: omega**2 * r
    )


POTENTIALS: Dict[str, Callable[..., Potential]] = {
    "zero": zero_potential,
    "harmonic": harmonic_potential,
    "quartic": quartic_potential,
    "negative_quartic": negative_quartic_potential,
}


def make_potential(name: str, **params) -> Potential:
    if name not in POTENTIALS:
        raise KeyError(f"Unknown potential '{name}'. Known: {', '.join(sorted(POTENTIALS))}")
    return POTENTIALS[name](**params)


# --- parameters -----------------------------------------------------------------


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the catalog systems."""

    m: float = 1.0
    k: float = 0.0
    w1: float = 1.0
    w2: float = 2.0
    a: float = 0.0
    U: Optional[Potential] = None

    def __post_init__(self):
        if self.m <= 0:
            raise ParameterError(f"Mass must be > 0, got m={self.m}")
        if self.k < 0:
            raise ParameterError(f"Viscous coefficient must be >= 0, got k={self.k}")
        if self.w1 <= 0 or self.w2 <= 0:
            raise ParameterError(f"PU frequencies must be > 0, got w1={self.w1}, w2={self.w2}")

    @property
    def potential(self) -> Potential:
        return self.U if self.U is not None else zero_potential()

    def as_dict(self) -> Dict[str, float]:
        return {"m": self.m, "k": self.k, "w1": self.w1, "w2": self.w2, "a": self.a}


def _norm2(v):
    """Squared norm that works on float and dual-number arrays."""
    return np.sum(v * v)


# --- constructors ----------------------------------------------------------------


def make_harmonic(n: int = 1, m: float = 1.0, omega: float = 1.0) -> LagrangianSpec:
    """L = m|q'|^2/2 - m omega^2 |q|^2/2, closure q'' = -omega^2 q."""
    if m <= 0 or omega <= 0:
        raise ParameterError(f"Harmonic oscillator needs m > 0 and omega > 0, got m={m}, omega={omega}")

    def evaluate(t, jets):
        q, v = jets[0], jets[1]
        return 0.5 * m * _norm2(v) - 0.5 * m * omega**2 * _norm2(q)

    def closure(t, jets):
        return -(omega**2) * np.asarray(jets[0], dtype=float)

    return LagrangianSpec(1, n, evaluate, closure, autonomous=True, name="harmonic",
                          params={"m": m, "omega": omega})


def make_free_particle(n: int = 1, m: float = 1.0) -> LagrangianSpec:
    """L = m|q'|^2/2, straight-line motion."""
    if m <= 0:
        raise ParameterError(f"Mass must be > 0, got m={m}")

    def evaluate(t, jets):
        return 0.5 * m * _norm2(jets[1])

    def closure(t, jets):
        return np.zeros_like(np.asarray(jets[0], dtype=float))

    return LagrangianSpec(1, n, evaluate, closure, autonomous=True, name="free_particle",
                          params={"m": m})


def make_central_force(U_radial: Optional[RadialPotential] = None, m: float = 1.0) -> LagrangianSpec:
    """Planar L = m|q'|^2/2 - U(t, |q|) with closure q'' = -U'(t, r) q / (m r)."""
    if m <= 0:
        raise ParameterError(f"Mass must be > 0, got m={m}")
    radial = U_radial or harmonic_radial()

    def evaluate(t, jets):
        return 0.5 * m * _norm2(jets[1]) - radial.as_potential(t)(jets[0])

    def closure(t, jets):
        return -radial.as_potential(t).gradient(np.asarray(jets[0], dtype=float)) / m

    return LagrangianSpec(1, 2, evaluate, closure, autonomous=radial.autonomous,
                          name="central_force", params={"m": m})


def make_viscous(m: float = 1.0, k: float = 0.5, U: Optional[Potential] = None, n: int = 1) -> LagrangianSpec:
    """L = e^{kt/m}(m|q'|^2/2 - U(q)), Euler-Lagrange equation m q'' = -k q' - grad U."""
    params = SystemParams(m=m, k=k, a=k / m, U=U)
    potential = params.potential

    def evaluate(t, jets):
        return float(np.exp(k * t / m)) * (0.5 * m * _norm2(jets[1]) - potential(jets[0]))

    def closure(t, jets):
        q = np.asarray(jets[0], dtype=float)
        v = np.asarray(jets[1], dtype=float)
        return (-k * v - potential.gradient(q)) / m

    return LagrangianSpec(1, n, evaluate, closure, autonomous=(k == 0), name="viscous",
                          params={"m": m, "k": k})


def make_pais_uhlenbeck(w1: float = 1.0, w2: float = 2.0, n: int = 1) -> LagrangianSpec:
    """Order-2 PU Lagrangian, closure q'''' = -(w1^2 + w2^2) q'' - w1^2 w2^2 q."""
    SystemParams(w1=w1, w2=w2)
    W = w1**2 + w2**2
    P = w1**2 * w2**2

    def evaluate(t, jets):
        q, q1, q2 = jets[0], jets[1], jets[2]
        return 0.5 * _norm2(q2) - 0.5 * W * _norm2(q1) + 0.5 * P * _norm2(q)

    def closure(t, jets):
        q = np.asarray(jets[0], dtype=float)
        q2 = np.asarray(jets[2], dtype=float)
        return -W * q2 - P * q

    return LagrangianSpec(2, n, evaluate, closure, autonomous=True, name="pais_uhlenbeck",
                          params={"w1": w1, "w2": w2})


# --- Pais-Uhlenbeck closed forms ---------------------------------------------------------


def _pu_jets(state: JetState) -> Tuple[np.ndarray, ...]:
    if state.order < 3:
        raise ArityError(f"PU first integrals need jets up to q''', got order {state.order}")
    return state.jets[:4]


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def pu_k1(state: JetState, w1: float, w2: float) -> float:
    """2 K1 = |q''|^2 - (w1^2+w2^2)|q'|^2 - 2 q'''.q' - w1^2 w2^2 |q|^2"""
    q, q1, q2, q3 = _pu_jets(state)
    W, P = w1**2 + w2**2, w1**2 * w2**2
    return 0.5 * float(q2 @ q2 - W * (q1 @ q1) - 2 * (q3 @ q1) - P * (q @ q))


def pu_k2(state: JetState, w1: float, w2: float) -> float:
    q, q1, q2, q3 = _pu_jets(state)
    W, P = w1**2 + w2**2, w1**2 * w2**2
    twice = (
        (w1**4 + P + w2**4) * (q1 @ q1)
        + q3 @ q3
        + 2 * P * (q @ q2)
        + W * (2 * (q3 @ q1) + P * (q @ q))
    )
    return 0.5 * float(twice)


def pu_k3(state: JetState, w1: float, w2: float) -> float:
    """K3 = (w1^2+w2^2) det(q', q) + det(q', q'') + det(q''', q), planar only."""
    if state.dim != 2:
        raise DimensionError(f"K3 needs a planar PU state, got n={state.dim}")
    q, q1, q2, q3 = _pu_jets(state)
    return (w1**2 + w2**2) * _det(q1, q) + _det(q1, q2) + _det(q3, q)


def pu_rho(w1: float, w2: float) -> Tuple[float, float]:
    """rho_1 = -(w1^2+w2^2)/(w1^2 w2^2), rho_2 = 1/(w1^2 w2^2)."""
    SystemParams(w1=w1, w2=w2)
    P = w1**2 * w2**2
    return (-(w1**2 + w2**2) / P, 1.0 / P)


def pu_solution_jets(t: float, w1: float, w2: float, amplitudes: Sequence[float]) -> List[np.ndarray]:
    """
    Jets 0..3 of q(t) = A cos w1 t + B sin w1 t + C cos w2 t + D sin w2 t (scalar PU).
    """
    A, B, C, D = amplitudes
    jets = []
    for j in range(4):
        total = 0.0
        for w, (c, s) in ((w1, (A, B)), (w2, (C, D))):
            phase = w * t + j * np.pi / 2
            total += w**j * (c * np.cos(phase) + s * np.sin(phase))
        jets.append(np.array([total]))
    return jets


# --- registry ----------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogSystem:
    """A catalog entry: the Lagrangian plus the parameters it was built from."""

    spec: LagrangianSpec
    params: SystemParams
    description: str = ""


def _harmonic_entry(n: int = 1, m: float = 1.0, omega: float = 1.0) -> CatalogSystem:
    return CatalogSystem(make_harmonic(n, m, omega), SystemParams(m=m), "m|q'|^2/2 - m w^2 |q|^2/2")


def _free_entry(n: int = 1, m: float = 1.0) -> CatalogSystem:
    return CatalogSystem(make_free_particle(n, m), SystemParams(m=m), "m|q'|^2/2")


def _central_entry(m: float = 1.0, omega: float = 1.0) -> CatalogSystem:
    radial = harmonic_radial(omega)
    return CatalogSystem(
        make_central_force(radial, m),
        SystemParams(m=m, U=radial.as_potential(0.0)),
        "planar m|q'|^2/2 - U(|q|)",
    )


def _viscous_entry(
    m: float = 1.0, k: float = 0.5, potential: str = "harmonic", n: int = 1, **potential_params
) -> CatalogSystem:
    U = make_potential(potential, **potential_params)
    return CatalogSystem(make_viscous(m, k, U, n), SystemParams(m=m, k=k, U=U),
                         "e^{kt/m}(m|q'|^2/2 - U(q))")


def _pu_entry(w1: float = 1.0, w2: float = 2.0, n: int = 1) -> CatalogSystem:
    return CatalogSystem(make_pais_uhlenbeck(w1, w2, n), SystemParams(w1=w1, w2=w2),
                         "Pais-Uhlenbeck fourth-order oscillator")


SYSTEMS: Dict[str, Callable[..., CatalogSystem]] = {
    "harmonic": _harmonic_entry,
    "free_particle": _free_entry,
    "central_force": _central_entry,
    "viscous": _viscous_entry,
    "pais_uhlenbeck": _pu_entry,
}


def make_system(name: str, **params) -> CatalogSystem:
    """Build a catalog system by name; unknown keyword arguments raise TypeError."""
    if name not in SYSTEMS:
        raise KeyError(f"Unknown system '{name}'. Known: {', '.join(sorted(SYSTEMS))}")
    system = SYSTEMS[name](**params)
    logger.debug("Built system '%s' with %s", name, params)
    return system
