"""
Shared fixtures. Integrations are expensive, so each reference trajectory is
computed once per test session.
"""

import numpy as np
import pytest

from nonlocal_constants.core import JetState, Trajectory
from nonlocal_constants.integrate import IntegratorConfig, integrate
from nonlocal_constants.systems import (
    harmonic_potential,
    make_central_force,
    make_free_particle,
    make_harmonic,
    make_pais_uhlenbeck,
    make_viscous,
)

TIGHT = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)


def analytic_trajectory(derivative, lo, hi, order, closure=None, n=401):
    """
    Trajectory on [lo, hi] from a closed-form solution.

    derivative(t, j) must return q^(j)(t) as an array; jets 0..order are
    stored and q^(order+1) feeds the dense output.
    """
    times = np.linspace(lo, hi, n)
    jets = np.array([[derivative(t, j) for j in range(order + 1)] for t in times])
    top = np.array([derivative(t, order + 1) for t in times])
    return Trajectory(t0=lo, times=times, jets=jets, top=top, closure=closure)


def cosine(w=1.0, amplitude=1.0):
    """q(t) = A cos(w t) in one dimension."""

    def derivative(t, j):
        return np.array([amplitude * w**j * np.cos(w * t + j * np.pi / 2)])

    return derivative


def circle(w=1.0):
    """q(t) = (cos wt, sin wt)."""

    def derivative(t, j):
        phase = w * t + j * np.pi / 2
        return np.array([w**j * np.cos(phase), w**j * np.sin(phase)])

    return derivative


def pu_mode_sum(amplitudes, w1=1.0, w2=2.0):
    """q = A cos w1 t + B sin w1 t + C cos w2 t + D sin w2 t."""
    A, B, C, D = amplitudes

    def derivative(t, j):
        total = 0.0
        for w, (c, s) in ((w1, (A, B)), (w2, (C, D))):
            phase = w * t + j * np.pi / 2
            total += w**j * (c * np.cos(phase) + s * np.sin(phase))
        return np.array([total])

    return derivative


def jet_state(t, *jets):
    return JetState(t, tuple(np.atleast_1d(np.asarray(j, dtype=float)) for j in jets))


@pytest.fixture(scope="session")
def harmonic():
    return make_harmonic()


@pytest.fixture(scope="session")
def pais_uhlenbeck():
    return make_pais_uhlenbeck(1.0, 2.0)


@pytest.fixture(scope="session")
def planar_pais_uhlenbeck():
    return make_pais_uhlenbeck(1.0, 2.0, n=2)


@pytest.fixture(scope="session")
def harmonic_traj(harmonic):
    """q = cos t integrated over one period."""
    return integrate(harmonic, jet_state(0.0, 1.0, 0.0), 2 * np.pi, TIGHT)


@pytest.fixture(scope="session")
def harmonic_exact(harmonic):
    """Closed-form q = cos t on [-1, 7]."""
    return analytic_trajectory(cosine(), -1.0, 7.0, 1, closure=harmonic.closure)


@pytest.fixture(scope="session")
def pu_traj(pais_uhlenbeck):
    """PU (1, 2) from (1, 0, -1, 0) over [0, 50]: q = cos t."""
    return integrate(pais_uhlenbeck, jet_state(0.0, 1.0, 0.0, -1.0, 0.0), 50.0, TIGHT)


@pytest.fixture(scope="session")
def pu_exact(pais_uhlenbeck):
    return analytic_trajectory(cosine(), -1.0, 9.0, 3, closure=pais_uhlenbeck.closure)


@pytest.fixture(scope="session")
def planar_pu_traj(planar_pais_uhlenbeck):
    """Planar PU from the circular motion (cos t, sin t) over [0, 50]."""
    initial = jet_state(0.0, [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0])
    return integrate(planar_pais_uhlenbeck, initial, 50.0, TIGHT)


@pytest.fixture(scope="session")
def central_force():
    return make_central_force()


@pytest.fixture(scope="session")
def circular_orbit(central_force):
    return integrate(central_force, jet_state(0.0, [1.0, 0.0], [0.0, 1.0]), 10.0, TIGHT)


@pytest.fixture(scope="session")
def free_particle():
    return make_free_particle()


@pytest.fixture(scope="session")
def viscous():
    return make_viscous(1.0, 0.5, harmonic_potential(), n=1)


@pytest.fixture(scope="session")
def viscous_backward(viscous):
    """m=1, k=0.5, U=|q|^2/2 integrated backward over [-20, 0]."""
    return integrate(viscous, jet_state(0.0, 1.0, 0.5), -20.0, TIGHT)
