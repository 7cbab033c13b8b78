"""
Conservation checks over randomly drawn Lagrangians, families and initial
conditions. The long Pais-Uhlenbeck and orbit runs are marked slow.
"""

import numpy as np
import pytest

from conftest import TIGHT, jet_state
from nonlocal_constants import stencils
from nonlocal_constants.constants import (
    angular_momentum,
    evaluate_series,
    finite_series,
    k1_timeshift,
    k2_space,
    nonlocal_constant_2nd,
    nonlocal_constant_higher,
)
from nonlocal_constants.core import drift_report
from nonlocal_constants.families import polynomial_family, rotation_family, timeshift_family
from nonlocal_constants.integrate import IntegrationError, IntegratorConfig, attach_quadrature, integrate
from nonlocal_constants.lagrangian import (
    LagrangianSpec,
    el_residual,
    eval_lagrangian,
    partial_wrt_jet,
    residual_clearance,
)
from nonlocal_constants.systems import (
    RadialPotential,
    make_central_force,
    make_pais_uhlenbeck,
    pu_k1,
    pu_k2,
    pu_rho,
)

FAST_SEEDS = [0, 1, 2]

# Random polynomial Lagrangians: L_q'q' is kept away from zero on GRID_BOX and
# trajectories must stay inside MOTION_BOX.
GRID_BOX = 1.5
MOTION_BOX = 1.0
MIN_CURVATURE = 0.1
MAX_DRAWS = 500
BOXED = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10, max_steps=50_000, blowup_threshold=MOTION_BOX)


def _polynomial_partials(coefficients):
    """Coefficient grids of L_q, L_q'q and L_q'q' for L = sum c_ij q^i q'^j."""
    P = np.polynomial.polynomial
    L_v = P.polyder(coefficients, axis=1)
    return P.polyder(coefficients, axis=0), P.polyder(L_v, axis=0), P.polyder(L_v, axis=1)


def _curvature_keeps_sign(L_vv):
    grid = np.linspace(-GRID_BOX, GRID_BOX, 61)
    Q, V = np.meshgrid(grid, grid)
    values = np.polynomial.polynomial.polyval2d(Q, V, L_vv)
    return bool(np.all(values > MIN_CURVATURE) or np.all(values < -MIN_CURVATURE))


def random_polynomial_lagrangian(rng):
    """
    L = sum_{i+j<=4} c_ij q^i q'^j with c_ij uniform in [-1, 1].

    Draws whose L_q'q' gets close to zero (or changes sign) on the grid box are
    rejected. The motion is q'' = (L_q - L_q'q q') / L_q'q'.
    """
    powers = np.add.outer(np.arange(5), np.arange(5))
    for _ in range(MAX_DRAWS):
        coefficients = np.where(powers <= 4, rng.uniform(-1.0, 1.0, (5, 5)), 0.0)
        L_q, L_vq, L_vv = _polynomial_partials(coefficients)
        if _curvature_keeps_sign(L_vv):
            break
    else:
        pytest.fail(f"No polynomial Lagrangian with definite L_q'q' in {MAX_DRAWS} draws")

    def evaluate(t, jets):
        q, v = jets[0][0], jets[1][0]
        q_powers, v_powers = [1.0], [1.0]
        for _ in range(4):
            q_powers.append(q_powers[-1] * q)
            v_powers.append(v_powers[-1] * v)
        total = 0.0
        for i, j in zip(*np.nonzero(coefficients)):
            total = total + float(coefficients[i, j]) * q_powers[i] * v_powers[j]
        return total

    def closure(t, jets):
        q, v = float(jets[0][0]), float(jets[1][0])
        P = np.polynomial.polynomial
        return np.array([(P.polyval2d(q, v, L_q) - P.polyval2d(q, v, L_vq) * v) / P.polyval2d(q, v, L_vv)])

    return LagrangianSpec(1, 1, evaluate, closure, autonomous=True, name="random_polynomial",
                          params={"degree": 4})


def random_gauge_lagrangian(rng):
    """
    L = m q'^2/2 + b q q' - c2 q^2 - c4 q^4.

    The b term is a total derivative, so the motion is q'' = -(2 c2 q + 4 c4 q^3)/m
    while every partial of L still depends on b.
    """
    m, b, c2, c4 = (float(x) for x in rng.uniform([0.5, -1.0, 0.1, 0.0], [2.0, 1.0, 1.0, 0.5]))

    def evaluate(t, jets):
        q, v = jets[0], jets[1]
        return np.sum(0.5 * m * v * v + b * q * v - c2 * q * q - c4 * q * q * q * q)

    def closure(t, jets):
        q = np.asarray(jets[0], dtype=float)
        return -(2 * c2 * q + 4 * c4 * q**3) / m

    return LagrangianSpec(1, 1, evaluate, closure, autonomous=True, name="gauge",
                          params={"m": m, "b": b, "c2": c2, "c4": c4})


def random_bounded_motion(rng, t_end):
    """A random polynomial Lagrangian and one of its motions that stays in MOTION_BOX."""
    for _ in range(MAX_DRAWS):
        spec = random_polynomial_lagrangian(rng)
        initial = jet_state(0.0, *rng.uniform(-0.5, 0.5, 2))
        try:
            return spec, integrate(spec, initial, t_end, BOXED)
        except IntegrationError:
            continue
    pytest.fail(f"No bounded motion found in {MAX_DRAWS} draws")


def check_random_lagrangian(seed, t_end=5.0):
    """Drift of the polynomial-family constant for a random Lagrangian and motion."""
    rng = np.random.default_rng(seed)
    spec, traj = random_bounded_motion(rng, t_end)
    fam = polynomial_family(rng.uniform(-1.0, 1.0, size=(3, 1)))
    traj = attach_quadrature(traj, spec, fam)
    series = [(t, nonlocal_constant_2nd(spec, fam, traj, t).value) for t in traj.times]
    return drift_report(series)


def check_random_pu(seed, t_end):
    rng = np.random.default_rng(seed)
    spec = make_pais_uhlenbeck(1.0, 2.0)
    initial = jet_state(0.0, *rng.uniform(-1, 1, 4))
    traj = integrate(spec, initial, t_end, TIGHT)
    times = traj.interior_times(stencils.clearance(3) + 1e-9, count=60)
    k1 = finite_series(evaluate_series(lambda t: k1_timeshift(spec, traj, t), times))
    k2 = finite_series(evaluate_series(lambda t: k2_space(spec, pu_rho(1.0, 2.0), traj, t), times))
    reference = [(pu_k1(traj.sample(t), 1.0, 2.0), pu_k2(traj.sample(t), 1.0, 2.0)) for t in times]
    return traj, k1, k2, reference


def check_orbit(initial, t_end, radial=None):
    """Rotation-family constant and m det(q, q') along one central-force motion."""
    spec = make_central_force() if radial is None else make_central_force(radial)
    fam = rotation_family()
    traj = attach_quadrature(integrate(spec, initial, t_end, TIGHT), spec, fam)
    nonlocal_series = [(t, nonlocal_constant_2nd(spec, fam, traj, t).value) for t in traj.times]
    momentum_series = [(s.t, angular_momentum(s)) for s in traj.samples]
    return nonlocal_series, momentum_series


class TestRandomLagrangians:
    @pytest.mark.parametrize("seed", range(50))
    def test_polynomial_family_constant(self, seed):
        assert check_random_lagrangian(seed).max_rel_drift <= 1e-6

    def test_draws_have_definite_curvature(self):
        rng = np.random.default_rng(3)
        h = 1e-5
        for _ in range(5):
            spec = random_polynomial_lagrangian(rng)
            signs = set()
            for q, v in rng.uniform(-GRID_BOX, GRID_BOX, (20, 2)):
                ahead = partial_wrt_jet(spec, jet_state(0.0, q, v + h), 1)[0]
                behind = partial_wrt_jet(spec, jet_state(0.0, q, v - h), 1)[0]
                L_vv = (ahead - behind) / (2 * h)
                assert abs(L_vv) > 0.5 * MIN_CURVATURE
                signs.add(L_vv > 0)
            assert len(signs) == 1

    def test_closure_solves_euler_lagrange(self):
        spec, traj = random_bounded_motion(np.random.default_rng(5), 2.0)
        for t in traj.interior_times(residual_clearance(spec) + 1e-9, count=10):
            assert np.abs(el_residual(spec, traj, t)).max() < 1e-4

    def test_timeshift_on_gauge_lagrangian(self):
        """The gauge term changes the boundary term but not the conservation."""
        spec = random_gauge_lagrangian(np.random.default_rng(7))
        fam = timeshift_family()
        traj = attach_quadrature(integrate(spec, jet_state(0.0, 0.5, 0.0), 6.0, TIGHT), spec, fam)
        series = [(t, nonlocal_constant_higher(spec, fam, traj, t).value) for t in traj.times]
        assert drift_report(series).max_rel_drift < 1e-8


class TestRandomPaisUhlenbeck:
    def _assert_constant(self, k1, k2, reference):
        assert drift_report(k1).max_rel_drift <= 1e-6
        assert drift_report(k2).max_rel_drift <= 1e-6
        for (_, v1), (_, v2), (r1, r2) in zip(k1, k2, reference):
            assert v1 == pytest.approx(r1, abs=1e-6 * max(1.0, abs(r1)))
            assert v2 == pytest.approx(r2, abs=1e-6 * max(1.0, abs(r2)))

    @pytest.mark.parametrize("seed", FAST_SEEDS)
    def test_first_integrals(self, seed):
        _, k1, k2, reference = check_random_pu(seed, 10.0)
        self._assert_constant(k1, k2, reference)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_first_integrals_long_run(self, seed):
        _, k1, k2, reference = check_random_pu(200 + seed, 50.0)
        self._assert_constant(k1, k2, reference)


def _random_initial(seed):
    rng = np.random.default_rng(seed)
    return jet_state(0.0, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))


def _assert_matches_angular_momentum(nonlocal_series, momentum_series):
    assert drift_report(nonlocal_series).max_abs_drift <= 1e-8
    for (_, a), (_, b) in zip(nonlocal_series, momentum_series):
        assert a == pytest.approx(b, abs=1e-8)


class TestRandomOrbits:
    """U = r^2/2 unless stated: the rotation constant is m det(q, q')."""

    @pytest.mark.parametrize("seed", FAST_SEEDS)
    def test_rotation_constant_is_angular_momentum(self, seed):
        _assert_matches_angular_momentum(*check_orbit(_random_initial(seed), 10.0))

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [None] + list(range(300, 310)))
    def test_rotation_constant_long_run(self, seed):
        initial = jet_state(0.0, [1.0, 0.0], [0.0, 1.0]) if seed is None else _random_initial(seed)
        _assert_matches_angular_momentum(*check_orbit(initial, 50.0))

    @pytest.mark.parametrize("seed", FAST_SEEDS)
    def test_anharmonic_potential(self, seed):
        rng = np.random.default_rng(400 + seed)
        omega, quartic = float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.0, 0.3))
        radial = RadialPotential(
            "anharmonic",
            lambda t, r: 0.5 * omega**2 * r * r + quartic * r**4,
            lambda t, r: omega**2 * r + 4 * quartic * r**3,
        )
        nonlocal_series, momentum_series = check_orbit(_random_initial(seed), 10.0, radial)
        assert drift_report(nonlocal_series).max_rel_drift < 1e-6
        for (_, a), (_, b) in zip(nonlocal_series, momentum_series):
            assert a == pytest.approx(b, abs=1e-12)


def _trigonometric():
    """L = q0^2 q1' + sin(q1) q0'^2 + exp(-q0^2) q1'^3 on R^2."""

    def evaluate(t, jets):
        q, v = jets[0], jets[1]
        return q[0] * q[0] * v[1] + np.sin(q[1]) * v[0] * v[0] + np.exp(-q[0] * q[0]) * v[1] ** 3

    return LagrangianSpec(1, 2, evaluate, name="trigonometric")


class TestPartialsAgainstDifferences:
    def test_forward_mode_matches_central_differences(self):
        spec = _trigonometric()
        rng = np.random.default_rng(11)
        h = 1e-6
        for _ in range(100):
            jets = [rng.uniform(-1.5, 1.5, 2), rng.uniform(-1.5, 1.5, 2)]
            state = jet_state(0.0, *jets)
            for j in range(2):
                exact = partial_wrt_jet(spec, state, j)
                differences = []
                for c in range(2):
                    shifted = []
                    for sign in (1.0, -1.0):
                        moved = [v.copy() for v in jets]
                        moved[j][c] += sign * h
                        shifted.append(eval_lagrangian(spec, jet_state(0.0, *moved)))
                    differences.append((shifted[0] - shifted[1]) / (2 * h))
                np.testing.assert_allclose(exact, differences, rtol=1e-6, atol=1e-8)


class TestCatalogResiduals:
    @pytest.mark.parametrize(
        "spec_name, traj_name",
        [
            ("harmonic", "harmonic_traj"),
            ("pais_uhlenbeck", "pu_traj"),
            ("planar_pais_uhlenbeck", "planar_pu_traj"),
            ("central_force", "circular_orbit"),
            ("viscous", "viscous_backward"),
        ],
    )
    def test_euler_lagrange_residual_is_small(self, request, spec_name, traj_name):
        spec = request.getfixturevalue(spec_name)
        traj = request.getfixturevalue(traj_name)
        for t in traj.interior_times(residual_clearance(spec) + 1e-9, count=15):
            assert np.abs(el_residual(spec, traj, t)).max() < 1e-4
