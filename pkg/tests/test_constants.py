import numpy as np
import pytest

from conftest import analytic_trajectory, jet_state, pu_mode_sum
from nonlocal_constants import stencils
from nonlocal_constants.constants import (
    NonlocalSample,
    RhoParams,
    angular_momentum,
    attach_viscous_quadrature,
    boundary_term,
    check_rho_condition,
    compute_F,
    energy,
    evaluate_series,
    finite_series,
    k1_timeshift,
    k2_space,
    k3_mu,
    max_time_derivative,
    nonlocal_constant_2nd,
    nonlocal_constant_higher,
    rho_residuals,
    viscous_constant,
)
from nonlocal_constants.core import (
    ArityError,
    DimensionError,
    HypothesisError,
    OrderError,
    ParameterError,
    SpanError,
    drift_report,
)
from nonlocal_constants.families import polynomial_family, rotation_family, timeshift_family
from nonlocal_constants.integrate import attach_quadrature
from nonlocal_constants.lagrangian import eval_lagrangian
from nonlocal_constants.systems import harmonic_potential, make_viscous, pu_k1, pu_k2, pu_k3, pu_rho

PU_RHO = pu_rho(1.0, 2.0)


def _interior(traj, order, count=12):
    return traj.interior_times(stencils.clearance(order) + 1e-9, count=count)


@pytest.fixture(scope="module")
def harmonic_timeshift(harmonic, harmonic_traj):
    return attach_quadrature(harmonic_traj, harmonic, timeshift_family())


@pytest.fixture(scope="module")
def pu_timeshift(pais_uhlenbeck, pu_traj):
    return attach_quadrature(pu_traj, pais_uhlenbeck, timeshift_family())


class TestTypes:
    def test_nonlocal_sample_value(self):
        assert NonlocalSample(1.0, 3.0, 0.5).value == 2.5

    def test_rho_params(self):
        assert len(RhoParams((1, 2))) == 2
        assert RhoParams([1, 2]).rho == (1.0, 2.0)
        with pytest.raises(ArityError):
            RhoParams(())
        with pytest.raises(ParameterError):
            RhoParams((np.nan,))


class TestFirstOrderNonlocal:
    def test_timeshift_value_is_energy_plus_initial_lagrangian(self, harmonic, harmonic_timeshift):
        fam = timeshift_family()
        expected = 0.5 + eval_lagrangian(harmonic, harmonic_timeshift.sample(0.0))
        for t in harmonic_timeshift.times[::7]:
            sample = nonlocal_constant_2nd(harmonic, fam, harmonic_timeshift, t)
            assert sample.value == pytest.approx(expected, abs=1e-8)

    def test_generic_evaluator_agrees_exactly(self, harmonic, harmonic_timeshift):
        fam = timeshift_family()
        for t in harmonic_timeshift.times[::11]:
            first = nonlocal_constant_2nd(harmonic, fam, harmonic_timeshift, t)
            generic = nonlocal_constant_higher(harmonic, fam, harmonic_timeshift, t)
            assert generic.value == first.value

    def test_between_nodes(self, harmonic, harmonic_timeshift):
        fam = timeshift_family()
        a = nonlocal_constant_2nd(harmonic, fam, harmonic_timeshift, 0.0).value
        b = nonlocal_constant_2nd(harmonic, fam, harmonic_timeshift, 1.2345).value
        assert b == pytest.approx(a, abs=1e-8)

    def test_rejects_higher_order(self, pais_uhlenbeck, pu_timeshift):
        with pytest.raises(OrderError):
            nonlocal_constant_2nd(pais_uhlenbeck, timeshift_family(), pu_timeshift, 1.0)

    def test_rotation_gives_angular_momentum(self, central_force, circular_orbit):
        fam = rotation_family()
        traj = attach_quadrature(circular_orbit, central_force, fam)
        for t in (0.0, 3.3, 10.0):
            assert nonlocal_constant_2nd(central_force, fam, traj, t).value == pytest.approx(1.0, abs=1e-8)
            assert angular_momentum(traj.sample(t)) == pytest.approx(1.0, abs=1e-8)


class TestEnergy:
    def test_harmonic_energy(self, harmonic):
        assert energy(harmonic, jet_state(0.0, 1.0, 2.0)) == pytest.approx(2.5)

    def test_conserved_along_trajectory(self, harmonic, harmonic_traj):
        values = [energy(harmonic, s) for s in harmonic_traj.samples]
        assert max(values) - min(values) < 1e-8

    def test_k1_equals_energy_for_first_order(self, harmonic, harmonic_traj):
        for t in harmonic_traj.times[::5]:
            assert k1_timeshift(harmonic, harmonic_traj, t) == energy(harmonic, harmonic_traj.sample(t))

    def test_energy_rejects_time_dependent(self):
        with pytest.raises(HypothesisError):
            energy(make_viscous(k=0.5), jet_state(0.0, 1.0, 0.0))

    def test_energy_rejects_higher_order(self, pais_uhlenbeck):
        with pytest.raises(OrderError):
            energy(pais_uhlenbeck, jet_state(0.0, 1.0, 0.0, -1.0, 0.0))

    def test_angular_momentum_needs_plane(self):
        with pytest.raises(DimensionError):
            angular_momentum(jet_state(0.0, 1.0, 1.0))
        assert angular_momentum(jet_state(0.0, [2.0, 0.0], [0.0, 3.0]), m=0.5) == pytest.approx(3.0)


class TestHigherOrderTimeshift:
    def test_k1_matches_closed_form(self, pais_uhlenbeck, pu_traj):
        for t in _interior(pu_traj, 1):
            assert k1_timeshift(pais_uhlenbeck, pu_traj, t) == pytest.approx(-1.5, abs=1e-7)
            assert pu_k1(pu_traj.sample(t), 1.0, 2.0) == pytest.approx(-1.5, abs=1e-7)

    def test_nonlocal_value_is_k1_plus_initial_lagrangian(self, pais_uhlenbeck, pu_timeshift):
        fam = timeshift_family()
        for t in _interior(pu_timeshift, 1):
            sample = nonlocal_constant_higher(pais_uhlenbeck, fam, pu_timeshift, t)
            assert sample.value == pytest.approx(-1.5 + 2.5, abs=1e-7)

    def test_boundary_needs_stencil_room(self, pais_uhlenbeck, pu_timeshift):
        with pytest.raises(SpanError):
            boundary_term(pais_uhlenbeck, timeshift_family(), pu_timeshift, pu_timeshift.t_end)

    def test_k1_rejects_time_dependent(self, harmonic_traj):
        with pytest.raises(HypothesisError):
            k1_timeshift(make_viscous(k=0.5), harmonic_traj, 1.0)


class TestRhoCondition:
    def test_pu_satisfies_rho(self, pais_uhlenbeck, pu_exact):
        assert check_rho_condition(pais_uhlenbeck, PU_RHO, pu_exact) < 1e-6

    @pytest.mark.parametrize("rho", [(1.0, 1.0), (-1.15, 0.25)])
    def test_wrong_rho_fails(self, pais_uhlenbeck, pu_exact, rho):
        assert check_rho_condition(pais_uhlenbeck, rho, pu_exact) >= 0.1

    def test_residual_count(self, pais_uhlenbeck, pu_exact):
        assert len(rho_residuals(pais_uhlenbeck, PU_RHO, pu_exact, 4.0)) == 2
        with pytest.raises(ArityError):
            rho_residuals(pais_uhlenbeck, (1.0,), pu_exact, 4.0)

    def test_F_index_range(self, pais_uhlenbeck, pu_exact):
        with pytest.raises(IndexError):
            compute_F(pais_uhlenbeck, PU_RHO, pu_exact, 4.0, 5)

    def test_F_values(self, pais_uhlenbeck, pu_exact):
        t = 4.0
        # F^(l) = d^{l-1}/dt^{l-1} (P q), P = 4
        assert compute_F(pais_uhlenbeck, PU_RHO, pu_exact, t, 1)[0] == pytest.approx(4 * np.cos(t), abs=1e-9)
        assert compute_F(pais_uhlenbeck, PU_RHO, pu_exact, t, 4)[0] == pytest.approx(4 * np.sin(t), abs=1e-6)


class TestK2:
    def test_cosine(self, pais_uhlenbeck, pu_exact):
        for t in _interior(pu_exact, 3, count=6):
            assert k2_space(pais_uhlenbeck, PU_RHO, pu_exact, t) == pytest.approx(6.0, rel=1e-6)

    def test_integrated_trajectory(self, pais_uhlenbeck, pu_traj):
        for t in _interior(pu_traj, 3, count=6):
            assert k2_space(pais_uhlenbeck, PU_RHO, pu_traj, t) == pytest.approx(6.0, rel=1e-6)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_matches_closed_form_on_random_solutions(self, pais_uhlenbeck, seed):
        amplitudes = np.random.default_rng(seed).uniform(-1, 1, 4)
        traj = analytic_trajectory(pu_mode_sum(amplitudes), 0.0, 3.0, 3, closure=pais_uhlenbeck.closure, n=301)
        t = 1.5
        expected = pu_k2(traj.sample(t), 1.0, 2.0)
        assert k2_space(pais_uhlenbeck, PU_RHO, traj, t) == pytest.approx(expected, abs=1e-6 * max(1.0, abs(expected)))

    def test_strict_mode_rejects_wrong_rho(self, pais_uhlenbeck, pu_exact):
        with pytest.raises(HypothesisError, match="rho-condition"):
            k2_space(pais_uhlenbeck, (1.0, 1.0), pu_exact, 4.0)

    def test_non_strict_mode_evaluates_anyway(self, pais_uhlenbeck, pu_exact):
        value = k2_space(pais_uhlenbeck, (1.0, 1.0), pu_exact, 4.0, strict=False)
        assert np.isfinite(value)

    def test_rho_length(self, pais_uhlenbeck, pu_exact):
        with pytest.raises(ArityError):
            k2_space(pais_uhlenbeck, (1.0, 1.0, 1.0), pu_exact, 4.0)


class TestK3:
    def test_planar_pu_rotation(self, planar_pais_uhlenbeck, planar_pu_traj):
        fam = rotation_family(mu=0.0)
        for t in _interior(planar_pu_traj, 1):
            value = k3_mu(planar_pais_uhlenbeck, fam, planar_pu_traj, t)
            assert value == pytest.approx(-3.0, abs=1e-7)
            assert value == pytest.approx(pu_k3(planar_pu_traj.sample(t), 1.0, 2.0), abs=1e-7)

    def test_missing_mu(self, planar_pais_uhlenbeck, planar_pu_traj):
        with pytest.raises(HypothesisError):
            k3_mu(planar_pais_uhlenbeck, rotation_family(mu=None), planar_pu_traj, 5.0)

    def test_strict_mode_checks_integrand(self, harmonic, harmonic_traj):
        # dL/dt of the time-shift family is sin(2t), not a constant
        with pytest.raises(HypothesisError, match="deviates"):
            k3_mu(harmonic, timeshift_family(mu=0.0), harmonic_traj, 1.0)

    def test_constant_nonzero_mu(self, free_particle):
        """L = |q'|^2/2 with q_lambda = q + lambda t: integrand q' . 1 is the constant velocity."""
        fam = polynomial_family([[0.0], [1.0]], mu=3.0)
        traj = analytic_trajectory(lambda t, j: np.array([[2.0 + 3.0 * t, 3.0, 0.0][j]]), 0.0, 4.0, 1,
                                   closure=free_particle.closure)
        # boundary q' . t = 3t, so K3 = 3t - 3t = 0
        for t in (0.5, 2.0, 3.5):
            assert k3_mu(free_particle, fam, traj, t) == pytest.approx(0.0, abs=1e-10)


class TestSeriesHelpers:
    def test_evaluate_series_marks_span_errors(self):
        def fn(t):
            if t > 1.0:
                raise SpanError("too far")
            return 2.0 * t

        series = evaluate_series(fn, [0.0, 1.0, 2.0])
        assert series[:2] == [(0.0, 0.0), (1.0, 2.0)]
        assert np.isnan(series[2][1])
        assert finite_series(series) == [(0.0, 0.0), (1.0, 2.0)]

    def test_other_errors_propagate(self):
        def fn(t):
            raise HypothesisError("no")

        with pytest.raises(HypothesisError):
            evaluate_series(fn, [0.0])

    def test_max_time_derivative(self):
        t = np.linspace(0, 1, 101)
        assert max_time_derivative(list(zip(t, 3 * t))) == pytest.approx(3.0)
        with pytest.raises(ArityError):
            max_time_derivative([(0.0, 1.0), (1.0, float("nan")), (2.0, 1.0)])


class TestPaisUhlenbeckWindow:
    """K1, K2 and planar K3 for PU (1, 2) over the whole window [0, 50]."""

    SAMPLES = 100

    def _check(self, series, expected, oracle):
        values = [v for _, v in series]
        assert len(values) == self.SAMPLES
        assert values == pytest.approx([expected] * self.SAMPLES, rel=1e-6)
        assert values == pytest.approx(oracle, rel=1e-6)
        assert drift_report(series).max_rel_drift <= 1e-6

    def test_k1(self, pais_uhlenbeck, pu_traj):
        times = _interior(pu_traj, 1, count=self.SAMPLES)
        series = [(t, k1_timeshift(pais_uhlenbeck, pu_traj, t)) for t in times]
        self._check(series, -1.5, [pu_k1(pu_traj.sample(t), 1.0, 2.0) for t in times])

    def test_k2(self, pais_uhlenbeck, pu_traj):
        times = _interior(pu_traj, 3, count=self.SAMPLES)
        series = [(t, k2_space(pais_uhlenbeck, PU_RHO, pu_traj, t)) for t in times]
        self._check(series, 6.0, [pu_k2(pu_traj.sample(t), 1.0, 2.0) for t in times])

    def test_planar_k3(self, planar_pais_uhlenbeck, planar_pu_traj):
        fam = rotation_family(mu=0.0)
        times = _interior(planar_pu_traj, 1, count=self.SAMPLES)
        series = [(t, k3_mu(planar_pais_uhlenbeck, fam, planar_pu_traj, t)) for t in times]
        self._check(series, -3.0, [pu_k3(planar_pu_traj.sample(t), 1.0, 2.0) for t in times])


class TestRateOfChange:
    """Every constant is flat in time: |dC/dt| <= 1e-5 on an even grid."""

    def test_energy(self, harmonic, harmonic_traj):
        times = harmonic_traj.interior_times(1e-9, count=100)
        series = [(t, energy(harmonic, harmonic_traj.sample(t))) for t in times]
        assert max_time_derivative(series) <= 1e-5

    def test_first_order_nonlocal(self, harmonic, harmonic_timeshift):
        fam = timeshift_family()
        times = harmonic_timeshift.interior_times(1e-9, count=100)
        series = [(t, nonlocal_constant_2nd(harmonic, fam, harmonic_timeshift, t).value) for t in times]
        assert max_time_derivative(series) <= 1e-5

    def test_pais_uhlenbeck(self, pais_uhlenbeck, planar_pais_uhlenbeck, pu_traj, planar_pu_traj):
        times = _interior(pu_traj, 3, count=100)
        k1 = [(t, k1_timeshift(pais_uhlenbeck, pu_traj, t)) for t in times]
        k2 = [(t, k2_space(pais_uhlenbeck, PU_RHO, pu_traj, t)) for t in times]
        fam = rotation_family(mu=0.0)
        k3 = [(t, k3_mu(planar_pais_uhlenbeck, fam, planar_pu_traj, t)) for t in times]
        for series in (k1, k2, k3):
            assert max_time_derivative(series) <= 1e-5

    def test_viscous(self, viscous_backward):
        U = harmonic_potential()
        traj = attach_viscous_quadrature(viscous_backward, 1.0, 0.5, U)
        times = traj.interior_times(1e-9, count=100)
        series = [(t, viscous_constant(1.0, 0.5, U, traj, t)) for t in times]
        assert max_time_derivative(series) <= 1e-5
