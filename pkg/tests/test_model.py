import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import intervalhawkes as ih
from intervalhawkes.errors import (
    InvalidInput,
    NegativeElapsedTime,
    NonConstantBaseline,
    NonExponentialKernel,
    NonPositiveParameter,
    ReversedInterval,
    TieViolation,
    TimeReversal,
    UnstableBranching,
)


def two_by_two_radius(eta):
    """Closed-form spectral radius of a 2x2 matrix (oracle)."""
    a, b = eta[0]
    c, d = eta[1]
    tr, det = a + d, a * d - b * c
    disc = tr * tr - 4 * det
    if disc >= 0:
        roots = [(tr + math.sqrt(disc)) / 2, (tr - math.sqrt(disc)) / 2]
        return max(abs(r) for r in roots)
    return math.sqrt(det)


class TestSpectralRadius:
    def test_matches_closed_form(self):
        eta = [[0.6, 0.3], [0.25, 0.5]]
        assert ih.spectral_radius(eta) == pytest.approx(two_by_two_radius(eta), abs=1e-8)
        assert ih.spectral_radius(eta) == pytest.approx(0.8283882181, abs=1e-8)

    def test_zero_matrix(self):
        assert ih.spectral_radius([[0.0, 0.0], [0.0, 0.0]]) == 0.0

    def test_critical_matrix(self):
        eta = [[0.6, 0.4], [0.4, 0.6]]
        assert ih.spectral_radius(eta) == pytest.approx(1.0, abs=1e-8)

    def test_periodic_matrix(self):
        assert ih.spectral_radius([[0.0, 0.9], [0.9, 0.0]]) == pytest.approx(0.9, abs=1e-8)


class TestValidate:
    def test_ok_both_modes(self, recovery_model):
        spec, theta = recovery_model
        for mode in ("finite_horizon", "stationary"):
            res = ih.validate(spec, theta, mode)
            assert res.ok and not res.warnings
            assert res.spectral_radius == pytest.approx(0.8283882181, abs=1e-8)

    def test_critical_eta_warns_then_errors(self, verification_exp_model):
        spec, theta = verification_exp_model
        res = ih.validate(spec, theta, "finite_horizon")
        assert res.ok and len(res.warnings) == 1
        with pytest.raises(UnstableBranching):
            ih.validate(spec, theta, "stationary")

    def test_negative_eta(self):
        spec, theta = ih.exponential_model([1.0], [[-0.2]], [[1.0]])
        with pytest.raises(NonPositiveParameter):
            ih.validate(spec, theta)

    def test_nonpositive_kernel_parameter(self):
        spec, theta = ih.exponential_model([1.0], [[0.2]], [[0.0]])
        with pytest.raises(NonPositiveParameter):
            ih.validate(spec, theta)

    def test_tie_violation(self):
        spec, _ = ih.exponential_model([1.0, 1.0], np.full((2, 2), 0.2),
                                       np.full((2, 2), 0.5), tie_rows=True)
        theta = ih.ParameterVector(
            nu=((1.0,), (1.0,)),
            eta=((0.2, 0.2), (0.2, 0.2)),
            kernel_params=(((0.5,), (0.6,)), ((0.5,), (0.5,))),
        )
        with pytest.raises(TieViolation):
            ih.validate(spec, theta)

    def test_shape_mismatch(self):
        spec, _ = ih.exponential_model([1.0, 1.0], np.full((2, 2), 0.2),
                                       np.full((2, 2), 0.5))
        bad = ih.ParameterVector(nu=((1.0,),), eta=((0.2,),), kernel_params=(((0.5,),),))
        with pytest.raises(InvalidInput):
            ih.validate(spec, bad)

    def test_unknown_mode(self, recovery_model):
        spec, theta = recovery_model
        with pytest.raises(InvalidInput):
            ih.validate(spec, theta, "bogus")


class TestStationaryMeanRates:
    def test_hand_inverted_oracle(self, recovery_model):
        _, theta = recovery_model
        # (I - eta)^-1 nu worked out by hand for the 2x2 case
        assert np.allclose(ih.stationary_mean_rates(theta), [5.6, 4.8], atol=1e-12)

    def test_identity_solve(self):
        _, theta = ih.exponential_model([1.0, 1.0], np.zeros((2, 2)), np.ones((2, 2)))
        assert np.allclose(ih.stationary_mean_rates(theta), [1.0, 1.0])

    def test_forward_substitution(self):
        _, theta = ih.exponential_model([2.0, 0.0], [[0.0, 0.0], [0.5, 0.0]],
                                        np.ones((2, 2)))
        assert np.allclose(ih.stationary_mean_rates(theta), [2.0, 1.0], atol=1e-9)

    def test_unstable(self, verification_exp_model):
        _, theta = verification_exp_model
        with pytest.raises(UnstableBranching):
            ih.stationary_mean_rates(theta)

    def test_spline_rejected(self):
        spec = ih.ModelSpec(
            baselines=(ih.SplineBaseline(knots=(1.0,), horizon=2.0),),
            kernels=(("exponential",),),
        )
        theta = ih.ParameterVector(nu=((1.0, 1.0, 1.0),), eta=((0.1,),),
                                   kernel_params=(((1.0,),),))
        with pytest.raises(NonConstantBaseline):
            ih.stationary_mean_rates(theta)


class TestIntensity:
    def test_empty_history_is_baseline(self):
        spec, theta = ih.exponential_model([0.8], [[0.6]], [[0.5]])
        empty = ih.EventSequence(times=[], types=[], horizon=1.0)
        assert ih.intensity(theta, spec, empty, 1, 0.7) == 0.8

    def test_exponential_formula(self):
        spec, theta = ih.exponential_model([0.8], [[0.6]], [[0.5]])
        hist = ih.EventSequence(times=[1.0], types=[1], horizon=2.0)
        expected = 0.8 + (0.6 / 0.5) * math.exp(-1.0)
        assert ih.intensity(theta, spec, hist, 1, 1.5) == pytest.approx(expected, rel=1e-12)

    def test_gamma_formula(self):
        spec, theta = ih.gamma_model([1.0], [[0.4]], [[2.0]], [[1.0]])
        hist = ih.EventSequence(times=[1.0], types=[1], horizon=4.0)
        expected = 1.0 + 0.4 * (2.0 * math.exp(-2.0))
        assert ih.intensity(theta, spec, hist, 1, 3.0) == pytest.approx(expected, rel=1e-12)

    def test_only_strictly_earlier_events_count(self):
        spec, theta = ih.exponential_model([0.8], [[0.6]], [[0.5]])
        hist = ih.EventSequence(times=[1.0], types=[1], horizon=2.0)
        assert ih.intensity(theta, spec, hist, 1, 1.0) == 0.8


class TestExcitationAntiderivative:
    def test_zero_at_origin(self, verification_gamma_model):
        specg, thetag = verification_gamma_model
        spece, thetae = ih.exponential_model([1.0], [[0.6]], [[0.5]])
        assert ih.excitation_antiderivative(thetag, specg, 1, 2, 0.0) == 0.0
        assert ih.excitation_antiderivative(thetae, spece, 1, 1, 0.0) == 0.0

    def test_exponential_value(self):
        spec, theta = ih.exponential_model([1.0], [[0.6]], [[0.5]])
        expected = 0.6 * (1 - math.exp(-1.0))
        assert ih.excitation_antiderivative(theta, spec, 1, 1, 0.5) == pytest.approx(
            expected, rel=1e-12)

    def test_gamma_saturates_at_eta(self):
        spec, theta = ih.gamma_model([1.0], [[0.4]], [[2.0]], [[1.0]])
        assert ih.excitation_antiderivative(theta, spec, 1, 1, np.inf) == pytest.approx(0.4)

    def test_negative_elapsed_time(self):
        spec, theta = ih.exponential_model([1.0], [[0.6]], [[0.5]])
        with pytest.raises(NegativeElapsedTime):
            ih.excitation_antiderivative(theta, spec, 1, 1, -0.1)

    @pytest.mark.parametrize("model", ["exp", "gamma"])
    def test_monotone_bounded_and_derivative(self, model):
        if model == "exp":
            spec, theta = ih.exponential_model([1.0], [[0.6]], [[0.7]])
        else:
            spec, theta = ih.gamma_model([1.0], [[0.6]], [[2.5]], [[0.8]])
        grid = np.linspace(0.01, 8.0, 60)
        g = ih.excitation_antiderivative(theta, spec, 1, 1, grid)
        assert np.all(np.diff(g) >= 0)
        assert np.all(g <= 0.6 + 1e-12)
        # d/ds G(s) = eta * h(s) by central differences
        h = 1e-5
        deriv = (ih.excitation_antiderivative(theta, spec, 1, 1, grid + h)
                 - ih.excitation_antiderivative(theta, spec, 1, 1, grid - h)) / (2 * h)
        hist = ih.EventSequence(times=[1e-9], types=[1], horizon=20.0)
        pdf = np.array([ih.intensity(theta, spec, hist, 1, s) - 1.0 for s in grid]) / 0.6
        assert np.allclose(deriv, 0.6 * pdf, rtol=1e-5, atol=1e-8)


class TestBaselineIntegral:
    def test_constant_rectangle(self):
        spec, theta = ih.exponential_model([0.8], [[0.1]], [[1.0]])
        assert ih.baseline_integral(theta, spec, 1, 3.0, 7.0) == pytest.approx(3.2)

    def test_empty_interval(self):
        spec, theta = ih.exponential_model([0.8], [[0.1]], [[1.0]])
        assert ih.baseline_integral(theta, spec, 1, 2.0, 2.0) == 0.0

    def test_trapezoid_oracle(self):
        # piecewise-linear baseline from (0, 1) to (2, 3): area is 4
        spec = ih.ModelSpec(baselines=(ih.SplineBaseline(knots=(), horizon=2.0),),
                            kernels=(("exponential",),))
        theta = ih.ParameterVector(nu=((1.0, 3.0),), eta=((0.0,),),
                                   kernel_params=(((1.0,),),))
        assert ih.baseline_integral(theta, spec, 1, 0.0, 2.0) == pytest.approx(4.0)
        # sub-interval of a kinked baseline, trapezoid on each linear piece
        spec2 = ih.ModelSpec(baselines=(ih.SplineBaseline(knots=(1.0,), horizon=2.0),),
                             kernels=(("exponential",),))
        theta2 = ih.ParameterVector(nu=((0.0, 2.0, 0.0),), eta=((0.0,),),
                                    kernel_params=(((1.0,),),))
        assert ih.baseline_integral(theta2, spec2, 1, 0.5, 1.5) == pytest.approx(1.5)

    def test_reversed(self):
        spec, theta = ih.exponential_model([0.8], [[0.1]], [[1.0]])
        with pytest.raises(ReversedInterval):
            ih.baseline_integral(theta, spec, 1, 3.0, 2.0)


class TestEpsilonMatrix:
    def test_zero_state_stays_zero(self):
        _, theta = ih.exponential_model([1.0], [[0.6]], [[0.5]])
        state = ih.EpsilonMatrix.zeros(1, anchor=0.0)
        out = ih.epsilon_advance(state, theta, 5.0)
        assert out.eps[0, 0] == 0.0 and out.anchor == 5.0

    def test_scalar_decay(self):
        _, theta = ih.exponential_model([1.0], [[0.6]], [[0.5]])
        state = ih.EpsilonMatrix(eps=[[1.2]], anchor=1.0)
        out = ih.epsilon_advance(state, theta, 1.5)
        assert out.eps[0, 0] == pytest.approx(1.2 * math.exp(-1.0), rel=1e-12)

    def test_jump_then_decay(self):
        _, theta = ih.exponential_model([1.0], [[0.6]], [[0.5]])
        state = ih.EpsilonMatrix.zeros(1, anchor=0.0)
        out = ih.epsilon_advance(state, theta, 1.0, event=(0.5, 1))
        expected = (0.6 / 0.5) * math.exp(-0.5 / 0.5)
        assert out.eps[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_time_reversal(self):
        _, theta = ih.exponential_model([1.0], [[0.6]], [[0.5]])
        state = ih.EpsilonMatrix(eps=[[1.0]], anchor=2.0)
        with pytest.raises(TimeReversal):
            ih.epsilon_advance(state, theta, 1.0)

    def test_gamma_kernel_rejected(self):
        _, theta = ih.gamma_model([1.0], [[0.4]], [[2.0]], [[1.0]])
        state = ih.EpsilonMatrix.zeros(1)
        with pytest.raises(NonExponentialKernel):
            ih.epsilon_advance(state, theta, 1.0)

    def test_recursion_matches_direct_sum(self, recovery_model):
        spec, theta = recovery_model
        rng = np.random.default_rng(12)
        times = np.sort(rng.uniform(0.0, 20.0, 50))
        types = rng.integers(1, 3, 50)
        hist = ih.EventSequence(times=times, types=types, horizon=25.0)
        for t in rng.uniform(0.0, 25.0, 20):
            state = ih.epsilon_from_history(theta, hist, min(t, 25.0))
            probe = max(t, state.anchor)
            direct = ih.intensity(theta, spec, hist, 1, probe + 1e-9)
            via_state = ih.epsilon_intensity(state, theta, spec, 1, probe + 1e-9)
            assert abs(direct - via_state) <= 1e-10 * (1.0 + abs(direct))


class TestFlatVector:
    def test_tied_layout_and_labels(self, recovery_model):
        spec, theta = recovery_model
        assert spec.flat_labels() == [
            "nu_1", "nu_2", "eta_1_1", "eta_1_2", "eta_2_1", "eta_2_2",
            "beta_1", "beta_2",
        ]
        np.testing.assert_array_equal(
            theta.to_flat(spec), [0.8, 1.0, 0.6, 0.3, 0.25, 0.5, 0.5, 0.75])

    def test_gamma_untied_layout(self, verification_gamma_model):
        spec, theta = verification_gamma_model
        labels = spec.flat_labels()
        assert labels[:2] == ["nu_1", "nu_2"]
        assert labels[6:10] == ["kappa_1_1", "delta_1_1", "kappa_1_2", "delta_1_2"]
        assert len(labels) == 2 + 4 + 8

    @given(st.lists(st.floats(0.01, 9.0), min_size=8, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_bit_exact(self, values):
        spec, _ = ih.exponential_model([1.0, 1.0], np.full((2, 2), 0.1),
                                       np.full((2, 2), 0.5), tie_rows=True)
        flat = np.array(values)
        theta = ih.ParameterVector.from_flat(spec, flat)
        again = theta.to_flat(spec)
        assert np.array_equal(flat, again)
        # tie groups survive the round trip
        full = theta.full_values(spec)
        for group in spec.ties:
            assert len({full[i] for i in group}) == 1

    def test_wrong_length_rejected(self, recovery_model):
        spec, _ = recovery_model
        with pytest.raises(InvalidInput):
            ih.ParameterVector.from_flat(spec, np.ones(9))


class TestJsonRoundTrip:
    def test_model_spec(self, verification_gamma_model):
        spec, _ = verification_gamma_model
        assert ih.ModelSpec.from_dict(spec.to_dict()) == spec

    def test_spline_spec(self):
        spec = ih.ModelSpec(
            baselines=(ih.SplineBaseline(knots=(290.0, 798.0), horizon=1276.0),
                       ih.ConstantBaseline()),
            kernels=(("exponential", "exponential"), ("exponential", "exponential")),
        )
        assert ih.ModelSpec.from_dict(spec.to_dict()) == spec

    def test_parameters(self, verification_gamma_model):
        _, theta = verification_gamma_model
        assert ih.ParameterVector.from_dict(theta.to_dict()) == theta


class TestEventSequence:
    def test_rejects_unsorted(self):
        with pytest.raises(InvalidInput):
            ih.EventSequence(times=[2.0, 1.0], types=[1, 1], horizon=3.0)

    def test_rejects_beyond_horizon(self):
        with pytest.raises(InvalidInput):
            ih.EventSequence(times=[2.0], types=[1], horizon=1.0)

    def test_boundary_event_allowed(self):
        path = ih.EventSequence(times=[1.0], types=[1], horizon=1.0)
        assert path.n_events == 1

    def test_immutable(self):
        path = ih.EventSequence(times=[0.5], types=[1], horizon=1.0)
        with pytest.raises(ValueError):
            path.times[0] = 0.9


class TestModelSpecValidation:
    def test_knots_must_be_interior(self):
        with pytest.raises(InvalidInput):
            ih.SplineBaseline(knots=(0.0,), horizon=1.0)
        with pytest.raises(InvalidInput):
            ih.SplineBaseline(knots=(2.0,), horizon=1.0)

    def test_tie_roles_must_match(self):
        baselines = (ih.ConstantBaseline(), ih.ConstantBaseline())
        kernels = (("exponential", "exponential"),) * 2
        with pytest.raises(InvalidInput):
            ih.ModelSpec(baselines=baselines, kernels=kernels, ties=((0, 2),))

    def test_ties_must_be_disjoint(self):
        baselines = (ih.ConstantBaseline(), ih.ConstantBaseline())
        kernels = (("exponential", "exponential"),) * 2
        with pytest.raises(InvalidInput):
            ih.ModelSpec(baselines=baselines, kernels=kernels,
                         ties=((6, 7), (7, 8)))

    def test_mixed_row_cannot_be_tied(self):
        baselines = (ih.ConstantBaseline(), ih.ConstantBaseline())
        kernels = (("exponential", "gamma"), ("exponential", "exponential"))
        with pytest.raises(InvalidInput):
            ih.kernel_row_ties(baselines, kernels)
