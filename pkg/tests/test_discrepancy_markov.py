import numpy as np
import pytest

from ddseg.discrepancy_markov import (
    TransitionMatrix,
    VelocityConfig,
    convergence_steps,
    convergence_velocity,
    ipf_balance,
    markov_propagate,
)
from ddseg.errors import NumericalError, ParameterError, ShapeError
from ddseg.logits_prep import ClassDistribution

from .oracles import IPF_2X2_LIMIT_P, matrix_power_iterates


def dist_of(p):
    return ClassDistribution(0, np.asarray(p, dtype=np.float64))


def exact_transition(t):
    t = np.asarray(t, dtype=np.float64)
    return TransitionMatrix(t, 0, 0.0, 0.0)


class TestIpfBalance:
    def test_doubly_stochastic_input_unchanged(self):
        t = np.array([[0.7, 0.3], [0.3, 0.7]])
        out = ipf_balance(t, iterations=15)
        assert np.allclose(out.t, t, atol=1e-12)

    def test_permutation_matrix_survives_flooring(self):
        # zeros get floored to 1e-12 but the structure stays put
        p = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = ipf_balance(p, iterations=15)
        assert np.allclose(out.t, p, atol=1e-10)
        assert (out.t > 0).all()

    def test_two_by_two_limit_value(self):
        # [[1,2],[3,4]] balances toward p = sqrt(2/3)/(1+sqrt(2/3)) on the
        # diagonal of the first row; the cross ratio is IPF-invariant
        out = ipf_balance(np.array([[1.0, 2.0], [3.0, 4.0]]), iterations=15)
        assert abs(out.t[0, 0] - IPF_2X2_LIMIT_P) < 1e-4
        deep = ipf_balance(np.array([[1.0, 2.0], [3.0, 4.0]]), iterations=200)
        assert abs(deep.t[0, 0] - IPF_2X2_LIMIT_P) < 1e-12
        assert abs(deep.t[0, 1] - (1.0 - IPF_2X2_LIMIT_P)) < 1e-12

    def test_residuals_small_on_conditioned_inputs(self):
        # entries bounded away from zero keep the cross ratios small
        # enough for 15 iterations to reach 1e-6 (see the slow test below
        # for what happens without that bound)
        rng = np.random.default_rng(21)
        for _ in range(30):
            n = int(rng.integers(2, 65))
            out = ipf_balance(rng.uniform(0.3, 1.3, size=(n, n)), iterations=15)
            assert out.row_residual < 1e-6
            assert out.col_residual < 1e-6
            assert out.ipf_iterations_used == 15

    def test_ill_conditioned_matrix_converges_slowly(self):
        # a near-zero entry blows up the cross ratio (~1.7e3 here) and the
        # linear convergence rate collapses: far from balanced at 15
        # iterations, clean by 200
        m = np.array([[0.97133043, 0.21503102], [0.00212775, 0.81274101]])
        rough = ipf_balance(m, iterations=15)
        assert max(rough.row_residual, rough.col_residual) > 1e-3
        fine = ipf_balance(m, iterations=200)
        assert max(fine.row_residual, fine.col_residual) < 1e-9

    def test_rows_exactly_normalized_after_final_half_step(self):
        rng = np.random.default_rng(22)
        out = ipf_balance(rng.random((8, 8)), iterations=15)
        # the row division runs last, so row sums are exact to rounding
        assert np.allclose(out.t.sum(axis=1), 1.0, atol=1e-15)

    def test_nan_input_is_hard_error(self):
        bad = np.ones((2, 2))
        bad[0, 0] = np.nan
        with pytest.raises(NumericalError):
            ipf_balance(bad)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            ipf_balance(np.ones((2, 3)))

    def test_bad_iteration_count_rejected(self):
        with pytest.raises(ParameterError):
            ipf_balance(np.ones((2, 2)), iterations=0)


class TestMarkovPropagate:
    def test_single_step_is_vector_matrix_product(self):
        t = exact_transition([[0.9, 0.1], [0.2, 0.8]])
        f0 = dist_of([1.0, 0.0])
        out = markov_propagate(f0, t, 1)
        assert np.allclose(out, [[0.9, 0.1]], atol=1e-15)

    def test_identity_like_matrix_is_fixed_point(self):
        t = exact_transition(np.eye(3))
        f0 = dist_of([0.2, 0.5, 0.3])
        out = markov_propagate(f0, t, 5)
        assert np.allclose(out, np.tile(f0.probs, (5, 1)), atol=1e-15)

    def test_matches_matrix_power_reference(self):
        # block-diagonal chain keeps the two halves decoupled
        block = np.array([[0.6, 0.4], [0.4, 0.6]])
        t4 = np.zeros((4, 4))
        t4[:2, :2] = block
        t4[2:, 2:] = block
        f0 = dist_of([0.5, 0.1, 0.3, 0.1])
        got = markov_propagate(f0, exact_transition(t4), 7)
        want = matrix_power_iterates(f0.probs, t4, 7)
        assert np.allclose(got, want, atol=1e-10)

    def test_mass_conserved_over_long_runs(self):
        rng = np.random.default_rng(23)
        t = ipf_balance(rng.random((16, 16)), iterations=15)
        f0 = dist_of(rng.dirichlet(np.ones(16)))
        out = markov_propagate(f0, t, 100)
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-9

    def test_uniform_is_stationary_for_balanced_chain(self):
        rng = np.random.default_rng(24)
        t = ipf_balance(rng.random((10, 10)) + 0.1, iterations=200)
        f0 = dist_of(np.full(10, 0.1))
        out = markov_propagate(f0, t, 3)
        assert np.abs(out - 0.1).max() < 1e-10

    def test_size_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            markov_propagate(dist_of([0.5, 0.5]), exact_transition(np.eye(3)), 1)

    def test_zero_steps_rejected(self):
        with pytest.raises(ParameterError):
            markov_propagate(dist_of([0.5, 0.5]), exact_transition(np.eye(2)), 0)


class TestConvergenceSteps:
    def test_hand_worked_four_patch_chain(self):
        # uniform T sends any f0 to uniform in one step, so step 1 sees
        # variation |1/N - f_i| and step 2 sees exactly zero
        t = exact_transition(np.full((4, 4), 0.25))
        f0 = dist_of([0.7, 0.1, 0.1, 0.1])
        cfg = VelocityConfig(tau=0.1, variation_scale="raw")
        steps = convergence_steps(f0, t, cfg)
        # patch 0 moves by 0.45 and the rest by 0.15 at step 1, all > tau;
        # at step 2 nothing moves
        assert np.array_equal(steps, [2, 2, 2, 2])

    def test_uniform_start_converges_immediately(self):
        rng = np.random.default_rng(25)
        t = ipf_balance(rng.random((8, 8)) + 0.1, iterations=200)
        f0 = dist_of(np.full(8, 0.125))
        v = convergence_velocity(f0, t, VelocityConfig())
        assert np.allclose(v, 1.0, atol=1e-15)

    def test_huge_tau_converges_in_one_step(self):
        rng = np.random.default_rng(26)
        t = ipf_balance(rng.random((6, 6)), iterations=15)
        f0 = dist_of(rng.dirichlet(np.ones(6)))
        v = convergence_velocity(f0, t, VelocityConfig(tau=1e9))
        assert np.array_equal(v, np.ones(6))

    def test_steps_antitone_in_tau(self):
        rng = np.random.default_rng(27)
        t = ipf_balance(rng.random((12, 12)), iterations=15)
        f0 = dist_of(rng.dirichlet(np.ones(12)))
        taus = [0.01, 0.05, 0.1, 0.3, 0.9]
        runs = [
            convergence_steps(f0, t, VelocityConfig(tau=tau)) for tau in taus
        ]
        for tight, loose in zip(runs, runs[1:]):
            assert (loose <= tight).all()

    def test_symmetric_patches_share_velocity(self):
        # two decoupled identical blocks must converge in lock step
        block = np.array([[0.6, 0.4], [0.4, 0.6]])
        t4 = np.full((4, 4), 1e-12)
        t4[:2, :2] = block
        t4[2:, 2:] = block
        f0 = dist_of([0.4, 0.1, 0.4, 0.1])
        steps = convergence_steps(
            f0, exact_transition(t4), VelocityConfig(tau=0.05, variation_scale="raw")
        )
        assert np.array_equal(steps[:2], steps[2:])

    def test_max_steps_caps_slow_patches(self):
        # near-identity chain moves mass so slowly nothing converges
        t = exact_transition(np.array([[0.999, 0.001], [0.001, 0.999]]))
        f0 = dist_of([1.0, 0.0])
        cfg = VelocityConfig(tau=1e-6, max_steps=7, variation_scale="raw")
        steps = convergence_steps(f0, t, cfg)
        assert np.array_equal(steps, [7, 7])
        v = convergence_velocity(f0, t, cfg)
        assert np.allclose(v, 1.0 / 7.0, atol=1e-15)

    def test_scale_choice_changes_outcome(self):
        # raw variation at step 2 is 0 for every patch; times_n multiplies
        # step-1 variation by N=2 pushing patch 0 past tau = 0.7
        t = exact_transition(np.full((2, 2), 0.5))
        f0 = dist_of([0.9, 0.1])
        raw = convergence_steps(
            f0, t, VelocityConfig(tau=0.7, variation_scale="raw")
        )
        scaled = convergence_steps(
            f0, t, VelocityConfig(tau=0.7, variation_scale="times_n")
        )
        assert np.array_equal(raw, [1, 1])
        assert np.array_equal(scaled, [2, 2])

    def test_size_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            convergence_steps(
                dist_of([0.5, 0.5]), exact_transition(np.eye(3)), VelocityConfig()
            )


class TestVelocityConfig:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ParameterError):
            VelocityConfig(tau=0.0)
        with pytest.raises(ParameterError):
            VelocityConfig(max_steps=0)
        with pytest.raises(ParameterError):
            VelocityConfig(ipf_iterations=0)
        with pytest.raises(ParameterError):
            VelocityConfig(variation_scale="normalized")
