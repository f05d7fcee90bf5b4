import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volt.markov import (
    CapacityError,
    FiringModel,
    JumpSpec,
    NotReversibleError,
    build_jump_spec,
    firing_marginals,
    firing_matrix,
    invariant_distribution,
    spectral_decomposition,
)

rates = st.floats(min_value=0.05, max_value=20.0)


def brute_force_independent_Q(rate_pairs):
    # Enumerate single-bit transitions directly.
    from itertools import product

    N = len(rate_pairs)
    states = [t[::-1] for t in product((0, 1), repeat=N)]
    index = {s: k for k, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for s in states:
        for n, (a, b) in enumerate(rate_pairs):
            t = list(s)
            t[n] = 1 - s[n]
            Q[index[s], index[tuple(t)]] = b if s[n] == 0 else a
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


class TestBuildJumpSpec:
    def test_synchronous_two_states(self):
        a, b = 1.3, 0.7
        spec = build_jump_spec(FiringModel.synchronous(a, b), N=3)
        assert spec.states == ((0, 0, 0), (1, 1, 1))
        np.testing.assert_allclose(spec.Q, [[-b, b], [a, -a]])

    def test_independent_matches_printed_4x4(self):
        # Q^T for two independent equal-rate neurons.
        a, b = 1.1, 0.4
        spec = build_jump_spec(FiringModel.independent([(a, b), (a, b)]), N=2)
        QT = np.array(
            [
                [-2 * b, a, a, 0],
                [b, -(a + b), 0, a],
                [b, 0, -(a + b), a],
                [0, b, b, -2 * a],
            ]
        )
        np.testing.assert_allclose(spec.Q.T, QT)

    def test_independent_equals_brute_force(self):
        pairs = [(1.0, 2.0), (0.5, 0.25), (3.0, 1.5)]
        spec = build_jump_spec(FiringModel.independent(pairs), N=3)
        assert np.array_equal(spec.Q, brute_force_independent_Q(pairs))

    def test_symmetric_single_neuron_invariant(self):
        spec = build_jump_spec(FiringModel.synchronous(2.0, 2.0), N=1)
        np.testing.assert_allclose(spec.rho, [0.5, 0.5])

    def test_partitioned_two_groups_matches_independent(self):
        # Singleton groups reduce to independent firing.
        a, b = 1.0, 2.0
        part = build_jump_spec(
            FiringModel.partitioned([((1,), a, b), ((2,), a, b)]), N=2
        )
        indep = build_jump_spec(FiringModel.independent([(a, b), (a, b)]), N=2)
        assert part.states == indep.states
        np.testing.assert_allclose(part.Q, indep.Q)
        np.testing.assert_allclose(part.rho, indep.rho)

    def test_partitioned_one_group_is_synchronous(self):
        spec = build_jump_spec(FiringModel.partitioned([((1, 2, 3), 1.0, 0.5)]), N=3)
        sync = build_jump_spec(FiringModel.synchronous(1.0, 0.5), N=3)
        assert spec.states == sync.states
        np.testing.assert_allclose(spec.Q, sync.Q)

    def test_partition_must_cover(self):
        with pytest.raises(ValueError):
            build_jump_spec(FiringModel.partitioned([((1,), 1.0, 1.0)]), N=2)

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ValueError):
            FiringModel.synchronous(0.0, 1.0)
        with pytest.raises(ValueError):
            FiringModel.independent([(1.0, -2.0)])

    def test_capacity_cap(self):
        with pytest.raises(CapacityError):
            build_jump_spec(FiringModel.independent([(1.0, 1.0)] * 15), N=15)

    @given(a=rates, b=rates)
    @settings(max_examples=25, deadline=None)
    def test_generator_properties(self, a, b):
        spec = build_jump_spec(
            FiringModel.independent([(a, b), (b, a)]), N=2
        )
        scale = np.abs(spec.Q).max()
        assert np.abs(spec.Q.sum(axis=1)).max() <= 1e-12 * scale
        off = spec.Q - np.diag(np.diag(spec.Q))
        assert off.min() >= 0
        assert np.abs(spec.Q.T @ spec.rho).max() <= 1e-12 * scale


class TestInvariantDistribution:
    def test_two_state_closed_form(self):
        a, b = 0.8, 2.2
        spec = build_jump_spec(FiringModel.synchronous(a, b), N=2)
        np.testing.assert_allclose(
            invariant_distribution(spec), [a / (a + b), b / (a + b)], atol=1e-14
        )

    def test_independent_product_measure(self):
        a, b = 1.7, 0.3
        spec = build_jump_spec(FiringModel.independent([(a, b), (a, b)]), N=2)
        expected = np.array([a * a, a * b, a * b, b * b]) / (a + b) ** 2
        np.testing.assert_allclose(invariant_distribution(spec), expected, atol=1e-14)

    def test_reducible_rejected(self):
        with pytest.raises(ValueError):
            JumpSpec.from_generator([(0,), (1,)], np.zeros((2, 2)))


class TestSpectralDecomposition:
    def test_synchronous_printed_matrices(self):
        a, b = 1.4, 0.6
        spec = build_jump_spec(FiringModel.synchronous(a, b), N=1)
        sd = spectral_decomposition(spec)
        np.testing.assert_allclose(sd.lambdas, [0.0, a + b], atol=1e-12)
        # Compare against the printed P, P^{-1} after matching column scales.
        P_ref = np.array([[a / (a + b), 1.0], [b / (a + b), -1.0]])
        s = sd.P[0, 1] / P_ref[0, 1]
        np.testing.assert_allclose(sd.P[:, 0], P_ref[:, 0], atol=1e-12)
        np.testing.assert_allclose(sd.P[:, 1], s * P_ref[:, 1], atol=1e-12)
        Pinv_ref = np.array([[1.0, 1.0], [b / (a + b), -a / (a + b)]])
        np.testing.assert_allclose(sd.Pinv[1, :] * s, Pinv_ref[1, :], atol=1e-12)

    def test_independent_spectrum(self):
        a, b = 0.9, 1.6
        spec = build_jump_spec(FiringModel.independent([(a, b), (a, b)]), N=2)
        sd = spectral_decomposition(spec)
        np.testing.assert_allclose(
            sd.lambdas, [0.0, a + b, a + b, 2 * (a + b)], atol=1e-10
        )

    def test_cyclic_firing_rejected(self):
        # Three neurons firing in a fixed cyclic order: complex spectrum.
        states = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
        Q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
        spec = JumpSpec.from_generator(states, Q)
        with pytest.raises(NotReversibleError):
            spectral_decomposition(spec)

    def test_normalization_and_reconstruction(self):
        spec = build_jump_spec(
            FiringModel.independent([(1.0, 2.0), (0.5, 3.0), (2.0, 0.7)]), N=3
        )
        sd = spectral_decomposition(spec)
        np.testing.assert_allclose(sd.P[:, 0], spec.rho, atol=1e-12)
        np.testing.assert_allclose(sd.Pinv[0, :], 1.0, atol=1e-12)
        assert sd.lambdas[0] == 0.0
        assert (sd.lambdas[1:] > 0).all()
        recon = spec.Q.T + sd.P @ np.diag(sd.lambdas) @ sd.Pinv
        assert np.abs(recon).max() <= 1e-10 * np.abs(spec.Q).max()


class TestFiringMatrices:
    def test_synchronous(self):
        spec = build_jump_spec(FiringModel.synchronous(1.0, 1.0), N=4)
        for n in range(1, 5):
            np.testing.assert_array_equal(firing_matrix(spec, n).diag, [0.0, 1.0])

    def test_independent_printed(self):
        spec = build_jump_spec(FiringModel.independent([(1.0, 1.0)] * 2), N=2)
        np.testing.assert_array_equal(firing_matrix(spec, 1).diag, [0, 1, 0, 1])
        np.testing.assert_array_equal(firing_matrix(spec, 2).diag, [0, 0, 1, 1])

    def test_idempotent_complementary(self):
        spec = build_jump_spec(
            FiringModel.independent([(1.0, 2.0), (3.0, 0.5), (1.1, 1.2)]), N=3
        )
        for n in range(1, 4):
            B = firing_matrix(spec, n).as_matrix()
            np.testing.assert_array_equal(B @ B, B)
            np.testing.assert_array_equal(B @ (np.eye(8) - B), np.zeros((8, 8)))

    def test_index_out_of_range(self):
        spec = build_jump_spec(FiringModel.synchronous(1.0, 1.0), N=2)
        with pytest.raises(IndexError):
            firing_matrix(spec, 3)


class TestMarginals:
    @given(a=rates, b=rates)
    @settings(max_examples=25, deadline=None)
    def test_synchronous_closed_form(self, a, b):
        spec = build_jump_spec(FiringModel.synchronous(a, b), N=3)
        pi1, pi0 = firing_marginals(spec)
        np.testing.assert_allclose(pi1, b / (a + b), atol=1e-12)
        np.testing.assert_allclose(pi0, a / (a + b), atol=1e-12)

    def test_independent_closed_form(self):
        pairs = [(1.0, 2.0), (0.4, 0.6)]
        spec = build_jump_spec(FiringModel.independent(pairs), N=2)
        pi1, _ = firing_marginals(spec)
        expected = [b / (a + b) for a, b in pairs]
        np.testing.assert_allclose(pi1, expected, atol=1e-12)

    def test_symmetric_half(self):
        spec = build_jump_spec(FiringModel.synchronous(2.0, 2.0), N=1)
        pi1, _ = firing_marginals(spec)
        np.testing.assert_allclose(pi1, 0.5, atol=1e-15)
