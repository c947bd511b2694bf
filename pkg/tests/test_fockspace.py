# Tests for the truncated two-mode Fock space
import itertools

import numpy as np
import pytest
from scipy.special import factorial

from fockspace import (
    MomentSpec,
    StateError,
    TruncationWarning,
    TwoModeState,
    apply_two_mode_unitary,
    coherent_amplitudes,
    displacement_matrix,
    expect_displaced_moment,
    expect_moment,
    make_coherent,
    make_fock,
    make_squeezed_coherent,
    make_superposition,
    random_superposition,
    safe_subspace_projector,
)
from optics import su2

ALL_SPECS = [
    MomentSpec(*exponents)
    for exponents in itertools.product(range(5), repeat=4)
    if sum(exponents) <= 4
]


def _raise(grid, axis):
    """Apply a† on one axis of an amplitude grid."""
    sqrt_n = np.sqrt(np.arange(1, grid.shape[0]))
    out = np.zeros_like(grid)
    if axis == 0:
        out[1:, :] = sqrt_n[:, None] * grid[:-1, :]
    else:
        out[:, 1:] = sqrt_n[None, :] * grid[:, :-1]
    return out


# =============================================================================
# State construction
# =============================================================================
class TestConstructors:
    def test_coherent_is_normalized_product(self):
        """Coherent grid matches the Poissonian closed form in both modes."""
        a1, a2 = 0.8, -0.3j
        state = make_coherent(a1, a2, 20)
        assert state.norm == pytest.approx(1.0, abs=1e-12)
        n = np.arange(21)

        def poisson_column(alpha):
            return np.exp(-abs(alpha) ** 2 / 2) * alpha ** n / np.sqrt(factorial(n))

        expected = np.outer(poisson_column(a1), poisson_column(a2))
        assert np.allclose(state.amplitudes, expected, atol=1e-12)

    def test_large_amplitude_does_not_overflow(self):
        column = coherent_amplitudes(40.0, 2500)
        assert np.all(np.isfinite(column))
        probs = np.abs(column) ** 2
        assert probs.sum() == pytest.approx(1.0, abs=1e-10)
        assert probs @ np.arange(2501) == pytest.approx(1600.0, rel=1e-8)

    def test_vacuum_amplitudes(self):
        assert np.array_equal(coherent_amplitudes(0, 4), [1, 0, 0, 0, 0])

    def test_coherent_truncation_warns(self):
        """Large amplitude on a small grid reports boundary mass."""
        with pytest.warns(TruncationWarning):
            state = make_coherent(3.0, 0.0, 5)
        assert state.boundary_mass > 1e-10

    def test_fock_state(self):
        state = make_fock(1, 2, 4)
        assert state.amplitudes[1, 2] == 1.0
        assert state.norm == 1.0

    def test_fock_out_of_range(self):
        with pytest.raises(StateError):
            make_fock(5, 0, 4)

    def test_bad_cutoff(self):
        with pytest.raises(StateError):
            make_coherent(0.1, 0.1, 0)

    def test_non_finite_amplitude(self):
        with pytest.raises(StateError):
            make_coherent(np.nan, 0.0, 10)

    def test_superposition_normalizes(self):
        """NOON state (|2,0> + |0,2>)/sqrt(2)."""
        state = make_superposition([(2, 0, 1.0), (0, 2, 1.0)], 6)
        assert state.norm == pytest.approx(1.0)
        assert abs(state.amplitudes[2, 0]) == pytest.approx(1 / np.sqrt(2))

    def test_superposition_rejects_empty_and_zero(self):
        with pytest.raises(StateError):
            make_superposition([], 6)
        with pytest.raises(StateError):
            make_superposition([(1, 1, 1.0), (1, 1, -1.0)], 6)

    def test_state_is_read_only(self):
        state = make_fock(0, 0, 3)
        with pytest.raises(ValueError):
            state.amplitudes[0, 0] = 2.0

    def test_wrong_grid_shape(self):
        with pytest.raises(StateError):
            TwoModeState(3, np.zeros((3, 3)))

    def test_random_superposition_is_reproducible(self):
        a = random_superposition(5, 10, np.random.default_rng(3))
        b = random_superposition(5, 10, np.random.default_rng(3))
        assert np.array_equal(a.amplitudes, b.amplitudes)
        assert np.count_nonzero(a.amplitudes) <= 5
        assert a.norm == pytest.approx(1.0)


# =============================================================================
# Displacement and squeezing
# =============================================================================
class TestSqueezedCoherent:
    def test_displacement_of_vacuum_is_coherent(self):
        """Column 0 of D(alpha) holds the coherent amplitudes."""
        D = displacement_matrix(0.7 - 0.2j, 20)
        assert np.allclose(D[:, 0], coherent_amplitudes(0.7 - 0.2j, 20), atol=1e-12)

    def test_displacement_is_unitary_on_low_block(self):
        D = displacement_matrix(0.5, 40)
        block = (D.conj().T @ D)[:10, :10]
        assert np.allclose(block, np.eye(10), atol=1e-10)

    def test_zero_squeezing_is_coherent(self):
        a = make_squeezed_coherent(0.3, 0.4j, 0.0, 20)
        b = make_coherent(0.3, 0.4j, 20)
        assert np.allclose(a.amplitudes, b.amplitudes, atol=1e-12)

    def test_two_mode_squeezed_vacuum_moments(self):
        """<a1 a2> = -e^{i arg zeta} sinh r cosh r, <n1> = sinh² r."""
        r, angle = 0.3, 0.7
        state = make_squeezed_coherent(0, 0, r * np.exp(1j * angle), 30)
        assert expect_moment(state, (0, 0, 1, 1)) == pytest.approx(
            -np.exp(1j * angle) * np.sinh(r) * np.cosh(r), abs=1e-10)
        assert expect_moment(state, (1, 0, 1, 0)).real == pytest.approx(np.sinh(r) ** 2, abs=1e-10)
        assert abs(expect_moment(state, (0, 1, 1, 0))) < 1e-12

    def test_gaussian_factorization(self, rng):
        """Displaced modes of squeezed coherent states obey the Gaussian moment relation."""
        for _ in range(10):
            alpha = rng.uniform(-0.7, 0.7, 2) + 1j * rng.uniform(-0.7, 0.7, 2)
            zeta = rng.uniform(0, 0.4) * np.exp(1j * rng.uniform(0, 2 * np.pi))
            state = make_squeezed_coherent(alpha[0], alpha[1], zeta, 30)
            shift = (alpha[0], alpha[1])

            def moment(spec):
                return expect_displaced_moment(state, spec, shift)

            n1 = moment((1, 0, 1, 0)).real
            n2 = moment((0, 1, 0, 1)).real
            lhs = moment((1, 1, 1, 1)).real + n1 + n2 + 1
            rhs = abs(moment((0, 0, 1, 1))) ** 2 + (n1 + 1) * (n2 + 1)
            assert abs(lhs - rhs) <= 1e-6
            assert abs(moment((0, 1, 1, 0))) <= 1e-8


# =============================================================================
# Moments
# =============================================================================
class TestMoments:
    def test_coherent_moments(self):
        a1, a2 = 0.9 + 0.2j, -0.4j
        state = make_coherent(a1, a2, 25)
        assert expect_moment(state, (0, 0, 1, 0)) == pytest.approx(a1, abs=1e-12)
        assert expect_moment(state, (1, 0, 0, 1)) == pytest.approx(np.conj(a1) * a2, abs=1e-12)
        assert expect_moment(state, (2, 0, 0, 2)) == pytest.approx(np.conj(a1) ** 2 * a2 ** 2, abs=1e-12)

    def test_hermitian_conjugate_pairs(self, family_state):
        for spec in ALL_SPECS:
            assert expect_moment(family_state, spec.conjugate) == pytest.approx(
                np.conj(expect_moment(family_state, spec)), abs=1e-14)

    def test_commutators_on_safe_subspace(self, superposition):
        """<a_i a_j†> - <a_j† a_i> = delta_ij for support below cutoff - 2."""
        raised = [_raise(superposition.amplitudes, axis) for axis in (0, 1)]
        for i in range(2):
            for j in range(2):
                anti_normal = np.vdot(raised[i], raised[j])
                spec = [0, 0, 0, 0]
                spec[j] += 1
                spec[2 + i] += 1
                commutator = anti_normal - expect_moment(superposition, spec)
                assert commutator == pytest.approx(float(i == j), abs=1e-10)

    def test_superposition_cross_term(self):
        state = make_superposition([(1, 0, 1.0), (0, 1, 1.0)], 4)
        assert expect_moment(state, (1, 0, 0, 1)) == pytest.approx(0.5, abs=1e-14)

    def test_noon_pair_coherence(self):
        state = make_superposition([(2, 0, 1.0), (0, 2, 1.0)], 6)
        assert expect_moment(state, (2, 0, 0, 2)) == pytest.approx(1.0, abs=1e-14)

    def test_two_photon_fock(self):
        assert expect_moment(make_fock(2, 0, 4), (2, 0, 2, 0)) == pytest.approx(2.0, abs=1e-14)

    def test_fock_number_moments(self, twin_photons):
        assert expect_moment(twin_photons, (1, 1, 1, 1)) == pytest.approx(1.0)
        assert expect_moment(twin_photons, (2, 0, 2, 0)) == pytest.approx(0.0)

    def test_degree_limit(self):
        with pytest.raises(StateError):
            MomentSpec(2, 2, 1, 0)

    def test_negative_exponent(self):
        with pytest.raises(StateError):
            MomentSpec(-1, 0, 0, 0)


# =============================================================================
# Two-mode rotations
# =============================================================================
class TestApplyUnitary:
    def test_identity(self, superposition):
        out = apply_two_mode_unitary(superposition, np.eye(2))
        assert np.allclose(out.amplitudes, superposition.amplitudes, atol=1e-14)

    def test_norm_preserved(self, superposition):
        out = apply_two_mode_unitary(superposition, su2(0.7, 1.3))
        assert out.norm == pytest.approx(1.0, abs=1e-12)

    def test_first_order_moments_rotate(self, superposition):
        """a-moments of U|psi> are b-moments of |psi> with b = u a."""
        u = su2(0.4, 0.9).m
        out = apply_two_mode_unitary(superposition, u)
        K = np.array([[expect_moment(superposition, (1, 0, 1, 0)), expect_moment(superposition, (1, 0, 0, 1))],
                      [expect_moment(superposition, (0, 1, 1, 0)), expect_moment(superposition, (0, 1, 0, 1))]])
        K_b = u.conj() @ K @ u.T
        assert expect_moment(out, (1, 0, 1, 0)) == pytest.approx(K_b[0, 0], abs=1e-12)
        assert expect_moment(out, (1, 0, 0, 1)) == pytest.approx(K_b[0, 1], abs=1e-12)

    def test_composition(self, superposition):
        """Applying u then v equals applying v u."""
        u, v = su2(0.3, 0.2), su2(1.1, -0.8)
        twice = apply_two_mode_unitary(apply_two_mode_unitary(superposition, u), v)
        once = apply_two_mode_unitary(superposition, v @ u)
        assert np.allclose(twice.amplitudes, once.amplitudes, atol=1e-10)

    @pytest.mark.parametrize('theta, phi', [(0.3, 0.2), (np.pi / 4, np.pi / 2), (1.4, -2.1)])
    def test_inverse_restores_amplitudes(self, superposition, theta, phi):
        u = su2(theta, phi)
        back = apply_two_mode_unitary(apply_two_mode_unitary(superposition, u), u.inverse)
        assert np.allclose(back.amplitudes, superposition.amplitudes, rtol=0, atol=1e-9)

    def test_hong_ou_mandel(self, twin_photons):
        """|1,1> through a balanced rotation never leaves one photon per port."""
        out = apply_two_mode_unitary(twin_photons, su2(np.pi / 4, 0))
        P = out.photon_distribution()
        assert P[1, 1] == pytest.approx(0.0, abs=1e-14)
        assert P[2, 0] == pytest.approx(0.5)
        assert P[0, 2] == pytest.approx(0.5)

    def test_coherent_maps_to_coherent(self):
        state = make_coherent(1.0, 0.0, 20)
        out = apply_two_mode_unitary(state, su2(np.pi / 4, 0))
        target = make_coherent(1 / np.sqrt(2), -1 / np.sqrt(2), 20)
        assert out.overlap(target) == pytest.approx(1.0, abs=1e-10)

    def test_non_unitary_rejected(self, vacuum):
        with pytest.raises(StateError):
            apply_two_mode_unitary(vacuum, np.array([[1, 1], [0, 1]]))

    def test_truncated_rotation_warns(self):
        with pytest.warns(TruncationWarning):
            state = make_coherent(3.0, 3.0, 8)
        with pytest.warns(TruncationWarning, match='norm drifted'):
            apply_two_mode_unitary(state, su2(np.pi / 4, 0))


class TestSafeSubspace:
    def test_projector_rank(self):
        N = 10
        P = safe_subspace_projector(N)
        kept = sum(1 for n1 in range(N + 1) for n2 in range(N + 1) if n1 + n2 <= N - 2)
        assert np.trace(P) == kept
