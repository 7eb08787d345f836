import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actionlab.errors import DegenerateSpectrumError, EigensolverError
from actionlab.hilbert import (
    DiagonalUnitary,
    LabeledBasis,
    PhysicalConstants,
    StateVector,
    apply_diagonal,
    eigh_hermitian,
    expand,
    frame_shift,
    hermitian_eigen,
    inner,
    jacobi_eigh,
    random_state,
)
from conftest import haar_basis

SQRT2 = np.sqrt(2.0)


def plus_x():
    return StateVector([1 / SQRT2, 1 / SQRT2])


def plus_y():
    # Convention: reference index 0 is the lower z eigenvalue; this vector
    # satisfies <+y|+x> = (1 - i)/2.
    return StateVector([1j / SQRT2, 1 / SQRT2])


class TestStateVector:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="norm"):
            StateVector([1.0, 1.0])

    def test_rejects_dim_one(self):
        with pytest.raises(ValueError, match="dimension"):
            StateVector([1.0])

    def test_small_norm_drift_renormalized(self):
        amp = np.array([1.0, 0.0]) * (1 + 1e-8)
        psi = StateVector(amp)
        assert abs(np.linalg.norm(psi.amplitudes) - 1.0) < 1e-12

    def test_immutable(self):
        psi = StateVector([1.0, 0.0])
        with pytest.raises(AttributeError):
            psi.label = "x"
        with pytest.raises(ValueError):
            psi.amplitudes[0] = 2.0

    @given(st.floats(min_value=2e-6, max_value=0.5), st.booleans())
    def test_rejection_threshold(self, drift, sign):
        scale = 1 + drift if sign else 1 - drift
        with pytest.raises(ValueError):
            StateVector(np.array([scale, 0.0]))


class TestInner:
    def test_self_inner_is_one(self):
        rng = np.random.default_rng(3)
        psi = random_state(7, rng)
        assert inner(psi, psi) == pytest.approx(1.0, abs=1e-12)

    def test_qubit_golden_value(self):
        # Hand arithmetic: conj(i, 1).(1, 1)/2 = (1 - i)/2.
        val = inner(plus_y(), plus_x())
        assert val == pytest.approx((1 - 1j) / 2, abs=1e-15)
        assert abs(val) ** 2 == pytest.approx(0.5, abs=1e-15)

    def test_orthogonal_pair(self):
        assert inner(StateVector([1, 0]), StateVector([0, 1])) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            inner(StateVector([1, 0]), StateVector([1, 0, 0]))


class TestExpand:
    def test_basis_vector_expansion_is_delta(self):
        basis = LabeledBasis(np.eye(4), [0.0, 1.0, 2.0, 3.0])
        amps = expand(basis.state(2), basis)
        assert np.allclose(amps, [0, 0, 1, 0], atol=1e-15)

    def test_plus_x_in_z_basis(self):
        basis = LabeledBasis(np.eye(2), [-0.5, 0.5])
        amps = expand(plus_x(), basis)
        assert np.allclose(np.abs(amps), 1 / SQRT2, atol=1e-15)

    def test_reconstruction_identity_d401(self):
        # Oracle: the direct inner product.  Momentum-type basis at d=401.
        d = 401
        n = np.arange(d)
        k = np.arange(d) - d // 2
        vectors = np.exp(2j * np.pi * np.outer(k, n) / d) / np.sqrt(d)
        basis = LabeledBasis(vectors, k.astype(float))
        rng = np.random.default_rng(11)
        for _ in range(5):
            a, b = random_state(d, rng), random_state(d, rng)
            total = np.sum(np.conj(expand(b, basis)) * expand(a, basis))
            assert abs(total - inner(b, a)) < 1e-12

    @given(st.integers(min_value=2, max_value=16), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_parseval(self, dim, seed):
        rng = np.random.default_rng(seed)
        basis = LabeledBasis(haar_basis(dim, rng), np.arange(dim, dtype=float))
        psi = random_state(dim, rng)
        assert np.sum(np.abs(expand(psi, basis)) ** 2) == pytest.approx(1.0, abs=1e-12)


class TestApplyDiagonal:
    def test_zero_phases_identity(self):
        basis = LabeledBasis(np.eye(3), [0.0, 1.0, 2.0])
        psi = StateVector([0.5, 0.5, 1 / SQRT2])
        out = apply_diagonal(DiagonalUnitary(basis, np.zeros(3)), psi)
        assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-15)

    def test_qubit_alignment_onto_plus_y(self):
        # Phases (+pi/4, -pi/4) on the ascending z grid map |+x> onto |+y|.
        basis = LabeledBasis(np.eye(2), [-0.5, 0.5])
        unitary = DiagonalUnitary(basis, [np.pi / 4, -np.pi / 4])
        out = apply_diagonal(unitary, plus_x())
        assert abs(inner(plus_y(), out)) == pytest.approx(1.0, abs=1e-12)

    def test_global_phase_leaves_probabilities(self):
        rng = np.random.default_rng(5)
        basis = LabeledBasis(haar_basis(6, rng), np.arange(6.0))
        psi = random_state(6, rng)
        out = apply_diagonal(DiagonalUnitary(basis, np.full(6, 0.7)), psi)
        probe = random_state(6, rng)
        assert abs(inner(probe, out)) == pytest.approx(abs(inner(probe, psi)), abs=1e-12)

    def test_norm_preserved(self):
        rng = np.random.default_rng(8)
        basis = LabeledBasis(haar_basis(9, rng), np.arange(9.0))
        psi = random_state(9, rng)
        out = apply_diagonal(DiagonalUnitary(basis, rng.uniform(0, 7, 9)), psi)
        assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0, abs=1e-12)


class TestFrameShift:
    def test_t_zero_unchanged(self):
        basis = LabeledBasis(np.eye(2), [-0.5, 0.5])
        gen = DiagonalUnitary(basis, [-1.0, 1.0])
        a, b = plus_x(), plus_y()
        at, bt = frame_shift(a, b, gen, 0.0)
        assert np.allclose(at.amplitudes, a.amplitudes)
        assert np.allclose(bt.amplitudes, b.amplitudes)

    def test_transition_probability_invariant(self, spin20):
        # Oracle: direct recomputation at 100 random times.
        z = spin20.basis("z")
        gen = DiagonalUnitary(z, -z.eigenvalues)
        rng = np.random.default_rng(17)
        a = random_state(spin20.dimension, rng)
        b = random_state(spin20.dimension, rng)
        p0 = abs(inner(b, a)) ** 2
        worst = max(
            abs(abs(inner(*reversed(frame_shift(a, b, gen, float(t))))) ** 2 - p0)
            for t in rng.uniform(-30, 30, size=100)
        )
        assert worst < 1e-12


class TestEigensolver:
    def test_diagonal_matrix(self):
        basis = hermitian_eigen(np.diag([3.0, -1.0, 2.0]))
        assert np.allclose(basis.eigenvalues, [-1.0, 2.0, 3.0])
        assert np.allclose(np.abs(basis.vectors), np.eye(3)[[1, 2, 0]], atol=1e-14)

    def test_pauli_x_half(self):
        basis = hermitian_eigen(np.array([[0, 0.5], [0.5, 0]], dtype=complex))
        assert np.allclose(basis.eigenvalues, [-0.5, 0.5], atol=1e-14)
        # Eigenvectors (1, -1)/sqrt(2) and (1, 1)/sqrt(2) up to phase.
        assert abs(basis.vectors[0] @ np.array([1, -1]) / SQRT2) == pytest.approx(1, abs=1e-12)
        assert abs(basis.vectors[1] @ np.array([1, 1]) / SQRT2) == pytest.approx(1, abs=1e-12)

    def test_spin1_jx_characteristic_polynomial_oracle(self):
        # det(Jx - w) = -w^3 + w for j=1, so the spectrum is (-1, 0, 1).
        c = 1 / SQRT2
        jx = np.array([[0, c, 0], [c, 0, c], [0, c, 0]], dtype=complex)
        basis = hermitian_eigen(jx)
        assert np.allclose(basis.eigenvalues, [-1.0, 0.0, 1.0], atol=1e-12)

    def test_residuals_random_hermitian(self):
        rng = np.random.default_rng(23)
        for dim in (2, 5, 17, 40):
            x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            h = (x + x.conj().T) / 2
            w, v = eigh_hermitian(h)
            assert np.max(np.abs(h @ v - v * w)) < 1e-9 * max(1.0, np.max(np.abs(h)))
            assert np.max(np.abs(v.conj().T @ v - np.eye(dim))) < 1e-10
            assert np.all(np.diff(w) >= 0)

    def test_agrees_with_jacobi_oracle(self):
        # Two independent in-house routes must coincide.
        rng = np.random.default_rng(29)
        for dim in (3, 8, 21):
            x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            h = (x + x.conj().T) / 2
            w1, _ = eigh_hermitian(h)
            w2, v2 = jacobi_eigh(h)
            assert np.allclose(w1, w2, atol=1e-10 * max(1.0, np.max(np.abs(h))))
            assert np.max(np.abs(h @ v2 - v2 * w2)) < 1e-9 * max(1.0, np.max(np.abs(h)))

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError, match="Hermitian"):
            hermitian_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_degenerate_spectrum_rejected_for_basis(self):
        with pytest.raises(DegenerateSpectrumError):
            hermitian_eigen(np.eye(3))

    def test_degenerate_spectrum_deterministic_vectors(self):
        h = np.diag([1.0, 1.0, 2.0])
        w1, v1 = eigh_hermitian(h)
        w2, v2 = eigh_hermitian(h.copy())
        assert np.allclose(w1, [1.0, 1.0, 2.0])
        assert np.array_equal(v1, v2)
        assert np.max(np.abs(v1.conj().T @ v1 - np.eye(3))) < 1e-12


class TestLabeledBasis:
    def test_orthonormality_enforced(self):
        bad = np.array([[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(ValueError, match="orthonormal"):
            LabeledBasis(bad, [0.0, 1.0])

    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError, match="increasing"):
            LabeledBasis(np.eye(2), [1.0, 1.0])

    def test_subset_basis_allowed(self):
        sub = LabeledBasis(np.eye(4)[:2], [0.0, 1.0])
        assert sub.n_states == 2
        assert sub.dim == 4
        assert not sub.is_complete

    def test_constants_validation(self):
        with pytest.raises(ValueError):
            PhysicalConstants(hbar=0.0)
        assert PhysicalConstants(hbar=2.0).hbar == 2.0


class TestEigensolverStress:
    def test_dense_d101_full_householder_path(self):
        # Dense complex Hermitian, large enough to exercise every reflector.
        rng = np.random.default_rng(97)
        d = 101
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = (x + x.conj().T) / 2
        w, v = eigh_hermitian(h)
        scale = float(np.max(np.abs(h)))
        assert np.max(np.abs(h @ v - v * w)) < 1e-9 * scale
        assert np.max(np.abs(v.conj().T @ v - np.eye(d))) < 1e-10
        assert np.allclose(np.sort(w), w)
        # Trace and Frobenius norm are basis-independent cross-checks.
        assert np.sum(w) == pytest.approx(float(np.trace(h).real), abs=1e-9 * scale * d)
        assert np.sum(w * w) == pytest.approx(
            float(np.sum(np.abs(h) ** 2)), rel=1e-12)

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(31, 31)) + 1j * rng.normal(size=(31, 31))
        h = (x + x.conj().T) / 2
        w1, v1 = eigh_hermitian(h)
        w2, v2 = eigh_hermitian(h.copy())
        assert np.array_equal(w1, w2)
        assert np.array_equal(v1, v2)


class TestUnwrapProperty:
    @given(
        st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=40),
        st.integers(min_value=0, max_value=39),
    )
    @settings(max_examples=60, deadline=None)
    def test_unwrap_recovers_smooth_sequence(self, steps, anchor_raw):
        # Any sequence with |step| < pi survives a wrap/unwrap round trip up
        # to the global multiple fixed at the anchor.
        from actionlab.action import unwrap_segment

        smooth = np.concatenate([[0.0], np.cumsum(steps)])
        wrapped = (smooth + np.pi) % (2 * np.pi) - np.pi
        anchor = min(anchor_raw, len(smooth) - 1)
        out = unwrap_segment(wrapped, 2 * np.pi, anchor=anchor)
        offset = out[anchor] - smooth[anchor]
        assert offset == pytest.approx(
            2 * np.pi * round(offset / (2 * np.pi)), abs=1e-9)
        assert np.allclose(out - offset, smooth, atol=1e-9)
