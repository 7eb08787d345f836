"""Exact finite-dimensional Hilbert-space engine.

Complex state vectors, orthonormal labeled bases with real eigenvalue grids,
diagonal phase unitaries, and an in-house Hermitian eigensolver.  Everything
is dense, double precision, and immutable after construction; all operations
are pure functions, so objects can be shared freely between workers.

All amplitudes are stored in a fixed reference basis (the computational
basis of the model).  A ``LabeledBasis`` is a set of d orthonormal vectors
expressed in that reference basis together with a strictly increasing grid
of real eigenvalues x_m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, EigensolverError

# Construction-time gates.  States deviating from unit norm by more than
# NORM_TOLERANCE are rejected rather than silently renormalized: a badly
# scaled input is almost always a caller bug.
NORM_TOLERANCE = 1e-6
ORTHONORMALITY_TOLERANCE = 1e-10
HERMITICITY_TOLERANCE = 1e-12
EIGEN_RESIDUAL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class PhysicalConstants:
    """Configuration constants; ``hbar`` sets the action unit."""

    hbar: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0.0 and np.isfinite(self.hbar)):
            raise ValueError(f"hbar must be positive and finite, got {self.hbar}")


DEFAULT_CONSTANTS = PhysicalConstants()


class StateVector:
    """Normalized complex amplitude vector in the reference basis."""

    __slots__ = ("amplitudes", "label")

    def __init__(self, amplitudes, label: str | None = None):
        amp = np.asarray(amplitudes, dtype=complex)
        if amp.ndim != 1:
            raise ValueError(f"amplitudes must be one-dimensional, got shape {amp.shape}")
        if amp.shape[0] < 2:
            raise ValueError(f"dimension must be at least 2, got {amp.shape[0]}")
        if not np.all(np.isfinite(amp.view(float))):
            raise ValueError("amplitudes contain non-finite entries")
        norm = float(np.linalg.norm(amp))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(
                f"state norm {norm!r} deviates from 1 by more than {NORM_TOLERANCE}; "
                "normalize explicitly before constructing"
            )
        amp = amp / norm
        amp.flags.writeable = False
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "label", label)

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def __repr__(self):
        tag = f" {self.label!r}" if self.label else ""
        return f"<StateVector{tag} dim={self.dim}>"


class LabeledBasis:
    """Orthonormal vectors carrying strictly increasing eigenvalue labels.

    ``vectors[k]`` holds the amplitudes of the k-th basis state in the
    reference basis; ``eigenvalues[k]`` is its label x_k with
    x_1 < x_2 < ... < x_n.  A full basis has as many states as the space has
    dimensions; a labeled orthonormal subset (for example one branch of a
    degenerate spectrum) is also allowed and spans a proper subspace, so
    expansions in it are not complete.
    """

    __slots__ = ("vectors", "eigenvalues", "spacing")

    def __init__(self, vectors, eigenvalues):
        mat = np.asarray(vectors, dtype=complex)
        ev = np.asarray(eigenvalues, dtype=float)
        if mat.ndim != 2 or mat.shape[0] > mat.shape[1]:
            raise ValueError(
                f"need n <= dim orthonormal row vectors, got shape {mat.shape}"
            )
        n = mat.shape[0]
        if n < 2:
            raise ValueError("need at least 2 labeled states")
        if ev.shape != (n,):
            raise ValueError(f"need {n} eigenvalues, got shape {ev.shape}")
        if not np.all(np.isfinite(ev)):
            raise ValueError("eigenvalues contain non-finite entries")
        spacing = np.diff(ev)
        if np.any(spacing <= 0.0):
            raise ValueError("eigenvalues must be strictly increasing")
        gram = mat.conj() @ mat.T
        dev = float(np.max(np.abs(gram - np.eye(n))))
        if dev > ORTHONORMALITY_TOLERANCE:
            raise ValueError(
                f"basis vectors not orthonormal: max Gram deviation {dev:.3e} "
                f"exceeds {ORTHONORMALITY_TOLERANCE}"
            )
        mat = mat.copy()
        mat.flags.writeable = False
        ev = ev.copy()
        ev.flags.writeable = False
        spacing.flags.writeable = False
        object.__setattr__(self, "vectors", mat)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "spacing", spacing)

    def __setattr__(self, name, value):
        raise AttributeError("LabeledBasis is immutable")

    @property
    def dim(self) -> int:
        """Dimension of the underlying space."""
        return self.vectors.shape[1]

    @property
    def n_states(self) -> int:
        """Number of labeled states (equals dim for a full basis)."""
        return self.vectors.shape[0]

    @property
    def is_complete(self) -> bool:
        return self.n_states == self.dim

    def state(self, k: int, label: str | None = None) -> StateVector:
        """Basis vector k as a StateVector."""
        return StateVector(self.vectors[k], label=label)

    def state_at(self, x: float, label: str | None = None) -> StateVector:
        """Basis vector whose eigenvalue is closest to x."""
        return self.state(self.index_at(x), label=label)

    def index_at(self, x: float) -> int:
        """Grid index of the eigenvalue closest to x."""
        return int(np.argmin(np.abs(self.eigenvalues - x)))

    def spacing_per_state(self) -> np.ndarray:
        """Per-state eigenvalue spacing, last entry duplicated.

        Used as the quadrature weight when sums over the grid stand in for
        integrals; any fixed convention works as long as densities and
        weights use the same array.
        """
        return np.concatenate([self.spacing, self.spacing[-1:]])

    def __repr__(self):
        ev = self.eigenvalues
        return f"<LabeledBasis dim={self.dim} x=[{ev[0]:g}..{ev[-1]:g}]>"


class DiagonalUnitary:
    """Unitary that is diagonal in a labeled basis: phases in radians per state."""

    __slots__ = ("basis", "phases")

    def __init__(self, basis: LabeledBasis, phases):
        ph = np.asarray(phases, dtype=float)
        if ph.shape != (basis.n_states,):
            raise ValueError(f"need {basis.n_states} phases, got shape {ph.shape}")
        if not np.all(np.isfinite(ph)):
            raise ValueError("phases contain non-finite entries")
        ph = ph.copy()
        ph.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "phases", ph)

    def __setattr__(self, name, value):
        raise AttributeError("DiagonalUnitary is immutable")


def inner(psi: StateVector, phi: StateVector) -> complex:
    """Inner product <psi|phi>; its squared magnitude is the transition probability."""
    if psi.dim != phi.dim:
        raise ValueError(f"dimension mismatch: {psi.dim} vs {phi.dim}")
    return complex(np.vdot(psi.amplitudes, phi.amplitudes))


def transition_probability(psi: StateVector, phi: StateVector) -> float:
    """P(phi|psi) = |<phi|psi>|^2 for normalized states."""
    return abs(inner(phi, psi)) ** 2


def expand(psi: StateVector, basis: LabeledBasis) -> np.ndarray:
    """Amplitudes <m|psi> ordered by the basis eigenvalues."""
    if psi.dim != basis.dim:
        raise ValueError(f"dimension mismatch: {psi.dim} vs {basis.dim}")
    return basis.vectors.conj() @ psi.amplitudes


def apply_diagonal(unitary: DiagonalUnitary, psi: StateVector) -> StateVector:
    """Apply exp(i*phase_m) to each component of psi in the unitary's basis."""
    basis = unitary.basis
    if psi.dim != basis.dim:
        raise ValueError(f"dimension mismatch: {psi.dim} vs {basis.dim}")
    coeffs = expand(psi, basis) * np.exp(1j * unitary.phases)
    return StateVector(basis.vectors.T @ coeffs, label=psi.label)


def frame_shift(
    a: StateVector, b: StateVector, unitary: DiagonalUnitary, t: float
) -> tuple[StateVector, StateVector]:
    """Evolve both states by the same diagonal unitary scaled to parameter t.

    The unitary's phases are interpreted as rates per unit t.  Applying the
    same unitary to preparation and measurement state leaves every transition
    probability unchanged, which is what makes the common time frame
    physically irrelevant.
    """
    scaled = DiagonalUnitary(unitary.basis, unitary.phases * float(t))
    return apply_diagonal(scaled, a), apply_diagonal(scaled, b)


def random_state(dim: int, rng: np.random.Generator, label: str | None = None) -> StateVector:
    """Haar-ish random state: complex normal amplitudes, normalized."""
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVector(z / np.linalg.norm(z), label=label)


# ---------------------------------------------------------------------------
# In-house Hermitian eigensolver.
#
# Production path: Householder reduction to Hermitian tridiagonal form, a
# diagonal phase similarity that makes the off-diagonal real non-negative,
# then implicit-shift QL with the rotations accumulated into the eigenvector
# matrix.  O(d^3) with small constants; d <= ~500 solves in seconds.
#
# ``jacobi_eigh`` is an independent cyclic complex Jacobi implementation kept
# as a cross-check oracle for the test suite; it is O(d^3) per sweep with
# Python-loop constants, so use it only for small dimensions.
# ---------------------------------------------------------------------------


def _check_hermitian(H) -> np.ndarray:
    A = np.asarray(H, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    scale = max(float(np.max(np.abs(A))), 1.0)
    asym = float(np.max(np.abs(A - A.conj().T)))
    if asym > HERMITICITY_TOLERANCE * scale:
        raise ValueError(
            f"matrix is not Hermitian: max |H - H^dag| = {asym:.3e} "
            f"exceeds {HERMITICITY_TOLERANCE} * scale"
        )
    return (A + A.conj().T) / 2.0


def _householder_tridiagonalize(A: np.ndarray):
    """Unitary reduction to real symmetric tridiagonal form.

    Returns (diag, offdiag, Q) with H = Q T Q^dag, offdiag >= 0.
    Mutates its argument.
    """
    d = A.shape[0]
    Q = np.eye(d, dtype=complex)
    for k in range(d - 2):
        x = A[k + 1 :, k]
        xnorm = float(np.linalg.norm(x))
        # Column already tridiagonal: nothing to reflect away.
        if xnorm == 0.0 or float(np.linalg.norm(x[1:])) <= 1e-15 * xnorm:
            continue
        alpha = x[0]
        phase = alpha / abs(alpha) if abs(alpha) > 0.0 else 1.0
        v = x.astype(complex, copy=True)
        v[0] += phase * xnorm
        v /= np.linalg.norm(v)
        # Rank-2 update A <- P A P with P = I - 2 v v^dag on the trailing block.
        sub = A[k + 1 :, :]
        sub -= 2.0 * np.outer(v, v.conj() @ sub)
        sub2 = A[:, k + 1 :]
        sub2 -= 2.0 * np.outer(sub2 @ v, v.conj())
        Qs = Q[:, k + 1 :]
        Qs -= 2.0 * np.outer(Qs @ v, v.conj())
    # Diagonal phase similarity making the off-diagonal real non-negative.
    dvec = np.ones(d, dtype=complex)
    off = np.zeros(max(d - 1, 0))
    for k in range(d - 1):
        t = A[k + 1, k] * dvec[k]
        at = abs(t)
        dvec[k + 1] = t / at if at > 0.0 else dvec[k]
        off[k] = at
    return np.real(np.diag(A)).copy(), off, Q * dvec[np.newaxis, :]


def _tql_implicit(diag: np.ndarray, off: np.ndarray, Z: np.ndarray, max_iter: int = 60):
    """Implicit-shift QL for a real symmetric tridiagonal matrix.

    Eigenvector rotations are folded into the columns of Z in place.
    """
    d = diag.astype(float).copy()
    n = d.shape[0]
    e = np.zeros(n)
    e[: n - 1] = off
    eps = np.finfo(float).eps
    for l in range(n):
        for it in range(max_iter + 1):
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                raise EigensolverError(
                    f"QL iteration did not converge at index {l}: "
                    f"residual off-diagonal {abs(e[l]):.3e}"
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = c = 1.0
            p = 0.0
            broke = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    broke = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = Z[:, i].copy()
                zi1 = Z[:, i + 1].copy()
                Z[:, i + 1] = s * zi + c * zi1
                Z[:, i] = c * zi - s * zi1
            if broke:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, Z


def _canonical_phases(V: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude component is real positive."""
    lead = np.argmax(np.abs(V), axis=0)
    pivots = V[lead, np.arange(V.shape[1])]
    mags = np.abs(pivots)
    phases = np.where(mags > 0, pivots / np.where(mags > 0, mags, 1.0), 1.0)
    return V * np.conj(phases)[np.newaxis, :]


def eigh_hermitian(H) -> tuple[np.ndarray, np.ndarray]:
    """Full eigensystem of a Hermitian matrix, eigenvalues ascending.

    Returns (eigenvalues, vectors) with vectors[:, k] the k-th eigenvector.
    Degenerate clusters (gap below 1e-9 times the spectral range) are
    re-orthonormalized and deterministically ordered by the position of each
    vector's largest-magnitude component; all columns get a canonical global
    phase.  Residuals ||H v - w v||_inf are verified against
    EIGEN_RESIDUAL_TOLERANCE before returning.
    """
    A = _check_hermitian(H)
    H0 = A.copy()
    diag, off, Q = _householder_tridiagonalize(A)
    w, V = _tql_implicit(diag, off, Q)
    order = np.argsort(w, kind="stable")
    w = w[order]
    V = V[:, order]
    # Deterministic handling of (near-)degenerate clusters.
    span = max(float(w[-1] - w[0]), 1.0)
    gap_tol = 1e-9 * span
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[stop - 1] <= gap_tol:
            stop += 1
        if stop - start > 1:
            block = V[:, start:stop]
            # Columns are orthonormal to machine precision already; a QR pass
            # tightens the cluster and gives a reproducible in-cluster order.
            qmat, _ = np.linalg.qr(block)
            lead = np.argmax(np.abs(qmat), axis=0)
            sub = np.argsort(lead, kind="stable")
            V[:, start:stop] = qmat[:, sub]
        start = stop
    V = _canonical_phases(V)
    scale = max(float(np.max(np.abs(H0))), 1.0)
    resid = float(np.max(np.abs(H0 @ V - V * w[np.newaxis, :])))
    if resid > EIGEN_RESIDUAL_TOLERANCE * scale:
        raise EigensolverError(
            f"eigenpair residual {resid:.3e} exceeds "
            f"{EIGEN_RESIDUAL_TOLERANCE} * scale {scale:.3e}"
        )
    return w, V


def hermitian_eigen(H) -> LabeledBasis:
    """Diagonalize a Hermitian matrix into a LabeledBasis.

    The eigenvalues become the basis labels, so they must be simple: a
    LabeledBasis requires a strictly increasing grid.  Degenerate spectra
    raise DegenerateSpectrumError; use eigh_hermitian directly when labels
    are not needed.
    """
    w, V = eigh_hermitian(H)
    span = max(float(w[-1] - w[0]), 1.0)
    if np.any(np.diff(w) <= 1e-9 * span):
        raise DegenerateSpectrumError(
            "spectrum has (near-)degenerate eigenvalues; cannot build a "
            "strictly increasing eigenvalue grid"
        )
    return LabeledBasis(V.T, w)


def jacobi_eigh(H, tol: float = 1e-14, max_sweeps: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic complex Jacobi eigensolver (independent cross-check oracle).

    Annihilates one off-diagonal element per rotation; converges in a handful
    of sweeps.  Returns (eigenvalues, vectors) like eigh_hermitian but without
    the canonical ordering of degenerate clusters.
    """
    A = _check_hermitian(H).copy()
    d = A.shape[0]
    V = np.eye(d, dtype=complex)
    scale = max(float(np.max(np.abs(A))), 1e-300)
    for sweep in range(max_sweeps):
        off_max = 0.0
        for p in range(d - 1):
            row = np.abs(A[p, p + 1 :])
            if row.size:
                off_max = max(off_max, float(row.max()))
        if off_max <= tol * scale:
            break
        thresh = max(0.05 * off_max if sweep < 3 else 0.0, tol * scale)
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                m = abs(apq)
                if m <= thresh:
                    continue
                u = apq / m
                tau = (A[q, q].real - A[p, p].real) / (2.0 * m)
                if tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cu = np.conj(u)
                colp = A[:, p].copy()
                colq = A[:, q].copy()
                A[:, p] = c * colp - (cu * s) * colq
                A[:, q] = s * colp + (cu * c) * colq
                rowp = A[p, :].copy()
                rowq = A[q, :].copy()
                A[p, :] = c * rowp - (u * s) * rowq
                A[q, :] = s * rowp + (u * c) * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - (cu * s) * vq
                V[:, q] = s * vp + (cu * c) * vq
    else:
        raise EigensolverError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.real(np.diag(A))
    order = np.argsort(w, kind="stable")
    return w[order], _canonical_phases(V[:, order])
