"""
Stokes parameter module for the Stokes workbench.

This module assembles the Stokes means, the variance matrix V_ij and the
normally ordered Stokes correlations from the thirteen real field moments
(CorrelationSet), and provides an independent oracle that evaluates the same
quantities from explicit truncated-space operator matrices.

Every Stokes operator is a bilinear form S_m = sum_ij a_i† sigma^m_ij a_j with
sigma^0 = 1 and sigma^1..3 the Pauli matrices Z, X, Y. Normal ordering gives

    <°S_m S_n°> = sum sigma^m_ij sigma^n_kl <a_i† a_k† a_j a_l>
    ½<{S_m, S_n}> = <°S_m S_n°> + ½ sum ({sigma^m, sigma^n})_il <a_i† a_l>

so the commutator correction is S_0 on the diagonal, S_n in row/column 0 and
zero elsewhere.
"""

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import scipy.sparse as sparse

from config import config
from fockspace import TruncationWarning, TwoModeState, expect_moment, safe_subspace_projector

PAULI = np.array([
    [[1, 0], [0, 1]],
    [[1, 0], [0, -1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
], dtype=complex)

PARAMETER_NAMES = (
    'n1', 'n2', 'cross_re', 'cross_im',
    'A', 'B', 'N12', 'G_re', 'G_im', 'X_re', 'X_im', 'Y_re', 'Y_im',
)

# (p, q, r, s) of a1†^p a2†^q a1^r a2^s for each stored moment
MOMENTS = {
    'n1': (1, 0, 1, 0),
    'n2': (0, 1, 0, 1),
    'cross': (1, 0, 0, 1),
    'A': (2, 0, 2, 0),
    'B': (0, 2, 0, 2),
    'N12': (1, 1, 1, 1),
    'G': (2, 0, 0, 2),
    'X': (2, 0, 1, 1),
    'Y': (1, 1, 0, 2),
}


@dataclass(frozen=True)
class CorrelationSet:
    """
    First- and second-order normally ordered field moments.

    Only one member of each Hermitian-conjugate pair is stored:
    <a2†a1> = conj(cross), <a2†a2†a1a1> = conj(G), <a1†a2†a1a1> = conj(X),
    <a2†a2†a1a2> = conj(Y).
    """

    n1: float = 0.0
    n2: float = 0.0
    cross: complex = 0j
    A: float = 0.0
    B: float = 0.0
    N12: float = 0.0
    G: complex = 0j
    X: complex = 0j
    Y: complex = 0j

    def as_vector(self) -> np.ndarray:
        """The 13 real parameters in PARAMETER_NAMES order."""
        return np.array([
            self.n1, self.n2, self.cross.real, self.cross.imag,
            self.A, self.B, self.N12,
            self.G.real, self.G.imag, self.X.real, self.X.imag, self.Y.real, self.Y.imag,
        ], dtype=float)

    @classmethod
    def from_vector(cls, values) -> 'CorrelationSet':
        v = [float(x) for x in values]
        return cls(
            n1=v[0], n2=v[1], cross=complex(v[2], v[3]),
            A=v[4], B=v[5], N12=v[6],
            G=complex(v[7], v[8]), X=complex(v[9], v[10]), Y=complex(v[11], v[12]),
        )

    def to_tensors(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        K[i, j] = <a_i† a_j> and T[i, k, j, l] = <a_i† a_k† a_j a_l>.

        A fourth-order moment depends only on how many creators and how many
        annihilators act on mode 2, which indexes the table below.
        """
        K = np.array([[self.n1, self.cross], [np.conj(self.cross), self.n2]], dtype=complex)
        table = np.array([
            [self.A, self.X, self.G],
            [np.conj(self.X), self.N12, self.Y],
            [np.conj(self.G), np.conj(self.Y), self.B],
        ], dtype=complex)
        idx = np.arange(2)
        i, k, j, l = np.meshgrid(idx, idx, idx, idx, indexing='ij')
        return K, table[i + k, j + l]

    @classmethod
    def from_tensors(cls, K: np.ndarray, T: np.ndarray) -> 'CorrelationSet':
        return cls(
            n1=float(K[0, 0].real), n2=float(K[1, 1].real), cross=complex(K[0, 1]),
            A=float(T[0, 0, 0, 0].real), B=float(T[1, 1, 1, 1].real),
            N12=float(T[0, 1, 0, 1].real),
            G=complex(T[0, 0, 1, 1]), X=complex(T[0, 0, 0, 1]), Y=complex(T[0, 1, 1, 1]),
        )

    def transformed(self, u) -> 'CorrelationSet':
        """Moments of the rotated modes b = u a (u: SU2Element or 2x2 array)."""
        m = np.asarray(getattr(u, 'm', u), dtype=complex)
        K, T = self.to_tensors()
        mc = m.conj()
        K_b = np.einsum('ip,jq,pq->ij', mc, m, K)
        T_b = np.einsum('ip,kq,jr,ls,pqrs->ikjl', mc, mc, m, m, T)
        return CorrelationSet.from_tensors(K_b, T_b)

    def physicality_violations(self, tolerance: float = 1e-9) -> List[str]:
        """Names of violated positivity and Cauchy-Schwarz constraints."""
        problems = []
        for name in ('n1', 'n2', 'A', 'B', 'N12'):
            if getattr(self, name) < -tolerance:
                problems.append(f"{name} < 0")
        if self.A + self.n1 < self.n1 ** 2 - tolerance:
            problems.append("Var(n1) < 0")
        if self.B + self.n2 < self.n2 ** 2 - tolerance:
            problems.append("Var(n2) < 0")
        if abs(self.cross) ** 2 > self.n1 * self.n2 + tolerance:
            problems.append("|cross|^2 > n1*n2")
        if abs(self.G) ** 2 > self.A * self.B + tolerance:
            problems.append("|G|^2 > A*B")
        return problems


def _lower_triangle(matrix: np.ndarray) -> List[List[float]]:
    return [[float(matrix[i, j]) for j in range(i + 1)] for i in range(matrix.shape[0])]


@dataclass(frozen=True)
class StokesSummary:
    """Stokes means S, variance matrix V and normally ordered correlations NO."""

    S: np.ndarray
    V: np.ndarray
    NO: np.ndarray = field(repr=False)

    @property
    def degree_of_polarization(self) -> float:
        if self.S[0] <= 0:
            return 0.0
        return float(np.linalg.norm(self.S[1:]) / self.S[0])

    def to_dict(self) -> Dict[str, object]:
        return {
            'S': [float(x) for x in self.S],
            'V': _lower_triangle(self.V),
            'NO': _lower_triangle(self.NO),
        }

    def csv_row(self) -> Dict[str, float]:
        """Flat row: S0..S3, then V_ij and NO_ij for i >= j."""
        row = {f'S{i}': float(self.S[i]) for i in range(4)}
        for name, matrix in (('V', self.V), ('NO', self.NO)):
            for i in range(4):
                for j in range(i + 1):
                    row[f'{name}{i}{j}'] = float(matrix[i, j])
        return row

    def max_deviation(self, other: 'StokesSummary') -> float:
        return float(max(
            np.max(np.abs(self.S - other.S)),
            np.max(np.abs(self.V - other.V)),
            np.max(np.abs(self.NO - other.NO)),
        ))


def correlations_from_state(state: TwoModeState) -> CorrelationSet:
    """
    Evaluate every CorrelationSet field directly on a state.

    Args:
        state: Normalized two-mode state

    Returns:
        CorrelationSet: Exact moments on the truncated space
    """
    values = {name: expect_moment(state, spec) for name, spec in MOMENTS.items()}
    return CorrelationSet(
        n1=values['n1'].real, n2=values['n2'].real, cross=values['cross'],
        A=values['A'].real, B=values['B'].real, N12=values['N12'].real,
        G=values['G'], X=values['X'], Y=values['Y'],
    )


def stokes_means(corr: CorrelationSet) -> np.ndarray:
    """S_0 = n1 + n2, S_1 = n1 - n2, S_2 = 2 Re<a1†a2>, S_3 = 2 Im<a1†a2>."""
    K, _ = corr.to_tensors()
    return np.einsum('mij,ij->m', PAULI, K).real


def normally_ordered_stokes(corr: CorrelationSet) -> np.ndarray:
    """
    Matrix of <°S_m S_n°>.

    For instance <°S_0S_0°> = A + B + 2 N12, <°S_2S_2°> = 2 N12 + 2 Re G,
    <°S_0S_2°> = 2 Re X + 2 Re Y and <°S_2S_3°> = 2 Im G.
    """
    _, T = corr.to_tensors()
    NO = np.einsum('mij,nkl,ikjl->mn', PAULI, PAULI, T).real
    return 0.5 * (NO + NO.T)


def commutator_correction(corr: CorrelationSet) -> np.ndarray:
    """½ sum ({sigma^m, sigma^n})_il <a_i† a_l>, the gap between ½<{S,S}> and <°SS°>."""
    K, _ = corr.to_tensors()
    products = np.einsum('mij,njl->mnil', PAULI, PAULI)
    anti = 0.5 * (products + products.transpose(1, 0, 2, 3))
    return np.einsum('mnil,il->mn', anti, K).real


def stokes_variances(corr: CorrelationSet) -> np.ndarray:
    """
    V_ij = ½<{S_i, S_j}> - <S_i><S_j> for i, j = 0..3.

    Args:
        corr: Field moments

    Returns:
        np.ndarray: Symmetric 4x4 variance matrix
    """
    S = stokes_means(corr)
    V = normally_ordered_stokes(corr) + commutator_correction(corr) - np.outer(S, S)
    return 0.5 * (V + V.T)


def summarize(corr: CorrelationSet) -> StokesSummary:
    return StokesSummary(
        S=stokes_means(corr),
        V=stokes_variances(corr),
        NO=normally_ordered_stokes(corr),
    )


def _sparse_ladders(cutoff: int):
    single = sparse.diags(np.sqrt(np.arange(1, cutoff + 1)), offsets=1, format='csr', dtype=complex)
    identity = sparse.identity(cutoff + 1, format='csr', dtype=complex)
    return sparse.kron(single, identity, format='csr'), sparse.kron(identity, single, format='csr')


def stokes_operators(cutoff: int) -> List[sparse.csr_matrix]:
    """Sparse matrices of S_0..S_3 on the flattened (cutoff+1)² grid."""
    a = _sparse_ladders(cutoff)
    ops = []
    for sigma in PAULI:
        op = sum(
            sigma[i, j] * (a[i].conj().T @ a[j])
            for i in range(2) for j in range(2) if sigma[i, j] != 0
        )
        ops.append(sparse.csr_matrix(op))
    return ops


def stokes_oracle(state: TwoModeState) -> StokesSummary:
    """
    Stokes summary computed directly from operator matrices.

    Means and ½<{S_i, S_j}> come from S_i|psi>; normally ordered
    correlations from the vectors a_j a_l |psi>. This path shares no moment
    algebra with correlations_from_state and serves as its reference.

    Args:
        state: Normalized two-mode state

    Returns:
        StokesSummary: Reference values
    """
    if state.boundary_mass > config.boundary_threshold:
        warnings.warn(
            f"stokes_oracle: boundary mass {state.boundary_mass:.3e}; operator matrices are "
            f"truncated at n = {state.cutoff}",
            TruncationWarning,
            stacklevel=2,
        )

    psi = state.vector()
    applied = [op @ psi for op in stokes_operators(state.cutoff)]
    S = np.array([np.vdot(psi, v).real for v in applied])
    sym = np.array([[np.vdot(v, w).real for w in applied] for v in applied])
    V = sym - np.outer(S, S)

    a = _sparse_ladders(state.cutoff)
    lowered = [[a[j] @ (a[l] @ psi) for l in range(2)] for j in range(2)]
    T = np.empty((2, 2, 2, 2), dtype=complex)
    for i, k, j, l in np.ndindex(2, 2, 2, 2):
        T[i, k, j, l] = np.vdot(lowered[i][k], lowered[j][l])
    NO = np.einsum('mij,nkl,ikjl->mn', PAULI, PAULI, T).real

    return StokesSummary(S=S, V=0.5 * (V + V.T), NO=0.5 * (NO + NO.T))


LEVI_CIVITA = {(1, 2): 3, (2, 3): 1, (3, 1): 2}


def su2_algebra_deviation(cutoff: int) -> Dict[str, float]:
    """
    Largest violation of the SU(2) relations on the n1 + n2 <= cutoff - 2 subspace.

    Returns:
        dict: 'commutators' for [S_i, S_j] - 2i S_k, 'S0' for [S_0, S_i],
        'casimir' for S_1² + S_2² + S_3² - S_0(S_0 + 2)
    """
    ops = [op.toarray() for op in stokes_operators(cutoff)]
    P = safe_subspace_projector(cutoff)

    def worst(matrix):
        return float(np.max(np.abs(matrix @ P)))

    commutators = max(
        worst(ops[i] @ ops[j] - ops[j] @ ops[i] - 2j * ops[k])
        for (i, j), k in LEVI_CIVITA.items()
    )
    s0 = max(worst(ops[0] @ ops[i] - ops[i] @ ops[0]) for i in range(1, 4))
    casimir = worst(
        ops[1] @ ops[1] + ops[2] @ ops[2] + ops[3] @ ops[3]
        - ops[0] @ (ops[0] + 2 * np.eye(ops[0].shape[0]))
    )
    return {'commutators': commutators, 'S0': s0, 'casimir': casimir}
