"""
Two-mode Fock space module for the Stokes workbench.

This module holds the truncated two-mode state representation, the state
constructors (coherent, two-mode squeezed coherent, Fock, superpositions),
exact evaluation of normally ordered moments by ladder-operator action on the
amplitude grid, and passive two-mode rotations b = u a.

Amplitude grids are indexed c[n1, n2] with 0 <= n1, n2 <= cutoff.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb, eval_genlaguerre, gammaln

from config import config

logger = logging.getLogger(__name__)

MAX_MOMENT_DEGREE = 4


class StateError(ValueError):
    """Raised when a state cannot be constructed or a moment is ill-posed."""


class TruncationWarning(UserWarning):
    """Issued when probability mass reaches the edge of the truncated basis."""


@dataclass(frozen=True)
class TwoModeState:
    """Pure two-mode state on the truncated Fock grid (immutable)."""

    cutoff: int
    amplitudes: np.ndarray

    def __post_init__(self):
        grid = np.array(self.amplitudes, dtype=complex)
        if grid.shape != (self.cutoff + 1, self.cutoff + 1):
            raise StateError(
                f"amplitudes must have shape {(self.cutoff + 1, self.cutoff + 1)}, got {grid.shape}"
            )
        grid.setflags(write=False)
        object.__setattr__(self, 'amplitudes', grid)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    @property
    def boundary_mass(self) -> float:
        """Probability found on the last row or column of the grid."""
        probs = np.abs(self.amplitudes) ** 2
        return float(probs[-1, :].sum() + probs[:-1, -1].sum())

    def photon_distribution(self) -> np.ndarray:
        """Joint photon-number distribution P(n1, n2)."""
        return np.abs(self.amplitudes) ** 2

    def vector(self) -> np.ndarray:
        """Flattened amplitudes, mode-1 index major (matches kron(a, 1))."""
        return self.amplitudes.ravel()

    def overlap(self, other: 'TwoModeState') -> float:
        """|<self|other>|, the projective comparison used for global phases."""
        if other.cutoff != self.cutoff:
            raise StateError("cannot compare states with different cutoffs")
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)))


@dataclass(frozen=True)
class MomentSpec:
    """Exponents of the normally ordered monomial a1†^p a2†^q a1^r a2^s."""

    p: int = 0
    q: int = 0
    r: int = 0
    s: int = 0

    def __post_init__(self):
        exponents = (self.p, self.q, self.r, self.s)
        if any(int(e) != e or e < 0 for e in exponents):
            raise StateError(f"moment exponents must be non-negative integers, got {exponents}")
        if sum(exponents) > MAX_MOMENT_DEGREE:
            raise StateError(
                f"moment degree {sum(exponents)} exceeds the supported maximum {MAX_MOMENT_DEGREE}"
            )

    @property
    def conjugate(self) -> 'MomentSpec':
        return MomentSpec(self.r, self.s, self.p, self.q)


MomentLike = Union[MomentSpec, Sequence[int]]


def _as_spec(spec: MomentLike) -> MomentSpec:
    if isinstance(spec, MomentSpec):
        return spec
    return MomentSpec(*spec)


def _finalize(grid: np.ndarray, cutoff: int, label: str) -> TwoModeState:
    """
    Normalize a raw amplitude grid and check the truncation boundary.

    Args:
        grid: Unnormalized amplitudes
        cutoff: Per-mode photon number cutoff
        label: Constructor name used in diagnostics

    Returns:
        TwoModeState: The normalized state

    Raises:
        StateError: If the grid has zero norm
    """
    norm = np.sqrt(np.sum(np.abs(grid) ** 2))
    if not np.isfinite(norm) or norm == 0.0:
        raise StateError(f"{label}: amplitudes have zero or non-finite norm")

    state = TwoModeState(cutoff, grid / norm)
    mass = state.boundary_mass
    if mass > config.boundary_threshold:
        warnings.warn(
            f"{label}: boundary mass {mass:.3e} exceeds {config.boundary_threshold:.1e}; "
            f"increase the cutoff (currently {cutoff})",
            TruncationWarning,
            stacklevel=3,
        )
    logger.debug("%s: cutoff=%d boundary_mass=%.3e", label, cutoff, mass)
    return state


def _check_cutoff(cutoff: int) -> None:
    if int(cutoff) != cutoff or cutoff < 1:
        raise StateError(f"cutoff must be an integer >= 1, got {cutoff}")


def _check_finite(**values: complex) -> None:
    for name, value in values.items():
        if not np.isfinite(complex(value)):
            raise StateError(f"{name} must be finite, got {value}")


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """
    Single-mode coherent amplitudes e^{-|a|²/2} a^n / sqrt(n!) for n <= cutoff.

    Magnitudes are formed in log space so large |alpha| neither overflows
    nor underflows before normalization.
    """
    n = np.arange(cutoff + 1)
    if alpha == 0:
        return (n == 0).astype(complex)
    log_magnitude = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) - abs(alpha) ** 2 / 2
    return np.exp(log_magnitude + 1j * n * np.angle(alpha))


def make_coherent(alpha1: complex, alpha2: complex, cutoff: int) -> TwoModeState:
    """
    Build the product coherent state |alpha1>|alpha2>.

    Keep |alpha|² + 6|alpha| well below the cutoff; otherwise a
    TruncationWarning is issued.

    Args:
        alpha1: Mode-1 amplitude
        alpha2: Mode-2 amplitude
        cutoff: Per-mode photon number cutoff

    Returns:
        TwoModeState: The normalized coherent state

    Raises:
        StateError: If the cutoff is below 1 or an amplitude is not finite
    """
    _check_cutoff(cutoff)
    _check_finite(alpha1=alpha1, alpha2=alpha2)
    grid = np.outer(coherent_amplitudes(alpha1, cutoff), coherent_amplitudes(alpha2, cutoff))
    return _finalize(grid, cutoff, 'make_coherent')


def displacement_matrix(alpha: complex, cutoff: int) -> np.ndarray:
    """
    Fock-basis matrix elements <m|D(alpha)|n> for m, n <= cutoff.

    Uses the closed form with generalized Laguerre polynomials, so each
    element equals its infinite-dimensional value.
    """
    idx = np.arange(cutoff + 1)
    m, n = np.meshgrid(idx, idx, indexing='ij')
    lo = np.minimum(m, n)
    hi = np.maximum(m, n)
    gap = hi - lo
    x = abs(alpha) ** 2

    base = np.where(m >= n, alpha, -np.conj(alpha))
    power = np.abs(base) ** gap * np.exp(1j * gap * np.angle(base))
    prefactor = np.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - x / 2)
    return prefactor * power * eval_genlaguerre(lo, gap, x)


def make_squeezed_coherent(alpha1: complex, alpha2: complex, zeta: complex,
                           cutoff: int) -> TwoModeState:
    """
    Build D(alpha1) D(alpha2) S(zeta) |0,0>.

    S(zeta) = exp(zeta* a1 a2 - zeta a1† a2†) is two-mode squeezing, so the
    state before displacement is sech r * sum_n (-e^{i arg zeta} tanh r)^n |n,n>
    with r = |zeta|. Truncation heuristic: tanh(r)^(2N) and the displaced
    Poisson tails at |alpha|² + sinh²r must both be negligible at N = cutoff.

    Args:
        alpha1: Mode-1 displacement
        alpha2: Mode-2 displacement
        zeta: Two-mode squeeze parameter
        cutoff: Per-mode photon number cutoff

    Returns:
        TwoModeState: The normalized squeezed coherent state

    Raises:
        StateError: If the cutoff is below 1 or an input is not finite
    """
    _check_cutoff(cutoff)
    _check_finite(alpha1=alpha1, alpha2=alpha2, zeta=zeta)

    r = abs(zeta)
    ratio = -np.exp(1j * np.angle(zeta)) * np.tanh(r)
    pairs = np.cumprod(np.concatenate(([1.0 + 0j], np.full(cutoff, ratio)))) / np.cosh(r)
    squeezed = np.diag(pairs)

    grid = displacement_matrix(alpha1, cutoff) @ squeezed @ displacement_matrix(alpha2, cutoff).T
    return _finalize(grid, cutoff, 'make_squeezed_coherent')


def make_fock(n1: int, n2: int, cutoff: int) -> TwoModeState:
    """Build the number state |n1, n2>."""
    _check_cutoff(cutoff)
    if not (0 <= n1 <= cutoff and 0 <= n2 <= cutoff):
        raise StateError(f"Fock indices ({n1}, {n2}) outside 0..{cutoff}")

    grid = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    grid[n1, n2] = 1.0
    return _finalize(grid, cutoff, 'make_fock')


def make_superposition(terms: Iterable[Tuple[int, int, complex]], cutoff: int) -> TwoModeState:
    """
    Build a normalized superposition of basis states.

    Args:
        terms: (n1, n2, amplitude) triples; repeated indices add up
        cutoff: Per-mode photon number cutoff

    Returns:
        TwoModeState: The normalized superposition

    Raises:
        StateError: If no terms are given, an index is out of range, or all
            amplitudes vanish
    """
    _check_cutoff(cutoff)
    terms = list(terms)
    if not terms:
        raise StateError("superposition needs at least one term")

    grid = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    for n1, n2, amplitude in terms:
        if not (0 <= n1 <= cutoff and 0 <= n2 <= cutoff):
            raise StateError(f"superposition term ({n1}, {n2}) outside 0..{cutoff}")
        _check_finite(amplitude=amplitude)
        grid[n1, n2] += amplitude

    if not np.any(grid):
        raise StateError("superposition amplitudes are all zero")
    return _finalize(grid, cutoff, 'make_superposition')


def random_superposition(n_terms: int, cutoff: int, rng: np.random.Generator,
                         max_photons: int = 3) -> TwoModeState:
    """Random non-Gaussian test state on up to n_terms distinct basis states."""
    limit = min(max_photons, cutoff)
    basis = [(n1, n2) for n1 in range(limit + 1) for n2 in range(limit + 1)]
    chosen = rng.choice(len(basis), size=min(n_terms, len(basis)), replace=False)
    amps = rng.normal(size=len(chosen)) + 1j * rng.normal(size=len(chosen))
    terms = [(basis[i][0], basis[i][1], amp) for i, amp in zip(chosen, amps)]
    return make_superposition(terms, cutoff)


def _lower(grid: np.ndarray, axis: int, shift: complex = 0j) -> np.ndarray:
    """Apply (a_axis - shift) to an amplitude grid; exact on the truncated basis."""
    cutoff = grid.shape[0] - 1
    sqrt_n = np.sqrt(np.arange(1, cutoff + 1))
    out = np.zeros_like(grid)
    if axis == 0:
        out[:-1, :] = sqrt_n[:, None] * grid[1:, :]
    else:
        out[:, :-1] = sqrt_n[None, :] * grid[:, 1:]
    if shift:
        out -= shift * grid
    return out


def _lowered(grid: np.ndarray, n_first: int, n_second: int,
             shift: Tuple[complex, complex]) -> np.ndarray:
    for _ in range(n_first):
        grid = _lower(grid, 0, shift[0])
    for _ in range(n_second):
        grid = _lower(grid, 1, shift[1])
    return grid


def expect_displaced_moment(state: TwoModeState, spec: MomentLike,
                            shift: Tuple[complex, complex] = (0j, 0j)) -> complex:
    """
    Normally ordered moment of the displaced modes d_i = a_i - shift_i.

    <d1†^p d2†^q d1^r d2^s> = (d1^p d2^q psi)† (d1^r d2^s psi), with every
    ladder action done by shift-and-scale on the grid.
    """
    spec = _as_spec(spec)
    left = _lowered(state.amplitudes, spec.p, spec.q, shift)
    right = _lowered(state.amplitudes, spec.r, spec.s, shift)
    return complex(np.vdot(left, right))


def expect_moment(state: TwoModeState, spec: MomentLike) -> complex:
    """
    Exact <a1†^p a2†^q a1^r a2^s> on the truncated space.

    Args:
        state: Normalized two-mode state
        spec: MomentSpec or (p, q, r, s) tuple of total degree <= 4

    Returns:
        complex: The moment; conj of the (r, s, p, q) moment
    """
    return expect_displaced_moment(state, spec)


def _powers(z: complex, count: int) -> np.ndarray:
    """[z^0, z^1, ..., z^count] by repeated products (exact for z = 0)."""
    return np.concatenate(([1.0 + 0j], np.cumprod(np.full(count, z, dtype=complex))))


def _block_matrix(t: np.ndarray, total: int) -> np.ndarray:
    """
    Action of a passive rotation on the total-photon-number block `total`.

    With a_i† -> sum_j t[i, j] a_j†, entry [m1, n1] is the amplitude of
    |m1, total-m1> produced from |n1, total-n1>.
    """
    idx = np.arange(total + 1)
    m1 = idx[:, None, None]
    n1 = idx[None, :, None]
    k = idx[None, None, :]
    n2 = total - n1
    j = m1 - k

    tables = [[_powers(t[row, col], total) for col in range(2)] for row in range(2)]

    def pick(row, col, exponent):
        return tables[row][col][np.clip(exponent, 0, total)]

    # comb() vanishes outside its range, which masks the clipped exponents
    terms = (
        comb(n1, k) * pick(0, 0, k) * pick(0, 1, n1 - k)
        * comb(n2, j) * pick(1, 0, j) * pick(1, 1, n2 - j)
    )
    m1_flat = idx[:, None]
    n1_flat = idx[None, :]
    scale = np.exp(0.5 * (
        gammaln(m1_flat + 1) + gammaln(total - m1_flat + 1)
        - gammaln(n1_flat + 1) - gammaln(total - n1_flat + 1)
    ))
    return terms.sum(axis=2) * scale


def apply_two_mode_unitary(state: TwoModeState, u) -> TwoModeState:
    """
    Return U|psi> with U† a U = u a, so that a-moments of the result equal
    b-moments of the input for b = u a.

    The rotation conserves total photon number and is applied block by block
    in closed form; blocks with total > cutoff are incomplete on the grid and
    any amplitude pushed outside it is dropped (reported as norm drift).

    Args:
        state: Input state
        u: SU2Element or 2x2 unitary matrix

    Returns:
        TwoModeState: The rotated state (not renormalized)

    Raises:
        StateError: If u is not a 2x2 unitary
    """
    m = np.asarray(getattr(u, 'm', u), dtype=complex)
    if m.shape != (2, 2) or not np.allclose(m.conj().T @ m, np.eye(2), atol=1e-12):
        raise StateError("mode transformation must be a 2x2 unitary matrix")

    cutoff = state.cutoff
    t = m.T
    source = state.amplitudes
    result = np.zeros_like(source)

    for total in range(2 * cutoff + 1):
        lo, hi = max(0, total - cutoff), min(total, cutoff)
        n1 = np.arange(lo, hi + 1)
        block = source[n1, total - n1]
        if not np.any(block):
            continue
        mixed = _block_matrix(t, total)[lo:hi + 1, lo:hi + 1] @ block
        result[n1, total - n1] = mixed

    rotated = TwoModeState(cutoff, result)
    drift = abs(rotated.norm - state.norm)
    if drift > config.norm_tolerance:
        warnings.warn(
            f"apply_two_mode_unitary: norm drifted by {drift:.3e}; increase the cutoff",
            TruncationWarning,
            stacklevel=2,
        )
    return rotated


def safe_subspace_projector(cutoff: int, margin: int = 2) -> np.ndarray:
    """Diagonal projector onto n1 + n2 <= cutoff - margin."""
    n1, n2 = np.meshgrid(np.arange(cutoff + 1), np.arange(cutoff + 1), indexing='ij')
    keep = ((n1 + n2) <= cutoff - margin).ravel()
    return np.diag(keep.astype(float))


