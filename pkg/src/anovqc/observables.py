"""Adaptive k-local Hermitian observables.

A k-local observable is a ``K x K`` Hermitian matrix (``K = 2**k``) described
by ``K**2`` free real numbers. The canonical parameter order is

    phi = [c_11, ..., c_KK, a_12, b_12, a_13, b_13, ..., a_(K-1)K, b_(K-1)K]

i.e. the K real diagonal entries first, then the (real, imaginary) pair of
every upper-triangle entry ``H_ij = a_ij + i b_ij`` (i < j) in row-major order.
The lower triangle is the complex conjugate of the upper triangle.

Expectations of an exact k-local operator ``I (x) Q (x) I`` are computed
through the reduced density matrix of the measured qubits, never by embedding
Q into the full ``2**n x 2**n`` space.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InputError
from .statevec import StateVector, _is_window, apply_matrix


@dataclass
class HermitianParams:
    """Locality ``k`` plus the ``4**k`` real parameters of one observable."""

    k: int
    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).reshape(-1)
        K = 1 << self.k
        if self.k < 1 or self.phi.shape[0] != K * K:
            raise InputError(f"k={self.k} needs {K * K} parameters, got {self.phi.shape[0]}")

    @property
    def dim(self) -> int:
        return 1 << self.k

    @classmethod
    def from_phi(cls, phi) -> "HermitianParams":
        phi = np.asarray(phi, dtype=float).reshape(-1)
        return cls(locality_of(phi.shape[0]), phi)


def locality_of(n_params: int) -> int:
    """Return k such that ``4**k == n_params``."""
    k = (int(n_params).bit_length() - 1) // 2
    if k < 1 or 4**k != n_params:
        raise InputError(f"{n_params} is not a valid observable parameter count (4**k)")
    return k


@lru_cache(maxsize=16)
def _upper(K: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.triu_indices(K, 1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def to_matrix(params) -> np.ndarray:
    """Build the Hermitian matrix of a parameter set (``HermitianParams`` or raw phi)."""
    if not isinstance(params, HermitianParams):
        params = HermitianParams.from_phi(params)
    K = params.dim
    phi = params.phi
    rows, cols = _upper(K)
    off = phi[K:].reshape(-1, 2)
    H = np.zeros((K, K), dtype=complex)
    H[np.arange(K), np.arange(K)] = phi[:K]
    upper = off[:, 0] + 1j * off[:, 1]
    H[rows, cols] = upper
    H[cols, rows] = np.conj(upper)
    return H


def from_matrix(H, tol: float = 1e-12) -> HermitianParams:
    """Inverse of :func:`to_matrix`."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InputError(f"observable must be square, got shape {H.shape}")
    K = H.shape[0]
    k = K.bit_length() - 1
    if K < 2 or 1 << k != K:
        raise InputError(f"observable dimension {K} is not a power of two >= 2")
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - H.conj().T)) > tol * scale:
        raise InputError("matrix is not Hermitian within tolerance")
    rows, cols = _upper(K)
    upper = H[rows, cols]
    phi = np.empty(K * K)
    phi[:K] = np.real(np.diagonal(H))
    phi[K::2] = np.real(upper)
    phi[K + 1 :: 2] = np.imag(upper)
    return HermitianParams(k, phi)


def pauli_z_params(k: int = 1) -> HermitianParams:
    """Parameters of ``sigma_z`` tensored k times (diagonal +-1 parity)."""
    K = 1 << k
    diag = np.array([(-1) ** bin(i).count("1") for i in range(K)], dtype=float)
    phi = np.zeros(K * K)
    phi[:K] = diag
    return HermitianParams(k, phi)


# ---------------------------------------------------------------------------
# reduced density matrices


def _conj(x: np.ndarray) -> np.ndarray:
    return x.conj() if np.iscomplexobj(x) else x


def density_matrices(states: np.ndarray, qubits: Sequence[int], n: int, other: np.ndarray | None = None) -> np.ndarray:
    """Batched partial trace onto ``qubits``.

    Returns ``rho[b, i, j] = sum_r psi[b, i, r] * conj(chi[b, j, r])`` where
    ``chi`` is ``other`` (defaults to ``states``) and ``r`` runs over the
    traced-out qubits. With ``other`` omitted this is the reduced density
    matrix of each state.
    """
    qubits = tuple(int(q) for q in qubits)
    k = len(qubits)
    K = 1 << k
    B = states.shape[0]
    other = states if other is None else other

    if _is_window(qubits):
        start = qubits[0]
        a = 1 << (start - 1)
        c = 1 << (n - start - k + 1)
        if a == 1 or c >= 16:
            V = states.reshape(B, a, K, c)
            W = _conj(other.reshape(B, a, K, c)).swapaxes(2, 3)
            return np.matmul(V, W).sum(axis=1)
        if K * c <= 128:
            V = states.reshape(B, a, K * c).swapaxes(1, 2)
            G = V @ _conj(other.reshape(B, a, K * c))
            return np.einsum("bicjc->bij", G.reshape(B, K, c, K, c))
        V = np.ascontiguousarray(states.reshape(B, a, K, c).swapaxes(1, 2)).reshape(B, K, -1)
        W = np.ascontiguousarray(other.reshape(B, a, K, c).swapaxes(1, 2)).reshape(B, K, -1)
        return V @ _conj(W).swapaxes(1, 2)

    axes = [q for q in qubits]
    head = list(range(1, k + 1))
    V = np.moveaxis(states.reshape((B,) + (2,) * n), axes, head).reshape(B, K, -1)
    if other is states:
        W = V
    else:
        W = np.moveaxis(other.reshape((B,) + (2,) * n), axes, head).reshape(B, K, -1)
    return V @ _conj(W).swapaxes(1, 2)


def _check_subset(subset: Sequence[int], n: int) -> tuple[int, ...]:
    subset = tuple(subset)
    if not subset:
        raise InputError("qubit subset must be non-empty")
    for q in subset:
        if not isinstance(q, (int, np.integer)) or not 1 <= q <= n:
            raise InputError(f"qubit index {q!r} out of range 1..{n}")
    if len(set(subset)) != len(subset):
        raise InputError(f"duplicate qubit indices in {subset}")
    return tuple(int(q) for q in subset)


def reduced_density_matrix(state: StateVector, subset: Sequence[int]) -> np.ndarray:
    """Partial trace of ``|psi><psi|`` over every qubit not in ``subset``."""
    subset = _check_subset(subset, state.n_qubits)
    return density_matrices(state.amplitudes[None, :], subset, state.n_qubits)[0]


def expectation_from_density(rho: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``trace(H rho)`` for one or a batch of density matrices (complex result)."""
    return np.einsum("ij,...ji->...", H, rho)


def phi_gradient_from_density(rho: np.ndarray) -> np.ndarray:
    """d<H(phi)>/dphi given the reduced density matrix (or a batch of them).

    The expectation is linear in phi, so this does not depend on phi:
    d/dc_ii = Re rho_ii, d/da_ij = 2 Re rho_ji, d/db_ij = -2 Im rho_ji.
    """
    rho = np.asarray(rho)
    K = rho.shape[-1]
    rows, cols = _upper(K)
    out = np.empty(rho.shape[:-2] + (K * K,))
    out[..., :K] = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    lower = rho[..., cols, rows]
    out[..., K::2] = 2.0 * np.real(lower)
    out[..., K + 1 :: 2] = -2.0 * np.imag(lower)
    return out


def _check_dim(H: np.ndarray, subset: tuple[int, ...]) -> np.ndarray:
    H = np.asarray(H)
    K = 1 << len(subset)
    if H.shape != (K, K):
        raise InputError(f"observable of shape {H.shape} does not act on {len(subset)} qubits")
    return H


def expectation(state: StateVector, subset: Sequence[int], H) -> float:
    """``<psi| I (x) H (x) I |psi>`` with ``H`` acting on ``subset``."""
    subset = _check_subset(subset, state.n_qubits)
    H = _check_dim(H, subset)
    value = expectation_from_density(reduced_density_matrix(state, subset), H)
    scale = max(1.0, float(np.max(np.abs(H))))
    if abs(value.imag) > 1e-10 * scale:
        raise InputError(f"expectation has imaginary residue {value.imag:.3e}; observable not Hermitian?")
    return float(value.real)


def expectation_gradient_phi(state: StateVector, subset: Sequence[int], k: int | None = None) -> np.ndarray:
    """Gradient of the expectation with respect to the observable's phi."""
    subset = _check_subset(subset, state.n_qubits)
    if k is not None and k != len(subset):
        raise InputError(f"locality {k} does not match subset of size {len(subset)}")
    return phi_gradient_from_density(reduced_density_matrix(state, subset))


def apply_observable(states: np.ndarray, H: np.ndarray, subset: Sequence[int], n: int) -> np.ndarray:
    """``(I (x) H (x) I) psi`` for a batch of states; real states use Re(H).

    ``H`` is one ``K x K`` matrix or a ``(B, K, K)`` stack, one per state.

    For real amplitudes the imaginary (antisymmetric) part of a Hermitian H
    contributes nothing to any real inner product, so dropping it keeps the
    adjoint computation in real arithmetic.
    """
    if not np.iscomplexobj(states):
        H = np.real(H)
    return apply_matrix(states, H, subset, n)


# ---------------------------------------------------------------------------
# spectra


def eigen_spectrum(H) -> np.ndarray:
    """Real eigenvalues of a Hermitian matrix in ascending order."""
    return np.linalg.eigvalsh(np.asarray(H))


def eigen_decomposition(H) -> tuple[np.ndarray, np.ndarray, float]:
    """Eigenvalues, eigenvectors and the relative reconstruction residual."""
    H = np.asarray(H)
    w, U = np.linalg.eigh(H)
    residual = np.linalg.norm(H - (U * w) @ U.conj().T) / max(np.linalg.norm(H), 1e-300)
    return w, U, float(residual)


def unitarily_similar(H1, H2, tol: float | None = None) -> bool:
    """True iff ``H2 = U^dagger H1 U`` for some unitary U, i.e. equal spectra."""
    H1, H2 = np.asarray(H1), np.asarray(H2)
    if H1.shape != H2.shape:
        raise InputError(f"dimension mismatch: {H1.shape} vs {H2.shape}")
    s1, s2 = eigen_spectrum(H1), eigen_spectrum(H2)
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.max(np.abs(s1))), float(np.max(np.abs(s2))))
    return bool(np.all(np.abs(s1 - s2) <= tol))


def rayleigh_bounds(H) -> tuple[float, float]:
    """``(lambda_min, lambda_max)``: every expectation of H lies in this interval."""
    w = eigen_spectrum(H)
    return float(w[0]), float(w[-1])
