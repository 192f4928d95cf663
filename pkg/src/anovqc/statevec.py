"""Dense statevector representation and gate kernels.

Basis convention: qubits are numbered 1..n and qubit 1 is the most
significant bit of the basis index, so index ``b`` of an n-qubit vector is
``|i_1 i_2 ... i_n>`` with ``b = sum_q i_q * 2**(n - q)``.

The public single-state functions (``apply_single_qubit``, ``apply_cnot`` ...)
return new :class:`StateVector` objects. The batched kernels underneath work
on raw arrays of shape ``(B, 2**n)`` and are what the circuit and gradient
code use; real arrays stay real when every operator applied is real.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError

MAX_QUBITS = 20

IDENTITY2 = np.eye(2, dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}

# Below this many trailing amplitudes a stacked matmul degenerates into many
# tiny products; the kernel switches to one wide right-multiplication instead.
_MIN_TRAILING = 16


@dataclass
class StateVector:
    """Pure state of ``n_qubits`` qubits as ``2**n_qubits`` complex amplitudes."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 1 << self.n_qubits:
            raise InputError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got {amps.shape[0]}"
            )
        self.amplitudes = amps

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        n = int(amps.shape[0]).bit_length() - 1
        if amps.shape[0] < 2 or 1 << n != amps.shape[0]:
            raise InputError(f"amplitude count {amps.shape[0]} is not a power of two >= 2")
        return cls(n, amps)


def zero_state(n: int) -> StateVector:
    """The all-zero computational basis state ``|0...0>``."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ConfigError(f"number of qubits must be in 1..{MAX_QUBITS}, got {n!r}")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(n), amps)


def gate_rotation(axis: str, angle: float) -> np.ndarray:
    """Rotation ``exp(-i * angle * sigma_axis / 2)`` as a 2x2 complex matrix."""
    if not np.isfinite(angle):
        raise InputError(f"rotation angle must be finite, got {angle!r}")
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "z":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=complex)
    raise InputError(f"unknown rotation axis {axis!r}; expected 'x', 'y' or 'z'")


def ry_matrices(angles) -> np.ndarray:
    """Real Ry matrices for a sequence of angles, shape ``(len(angles), 2, 2)``."""
    angles = np.asarray(angles, dtype=float)
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    out = np.empty(angles.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _check_qubit(q: int, n: int) -> int:
    if not isinstance(q, (int, np.integer)) or not 1 <= q <= n:
        raise InputError(f"qubit index {q!r} out of range 1..{n}")
    return int(q)


def apply_single_qubit(state: StateVector, gate, target: int) -> StateVector:
    """Apply a 2x2 gate on qubit ``target`` (identity elsewhere)."""
    n = state.n_qubits
    target = _check_qubit(target, n)
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (2, 2):
        raise InputError(f"single-qubit gate must be 2x2, got shape {gate.shape}")
    out = apply_matrix(state.amplitudes[None, :], gate, (target,), n)
    return StateVector(n, out[0])


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    """Flip ``target`` on every basis component whose ``control`` bit is 1."""
    n = state.n_qubits
    control, target = _check_qubit(control, n), _check_qubit(target, n)
    if control == target:
        raise InputError("CNOT control and target must differ")
    return StateVector(n, state.amplitudes[cnot_permutation(control, target, n)])


# ---------------------------------------------------------------------------
# batched kernels on arrays of shape (B, 2**n)


@lru_cache(maxsize=256)
def cnot_permutation(control: int, target: int, n: int) -> np.ndarray:
    """Gather indices realizing CNOT: ``new = old[perm]``."""
    idx = np.arange(1 << n, dtype=np.int64)
    cmask = 1 << (n - control)
    tmask = 1 << (n - target)
    perm = np.where(idx & cmask, idx ^ tmask, idx)
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=64)
def cnot_chain_permutation(n: int) -> np.ndarray:
    """Gather indices for the linear chain CNOT(1,2), CNOT(2,3), ..., CNOT(n-1,n)."""
    perm = np.arange(1 << n, dtype=np.int64)
    for q in range(1, n):
        # composing gathers: applying CNOT to the index array itself
        perm = perm[cnot_permutation(q, q + 1, n)]
    perm.setflags(write=False)
    return perm


def invert_permutation(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0], dtype=perm.dtype)
    return inv


@lru_cache(maxsize=64)
def cnot_chain_inverse(n: int) -> np.ndarray:
    inv = invert_permutation(cnot_chain_permutation(n))
    inv.setflags(write=False)
    return inv


def _is_window(qubits: Sequence[int]) -> bool:
    return all(b == a + 1 for a, b in zip(qubits, qubits[1:]))


def apply_matrix(states: np.ndarray, matrix: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Apply a ``2**k x 2**k`` matrix to the ordered qubit list ``qubits``.

    ``states`` has shape ``(B, 2**n)``. The first listed qubit is the most
    significant bit of the matrix index. Returns a new array.
    """
    qubits = tuple(int(q) for q in qubits)
    k = len(qubits)
    K = 1 << k
    matrix = np.asarray(matrix)
    if matrix.ndim == 3:
        return _apply_per_state(states, matrix, qubits, n)
    if matrix.shape != (K, K):
        raise InputError(f"matrix shape {matrix.shape} does not act on {k} qubits")
    if len(set(qubits)) != k:
        raise InputError(f"duplicate qubits in {qubits}")
    for q in qubits:
        _check_qubit(q, n)
    B = states.shape[0]
    dtype = np.result_type(states.dtype, matrix.dtype)
    matrix = np.ascontiguousarray(matrix, dtype=dtype)

    if _is_window(qubits):
        start = qubits[0]
        a = 1 << (start - 1)
        c = 1 << (n - start - k + 1)
        if c >= _MIN_TRAILING:
            out = np.matmul(matrix, states.reshape(B, a, K, c))
            return out.reshape(B, -1)
        m = 1
        while m * K * c < _MIN_TRAILING and m < a:
            m *= 2
        wide = kron_chain([np.eye(m, dtype=dtype), matrix, np.eye(c, dtype=dtype)])
        out = states.reshape(-1, m * K * c) @ wide.T
        return out.reshape(B, -1)

    psi = states.reshape((B,) + (2,) * n)
    tail = list(range(n + 1 - k, n + 1))
    moved = np.moveaxis(psi, list(qubits), tail)
    shape = moved.shape
    out = (moved.reshape(B, -1, K) @ matrix.T).reshape(shape)
    out = np.moveaxis(out, tail, list(qubits))
    return np.ascontiguousarray(out).reshape(B, -1)


def _apply_per_state(states: np.ndarray, matrices: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    """Like :func:`apply_matrix` but with a different matrix for every state in the batch."""
    k = len(qubits)
    K = 1 << k
    B = states.shape[0]
    if matrices.shape != (B, K, K):
        raise InputError(f"expected per-state matrices of shape {(B, K, K)}, got {matrices.shape}")
    for q in qubits:
        _check_qubit(q, n)
    dtype = np.result_type(states.dtype, matrices.dtype)
    matrices = np.ascontiguousarray(matrices, dtype=dtype)
    if _is_window(qubits):
        start = qubits[0]
        a = 1 << (start - 1)
        c = 1 << (n - start - k + 1)
        if c >= _MIN_TRAILING:
            return np.matmul(matrices[:, None], states.reshape(B, a, K, c)).reshape(B, -1)
        # move the window to the front of a (K, a*c) view per state
        V = states.reshape(B, a, K * c).swapaxes(1, 2).reshape(B, K, c * a)
        out = np.matmul(matrices, V).reshape(B, K * c, a).swapaxes(1, 2)
        return np.ascontiguousarray(out).reshape(B, -1)
    psi = states.reshape((B,) + (2,) * n)
    tail = list(range(n + 1 - k, n + 1))
    moved = np.moveaxis(psi, list(qubits), tail)
    shape = moved.shape
    out = np.matmul(moved.reshape(B, -1, K), matrices.swapaxes(1, 2)).reshape(shape)
    return np.ascontiguousarray(np.moveaxis(out, tail, list(qubits))).reshape(B, -1)


def kron_chain(mats) -> np.ndarray:
    """Kronecker product of a sequence of square matrices, left to right."""
    out = mats[0]
    for m in mats[1:]:
        d = out.shape[0] * m.shape[0]
        out = (out[:, None, :, None] * m[None, :, None, :]).reshape(d, d)
    return out


def apply_product(states: np.ndarray, gates: np.ndarray, n: int, window: int = 4) -> np.ndarray:
    """Apply ``gates[0] (x) gates[1] (x) ... (x) gates[n-1]`` (one 2x2 per qubit).

    Consecutive qubits are fused into Kronecker blocks of ``window`` qubits so
    each block is a single matmul pass over the state.
    """
    gates = np.asarray(gates)
    if gates.shape != (n, 2, 2):
        raise InputError(f"expected {n} 2x2 gates, got shape {gates.shape}")
    out = states
    for start in range(0, n, window):
        block = kron_chain(gates[start : start + window])
        qubits = tuple(range(start + 1, min(start + window, n) + 1))
        out = apply_matrix(out, block, qubits, n)
    return out


def product_states(qubit_vectors: np.ndarray) -> np.ndarray:
    """Kronecker product of per-qubit vectors.

    ``qubit_vectors`` has shape ``(B, n, 2)``; the result has shape ``(B, 2**n)``.
    """
    B, n, _ = qubit_vectors.shape
    if n == 1:
        return np.ascontiguousarray(qubit_vectors[:, 0, :])
    # split in halves so the final outer product has two long axes
    left = product_states(qubit_vectors[:, : n // 2])
    right = product_states(qubit_vectors[:, n // 2 :])
    return (left[:, :, None] * right[:, None, :]).reshape(B, -1)
