"""Dense reference implementations used to cross-check the fast kernels.

Everything here builds full ``2**n x 2**n`` operators from Kronecker products
or from elementwise definitions, so it shares no code path with the reshaped
kernels in ``statevec``/``observables``. Only meant for n <= ~8.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from .circuit import CircuitConfig, ModelParams
from .statevec import HADAMARD, gate_rotation

_I2 = np.eye(2, dtype=complex)


def dense_single(gate, target: int, n: int) -> np.ndarray:
    """``I (x) ... (x) gate (x) ... (x) I`` with ``gate`` in slot ``target`` (1-based)."""
    factors = [np.asarray(gate, dtype=complex) if q == target else _I2 for q in range(1, n + 1)]
    return reduce(np.kron, factors)


def dense_cnot(control: int, target: int, n: int) -> np.ndarray:
    """CNOT from projectors: ``|0><0|_c (x) I + |1><1|_c (x) X_t``."""
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    a = [p0 if q == control else _I2 for q in range(1, n + 1)]
    b = [p1 if q == control else (x if q == target else _I2) for q in range(1, n + 1)]
    return reduce(np.kron, a) + reduce(np.kron, b)


def _bits(index: int, n: int) -> list[int]:
    return [(index >> (n - q)) & 1 for q in range(1, n + 1)]


def dense_embed(H, subset: Sequence[int], n: int) -> np.ndarray:
    """Embed a ``2**k`` operator acting on ``subset`` into the full space, entry by entry.

    ``<x|O|y> = H[x_S, y_S]`` if x and y agree outside S, else 0.
    """
    H = np.asarray(H, dtype=complex)
    subset = list(subset)
    rest = [q for q in range(1, n + 1) if q not in subset]
    N = 1 << n
    out = np.zeros((N, N), dtype=complex)
    for x in range(N):
        bx = _bits(x, n)
        for y in range(N):
            by = _bits(y, n)
            if any(bx[q - 1] != by[q - 1] for q in rest):
                continue
            i = int("".join(str(bx[q - 1]) for q in subset), 2)
            j = int("".join(str(by[q - 1]) for q in subset), 2)
            out[x, y] = H[i, j]
    return out


def dense_partial_trace(psi, subset: Sequence[int], n: int) -> np.ndarray:
    """Reduced density matrix by explicit summation over basis states."""
    psi = np.asarray(psi, dtype=complex).ravel()
    subset = list(subset)
    rest = [q for q in range(1, n + 1) if q not in subset]
    K = 1 << len(subset)
    rho = np.zeros((K, K), dtype=complex)
    for x in range(1 << n):
        bx = _bits(x, n)
        for y in range(1 << n):
            by = _bits(y, n)
            if all(bx[q - 1] == by[q - 1] for q in rest):
                i = int("".join(str(bx[q - 1]) for q in subset), 2)
                j = int("".join(str(by[q - 1]) for q in subset), 2)
                rho[i, j] += psi[x] * np.conj(psi[y])
    return rho


def dense_encode(x, axis: str = "y") -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    n = x.shape[0]
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    for q in range(1, n + 1):
        psi = dense_single(HADAMARD, q, n) @ psi
        psi = dense_single(gate_rotation(axis, x[q - 1]), q, n) @ psi
    return psi


def dense_layer(theta_row, n: int) -> np.ndarray:
    U = np.eye(1 << n, dtype=complex)
    for q in range(1, n):
        U = dense_cnot(q, q + 1, n) @ U
    for q in range(1, n + 1):
        U = dense_single(gate_rotation("y", theta_row[q - 1]), q, n) @ U
    return U


def dense_forward(x, params: ModelParams, config: CircuitConfig) -> np.ndarray:
    """Model outputs as ``<psi| O_g |psi>`` with every O_g embedded densely."""
    from .circuit import group_observables

    n = config.n_qubits
    psi = dense_encode(x, config.encoding_axis)
    if config.has_variational_block:
        for row in params.theta:
            psi = dense_layer(row, n) @ psi
    values = []
    for g, H in zip(config.groups, group_observables(params, config)):
        values.append(np.real(np.vdot(psi, dense_embed(H, g, n) @ psi)))
    values = np.array(values)
    if config.has_head:
        return values @ params.head_weight + params.head_bias
    return values


# ---------------------------------------------------------------------------
# equivalence suites (shared by the CLI and the tests)


def random_hermitian(K: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(K, K)) + 1j * rng.normal(size=(K, K))
    return scale * (A + A.conj().T) / 2


def random_state(n: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    psi = rng.normal(size=1 << n)
    if not real:
        psi = psi + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


def random_unitary(K: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(K, K)) + 1j * rng.normal(size=(K, K)))
    return Q * (np.diagonal(R) / np.abs(np.diagonal(R)))


def closed_form_suite(n_cases: int = 1000, seed: int = 0) -> float:
    """Largest deviation between the two-qubit trigonometric formulas and the simulator."""
    from .circuit import closed_form_example, closed_form_unrotated, simulate_closed_form_case

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        v = rng.normal(size=4)
        v /= np.linalg.norm(v)
        H1, H2 = random_hermitian(2, rng), random_hermitian(2, rng)
        t1, t2 = rng.uniform(-2 * np.pi, 2 * np.pi, size=2)
        got = closed_form_example(v, H1, H2, t1, t2)
        ref = simulate_closed_form_case(v, H1, H2, t1, t2)
        worst = max(worst, *(abs(a - b) for a, b in zip(got, ref)))
        # unrotated case: the rotated formula at zero angles, the plain formula, the simulator
        plain = closed_form_unrotated(v, H1, H2)
        at_zero = closed_form_example(v, H1, H2, 0.0, 0.0)
        sim_zero = simulate_closed_form_case(v, H1, H2, 0.0, 0.0)
        worst = max(worst, *(abs(a - b) for a, b in zip(plain, at_zero)), *(abs(a - b) for a, b in zip(plain, sim_zero)))
    return float(worst)


def dense_kron_suite(n_cases: int = 200, seed: int = 0, max_qubits: int = 6) -> dict[str, float]:
    """Largest deviation per kernel family between the fast kernels and dense matrices."""
    from .circuit import CircuitConfig, SchemeSpec, forward, init_params
    from .observables import expectation, reduced_density_matrix
    from .statevec import StateVector, apply_cnot, apply_matrix, apply_single_qubit

    rng = np.random.default_rng(seed)
    worst = {"single_qubit": 0.0, "multi_qubit": 0.0, "cnot": 0.0, "reduced_density": 0.0, "expectation": 0.0, "model": 0.0}
    for case in range(n_cases):
        n = int(rng.integers(1, max_qubits + 1))
        psi = random_state(n, rng)
        state = StateVector(n, psi)

        q = int(rng.integers(1, n + 1))
        U = random_unitary(2, rng)
        got = apply_single_qubit(state, U, q).amplitudes
        worst["single_qubit"] = max(worst["single_qubit"], float(np.max(np.abs(got - dense_single(U, q, n) @ psi))))

        if n >= 2:
            c, t = (int(x) for x in rng.choice(np.arange(1, n + 1), size=2, replace=False))
            got = apply_cnot(state, c, t).amplitudes
            worst["cnot"] = max(worst["cnot"], float(np.max(np.abs(got - dense_cnot(c, t, n) @ psi))))

        k = int(rng.integers(1, min(n, 3) + 1))
        subset = tuple(int(x) for x in rng.choice(np.arange(1, n + 1), size=k, replace=False))
        rho = reduced_density_matrix(state, subset)
        worst["reduced_density"] = max(
            worst["reduced_density"], float(np.max(np.abs(rho - dense_partial_trace(psi, subset, n))))
        )
        V = random_unitary(1 << k, rng)
        got = apply_matrix(psi[None, :], V, subset, n)[0]
        worst["multi_qubit"] = max(worst["multi_qubit"], float(np.max(np.abs(got - dense_embed(V, subset, n) @ psi))))

        H = random_hermitian(1 << k, rng)
        ref = float(np.real(np.vdot(psi, dense_embed(H, subset, n) @ psi)))
        worst["expectation"] = max(worst["expectation"], abs(expectation(state, subset, H) - ref))

        if case % 4 == 0 and n >= 2:
            kind = ("sliding_k_local", "pairwise_combinatorial", "fixed_pauli_z")[case // 4 % 3]
            if kind == "sliding_k_local":
                scheme = SchemeSpec(kind, k=int(rng.integers(1, n + 1)))
                d_out = int(rng.integers(1, n + 1))
            elif kind == "pairwise_combinatorial":
                size = int(rng.integers(2, n + 1))
                scheme = SchemeSpec(kind, subset=sorted(int(x) for x in rng.choice(np.arange(1, n + 1), size, replace=False)))
                d_out = int(rng.integers(1, 4))
            else:
                scheme = SchemeSpec(kind)
                d_out = int(rng.integers(1, n + 1))
            config = CircuitConfig(
                n, d_out, scheme, n_layers=int(rng.integers(0, 3)),
                use_rotations=bool(rng.integers(0, 2)), encoding_axis=str(rng.choice(["x", "y", "z"])),
            )
            params = init_params(config, rng, phi_std=1.0, head_std=1.0)
            x = rng.uniform(-np.pi, np.pi, size=n)
            worst["model"] = max(
                worst["model"], float(np.max(np.abs(forward(x, params, config) - dense_forward(x, params, config))))
            )
    return worst
