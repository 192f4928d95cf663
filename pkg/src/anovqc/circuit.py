"""Variational circuit forward pass with adaptive observables.

Pipeline per sample: Hadamard + rotation encoding of each feature, ``L``
variational layers (CNOT chain over adjacent qubits, then Ry on every qubit),
then one expectation value per measurement group. Sliding schemes keep the
first ``d_out`` group values; pairwise schemes feed all pair values through a
linear head when the pair count differs from ``d_out``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError
from .observables import (
    HermitianParams,
    density_matrices,
    expectation_from_density,
    pauli_z_params,
    to_matrix,
)
from .statevec import (
    MAX_QUBITS,
    StateVector,
    _is_window,
    apply_product,
    cnot_chain_permutation,
    gate_rotation,
    kron_chain,
    product_states,
    ry_matrices,
)

SCHEMES = ("fixed_pauli_z", "sliding_k_local", "pairwise_combinatorial")

# Amplitudes simulated together: eight 16-qubit states fit in L2, a full batch does not.
CHUNK_AMPLITUDES = 8 << 16


def chunk_size(n: int) -> int:
    """Samples per simulation chunk for ``n`` qubits."""
    return max(1, CHUNK_AMPLITUDES >> n)


@dataclass
class SchemeSpec:
    kind: str = "sliding_k_local"
    k: int | None = None
    subset: list[int] | None = None


@dataclass
class CircuitConfig:
    n_qubits: int
    d_out: int
    scheme: SchemeSpec = field(default_factory=SchemeSpec)
    n_layers: int = 4
    use_rotations: bool = True
    encoding_axis: str = "y"

    def __post_init__(self):
        if isinstance(self.scheme, dict):
            self.scheme = SchemeSpec(**self.scheme)
        self.validate()

    def validate(self) -> None:
        n = self.n_qubits
        if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
            raise ConfigError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n!r}")
        if self.n_layers < 0:
            raise ConfigError(f"n_layers must be >= 0, got {self.n_layers}")
        if self.d_out < 1:
            raise ConfigError(f"d_out must be >= 1, got {self.d_out}")
        if self.encoding_axis not in ("x", "y", "z"):
            raise ConfigError(f"encoding_axis must be x, y or z, got {self.encoding_axis!r}")
        s = self.scheme
        if s.kind not in SCHEMES:
            raise ConfigError(f"unknown scheme {s.kind!r}; expected one of {SCHEMES}")
        if s.kind == "sliding_k_local":
            if s.k is None or not 1 <= s.k <= n:
                raise ConfigError(f"sliding scheme needs 1 <= k <= n_qubits, got k={s.k}")
            if self.d_out > n:
                raise ConfigError(f"sliding scheme has only {n} groups; d_out={self.d_out} too large")
        elif s.kind == "pairwise_combinatorial":
            pairwise_groups(s.subset if s.subset is not None else [], n)
        elif self.d_out > n:
            raise ConfigError(f"fixed Pauli baseline measures at most {n} qubits; d_out={self.d_out}")

    @property
    def has_variational_block(self) -> bool:
        return self.use_rotations and self.n_layers > 0

    @property
    def has_head(self) -> bool:
        return self.scheme.kind == "pairwise_combinatorial" and len(self.groups) != self.d_out

    @property
    def groups(self) -> list[tuple[int, ...]]:
        return measurement_groups(self)

    @property
    def trainable_observables(self) -> bool:
        return self.scheme.kind != "fixed_pauli_z"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitConfig":
        d = dict(d)
        scheme = d.pop("scheme", {})
        try:
            return cls(scheme=SchemeSpec(**scheme), **d)
        except TypeError as exc:
            raise ConfigError(f"bad circuit config: {exc}") from None


@dataclass
class ModelParams:
    """All trainable values: rotation angles, observable parameters, linear head."""

    theta: np.ndarray
    phi_groups: list[np.ndarray]
    head_weight: np.ndarray | None = None
    head_bias: np.ndarray | None = None

    def flatten(self) -> np.ndarray:
        parts = [np.asarray(self.theta, float).ravel()]
        parts += [np.asarray(p, float).ravel() for p in self.phi_groups]
        if self.head_weight is not None:
            parts += [self.head_weight.ravel(), self.head_bias.ravel()]
        return np.concatenate(parts) if parts else np.zeros(0)

    @classmethod
    def from_flat(cls, config: CircuitConfig, flat) -> "ModelParams":
        flat = np.asarray(flat, dtype=float).ravel()
        expected = count_parameters(config)
        if flat.shape[0] != expected:
            raise InputError(f"expected {expected} parameters for this circuit, got {flat.shape[0]}")
        pos = 0

        def take(count):
            nonlocal pos
            chunk = flat[pos : pos + count].copy()
            pos += count
            return chunk

        n = config.n_qubits
        L = config.n_layers if config.use_rotations else 0
        theta = take(L * n).reshape(L, n)
        phi = []
        if config.trainable_observables:
            phi = [take(4 ** len(g)) for g in config.groups]
        weight = bias = None
        if config.has_head:
            weight = take(len(config.groups) * config.d_out).reshape(len(config.groups), config.d_out)
            bias = take(config.d_out)
        return cls(theta, phi, weight, bias)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.theta.copy(),
            [p.copy() for p in self.phi_groups],
            None if self.head_weight is None else self.head_weight.copy(),
            None if self.head_bias is None else self.head_bias.copy(),
        )


# ---------------------------------------------------------------------------
# measurement groups and parameter counts


def sliding_groups(n: int, k: int) -> list[tuple[int, ...]]:
    """Cyclic windows ``(i, i+1, ..., i+k-1) mod n`` for i = 1..n."""
    if not 1 <= k <= n:
        raise ConfigError(f"window size k={k} must satisfy 1 <= k <= n={n}")
    return [tuple((i + j) % n + 1 for j in range(k)) for i in range(n)]


def pairwise_groups(subset: Sequence[int], n: int | None = None) -> list[tuple[int, int]]:
    """Every unordered pair of the observing subset, in lexicographic order."""
    subset = list(subset)
    if len(subset) < 2:
        raise ConfigError(f"pairwise scheme needs at least 2 qubits, got {subset}")
    if len(set(subset)) != len(subset):
        raise ConfigError(f"pairwise subset has duplicate qubits: {subset}")
    if n is not None and any(not 1 <= q <= n for q in subset):
        raise ConfigError(f"pairwise subset {subset} out of range 1..{n}")
    return list(combinations(subset, 2))


def measurement_groups(config: CircuitConfig) -> list[tuple[int, ...]]:
    s = config.scheme
    if s.kind == "sliding_k_local":
        return sliding_groups(config.n_qubits, s.k)[: config.d_out]
    if s.kind == "pairwise_combinatorial":
        return pairwise_groups(s.subset, config.n_qubits)
    return [(q,) for q in range(1, config.d_out + 1)]


def count_parameters(config: CircuitConfig) -> int:
    total = config.n_layers * config.n_qubits if config.use_rotations else 0
    groups = config.groups
    if config.trainable_observables:
        total += sum(4 ** len(g) for g in groups)
    if config.has_head:
        total += len(groups) * config.d_out + config.d_out
    return total


def init_params(config: CircuitConfig, rng: np.random.Generator, phi_std: float = 0.1, head_std: float = 0.1) -> ModelParams:
    """Random start: theta ~ U(-pi, pi), phi ~ N(0, phi_std), head ~ N(0, head_std), bias 0."""
    n = config.n_qubits
    L = config.n_layers if config.use_rotations else 0
    theta = rng.uniform(-np.pi, np.pi, size=(L, n))
    phi = []
    if config.trainable_observables:
        phi = [rng.normal(0.0, phi_std, size=4 ** len(g)) for g in config.groups]
    weight = bias = None
    if config.has_head:
        weight = rng.normal(0.0, head_std, size=(len(config.groups), config.d_out))
        bias = np.zeros(config.d_out)
    return ModelParams(theta, phi, weight, bias)


def group_observables(params: ModelParams, config: CircuitConfig) -> list[np.ndarray]:
    if not config.trainable_observables:
        z = to_matrix(pauli_z_params(1))
        return [z for _ in config.groups]
    return [to_matrix(HermitianParams.from_phi(p)) for p in params.phi_groups]


# ---------------------------------------------------------------------------
# encoding and variational layers


def _as_batch(x, n: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != n:
        raise InputError(f"expected features of length {n}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(X)):
        raise InputError("features must be finite")
    return X, single


def encode_qubits(X: np.ndarray, axis: str = "y") -> np.ndarray:
    """Per-qubit encoded vectors ``R_axis(x_q) H |0>``, shape ``(B, n, 2)``."""
    plus = np.array([1.0, 1.0]) / np.sqrt(2.0)  # H|0>
    c, s = np.cos(X / 2), np.sin(X / 2)
    if axis == "y":
        return np.stack([(c - s) * plus[0], (s + c) * plus[1]], axis=-1)
    if axis == "x":
        # Rx acts on |+> as a global phase
        phase = c - 1j * s
        return np.stack([phase * plus[0], phase * plus[1]], axis=-1)
    if axis == "z":
        return np.stack([np.exp(-0.5j * X) * plus[0], np.exp(0.5j * X) * plus[1]], axis=-1)
    raise InputError(f"unknown encoding axis {axis!r}")


def encode(x, n_qubits: int | None = None, axis: str = "y") -> StateVector:
    """Encoded state ``(R(x_1) H) (x) ... (x) (R(x_n) H) |0...0>``."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.shape[0] if n_qubits is None else n_qubits
    X, _ = _as_batch(x, n)
    return StateVector(n, product_states(encode_qubits(X, axis))[0])


def _layer(states: np.ndarray, theta_row: np.ndarray, n: int) -> np.ndarray:
    if n > 1:
        states = np.take(states, cnot_chain_permutation(n), axis=1)
    return apply_product(states, ry_matrices(theta_row), n)


def variational_block(state: StateVector, theta_layer, layer_index: int = 0) -> StateVector:
    """One layer: CNOT(1,2), CNOT(2,3), ..., CNOT(n-1,n) followed by Ry(theta_q) on each qubit.

    ``layer_index`` is informational; every layer has the same structure.
    """
    n = state.n_qubits
    theta_layer = np.asarray(theta_layer, dtype=float).ravel()
    if theta_layer.shape[0] != n:
        raise InputError(f"layer {layer_index}: expected {n} angles, got {theta_layer.shape[0]}")
    return StateVector(n, _layer(state.amplitudes[None, :], theta_layer, n)[0])


def simulate(X: np.ndarray, theta: np.ndarray, config: CircuitConfig, keep: bool = False):
    """Final states for a feature batch; with ``keep`` also every intermediate layer state.

    The returned list (when ``keep``) has ``L + 1`` entries: the encoded state
    followed by the state after each variational layer.
    """
    n = config.n_qubits
    states = product_states(encode_qubits(X, config.encoding_axis))
    history = [states] if keep else None
    if config.has_variational_block:
        for row in theta:
            states = _layer(states, row, n)
            if keep:
                history.append(states)
    return (states, history) if keep else states


def group_densities(X: np.ndarray, params: ModelParams, config: CircuitConfig, states: np.ndarray | None = None) -> list[np.ndarray]:
    """Reduced density matrix of every measurement group, each ``(B, K, K)``.

    Without a variational block the state is a product state, so the density
    matrix of a group is the outer product of its encoded qubit vectors and
    the ``2**n`` statevector is never built.
    """
    groups = config.groups
    if states is None and not config.has_variational_block:
        vecs = encode_qubits(X, config.encoding_axis)
        out = []
        for g in groups:
            v = product_states(vecs[:, [q - 1 for q in g], :])
            out.append(v[:, :, None] * np.conj(v[:, None, :]))
        return out
    if states is None:
        step = chunk_size(config.n_qubits)
        parts = [
            group_densities(None, params, config, states=simulate(X[i : i + step], params.theta, config))
            for i in range(0, X.shape[0], step)
        ]
        return [np.concatenate([p[g] for p in parts]) for g in range(len(groups))]
    n = config.n_qubits
    out: list[np.ndarray | None] = [None] * len(groups)
    for window, members in window_plan(tuple(groups), n):
        if len(members) == 1 and members[0][1] == 0 and len(groups[members[0][0]]) == len(window):
            out[members[0][0]] = density_matrices(states, window, n)
            continue
        rho_w = density_matrices(states, window, n)
        for g, offset in members:
            out[g] = trace_to_subwindow(rho_w, offset, len(groups[g]), len(window))
    return out


@lru_cache(maxsize=64)
def window_plan(groups: tuple[tuple[int, ...], ...], n: int, width: int = 4) -> tuple:
    """Cover the groups with few contiguous windows so each state pass serves several groups.

    Returns ``((window, ((group_index, offset), ...)), ...)``. Groups that wrap
    around or are wider than ``width`` get a window of their own.
    """
    width = min(width, n)
    plan = []
    pending = list(range(len(groups)))
    while pending:
        first = groups[pending[0]]
        if not _is_window(first) or len(first) >= width:
            plan.append((first, ((pending.pop(0), 0),)))
            continue
        start = min(first[0], n - width + 1)
        window = tuple(range(start, start + width))
        members = []
        for g in list(pending):
            qs = groups[g]
            if _is_window(qs) and qs[0] >= start and qs[-1] < start + width:
                members.append((g, qs[0] - start))
                pending.remove(g)
        plan.append((window, tuple(members)))
    return tuple(plan)


def trace_to_subwindow(rho: np.ndarray, offset: int, k: int, width: int) -> np.ndarray:
    """Reduce ``(B, 2**width, 2**width)`` densities to the k consecutive qubits at ``offset``."""
    B = rho.shape[0]
    lo, mid, hi = 1 << offset, 1 << k, 1 << (width - offset - k)
    r = rho.reshape(B, lo, mid, hi, lo, mid, hi)
    return np.einsum("baihajh->bij", r)


def embed_in_window(H: np.ndarray, offset: int, width: int) -> np.ndarray:
    """``I (x) H (x) I`` with H placed at ``offset`` inside a ``width``-qubit window."""
    k = H.shape[-1].bit_length() - 1
    left = np.eye(1 << offset)
    right = np.eye(1 << (width - offset - k))
    return kron_chain([left, H, right])


def expectations_from_densities(rhos: list[np.ndarray], observables: list[np.ndarray]) -> np.ndarray:
    """Group expectation values, shape ``(B, G)``; checks the imaginary residue."""
    vals = np.stack([expectation_from_density(r, H) for r, H in zip(rhos, observables)], axis=1)
    scale = max([1.0] + [float(np.max(np.abs(H))) for H in observables])
    if np.iscomplexobj(vals):
        if vals.size and np.max(np.abs(vals.imag)) > 1e-10 * scale:
            raise InputError("expectation value has a non-negligible imaginary part")
        vals = vals.real
    return np.ascontiguousarray(vals)


def apply_head(values: np.ndarray, params: ModelParams, config: CircuitConfig) -> np.ndarray:
    if config.has_head:
        return values @ params.head_weight + params.head_bias
    return values


def forward(x, params: ModelParams, config: CircuitConfig) -> np.ndarray:
    """Model outputs for one sample (shape ``(d_out,)``) or a batch (``(B, d_out)``)."""
    X, single = _as_batch(x, config.n_qubits)
    rhos = group_densities(X, params, config)
    values = expectations_from_densities(rhos, group_observables(params, config))
    out = apply_head(values, params, config)
    return out[0] if single else out


def forward_state(state: StateVector, params: ModelParams, config: CircuitConfig) -> np.ndarray:
    """Run the variational layers and measurement on an already prepared state."""
    states = state.amplitudes[None, :]
    if config.has_variational_block:
        for row in params.theta:
            states = _layer(states, row, config.n_qubits)
    rhos = group_densities(None, params, config, states=states)
    values = expectations_from_densities(rhos, group_observables(params, config))
    return apply_head(values, params, config)[0]


# ---------------------------------------------------------------------------
# closed-form two-qubit formulas


def _check_real_state(v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (4,):
        raise InputError(f"expected 4 real amplitudes, got shape {v.shape}")
    if np.iscomplexobj(v):
        if np.max(np.abs(v.imag)) > 0:
            raise InputError("closed-form example needs a real encoded state")
        v = v.real
    v = v.astype(float)
    if abs(float(v @ v) - 1.0) > 1e-10:
        raise InputError(f"state must be normalized, got norm^2 = {float(v @ v)!r}")
    return v


def _entries(H) -> tuple[float, float, float]:
    H = np.asarray(H)
    if H.shape != (2, 2):
        raise InputError(f"expected a 2x2 observable, got shape {H.shape}")
    return float(np.real(H[0, 0])), float(np.real(H[0, 1])), float(np.real(H[1, 1]))


def closed_form_unrotated(v, H1, H2) -> tuple[float, float]:
    """Expectations of ``H1 (x) I`` and ``I (x) H2`` on a real 2-qubit state."""
    v1, v2, v3, v4 = _check_real_state(v)
    h11, re12, h22 = _entries(H1)
    g11, ge12, g22 = _entries(H2)
    e1 = h11 * (v1**2 + v2**2) + 2 * re12 * (v1 * v3 + v2 * v4) + h22 * (v3**2 + v4**2)
    e2 = g11 * (v1**2 + v3**2) + 2 * ge12 * (v1 * v2 + v3 * v4) + g22 * (v2**2 + v4**2)
    return e1, e2


def closed_form_example(v, H1, H2, theta1: float, theta2: float) -> tuple[float, float]:
    """Expectations of ``R^dag (H1 (x) I) R`` and ``R^dag (I (x) H2) R``, ``R = Ry(theta1) (x) Ry(theta2)``.

    Explicit trigonometric expressions in the real amplitudes ``v``; only the
    real part of the off-diagonal entries enters for a real state.
    """
    v1, v2, v3, v4 = _check_real_state(v)
    h11, re12, h22 = _entries(H1)
    g11, ge12, g22 = _entries(H2)

    c1, s1 = np.cos(theta1 / 2) ** 2, np.sin(theta1 / 2) ** 2
    top, bottom, cross = v1**2 + v2**2, v3**2 + v4**2, v1 * v3 + v2 * v4
    e1 = (
        h11 * (top * c1 + bottom * s1 - cross * np.sin(theta1))
        + re12 * (2 * np.cos(theta1) * cross + (top - bottom) * np.sin(theta1))
        + h22 * (top * s1 + bottom * c1 + cross * np.sin(theta1))
    )

    c2, s2 = np.cos(theta2 / 2) ** 2, np.sin(theta2 / 2) ** 2
    even, odd, cross2 = v1**2 + v3**2, v2**2 + v4**2, v1 * v2 + v3 * v4
    e2 = (
        g11 * (even * c2 + odd * s2 - cross2 * np.sin(theta2))
        + ge12 * (2 * np.cos(theta2) * cross2 + (even - odd) * np.sin(theta2))
        + g22 * (even * s2 + odd * c2 + cross2 * np.sin(theta2))
    )
    return float(e1), float(e2)


def simulate_closed_form_case(v, H1, H2, theta1: float, theta2: float) -> tuple[float, float]:
    """Same quantities as :func:`closed_form_example`, computed by the simulator."""
    from .observables import expectation
    from .statevec import apply_single_qubit

    state = StateVector(2, np.asarray(v, dtype=complex))
    state = apply_single_qubit(state, gate_rotation("y", theta1), 1)
    state = apply_single_qubit(state, gate_rotation("y", theta2), 2)
    return expectation(state, (1,), H1), expectation(state, (2,), H2)


def describe(config: CircuitConfig) -> str:
    s = config.scheme
    if s.kind == "sliding_k_local":
        name = f"sliding {s.k}-local"
    elif s.kind == "pairwise_combinatorial":
        name = f"pairwise over {len(s.subset)} qubits ({comb(len(s.subset), 2)} pairs)"
    else:
        name = "fixed Pauli-Z"
    rot = f"L={config.n_layers}" if config.has_variational_block else "no rotations"
    return f"{name}, n={config.n_qubits}, {rot}, d_out={config.d_out}"
