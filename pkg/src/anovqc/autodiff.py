"""Gradients of model outputs and losses.

* observable parameters: exact, from one reduced density matrix per group
  (the expectation is linear in phi);
* linear head: analytic;
* rotation angles: either the two-term parameter-shift rule or a reverse-mode
  (adjoint) sweep over the stored layer states. Both are exact; the adjoint
  sweep costs a few forward passes regardless of the number of angles and is
  what training uses.

``finite_difference_gradient`` is the independent oracle for all of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .circuit import (
    CircuitConfig,
    ModelParams,
    _as_batch,
    apply_head,
    chunk_size,
    embed_in_window,
    expectations_from_densities,
    forward,
    group_densities,
    group_observables,
    simulate,
    window_plan,
)
from .errors import ConfigError, InputError
from .observables import apply_observable, density_matrices, phi_gradient_from_density
from .statevec import apply_product, cnot_chain_inverse, ry_matrices

SHIFT = np.pi / 2
LOSSES = ("mse", "cross_entropy")

# -i Y: the generator factor d/dtheta Ry(theta) = (-i Y / 2) Ry(theta), times 2
_MINUS_I_Y = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass
class GradientRecord:
    d_theta: np.ndarray
    d_phi_groups: list[np.ndarray]
    d_head_weight: np.ndarray | None = None
    d_head_bias: np.ndarray | None = None

    def flatten(self) -> np.ndarray:
        return ModelParams(self.d_theta, self.d_phi_groups, self.d_head_weight, self.d_head_bias).flatten()


# ---------------------------------------------------------------------------
# losses (value and gradient with respect to the outputs)


def targets_for(y, batch: int, d_out: int, loss_kind: str) -> np.ndarray:
    """Integer labels (cross-entropy) or real target rows (MSE) for a batch."""
    y = np.asarray(y)
    if loss_kind == "cross_entropy":
        labels = y.reshape(-1).astype(np.int64)
        if labels.shape[0] != batch:
            raise InputError(f"expected {batch} labels, got {labels.shape[0]}")
        if np.any(labels < 0) or np.any(labels >= d_out):
            raise InputError(f"labels must lie in 0..{d_out - 1}")
        return labels
    if np.issubdtype(y.dtype, np.integer):
        labels = y.reshape(-1)
        if labels.shape[0] != batch or np.any(labels < 0) or np.any(labels >= d_out):
            raise InputError("label vector does not match the batch or output size")
        return np.eye(d_out)[labels]
    t = np.asarray(y, dtype=float).reshape(batch, -1)
    if t.shape[1] != d_out:
        raise InputError(f"targets have {t.shape[1]} columns, outputs have {d_out}")
    return t


def loss_and_output_grad(outputs: np.ndarray, targets: np.ndarray, loss_kind: str) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient with respect to ``outputs``."""
    B = outputs.shape[0]
    if loss_kind == "mse":
        diff = outputs - targets
        return float(np.mean(np.sum(diff**2, axis=1))), 2.0 * diff / B
    if loss_kind == "cross_entropy":
        z = outputs - outputs.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        logp = z - logsum[:, None]
        loss = -float(np.mean(logp[np.arange(B), targets]))
        grad = np.exp(logp)
        grad[np.arange(B), targets] -= 1.0
        return loss, grad / B
    raise ConfigError(f"unknown loss kind {loss_kind!r}; expected one of {LOSSES}")


# ---------------------------------------------------------------------------
# rotation-angle gradients


def _shifted(params: ModelParams, layer: int, qubit: int, delta: float) -> ModelParams:
    p = params.copy()
    p.theta[layer, qubit] += delta
    return p


def grad_theta_parameter_shift(x, params: ModelParams, config: CircuitConfig, output_index: int) -> np.ndarray:
    """d output[output_index] / d theta via ``[f(theta + pi/2) - f(theta - pi/2)] / 2``."""
    if not config.has_variational_block:
        raise ConfigError("parameter-shift gradient needs rotation layers (use_rotations with L >= 1)")
    if not 0 <= output_index < config.d_out:
        raise InputError(f"output index {output_index} out of range 0..{config.d_out - 1}")
    x = np.asarray(x, dtype=float).ravel()
    grad = np.zeros_like(params.theta)
    for layer in range(params.theta.shape[0]):
        for q in range(params.theta.shape[1]):
            plus = forward(x, _shifted(params, layer, q, SHIFT), config)[output_index]
            minus = forward(x, _shifted(params, layer, q, -SHIFT), config)[output_index]
            grad[layer, q] = (plus - minus) / 2.0
    return grad


def _theta_grad_shift(X, params, config, dv) -> np.ndarray:
    """Chain rule through the group values with shifted evaluations of all groups."""
    grad = np.zeros_like(params.theta)
    obs = group_observables(params, config)

    def values(p):
        return expectations_from_densities(group_densities(X, p, config), obs)

    for layer in range(params.theta.shape[0]):
        for q in range(params.theta.shape[1]):
            diff = values(_shifted(params, layer, q, SHIFT)) - values(_shifted(params, layer, q, -SHIFT))
            grad[layer, q] = np.sum(dv * diff) / 2.0
    return grad


@lru_cache(maxsize=64)
def _generator(pos: int, width: int) -> np.ndarray:
    """(-iY) on slot ``pos`` of a ``width``-qubit window."""
    gen = np.kron(np.kron(np.eye(1 << pos), _MINUS_I_Y), np.eye(1 << (width - pos - 1)))
    gen.setflags(write=False)
    return gen


def _theta_grad_adjoint(history: list[np.ndarray], params: ModelParams, config: CircuitConfig, observables, dv) -> np.ndarray:
    """Reverse sweep: d/dtheta_lq = Re <lambda_l| (-iY)_q |psi_l> with lambda the back-propagated cotangent."""
    n = config.n_qubits
    groups = config.groups
    final = history[-1]
    lam = None
    for window, members in window_plan(tuple(groups), n):
        # per-sample sum of weighted observables on a shared window: one pass over the state
        width = len(window)
        M = sum(
            dv[:, g, None, None] * embed_in_window(observables[g], offset, width)[None]
            for g, offset in members
        )
        term = apply_observable(final, M, window, n)
        if lam is None:
            lam = term
        else:
            lam += term

    L = params.theta.shape[0]
    grad = np.zeros((L, n))
    window = 4
    for layer in range(L - 1, -1, -1):
        psi = history[layer + 1]
        for start in range(1, n + 1, window):
            block = tuple(range(start, min(start + window, n + 1)))
            w = len(block)
            # cross[i, j] = sum psi_i conj(lam_j) over the other qubits, summed over the batch
            cross = density_matrices(psi, block, n, other=lam).sum(axis=0)
            for pos, q in enumerate(block):
                grad[layer, q - 1] = float(np.real(np.sum(_generator(pos, w) * cross.T)))
        lam = apply_product(lam, ry_matrices(-params.theta[layer]), n)
        if n > 1:
            lam = np.take(lam, cnot_chain_inverse(n), axis=1)
    return grad


# ---------------------------------------------------------------------------
# full model gradient


def grad_model(
    x,
    y,
    params: ModelParams,
    config: CircuitConfig,
    loss_kind: str = "cross_entropy",
    theta_method: str = "adjoint",
) -> tuple[float, GradientRecord]:
    """Mean loss over the batch and the gradient with respect to every parameter.

    ``x`` is one feature row or a batch; ``y`` holds integer labels (both
    losses; one-hot targets for MSE) or, for MSE, real target rows.
    """
    if loss_kind not in LOSSES:
        raise ConfigError(f"unknown loss kind {loss_kind!r}; expected one of {LOSSES}")
    if theta_method not in ("adjoint", "shift"):
        raise ConfigError(f"unknown theta_method {theta_method!r}")
    X, _ = _as_batch(x, config.n_qubits)
    B = X.shape[0]
    targets = targets_for(y, B, config.d_out, loss_kind)

    observables = group_observables(params, config)
    histories = []
    if config.has_variational_block:
        # chunked like the forward pass; layer states are kept for the reverse sweep
        parts = []
        step = chunk_size(config.n_qubits)
        for i in range(0, B, step):
            final, history = simulate(X[i : i + step], params.theta, config, keep=True)
            histories.append(history)
            parts.append(group_densities(None, params, config, states=final))
        rhos = [np.concatenate([p[g] for p in parts]) for g in range(len(observables))]
    else:
        rhos = group_densities(X, params, config)
    values = expectations_from_densities(rhos, observables)
    outputs = apply_head(values, params, config)
    loss, d_out = loss_and_output_grad(outputs, targets, loss_kind)

    d_weight = d_bias = None
    if config.has_head:
        d_weight = values.T @ d_out
        d_bias = d_out.sum(axis=0)
        dv = d_out @ params.head_weight.T
    else:
        dv = d_out

    d_phi = []
    if config.trainable_observables:
        for g, rho in enumerate(rhos):
            d_phi.append(phi_gradient_from_density(np.einsum("b,bij->ij", dv[:, g], rho)))

    if not config.has_variational_block:
        d_theta = np.zeros_like(params.theta)
    elif theta_method == "adjoint":
        d_theta = sum(
            _theta_grad_adjoint(h, params, config, observables, dv[j * step : (j + 1) * step])
            for j, h in enumerate(histories)
        )
    else:
        d_theta = _theta_grad_shift(X, params, config, dv)
    return loss, GradientRecord(d_theta, d_phi, d_weight, d_bias)


def model_loss(x, y, params: ModelParams, config: CircuitConfig, loss_kind: str = "cross_entropy") -> float:
    X, _ = _as_batch(x, config.n_qubits)
    targets = targets_for(y, X.shape[0], config.d_out, loss_kind)
    outputs = np.atleast_2d(forward(X, params, config))
    return loss_and_output_grad(outputs, targets, loss_kind)[0]


def finite_difference_gradient(objective: Callable[[np.ndarray], float], params, h: float = 1e-4) -> np.ndarray:
    """Central differences ``[f(p + h e_i) - f(p - h e_i)] / 2h`` for every coordinate."""
    if not h > 0:
        raise InputError(f"step size must be positive, got {h}")
    p = np.asarray(params, dtype=float).ravel()
    grad = np.empty_like(p)
    for i in range(p.shape[0]):
        up, down = p.copy(), p.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (objective(up) - objective(down)) / (2.0 * h)
    return grad


def relative_error(analytic, reference, floor: float = 1e-2) -> float:
    """Largest ``|a - r| / max(|r|, floor)``: relative error with an absolute floor near zero."""
    a = np.asarray(analytic, float).ravel()
    r = np.asarray(reference, float).ravel()
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - r) / np.maximum(np.abs(r), floor)))


def gradient_check(
    config: CircuitConfig,
    seed: int = 0,
    n_samples: int = 3,
    loss_kind: str = "cross_entropy",
    theta_method: str = "shift",
    h: float = 1e-4,
) -> dict[str, float]:
    """Max relative error of the analytic gradient against central differences, per parameter class."""
    from .circuit import init_params

    rng = np.random.default_rng(seed)
    params = init_params(config, rng, phi_std=0.5, head_std=0.5)
    X = rng.uniform(-np.pi, np.pi, size=(n_samples, config.n_qubits))
    y = rng.integers(0, config.d_out, size=n_samples)
    _, grad = grad_model(X, y, params, config, loss_kind, theta_method)
    fd = finite_difference_gradient(
        lambda flat: model_loss(X, y, ModelParams.from_flat(config, flat), config, loss_kind), params.flatten(), h
    )
    ref = ModelParams.from_flat(config, fd)
    report = {}
    if grad.d_theta.size:
        report["theta"] = relative_error(grad.d_theta, ref.theta)
    if grad.d_phi_groups:
        report["phi"] = relative_error(np.concatenate(grad.d_phi_groups), np.concatenate(ref.phi_groups))
    if grad.d_head_weight is not None:
        report["head"] = relative_error(
            np.concatenate([grad.d_head_weight.ravel(), grad.d_head_bias]),
            np.concatenate([ref.head_weight.ravel(), ref.head_bias]),
        )
    return report
