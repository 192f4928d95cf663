"""Variational quantum classifiers with trainable k-local Hermitian observables."""

from .circuit import CircuitConfig, ModelParams, SchemeSpec, count_parameters, encode, forward, init_params
from .errors import AnoError, ConfigError, FormatError, InputError, ParseError
from .observables import HermitianParams, expectation, from_matrix, to_matrix, unitarily_similar
from .statevec import StateVector, apply_cnot, apply_single_qubit, gate_rotation, zero_state

__version__ = "0.1.0"

__all__ = [
    "AnoError",
    "CircuitConfig",
    "ConfigError",
    "FormatError",
    "HermitianParams",
    "InputError",
    "ModelParams",
    "ParseError",
    "SchemeSpec",
    "StateVector",
    "apply_cnot",
    "apply_single_qubit",
    "count_parameters",
    "encode",
    "expectation",
    "forward",
    "from_matrix",
    "gate_rotation",
    "init_params",
    "to_matrix",
    "unitarily_similar",
    "zero_state",
]
