"""
Qubit views of the qudit model.

A d-level qudit maps onto d - 1 qubits by sending |k> to the Dicke state with
k ones. Collective spin operators (sums of single-qubit spin-1/2 operators)
act on that subspace exactly like the spin-l generators act on the qudit, so
the same circuits can run on the multi-qubit register.

Also holds the single-qubit baseline, which encodes d classes into a qubit via
non-orthogonal label states.
"""

from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import comb

from qudit_reupload.circuit import (
    ARCH_EXTENDED,
    CircuitSpec,
    OperatorSet,
    build_program,
    check_inputs,
    check_params,
    simulate,
)
from qudit_reupload.errors import (
    InvalidDimensionError,
    SubspaceLeakageError,
    UnsupportedOperationError,
)
from qudit_reupload.logger import get_logger
from qudit_reupload.qudit_core import (
    NORM_TOLERANCE,
    GeneratorMatrix,
    QuditState,
    angular_momentum,
    check_dimension,
)

logger = get_logger()

MAX_QUBITS = 12
LEAKAGE_TOLERANCE = 1e-8
COLLECTIVE_AXES = ("x", "y", "z", "z2")
QUBIT_LABEL_DIMENSIONS = (2, 3, 4, 6)

_SQRT_HALF = np.sqrt(0.5)
# eigenstates of z, x and y, in that order
_AXIS_EIGENSTATES = np.array(
    [
        [1.0, 0.0],
        [0.0, 1.0],
        [_SQRT_HALF, _SQRT_HALF],
        [_SQRT_HALF, -_SQRT_HALF],
        [_SQRT_HALF, 1j * _SQRT_HALF],
        [_SQRT_HALF, -1j * _SQRT_HALF],
    ],
    dtype=complex,
)


def check_qubits(n_qubits: int) -> int:
    if int(n_qubits) != n_qubits or not 1 <= n_qubits <= MAX_QUBITS:
        raise InvalidDimensionError(
            f"Number of qubits must be in 1..{MAX_QUBITS}, got {n_qubits}"
        )
    return int(n_qubits)


class MultiQubitState:
    """Unit-norm state of n qubits; bit i of the amplitude index is qubit i"""

    def __init__(self, amplitudes, check_norm: bool = True):
        amplitudes = np.array(amplitudes, dtype=complex)
        n_qubits = int(np.log2(amplitudes.shape[0])) if amplitudes.ndim == 1 else 0
        if amplitudes.ndim != 1 or amplitudes.shape[0] != 2**n_qubits:
            raise InvalidDimensionError(
                f"Amplitude count must be a power of two, got shape {amplitudes.shape}"
            )
        check_qubits(n_qubits)
        if check_norm:
            norm = np.linalg.norm(amplitudes)
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise ValueError(f"State is not normalized, norm = {norm!r}")
        amplitudes.setflags(write=False)
        self._amplitudes = amplitudes
        self.n_qubits = n_qubits

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amplitudes

    def __repr__(self):
        return f"MultiQubitState(n_qubits={self.n_qubits})"


class QubitLabelSet(NamedTuple):
    states: np.ndarray  # (d, 2), one label state per row

    @property
    def d(self) -> int:
        return self.states.shape[0]


def hamming_weights(n_qubits: int) -> np.ndarray:
    indices = np.arange(2**n_qubits)
    return ((indices[:, None] >> np.arange(n_qubits)) & 1).sum(axis=1)


@lru_cache(maxsize=None)
def _dicke_basis(n_qubits: int) -> np.ndarray:
    weights = hamming_weights(n_qubits)
    basis = np.zeros((n_qubits + 1, 2**n_qubits), dtype=complex)
    for k in range(n_qubits + 1):
        basis[k, weights == k] = 1.0 / np.sqrt(comb(n_qubits, k, exact=True))
    basis.setflags(write=False)
    return basis


def dicke_basis(n_qubits: int) -> np.ndarray:
    """Rows are the Dicke states with 0..n_qubits ones"""
    return _dicke_basis(check_qubits(n_qubits))


def dicke_state(n_qubits: int, k: int) -> MultiQubitState:
    n_qubits = check_qubits(n_qubits)
    if not 0 <= k <= n_qubits:
        raise InvalidDimensionError(f"Hamming weight {k} out of range 0..{n_qubits}")
    return MultiQubitState(dicke_basis(n_qubits)[k])


@lru_cache(maxsize=None)
def _collective_operator(n_qubits: int, axis: str) -> GeneratorMatrix:
    if axis == "z2":
        total_z = _collective_operator(n_qubits, "z").entries
        return GeneratorMatrix(total_z @ total_z, name="L_tot_z2")

    single = angular_momentum(2, axis).entries
    total = np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
    for qubit in range(n_qubits):
        # qubit 0 is the least significant bit, hence the rightmost factor
        left = np.eye(2 ** (n_qubits - 1 - qubit))
        right = np.eye(2**qubit)
        total += np.kron(left, np.kron(single, right))
    return GeneratorMatrix(total, name=f"L_tot_{axis}")


def collective_operator(n_qubits: int, axis: str) -> GeneratorMatrix:
    """
    Sum of the spin-1/2 operators of every qubit along one axis.

    Args:
        n_qubits: Register size
        axis: "x", "y", "z", or "z2" for the square of the z sum

    Returns:
        GeneratorMatrix of size 2^n_qubits
    """
    n_qubits = check_qubits(n_qubits)
    if axis not in COLLECTIVE_AXES:
        raise ValueError(f"Unknown axis {axis!r}, expected one of {COLLECTIVE_AXES}")
    return _collective_operator(n_qubits, axis)


def embed(state: QuditState, d: int) -> MultiQubitState:
    """Map level k of a d-level state onto the Dicke state of weight k on d - 1 qubits"""
    d = check_dimension(d)
    if state.d != d:
        raise InvalidDimensionError(f"Expected a d={d} qudit state, got d={state.d}")
    basis = dicke_basis(d - 1)
    return MultiQubitState(state.amplitudes @ basis)


def subspace_leakage(state: MultiQubitState, d: int) -> float:
    """Norm of the part of the state outside the Dicke subspace of d - 1 qubits"""
    basis = _basis_for(state, d)
    coefficients = basis.conj() @ state.amplitudes
    return float(np.linalg.norm(state.amplitudes - coefficients @ basis))


def _basis_for(state: MultiQubitState, d: int) -> np.ndarray:
    d = check_dimension(d)
    if state.n_qubits != d - 1:
        raise InvalidDimensionError(
            f"A d={d} qudit lives on {d - 1} qubits, state has {state.n_qubits}"
        )
    return dicke_basis(state.n_qubits)


def project(state: MultiQubitState, d: int) -> QuditState:
    basis = _basis_for(state, d)
    coefficients = basis.conj() @ state.amplitudes
    residual = float(np.linalg.norm(state.amplitudes - coefficients @ basis))
    if residual > LEAKAGE_TOLERANCE:
        raise SubspaceLeakageError(residual)
    return QuditState(coefficients, check_norm=False)


def hamming_weight_probabilities(state: MultiQubitState) -> np.ndarray:
    """Probability of measuring k ones, which reads out qudit label k"""
    probs = np.abs(state.amplitudes) ** 2
    return np.bincount(hamming_weights(state.n_qubits), weights=probs, minlength=state.n_qubits + 1)


def collective_operators(n_qubits: int) -> OperatorSet:
    l_x = collective_operator(n_qubits, "x")
    return OperatorSet(
        x=l_x,
        y=collective_operator(n_qubits, "y"),
        z=collective_operator(n_qubits, "z"),
        z2=collective_operator(n_qubits, "z2"),
        encoding_x=l_x,
        extended=(),
    )


def forward_dicke(spec: CircuitSpec, params, x) -> MultiQubitState:
    """
    Run a euler or simplified circuit on d - 1 qubits with collective operators.

    The register starts in |0...0>, the image of qudit state |0>.
    """
    if spec.arch == ARCH_EXTENDED:
        raise UnsupportedOperationError(
            "The extended operators have no collective counterpart"
        )
    if spec.encoding_permutation is not None:
        raise UnsupportedOperationError(
            "The randomized ladder has no collective counterpart"
        )
    n_qubits = check_qubits(spec.d - 1)
    params = check_params(spec, params)
    inputs = check_inputs(spec, np.asarray(x, dtype=float)[None, :])
    program = build_program(spec, collective_operators(n_qubits))
    states, _ = simulate(program, params, inputs, 2**n_qubits)
    return MultiQubitState(states[0])


def qubit_label_states(d: int) -> QubitLabelSet:
    """
    Label states of the single-qubit baseline.

    d=2 uses the z eigenstates; d=6 uses the eigenstates of all three axes,
    ordered z, x, y. d=3 and d=4 take the first d of those six.
    """
    if d not in QUBIT_LABEL_DIMENSIONS:
        raise UnsupportedOperationError(
            f"Qubit label states are defined for d in {QUBIT_LABEL_DIMENSIONS}, got {d}"
        )
    return QubitLabelSet(_AXIS_EIGENSTATES[:d].copy())


def qubit_baseline_overlaps(state: QuditState, labels: QubitLabelSet) -> np.ndarray:
    if state.d != 2:
        raise InvalidDimensionError(f"Baseline states are single qubits, got d={state.d}")
    return np.abs(labels.states.conj() @ state.amplitudes) ** 2
