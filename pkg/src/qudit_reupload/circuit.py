"""
Data re-uploading circuits on a single qudit.

A circuit is compiled into a program: a list of gate ops applied in order to
|0>. Each op is the exponential of a sum of terms, and each term couples one
generator to a coefficient theta + omega * x_j built from the flat parameter
vector and the input. Ops with a single term reuse the cached
eigendecomposition of their generator; ops with several terms diagonalize the
assembled Hermitian matrix per sample.

Gradients are computed by a reverse pass over the recorded forward tape.
"""

from functools import lru_cache
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from qudit_reupload.errors import (
    InvalidDimensionError,
    NonFiniteInputError,
    ParameterLengthError,
    UnsupportedOperationError,
)
from qudit_reupload.logger import get_logger
from qudit_reupload.qudit_core import (
    GeneratorMatrix,
    QuditState,
    angular_momentum,
    check_dimension,
    check_permutation,
    extended_operators,
    randomized_ladder,
    squeezing_generator,
)

logger = get_logger()

ARCH_EULER = "euler"
ARCH_SIMPLIFIED = "simplified"
ARCH_EXTENDED = "extended"
ARCHITECTURES = (ARCH_EULER, ARCH_SIMPLIFIED, ARCH_EXTENDED)

# eigenvalue gaps below this use the analytic limit of the divided difference
DEGENERACY_THRESHOLD = 1e-9
MIN_SPECTRUM_GRID = 64


class CircuitSpec(NamedTuple):
    d: int
    input_dim: int
    layers: int
    arch: str = ARCH_EULER
    squeeze_enabled: bool = True
    # None keeps the standard L_x ladder in the encoding gates
    encoding_permutation: Optional[Tuple[int, ...]] = None


class OperatorSet(NamedTuple):
    x: GeneratorMatrix
    y: GeneratorMatrix
    z: GeneratorMatrix
    z2: GeneratorMatrix
    encoding_x: GeneratorMatrix
    extended: Tuple[GeneratorMatrix, ...]


class GateTerm(NamedTuple):
    generator: GeneratorMatrix
    theta_index: Optional[int]
    omega_index: Optional[int]
    input_index: Optional[int]


class GateOp(NamedTuple):
    terms: Tuple[GateTerm, ...]


class _OpRecord(NamedTuple):
    states_before: np.ndarray
    coefficients: np.ndarray  # (N, n_terms)
    eigenvalues: Optional[np.ndarray]
    eigenvectors: Optional[np.ndarray]


class Tape(NamedTuple):
    program: List[GateOp]
    params: np.ndarray
    inputs: np.ndarray
    records: List[_OpRecord]


def validate_spec(spec: CircuitSpec) -> CircuitSpec:
    check_dimension(spec.d)
    if spec.input_dim < 1:
        raise InvalidDimensionError(f"Input dimension must be >= 1, got {spec.input_dim}")
    if spec.layers < 1:
        raise InvalidDimensionError(f"Layer count must be >= 1, got {spec.layers}")
    if spec.arch not in ARCHITECTURES:
        raise ValueError(f"Unknown architecture {spec.arch!r}, expected {ARCHITECTURES}")
    if spec.encoding_permutation is not None:
        check_permutation(spec.encoding_permutation, spec.d)
    return spec


def layer_layout(spec: CircuitSpec) -> List[Tuple[str, int]]:
    """Named parameter blocks of one layer, in storage order"""
    size_d = spec.input_dim
    if spec.arch == ARCH_EULER:
        return [("omega", size_d), ("theta", 4 if spec.squeeze_enabled else 3)]
    if spec.arch == ARCH_SIMPLIFIED:
        layout = [("theta", size_d), ("omega", size_d)]
        if spec.squeeze_enabled:
            layout.append(("squeeze", 1))
        return layout
    return [("theta", size_d), ("omega", size_d), ("phi", 2 * (spec.d - 1))]


def params_per_layer(spec: CircuitSpec) -> int:
    return sum(size for _, size in layer_layout(spec))


def param_count(spec: CircuitSpec) -> int:
    validate_spec(spec)
    return params_per_layer(spec) * spec.layers


def unpack(spec: CircuitSpec, params) -> List[Dict[str, np.ndarray]]:
    params = check_params(spec, params)
    blocks = []
    offset = 0
    for _ in range(spec.layers):
        layer = {}
        for name, size in layer_layout(spec):
            layer[name] = params[offset : offset + size].copy()
            offset += size
        blocks.append(layer)
    return blocks


def pack(spec: CircuitSpec, blocks: Sequence[Dict[str, np.ndarray]]) -> np.ndarray:
    if len(blocks) != spec.layers:
        raise ParameterLengthError(
            f"Expected {spec.layers} layer blocks, got {len(blocks)}"
        )
    parts = []
    for layer in blocks:
        for name, size in layer_layout(spec):
            part = np.asarray(layer[name], dtype=float)
            if part.shape != (size,):
                raise ParameterLengthError(
                    f"Block {name!r} must have {size} entries, got {part.shape}"
                )
            parts.append(part)
    return np.concatenate(parts)


def check_params(spec: CircuitSpec, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    expected = param_count(spec)
    if params.shape != (expected,):
        raise ParameterLengthError(
            f"{spec.arch} circuit with d={spec.d}, D={spec.input_dim}, "
            f"L={spec.layers} needs {expected} parameters, got {params.shape}"
        )
    return params


def check_inputs(spec: CircuitSpec, inputs) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        raise InvalidDimensionError(
            f"Inputs must have {spec.input_dim} columns, got shape {inputs.shape}"
        )
    if not np.all(np.isfinite(inputs)):
        raise NonFiniteInputError("Inputs contain NaN or infinite values")
    return inputs


@lru_cache(maxsize=64)
def _cached_operators(
    d: int, permutation: Optional[Tuple[int, ...]]
) -> OperatorSet:
    l_x = angular_momentum(d, "x")
    encoding_x = l_x if permutation is None else randomized_ladder(d, permutation)
    return OperatorSet(
        x=l_x,
        y=angular_momentum(d, "y"),
        z=angular_momentum(d, "z"),
        z2=squeezing_generator(d),
        encoding_x=encoding_x,
        extended=tuple(extended_operators(d)),
    )


def qudit_operators(spec: CircuitSpec) -> OperatorSet:
    return _cached_operators(spec.d, spec.encoding_permutation)


def encoding_generator(operators: OperatorSet, j: int) -> GeneratorMatrix:
    """Generator of input component j (0-based) in the summed exponent: x, z, y, ..."""
    return (operators.encoding_x, operators.z, operators.y)[j % 3]


def build_program(spec: CircuitSpec, operators: OperatorSet) -> List[GateOp]:
    validate_spec(spec)
    size_d = spec.input_dim
    stride = params_per_layer(spec)
    program = []

    for layer in range(spec.layers):
        offset = layer * stride
        if spec.arch == ARCH_EULER:
            # S block: R_x(x_1 w_1), R_z(x_2 w_2), ... alternating, restarting at x
            for j in range(size_d):
                gen = operators.encoding_x if j % 2 == 0 else operators.z
                program.append(GateOp((GateTerm(gen, None, offset + j, j),)))
            # W block: R_x(t_1), R_z(t_2), R_x(t_3), R_z2(t_4)
            theta = offset + size_d
            w_gens = [operators.x, operators.z, operators.x]
            if spec.squeeze_enabled:
                w_gens.append(operators.z2)
            for i, gen in enumerate(w_gens):
                program.append(GateOp((GateTerm(gen, theta + i, None, None),)))
            continue

        terms = [
            GateTerm(encoding_generator(operators, j), offset + j, offset + size_d + j, j)
            for j in range(size_d)
        ]
        tail = offset + 2 * size_d
        if spec.arch == ARCH_SIMPLIFIED:
            if spec.squeeze_enabled:
                terms.append(GateTerm(operators.z2, tail, None, None))
        else:
            for m, gen in enumerate(operators.extended):
                terms.append(GateTerm(gen, tail + m, None, None))
        program.append(GateOp(tuple(terms)))

    return program


def _coefficients(op: GateOp, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    coeffs = np.zeros((inputs.shape[0], len(op.terms)))
    for m, term in enumerate(op.terms):
        if term.theta_index is not None:
            coeffs[:, m] += params[term.theta_index]
        if term.omega_index is not None:
            coeffs[:, m] += params[term.omega_index] * inputs[:, term.input_index]
    return coeffs


def _to_eigenbasis(vectors: np.ndarray, states: np.ndarray) -> np.ndarray:
    if vectors.ndim == 2:
        return states @ vectors.conj()
    return np.einsum("nji,nj->ni", vectors.conj(), states)


def _from_eigenbasis(vectors: np.ndarray, coords: np.ndarray) -> np.ndarray:
    if vectors.ndim == 2:
        return coords @ vectors.T
    return np.einsum("nij,nj->ni", vectors, coords)


def _op_eigensystem(op: GateOp, coeffs: np.ndarray):
    """Eigenvalues (N, dim) scaled by the coefficient and eigenvectors of one op"""
    if len(op.terms) == 1:
        gen = op.terms[0].generator
        return coeffs[:, :1] * gen.eigenvalues[None, :], gen.eigenvectors
    stack = np.stack([term.generator.entries for term in op.terms])
    assembled = np.einsum("nm,mij->nij", coeffs, stack)
    return np.linalg.eigh(assembled)


def simulate(
    program: List[GateOp],
    params: np.ndarray,
    inputs: np.ndarray,
    dim: int,
    keep_tape: bool = False,
):
    """
    Run a compiled program on a batch of inputs, starting from |0>.

    Returns:
        (states, tape) with states of shape (N, dim); tape is None unless
        keep_tape is set
    """
    states = np.zeros((inputs.shape[0], dim), dtype=complex)
    states[:, 0] = 1.0
    records = []

    for op in program:
        coeffs = _coefficients(op, params, inputs)
        values, vectors = _op_eigensystem(op, coeffs)
        coords = _to_eigenbasis(vectors, states) * np.exp(-1j * values)
        new_states = _from_eigenbasis(vectors, coords)
        if keep_tape:
            if len(op.terms) == 1:
                records.append(_OpRecord(states, coeffs, None, None))
            else:
                records.append(_OpRecord(states, coeffs, values, vectors))
        states = new_states

    tape = Tape(program, params, inputs, records) if keep_tape else None
    return states, tape


def forward_batch(spec: CircuitSpec, params, inputs, keep_tape: bool = False):
    params = check_params(spec, params)
    inputs = check_inputs(spec, inputs)
    program = build_program(spec, qudit_operators(spec))
    return simulate(program, params, inputs, spec.d, keep_tape)


def forward(spec: CircuitSpec, params, x) -> QuditState:
    states, _ = forward_batch(spec, params, np.asarray(x, dtype=float)[None, :])
    return QuditState(states[0])


def divided_differences(values: np.ndarray) -> np.ndarray:
    """
    Divided differences of exp(-i lambda) over pairs of eigenvalues.

    Args:
        values: Eigenvalues of shape (N, dim)

    Returns:
        Array (N, dim, dim); the diagonal and near-degenerate pairs use the
        derivative -i exp(-i lambda)
    """
    phases = np.exp(-1j * values)
    gaps = values[:, :, None] - values[:, None, :]
    close = np.abs(gaps) < DEGENERACY_THRESHOLD
    safe_gaps = np.where(close, 1.0, gaps)
    quotient = (phases[:, :, None] - phases[:, None, :]) / safe_gaps
    midpoint = (values[:, :, None] + values[:, None, :]) / 2
    limit = -1j * np.exp(-1j * midpoint)
    return np.where(close, limit, quotient)


def _accumulate(grad: np.ndarray, term: GateTerm, coeff_grads: np.ndarray, inputs):
    if term.theta_index is not None:
        grad[term.theta_index] += np.sum(coeff_grads)
    if term.omega_index is not None:
        grad[term.omega_index] += np.sum(coeff_grads * inputs[:, term.input_index])


def backward(tape: Tape, cotangents) -> np.ndarray:
    """
    Reverse pass over a recorded forward tape.

    Args:
        tape: Tape from simulate(..., keep_tape=True)
        cotangents: dLoss/d(conj psi) per sample, shape (N, dim)

    Returns:
        dLoss/dp for every parameter, summed over the batch
    """
    adjoint = np.array(cotangents, dtype=complex)
    grad = np.zeros(tape.params.shape[0])
    inputs = tape.inputs

    for op, record in zip(reversed(tape.program), reversed(tape.records)):
        if len(op.terms) == 1:
            term = op.terms[0]
            gen = term.generator
            angles = record.coefficients[:, :1]
            vectors = gen.eigenvectors
            phases = np.exp(-1j * angles * gen.eigenvalues[None, :])
            after = _from_eigenbasis(vectors, _to_eigenbasis(vectors, record.states_before) * phases)
            # dU/da psi = -i G psi_after
            pulled = -1j * (after @ gen.entries.T)
            coeff_grads = 2.0 * np.real(np.sum(adjoint.conj() * pulled, axis=1))
            _accumulate(grad, term, coeff_grads, inputs)
            adjoint = _from_eigenbasis(
                vectors, _to_eigenbasis(vectors, adjoint) * phases.conj()
            )
            continue

        values, vectors = record.eigenvalues, record.eigenvectors
        adjoint_coords = _to_eigenbasis(vectors, adjoint)
        state_coords = _to_eigenbasis(vectors, record.states_before)
        weights = (
            adjoint_coords.conj()[:, :, None]
            * divided_differences(values)
            * state_coords[:, None, :]
        )
        # weights expressed back in the computational basis: conj(V) W V^T
        kernel = np.einsum("nip,npq,njq->nij", vectors.conj(), weights, vectors)
        for term in op.terms:
            coeff_grads = 2.0 * np.real(
                np.einsum("ij,nij->n", term.generator.entries, kernel)
            )
            _accumulate(grad, term, coeff_grads, inputs)
        adjoint = _from_eigenbasis(vectors, adjoint_coords * np.exp(1j * values))

    return grad


def gradient(spec: CircuitSpec, params, x, cost_gradient_on_amplitudes) -> np.ndarray:
    """
    Exact gradient of a real loss of the output amplitudes.

    Args:
        spec: Circuit specification
        params: Flat parameter vector
        x: Input vector of length D
        cost_gradient_on_amplitudes: dLoss/d(conj psi), complex vector of length d

    Returns:
        dLoss/dp, real vector of length param_count(spec)
    """
    _, tape = forward_batch(spec, params, np.asarray(x, dtype=float)[None, :], True)
    cotangent = np.asarray(cost_gradient_on_amplitudes, dtype=complex)
    if cotangent.shape != (spec.d,):
        raise InvalidDimensionError(
            f"Cost gradient must have {spec.d} entries, got {cotangent.shape}"
        )
    return backward(tape, cotangent[None, :])


def loss_gradient_batch(
    spec: CircuitSpec,
    params,
    inputs,
    loss_and_cotangents: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    program: Optional[List[GateOp]] = None,
) -> Tuple[float, np.ndarray]:
    """
    Loss and its exact parameter gradient over a batch.

    Args:
        spec: Circuit specification
        params: Flat parameter vector
        inputs: N x D input matrix
        loss_and_cotangents: Maps the (N, d) output amplitudes to the loss and
            dLoss/d(conj psi) for each sample
        program: Precompiled program, rebuilt from spec when omitted

    Returns:
        (loss, gradient)
    """
    params = check_params(spec, params)
    inputs = check_inputs(spec, inputs)
    if program is None:
        program = build_program(spec, qudit_operators(spec))
    states, tape = simulate(program, params, inputs, spec.d, keep_tape=True)
    loss, cotangents = loss_and_cotangents(states)
    return float(loss), backward(tape, cotangents)


def expected_labels(states: np.ndarray) -> np.ndarray:
    probs = np.abs(states) ** 2
    return probs @ np.arange(states.shape[1])


def expectation_curve(spec: CircuitSpec, params, xs, shift: float = 0.0) -> np.ndarray:
    """Model output <y> + shift for 1-D inputs xs"""
    states, _ = forward_batch(spec, params, np.asarray(xs, dtype=float)[:, None])
    return expected_labels(states) + shift


def output_spectrum(
    spec: CircuitSpec, params, grid_size: int
) -> List[Tuple[float, float]]:
    """
    Fourier magnitudes of the model expectation over one period [-pi, pi).

    Returns:
        (frequency, magnitude) pairs for integer frequencies 0..grid_size/2
    """
    if spec.input_dim != 1:
        raise UnsupportedOperationError(
            f"Output spectrum needs a one-dimensional input, got D={spec.input_dim}"
        )
    if grid_size < MIN_SPECTRUM_GRID or grid_size & (grid_size - 1):
        raise ValueError(f"Grid size must be a power of two >= 64, got {grid_size}")

    xs = -np.pi + 2 * np.pi * np.arange(grid_size) / grid_size
    values = expectation_curve(spec, params, xs)
    magnitudes = np.abs(np.fft.rfft(values)) / grid_size
    frequencies = np.fft.rfftfreq(grid_size, d=1.0 / grid_size)
    return [(float(f), float(m)) for f, m in zip(frequencies, magnitudes)]
