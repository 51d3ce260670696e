"""
Single-qudit states, angular-momentum generators and rotation gates.

Basis ordering: index k = 0..d-1 is the spin eigenstate with
m = (2k - d + 1) / 2, so |0> has the most negative z-component.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb

from qudit_reupload.errors import InvalidDimensionError, InvalidPermutationError
from qudit_reupload.logger import get_logger

logger = get_logger()

MIN_DIMENSION = 2
NORM_TOLERANCE = 1e-12
HERMITIAN_TOLERANCE = 1e-12
AXES = ("x", "y", "z")


def check_dimension(d: int) -> int:
    if int(d) != d or d < MIN_DIMENSION:
        raise InvalidDimensionError(f"Qudit dimension must be an integer >= 2, got {d}")
    return int(d)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


class QuditState:
    """Unit-norm pure state of a d-level system"""

    def __init__(self, amplitudes, check_norm: bool = True):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.ndim != 1:
            raise InvalidDimensionError("Amplitudes must be a 1-D vector")
        check_dimension(amplitudes.shape[0])
        if check_norm:
            norm = np.linalg.norm(amplitudes)
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise ValueError(f"State is not normalized, norm = {norm!r}")
        self._amplitudes = _frozen(amplitudes)

    @property
    def d(self) -> int:
        return self._amplitudes.shape[0]

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amplitudes

    def __repr__(self):
        return f"QuditState(d={self.d})"


def basis_state(d: int, k: int) -> QuditState:
    d = check_dimension(d)
    if not 0 <= k < d:
        raise InvalidDimensionError(f"Basis index {k} out of range for d={d}")
    amplitudes = np.zeros(d, dtype=complex)
    amplitudes[k] = 1.0
    return QuditState(amplitudes)


class GeneratorMatrix:
    """
    Hermitian d x d generator with a lazily computed eigendecomposition.

    The decomposition is computed at most once per instance; concurrent first
    access may compute it twice, both results being identical.
    """

    def __init__(self, entries, name: str = ""):
        entries = np.asarray(entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidDimensionError(
                f"Generator must be a square matrix, got shape {entries.shape}"
            )
        asymmetry = np.max(np.abs(entries - entries.conj().T))
        if asymmetry > HERMITIAN_TOLERANCE:
            raise ValueError(f"Generator {name!r} is not Hermitian ({asymmetry:.2e})")
        self._entries = _frozen(entries)
        self.name = name
        self._eigenvalues: Optional[np.ndarray] = None
        self._eigenvectors: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    def _decompose(self):
        values, vectors = np.linalg.eigh(self._entries)
        values.setflags(write=False)
        vectors.setflags(write=False)
        self._eigenvectors = vectors
        self._eigenvalues = values

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._eigenvalues is None:
            self._decompose()
        return self._eigenvalues

    @property
    def eigenvectors(self) -> np.ndarray:
        if self._eigenvectors is None:
            self._decompose()
        return self._eigenvectors

    def __getstate__(self):
        return {"entries": self._entries, "name": self.name}

    def __setstate__(self, state):
        self.__init__(state["entries"], state["name"])

    def __repr__(self):
        return f"GeneratorMatrix(name={self.name!r}, d={self.d})"


class UnitaryGate:
    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidDimensionError(
                f"Gate must be a square matrix, got shape {matrix.shape}"
            )
        self._matrix = _frozen(matrix)

    @property
    def d(self) -> int:
        return self._matrix.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def unitarity_error(self) -> float:
        return float(np.max(np.abs(self._matrix.conj().T @ self._matrix - np.eye(self.d))))


def gamma(d: int, k) -> np.ndarray:
    """Off-diagonal magnitudes sqrt((d - k - 1)(k + 1)) of the spin ladder"""
    k = np.asarray(k, dtype=float)
    return np.sqrt((d - k - 1) * (k + 1))


def spin_z_values(d: int) -> np.ndarray:
    return (2 * np.arange(d) - d + 1) / 2


def angular_momentum(d: int, axis: str) -> GeneratorMatrix:
    """
    Spin-l matrix (l = (d - 1) / 2) for axis x, y or z.

    Args:
        d: Qudit dimension
        axis: One of "x", "y", "z"

    Returns:
        GeneratorMatrix with <k+1|L_x|k> = gamma/2 and <k+1|L_y|k> = -i gamma/2
    """
    d = check_dimension(d)
    if axis not in AXES:
        raise ValueError(f"Unknown axis {axis!r}, expected one of {AXES}")

    if axis == "z":
        return GeneratorMatrix(np.diag(spin_z_values(d)), name="L_z")

    lower = gamma(d, np.arange(d - 1)) / 2
    if axis == "y":
        lower = -1j * lower
    matrix = np.zeros((d, d), dtype=complex)
    rows = np.arange(1, d)
    cols = np.arange(d - 1)
    matrix[rows, cols] = lower
    matrix[cols, rows] = np.conj(lower)
    return GeneratorMatrix(matrix, name=f"L_{axis}")


def squeezing_generator(d: int) -> GeneratorMatrix:
    d = check_dimension(d)
    return GeneratorMatrix(np.diag(spin_z_values(d) ** 2), name="L_z2")


def extended_operators(d: int) -> List[GeneratorMatrix]:
    """
    Operators coupling |0> directly to every other basis state.

    Returns:
        [X_1, Y_1, X_2, Y_2, ...] with X_j = |0><0| - |j><j| and
        Y_j = |0><j| + |j><0|
    """
    d = check_dimension(d)
    operators = []
    for j in range(1, d):
        x_j = np.zeros((d, d), dtype=complex)
        x_j[0, 0] = 1.0
        x_j[j, j] = -1.0
        y_j = np.zeros((d, d), dtype=complex)
        y_j[0, j] = 1.0
        y_j[j, 0] = 1.0
        operators.append(GeneratorMatrix(x_j, name=f"X_{j}"))
        operators.append(GeneratorMatrix(y_j, name=f"Y_{j}"))
    return operators


def check_permutation(permutation: Sequence[int], d: int) -> Tuple[int, ...]:
    permutation = tuple(int(p) for p in permutation)
    if len(permutation) != d or sorted(permutation) != list(range(d)):
        raise InvalidPermutationError(
            f"{permutation} is not a permutation of 0..{d - 1}"
        )
    return permutation


def randomized_ladder(d: int, permutation: Sequence[int]) -> GeneratorMatrix:
    """
    L_x with its ladder rewired through a permutation of the basis.

    The coupling of |k> and |k+1> in L_x becomes a coupling of |P(k)> and
    |P(k+1)> with the same weight gamma(d, k) / 2.
    """
    d = check_dimension(d)
    permutation = check_permutation(permutation, d)
    weights = gamma(d, np.arange(d - 1)) / 2
    matrix = np.zeros((d, d), dtype=complex)
    for k in range(d - 1):
        upper, lower = permutation[k + 1], permutation[k]
        matrix[upper, lower] = weights[k]
        matrix[lower, upper] = weights[k]
    return GeneratorMatrix(matrix, name="L_x_randomized")


def phase_rotation(values: np.ndarray, vectors: np.ndarray, theta) -> np.ndarray:
    """V diag(exp(-i theta lambda)) V^dagger"""
    return (vectors * np.exp(-1j * theta * values)) @ vectors.conj().T


def rotation(gen: GeneratorMatrix, theta: float) -> UnitaryGate:
    return UnitaryGate(phase_rotation(gen.eigenvalues, gen.eigenvectors, theta))


def weighted_sum(gens: Sequence[GeneratorMatrix], coeffs: Sequence[float]) -> np.ndarray:
    if len(gens) == 0 or len(gens) != len(coeffs):
        raise InvalidDimensionError(
            f"Need the same non-zero number of generators and coefficients, "
            f"got {len(gens)} and {len(coeffs)}"
        )
    dims = {gen.d for gen in gens}
    if len(dims) != 1:
        raise InvalidDimensionError(f"Generators have mismatching dimensions {dims}")
    total = np.zeros((gens[0].d, gens[0].d), dtype=complex)
    for gen, coeff in zip(gens, coeffs):
        total += float(coeff) * gen.entries
    return total


def exp_weighted_sum(
    gens: Sequence[GeneratorMatrix], coeffs: Sequence[float]
) -> UnitaryGate:
    """exp(-i sum_m coeffs[m] gens[m]) via a fresh Hermitian eigendecomposition"""
    total = weighted_sum(gens, coeffs)
    values, vectors = np.linalg.eigh(total)
    return UnitaryGate(phase_rotation(values, vectors, 1.0))


def apply(gate: UnitaryGate, state: QuditState) -> QuditState:
    if gate.d != state.d:
        raise InvalidDimensionError(
            f"Gate dimension {gate.d} does not match state dimension {state.d}"
        )
    return QuditState(gate.matrix @ state.amplitudes)


def spin_coherent_state(d: int, polar: float, azimuth: float) -> QuditState:
    d = check_dimension(d)
    k = np.arange(d)
    amplitudes = (
        np.sqrt(comb(d - 1, k))
        * np.cos(polar / 2) ** (d - 1 - k)
        * np.sin(polar / 2) ** k
        * np.exp(1j * azimuth * k)
    )
    return QuditState(amplitudes / np.linalg.norm(amplitudes))
