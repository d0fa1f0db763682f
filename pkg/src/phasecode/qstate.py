"""Exact density-operator core for registers of one to four qubits.

Register convention, used everywhere in this package: tensor factors are
ordered most-significant first, so the qubit at position 0 is the leftmost
factor and contributes the highest bit of a computational basis index.
When an ancilla is present it sits at position 0 and the data qubits occupy
positions 1..3; a bare data register uses positions 0..2 for qubits 1..3.

States are immutable: every operation returns a new ``DensityOperator``.
Dense complex matrices are exact and trivially cheap at these sizes (at most
16 x 16), and coherent detuning errors are non-Clifford, so no stabilizer
tableau or sparse representation is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_QUBITS = 4

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

#: Probability below which a measurement branch is dropped by enumeration.
BRANCH_PROBABILITY_FLOOR = 1e-13

_validation_enabled = False


def set_validation(enabled: bool) -> None:
    """Toggle state-invariant checks (trace, Hermiticity, positivity) on
    every constructed state.  Off by default; the test suite turns it on."""
    global _validation_enabled
    _validation_enabled = enabled


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Joint quantum state of up to four qubits as a dense density matrix."""

    matrix: np.ndarray
    n_qubits: int

    def __init__(self, matrix: np.ndarray, n_qubits: int | None = None):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"density matrix must be square, got {matrix.shape}")
        dim = matrix.shape[0]
        inferred = int(dim).bit_length() - 1
        if 2**inferred != dim:
            raise ValueError(f"matrix dimension {dim} is not a power of two")
        if n_qubits is None:
            n_qubits = inferred
        elif 2**n_qubits != dim:
            raise ValueError(f"n_qubits={n_qubits} inconsistent with dimension {dim}")
        if not 1 <= n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
        matrix = matrix.copy()
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "n_qubits", n_qubits)
        if _validation_enabled:
            self.validate()

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @classmethod
    def _wrap(cls, matrix: np.ndarray, n_qubits: int) -> "DensityOperator":
        # Internal fast path: takes ownership of a freshly computed array,
        # skipping the defensive copy.  Callers must not retain references.
        obj = object.__new__(cls)
        matrix.flags.writeable = False
        object.__setattr__(obj, "matrix", matrix)
        object.__setattr__(obj, "n_qubits", n_qubits)
        if _validation_enabled:
            obj.validate()
        return obj

    @classmethod
    def from_state_vector(cls, vector: Sequence[complex]) -> "DensityOperator":
        vec = np.asarray(vector, dtype=complex).ravel()
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state vector norm {norm} differs from 1")
        return cls(np.outer(vec, vec.conj()))

    @classmethod
    def basis_state(cls, n_qubits: int, index: int = 0) -> "DensityOperator":
        dim = 2**n_qubits
        if not 0 <= index < dim:
            raise ValueError(f"basis index {index} out of range for {n_qubits} qubits")
        mat = np.zeros((dim, dim), dtype=complex)
        mat[index, index] = 1.0
        return cls(mat, n_qubits)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityOperator":
        dim = 2**n_qubits
        return cls(np.eye(dim, dtype=complex) / dim, n_qubits)

    def tensor(self, other: "DensityOperator") -> "DensityOperator":
        return DensityOperator(np.kron(self.matrix, other.matrix))

    def partial_trace(self, keep: Sequence[int]) -> "DensityOperator":
        """Trace out all positions not listed in ``keep`` (order preserved)."""
        keep = list(keep)
        n = self.n_qubits
        if sorted(keep) != sorted(set(keep)) or any(q < 0 or q >= n for q in keep):
            raise ValueError(f"invalid positions to keep: {keep}")
        if keep != sorted(keep):
            raise ValueError("keep must be in ascending positional order")
        drop = [q for q in range(n) if q not in keep]
        tensor = self.matrix.reshape((2,) * (2 * n))
        for q in sorted(drop, reverse=True):
            tensor = np.trace(tensor, axis1=q, axis2=q + (tensor.ndim // 2))
        dim = 2 ** len(keep)
        return DensityOperator(tensor.reshape(dim, dim), len(keep))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def validate(self, trace_tol: float = 1e-12, herm_tol: float = 1e-12,
                 eig_tol: float = -1e-10) -> None:
        """Raise ``ValueError`` unless trace, Hermiticity and positivity hold."""
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"trace {tr} differs from 1 beyond {trace_tol}")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > herm_tol:
            raise ValueError("matrix is not Hermitian within tolerance")
        eigs = np.linalg.eigvalsh(self.matrix)
        if eigs.min() < eig_tol:
            raise ValueError(f"negative eigenvalue {eigs.min()} below tolerance")


@dataclass(frozen=True)
class PauliString:
    """Signed Pauli operator given as one letter per register position,
    most-significant position first, e.g. ``PauliString("XXI")`` for an
    X on qubits 1 and 2 of a three-qubit data register."""

    letters: str
    sign: int = 1

    def __post_init__(self):
        if any(c not in "IXYZ" for c in self.letters) or not self.letters:
            raise ValueError(f"invalid Pauli letters {self.letters!r}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    def __len__(self) -> int:
        return len(self.letters)

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    def to_matrix(self) -> np.ndarray:
        return _pauli_matrix(self.letters, self.sign)

    def anticommutes_with_z(self, position: int) -> bool:
        return self.letters[position] in "XY"

    def anticommutes_with_x(self, position: int) -> bool:
        return self.letters[position] in "YZ"


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive trace-preserving map given by Kraus operators."""

    operators: tuple

    def __init__(self, operators: Sequence[np.ndarray]):
        ops = tuple(np.asarray(k, dtype=complex) for k in operators)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        for k in ops:
            if k.shape != (dim, dim):
                raise ValueError("Kraus operators must share one square shape")
        total = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(total - np.eye(dim))) > 1e-12:
            raise ValueError("Kraus set is not complete: sum K^dag K != I")
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def n_qubits(self) -> int:
        return int(self.dim).bit_length() - 1


@lru_cache(maxsize=256)
def _pauli_matrix(letters: str, sign: int) -> np.ndarray:
    mat = np.array([[sign]], dtype=complex)
    for c in letters:
        mat = np.kron(mat, PAULI_MATRICES[c])
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=8)
def _identity(dim: int) -> np.ndarray:
    eye = np.eye(dim, dtype=complex)
    eye.flags.writeable = False
    return eye


@lru_cache(maxsize=256)
def _projector(letters: str, sign: int, outcome: int) -> np.ndarray:
    proj = (_identity(2 ** len(letters)) + outcome * _pauli_matrix(letters, sign)) / 2.0
    proj.flags.writeable = False
    return proj


@lru_cache(maxsize=512)
def _embedded_cached(op_bytes: bytes, k: int, n_qubits: int,
                     targets: tuple) -> np.ndarray:
    op = np.frombuffer(op_bytes, dtype=complex).reshape(2**k, 2**k)
    rest = [q for q in range(n_qubits) if q not in targets]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=complex))
    order = list(targets) + rest
    src = [order.index(q) for q in range(n_qubits)]
    tensor = full.reshape((2,) * (2 * n_qubits))
    tensor = tensor.transpose(src + [n_qubits + s for s in src])
    out = tensor.reshape(2**n_qubits, 2**n_qubits).copy()
    out.flags.writeable = False
    return out


def embed_operator(op: np.ndarray, n_qubits: int, targets: Sequence[int]) -> np.ndarray:
    """Lift an operator on ``targets`` to the full register (identity elsewhere)."""
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValueError(f"targets must be distinct, got {targets}")
    if any(t < 0 or t >= n_qubits for t in targets):
        raise ValueError(f"targets {targets} out of range for {n_qubits} qubits")
    k = len(targets)
    op = np.ascontiguousarray(op, dtype=complex)
    if op.shape != (2**k, 2**k):
        raise ValueError(f"operator shape {op.shape} does not match {k} targets")
    return _embedded_cached(op.tobytes(), k, n_qubits, targets)


def apply_unitary(state: DensityOperator, u: np.ndarray,
                  targets: Sequence[int]) -> DensityOperator:
    """Return U rho U^dag with ``u`` acting on the given register positions."""
    u = np.asarray(u, dtype=complex)
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-12:
        raise ValueError("input matrix is not unitary within 1e-12")
    full = embed_operator(u, state.n_qubits, targets)
    return DensityOperator._wrap(full @ state.matrix @ full.conj().T,
                                 state.n_qubits)


def apply_channel(state: DensityOperator, channel: KrausChannel,
                  targets: Sequence[int]) -> DensityOperator:
    """Return sum_i K_i rho K_i^dag with the channel acting on ``targets``."""
    if channel.dim != 2 ** len(tuple(targets)):
        raise ValueError("channel dimension does not match target count")
    out = np.zeros_like(state.matrix)
    for k in channel.operators:
        full = embed_operator(k, state.n_qubits, targets)
        out += full @ state.matrix @ full.conj().T
    return DensityOperator._wrap(out, state.n_qubits)


def expectation(state: DensityOperator, obs: PauliString) -> float:
    """Tr(rho P) for a Pauli string spanning the whole register."""
    if len(obs) != state.n_qubits:
        raise ValueError(
            f"observable length {len(obs)} does not match register of "
            f"{state.n_qubits} qubits")
    value = np.einsum("ij,ji->", state.matrix, obs.to_matrix())
    if abs(value.imag) > 1e-9:
        raise ValueError(f"expectation has imaginary residue {value.imag}")
    return float(value.real)


def project_branches(state: DensityOperator, obs: PauliString,
                     min_probability: float = BRANCH_PROBABILITY_FLOOR):
    """Both projective branches of measuring ``obs``.

    Returns a list of ``(outcome, post_state, probability)`` with outcomes
    in {+1, -1}; branches below ``min_probability`` are dropped.  This is
    the deterministic enumeration entry point; `measure_projective` draws
    one branch from it.
    """
    if len(obs) != state.n_qubits:
        raise ValueError("observable length does not match register")
    if obs.weight == 0:
        raise ValueError("cannot measure the identity observable")
    pmat = obs.to_matrix()
    p_plus = 0.5 * (1.0 + float(np.real(np.einsum("ij,ji->", pmat, state.matrix))))
    branches = []
    for outcome, prob in ((1, p_plus), (-1, 1.0 - p_plus)):
        if prob <= min_probability or prob <= 0.0:
            continue
        proj = _projector(obs.letters, obs.sign, outcome)
        raw = proj @ state.matrix @ proj
        branches.append((outcome,
                         DensityOperator._wrap(raw / prob, state.n_qubits),
                         prob))
    return branches


def measure_projective(state: DensityOperator, obs: PauliString,
                       random_draw: float):
    """Projectively measure a Pauli observable.

    ``random_draw`` is an externally supplied uniform number in [0, 1); the
    caller owns randomness so that exact-enumeration mode can instead walk
    both branches via `project_branches`.  Returns
    ``(outcome, post_state, probability)`` where probability is the Born
    probability of the realized outcome.
    """
    if not 0.0 <= random_draw < 1.0:
        raise ValueError(f"random draw {random_draw} outside [0, 1)")
    if len(obs) != state.n_qubits:
        raise ValueError("observable length does not match register")
    if obs.weight == 0:
        raise ValueError("cannot measure the identity observable")
    pmat = obs.to_matrix()
    p_plus = 0.5 * (1.0 + float(np.real(np.einsum("ij,ji->", pmat, state.matrix))))
    outcome = 1 if random_draw < p_plus else -1
    prob = p_plus if outcome == 1 else 1.0 - p_plus
    if prob <= 0.0:
        raise ValueError("selected a zero-probability measurement branch")
    proj = _projector(obs.letters, obs.sign, outcome)
    raw = proj @ state.matrix @ proj
    post = DensityOperator._wrap(raw / prob, state.n_qubits)
    return outcome, post, prob
