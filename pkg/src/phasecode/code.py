"""Three-qubit phase-flip code: encoding, stabilizers, logical operators,
syndrome decoding, majority vote, and fidelity combinators.

Code definition on data qubits 1..3 (register positions 0..2):

* ``|0>_L = (|+X,+X,+X> + |-X,-X,-X>)/sqrt(2)``
* ``|1>_L = (|+X,+X,+X> - |-X,-X,-X>)/sqrt(2)``
* stabilizer generators ``X1 X2 I3`` and ``I1 X2 X3``
* logical operators ``X_L = X1 I2 I3``, ``Y_L = Y1 Z2 Z3``,
  ``Z_L = Z1 Z2 Z3`` (or their cyclic permutations; readout averages the
  three permutations unless one is requested explicitly)

A single-qubit Z error anticommutes with a unique subset of the generators,
so the pair of outcomes names the faulty qubit.

Frame convention
----------------
Corrections are never applied as gates.  A ``LogicalFrame`` records pending
single-qubit Z corrections plus one pending logical bit flip, and readout
conjugates each observable by the recorded operators.  The logical-flip bit
relabels ``|0>_L <-> |1>_L``: it is the classical record of the bit flip
that the stabilizer-measurement gate sequence imprints whenever a round
contains an odd number of +1 outcomes.  Its conjugation operator is the
``X`` on data qubit 1 (any logical-X representative gives the same signs on
the observables used here), so a set flip bit negates ``<Z_L>`` and
``<Y_L>`` readouts and leaves ``<X_L>`` alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qstate import DensityOperator, PauliString, expectation

#: Stabilizer generators on the three data qubits.
STABILIZER_GENERATORS = (PauliString("XXI"), PauliString("IXX"))

#: The third element of the stabilizer group, used for code-space fidelity.
STABILIZER_PRODUCT = PauliString("XIX")

X_LOGICAL_PERMUTATIONS = (PauliString("XII"), PauliString("IXI"), PauliString("IIX"))
Y_LOGICAL_PERMUTATIONS = (PauliString("YZZ"), PauliString("ZYZ"), PauliString("ZZY"))
Z_LOGICAL = PauliString("ZZZ")

#: Terms of the majority-vote logical X, (X1 + X2 + X3 - X1X2X3)/2.
MAJORITY_VOTE_TERMS = (
    (PauliString("XII"), 0.5),
    (PauliString("IXI"), 0.5),
    (PauliString("IIX"), 0.5),
    (PauliString("XXX"), -0.5),
)

_PLUS = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
_MINUS = np.array([1.0, -1.0], dtype=complex) / math.sqrt(2.0)


def _triple(single: np.ndarray) -> np.ndarray:
    return np.kron(np.kron(single, single), single)


LOGICAL_ZERO_VECTOR = (_triple(_PLUS) + _triple(_MINUS)) / math.sqrt(2.0)
LOGICAL_ONE_VECTOR = (_triple(_PLUS) - _triple(_MINUS)) / math.sqrt(2.0)


@dataclass(frozen=True)
class LogicalFrame:
    """Classical record of pending corrections.

    ``z`` holds one pending-Z bit per data qubit; ``logical_flip`` records a
    pending logical bit flip.  Applying the same update twice restores the
    frame (every field is a parity bit).
    """

    z: tuple[bool, bool, bool] = (False, False, False)
    logical_flip: bool = False

    @classmethod
    def identity(cls) -> "LogicalFrame":
        return cls()


@dataclass(frozen=True)
class Syndrome:
    """Outcomes of the two stabilizer generators, each +1 or -1."""

    s1: int
    s2: int

    def __post_init__(self):
        if self.s1 not in (1, -1) or self.s2 not in (1, -1):
            raise ValueError(f"syndrome components must be +/-1, got {self}")


@dataclass(frozen=True)
class LogicalStateFidelities:
    """The six logical basis-state fidelities entering the process fidelity."""

    f0: float
    f1: float
    f_plus_x: float
    f_minus_x: float
    f_plus_y: float
    f_minus_y: float

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not -1e-9 <= value <= 1.0 + 1e-9:
                raise ValueError(f"fidelity {name}={value} outside [0, 1]")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.f0, self.f1, self.f_plus_x, self.f_minus_x,
                self.f_plus_y, self.f_minus_y)


def encode(alpha: complex, beta: complex) -> DensityOperator:
    """Ideal encoding of alpha|0>_L + beta|1>_L as a three-qubit state.

    Direct state construction; encoding-circuit imperfections are modelled
    separately by the preparation-error channels in `phasecode.noise`.
    """
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"|alpha|^2+|beta|^2 = {norm}, expected 1")
    vec = alpha * LOGICAL_ZERO_VECTOR + beta * LOGICAL_ONE_VECTOR
    return DensityOperator.from_state_vector(vec)


def decode_syndrome(syndrome: Syndrome) -> int | None:
    """Data qubit (1-based) a single Z error sits on, or None for no error.

    (+1,+1) -> None, (-1,+1) -> 1, (-1,-1) -> 2, (+1,-1) -> 3.
    """
    table = {(1, 1): None, (-1, 1): 1, (-1, -1): 2, (1, -1): 3}
    return table[(syndrome.s1, syndrome.s2)]


def frame_sign(obs: PauliString, frame: LogicalFrame) -> int:
    """Sign a three-qubit observable picks up under frame conjugation."""
    if len(obs) != 3:
        raise ValueError("frame conjugation is defined on data observables")
    flips = 0
    for i in range(3):
        if frame.z[i] and obs.anticommutes_with_z(i):
            flips ^= 1
    if frame.logical_flip and obs.anticommutes_with_x(0):
        flips ^= 1
    return -1 if flips else 1


def conjugate_by_frame(obs: PauliString, frame: LogicalFrame) -> PauliString:
    """The observable whose raw expectation equals the frame-corrected one."""
    return PauliString(obs.letters, obs.sign * frame_sign(obs, frame))


def logical_observables(state: DensityOperator, frame: LogicalFrame,
                        permutation: int | None = None):
    """Frame-corrected (<X_L>, <Y_L>, <Z_L>) of a three-qubit state.

    ``permutation`` selects one of the three logical-operator permutations
    (0: on qubit 1, 1: on qubit 2, 2: on qubit 3); None averages all three.
    """
    if state.n_qubits != 3:
        raise ValueError("logical observables need a three-qubit data state")
    if permutation is None:
        perms = range(3)
    elif permutation in (0, 1, 2):
        perms = (permutation,)
    else:
        raise ValueError(f"permutation must be None or 0..2, got {permutation}")
    x_val = np.mean([
        expectation(state, conjugate_by_frame(X_LOGICAL_PERMUTATIONS[k], frame))
        for k in perms])
    y_val = np.mean([
        expectation(state, conjugate_by_frame(Y_LOGICAL_PERMUTATIONS[k], frame))
        for k in perms])
    z_val = expectation(state, conjugate_by_frame(Z_LOGICAL, frame))
    return float(x_val), float(y_val), float(z_val)


def majority_vote_xl(state: DensityOperator, frame: LogicalFrame) -> float:
    """Frame-corrected expectation of (X1 + X2 + X3 - X1X2X3)/2.

    On products of +/-X eigenstates this equals the majority sign, i.e. one
    round of classical error correction applied at readout.
    """
    if state.n_qubits != 3:
        raise ValueError("majority vote needs a three-qubit data state")
    total = 0.0
    for term, weight in MAJORITY_VOTE_TERMS:
        total += weight * expectation(state, conjugate_by_frame(term, frame))
    return float(total)


def process_fidelity(fidelities: LogicalStateFidelities) -> float:
    """Process fidelity with the identity from six basis-state fidelities:
    (F0 + F1 + F+X + F-X + F+Y + F-Y - 2) / 4."""
    return (sum(fidelities.as_tuple()) - 2.0) / 4.0


def code_space_fidelity(state: DensityOperator) -> float:
    """Overlap with the code space, (1 + <X1X2I3> + <I1X2X3> + <X1I2X3>)/4.

    Equals the probability that a noiseless stabilizer round reports no
    error on the given state.
    """
    if state.n_qubits != 3:
        raise ValueError("code-space fidelity needs a three-qubit state")
    total = 1.0
    for stab in (*STABILIZER_GENERATORS, STABILIZER_PRODUCT):
        total += expectation(state, stab)
    return total / 4.0
