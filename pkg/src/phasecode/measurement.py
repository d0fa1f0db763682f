"""Ancilla-mediated stabilizer measurement with asymmetric classical readout.

The measurement circuit is modelled at the level of its net effect: an exact
projective measurement of the stabilizer on the data qubits, followed by a
classical readout of the ancilla whose report flips with probability
``1 - F0`` or ``1 - F1`` depending on the ancilla's true state, plus a small
chance that a correctly assigned 0 outcome leaves the ancilla flipped
(imperfect non-demolition).  After a 1 report the ancilla is taken to be
faithfully in state 1; the controller's reset flip then returns it to 0.

The ancilla lives at register position 0 and is always in a classical basis
state in this model.  If a previous failure left it in state 1 at the start
of a measurement (a corrupted reference), the outcome-to-ancilla-state
assignment of that measurement is inverted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .code import Syndrome
from .noise import DeviceParams
from .qstate import (DensityOperator, PauliString, measure_projective,
                     project_branches)

ANCILLA_POSITION = 0


@dataclass(frozen=True)
class AssignmentConvention:
    """Which ancilla state encodes a +1 outcome, for each stabilizer.

    The label "ab" means the first stabilizer's +1 outcome is read out as
    ancilla state a and the second's as b.  "11" puts the best readout
    fidelity on the no-error syndrome.
    """

    plus_state: tuple[int, int]

    def __post_init__(self):
        if self.plus_state not in ((0, 0), (0, 1), (1, 0), (1, 1)):
            raise ValueError(f"invalid assignment {self.plus_state}")

    @classmethod
    def from_label(cls, label: str) -> "AssignmentConvention":
        if len(label) != 2 or any(c not in "01" for c in label):
            raise ValueError(f"assignment label must be two bits, got {label!r}")
        return cls((int(label[0]), int(label[1])))

    @property
    def label(self) -> str:
        return f"{self.plus_state[0]}{self.plus_state[1]}"

    def ancilla_for(self, stabilizer_index: int, outcome: int) -> int:
        plus = self.plus_state[stabilizer_index]
        return plus if outcome == 1 else 1 - plus

    def outcome_for(self, stabilizer_index: int, reported: int) -> int:
        return 1 if reported == self.plus_state[stabilizer_index] else -1


ALL_CONVENTIONS = tuple(AssignmentConvention.from_label(lbl)
                        for lbl in ("00", "01", "10", "11"))


@dataclass(frozen=True)
class ReadoutResult:
    """One stabilizer measurement as seen by the controller.

    ``reported`` is the classical ancilla report (0/1), ``true_outcome`` the
    stabilizer eigenvalue actually projected onto, and ``ancilla_post_ok``
    whether the ancilla is really in the state the controller believes.
    """

    reported: int
    true_outcome: int
    ancilla_post_ok: bool

    def __post_init__(self):
        if self.reported not in (0, 1):
            raise ValueError(f"reported state must be 0/1, got {self.reported}")
        if self.true_outcome not in (1, -1):
            raise ValueError(f"true outcome must be +/-1, got {self.true_outcome}")


def ancilla_reference(state: DensityOperator, tol: float = 1e-9) -> int:
    """The ancilla's classical basis state, or raise if it is not classical."""
    if state.n_qubits < 2:
        raise ValueError("register has no ancilla")
    half = state.dim // 2
    m = state.matrix
    diag = m.diagonal().real
    p0 = float(diag[:half].sum())
    p1 = float(diag[half:].sum())
    coherence = float(np.abs(m[:half, half:]).max())
    if coherence > tol or min(p0, p1) > tol:
        raise ValueError("ancilla is not in a valid classical reference state")
    return 0 if p0 >= p1 else 1


def set_ancilla(state: DensityOperator, bit: int,
                current: int | None = None) -> DensityOperator:
    """Return the state with the ancilla factor replaced by |bit><bit|.

    ``current`` may pass the ancilla's known basis state to skip re-deriving
    it.
    """
    if bit not in (0, 1):
        raise ValueError(f"ancilla state must be 0/1, got {bit}")
    if current is None:
        current = ancilla_reference(state)
    if current == bit:
        return state
    half = state.dim // 2
    m = state.matrix
    block = m[current * half:(current + 1) * half, current * half:(current + 1) * half]
    out = np.zeros_like(m)
    out[bit * half:(bit + 1) * half, bit * half:(bit + 1) * half] = block
    return DensityOperator._wrap(out, state.n_qubits)


def flip_ancilla(state: DensityOperator) -> DensityOperator:
    return set_ancilla(state, 1 - ancilla_reference(state))


def _check_stabilizer_operand(state: DensityOperator, stab: PauliString) -> None:
    if len(stab) != state.n_qubits:
        raise ValueError("stabilizer length does not match the register")
    if stab.letters[ANCILLA_POSITION] != "I":
        raise ValueError("stabilizer must not touch the ancilla")


def _post_ancilla_branches(true_state: int, reported: int, params: DeviceParams):
    """Possible ancilla states after readout, with probabilities.

    Yields ``(ancilla_state, probability)``.  The ancilla ends in the
    reported state, with one exception: after a correctly assigned 0
    outcome it is left flipped with probability one minus the
    non-demolition fidelity, corrupting the next measurement's reference
    unless the reset logic catches it.  (A 1 report means the ancilla is
    taken to be faithfully in state 1; the controller then resets it.)
    """
    if reported == 1:
        return [(1, 1.0)]
    if true_state == 0:
        q = params.post_measurement_fidelity
        branches = [(0, q)]
        if q < 1.0:
            branches.append((1, 1.0 - q))
        return branches
    return [(0, 1.0)]


def stabilizer_branches(state: DensityOperator, stab: PauliString,
                        conv: AssignmentConvention, params: DeviceParams,
                        stabilizer_index: int = 0):
    """Enumerate all branches of one ancilla-mediated stabilizer measurement.

    Returns a list of ``(probability, ReadoutResult, post_state)`` covering
    projection outcome, classical report, and ancilla post-state.  This is
    the exact-enumeration counterpart of `measure_stabilizer`.
    """
    _check_stabilizer_operand(state, stab)
    reference = ancilla_reference(state)
    fidelities = (params.f0_readout, params.f1_readout)
    out = []
    for outcome, post, prob in project_branches(state, stab):
        true_anc = conv.ancilla_for(stabilizer_index, outcome)
        if reference == 1:
            true_anc = 1 - true_anc
        f_true = fidelities[true_anc]
        for reported, p_report in ((true_anc, f_true), (1 - true_anc, 1.0 - f_true)):
            if p_report <= 0.0:
                continue
            for anc_state, p_anc in _post_ancilla_branches(true_anc, reported, params):
                result = ReadoutResult(reported=reported, true_outcome=outcome,
                                       ancilla_post_ok=(anc_state == reported))
                out.append((prob * p_report * p_anc, result,
                            set_ancilla(post, anc_state, current=reference)))
    return out


def measure_stabilizer(state: DensityOperator, stab: PauliString,
                       conv: AssignmentConvention, params: DeviceParams,
                       rng: np.random.Generator, stabilizer_index: int = 0):
    """Measure one stabilizer through the ancilla, sampling with ``rng``.

    Draw order (fixed, for reproducibility): projection outcome, readout
    report, non-demolition survival.  Returns ``(ReadoutResult, post_state)``.
    The controller's reset of a reported 1 is *not* applied here; the
    protocol runner owns that action.
    """
    _check_stabilizer_operand(state, stab)
    reference = ancilla_reference(state)
    outcome, post, _prob = measure_projective(state, stab, rng.random())
    true_anc = conv.ancilla_for(stabilizer_index, outcome)
    if reference == 1:
        true_anc = 1 - true_anc
    f_true = (params.f0_readout, params.f1_readout)[true_anc]
    reported = true_anc if rng.random() < f_true else 1 - true_anc
    if reported == 1:
        anc_state = 1
    elif true_anc == 0:
        anc_state = 0 if rng.random() < params.post_measurement_fidelity else 1
    else:
        anc_state = 0
    result = ReadoutResult(reported=reported, true_outcome=outcome,
                           ancilla_post_ok=(anc_state == reported))
    return result, set_ancilla(post, anc_state, current=reference)


def classify_outcome(reported: tuple[int, int],
                     conv: AssignmentConvention) -> Syndrome:
    """Invert the assignment convention: reported ancilla pair -> syndrome."""
    return Syndrome(conv.outcome_for(0, reported[0]),
                    conv.outcome_for(1, reported[1]))


def _syndrome_readout_products(conv: AssignmentConvention,
                               params: DeviceParams) -> tuple[float, ...]:
    """Two-readout fidelity product for each syndrome class (0, q1, q2, q3)."""
    fid = (params.f0_readout, params.f1_readout)
    classes = ((1, 1), (-1, 1), (-1, -1), (1, -1))
    return tuple(
        fid[conv.ancilla_for(0, s1)] * fid[conv.ancilla_for(1, s2)]
        for s1, s2 in classes)


def effective_measurement_fidelity(p_e: float, conv: AssignmentConvention,
                                   params: DeviceParams) -> float:
    """Effective two-readout fidelity of a correction round versus error rate.

    With uncorrelated single-qubit phase errors of probability ``p_e`` the
    no-error syndrome occurs with probability 1 - 3 p_e + 3 p_e^2 and each
    single-error syndrome with probability p_e - p_e^2, giving

        F_M = F(0) + (F(1) + F(2) + F(3) - 3 F(0)) (p_e - p_e^2)

    where F(i) is the readout-fidelity product the convention assigns to
    syndrome class i.  Averaged over all four conventions this is constant,
    equal to the squared mean readout fidelity.
    """
    if not 0.0 <= p_e <= 1.0:
        raise ValueError(f"error probability {p_e} outside [0, 1]")
    f = _syndrome_readout_products(conv, params)
    return f[0] + (f[1] + f[2] + f[3] - 3.0 * f[0]) * (p_e - p_e * p_e)
