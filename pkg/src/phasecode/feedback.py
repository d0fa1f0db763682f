"""Real-time controller: reported syndromes -> frame updates and resets.

All corrections are classical frame updates; no corrective gates touch the
quantum state.  The only physical feedback action is flipping the ancilla
back to its reference state after a 1 report, which the protocol runner
performs.  Each round is decoded independently; correlating syndromes
across rounds (which would also catch readout errors) is deliberately not
done here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .code import LogicalFrame, decode_syndrome
from .measurement import AssignmentConvention, classify_outcome


@dataclass(frozen=True)
class FrameUpdate:
    """Classical actions one round of stabilizer measurements induces."""

    z_correction: int | None
    logical_flip: bool
    ancilla_reset: bool

    def __post_init__(self):
        if self.z_correction not in (None, 1, 2, 3):
            raise ValueError(f"z_correction must be None or 1..3, "
                             f"got {self.z_correction}")


def process_round(reported: tuple[int, int],
                  conv: AssignmentConvention) -> FrameUpdate:
    """Controller branching for one round of two stabilizer reports.

    * ``z_correction``: the qubit named by decoding the classified syndrome.
    * ``logical_flip``: set when the round contains an odd number of +1
      outcomes; the measurement gate sequence imprints a logical bit flip in
      exactly those branches, and the controller undoes it by relabelling
      the logical basis for all subsequent readout.
    * ``ancilla_reset``: set when the round's last report was ancilla
      state 1, so the next sequence again starts from state 0.
    """
    syndrome = classify_outcome(reported, conv)
    plus_count = (syndrome.s1 == 1) + (syndrome.s2 == 1)
    return FrameUpdate(z_correction=decode_syndrome(syndrome),
                       logical_flip=plus_count % 2 == 1,
                       ancilla_reset=reported[1] == 1)


def detection_only(update: FrameUpdate) -> FrameUpdate:
    """Strip the error correction, keeping the housekeeping actions.

    Used by the no-feedback protocol variant: syndromes are recorded but
    not acted on, while the deterministic bit-flip bookkeeping and the
    ancilla reset stay active (the sequence cannot run without them).
    """
    return replace(update, z_correction=None)


def apply_update(frame: LogicalFrame, update: FrameUpdate) -> LogicalFrame:
    """Fold one round's update into the running frame.

    Every field toggles a parity bit, so applying the same update twice is
    the identity and z-updates from different rounds commute.
    """
    z = list(frame.z)
    if update.z_correction is not None:
        z[update.z_correction - 1] = not z[update.z_correction - 1]
    flip = frame.logical_flip ^ update.logical_flip
    return LogicalFrame(z=tuple(z), logical_flip=flip)
