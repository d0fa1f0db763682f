"""Protocol runners for each experiment of the modelled device.

Experiments: entanglement of a qubit pair by XX stabilizer measurement and
feedback, single-round error correction under applied phase errors,
multi-round error correction with the error budget split over rounds, and
storage under natural quasistatic dephasing with an optional mid-time
correction round.

Two run modes share the same physics.  Exact enumeration walks every
measurement / readout / ancilla branch with its exact weight while noise
channels act directly on the density operator, so results carry no
statistical error.  Monte Carlo samples one branch per trial through the
same primitive operations; every draw is fixed by (master seed, grid index,
state index, trial index), so results are reproducible regardless of
scheduling.

One physical subtlety lives here rather than in `phasecode.measurement`:
the gate sequence of a stabilizer round imprints a deterministic logical
bit flip whenever the round's outcomes contain an odd number of +1 results.
The runner applies that flip (an X on data qubit 1) after the round's two
measurements; the controller's frame update records it, and readout under
the frame undoes it exactly when the reports were faithful.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .code import (LogicalFrame, STABILIZER_GENERATORS, Syndrome,
                   LogicalStateFidelities, MAJORITY_VOTE_TERMS,
                   X_LOGICAL_PERMUTATIONS, Y_LOGICAL_PERMUTATIONS, Z_LOGICAL,
                   conjugate_by_frame, frame_sign, process_fidelity)
from .feedback import FrameUpdate, apply_update, detection_only, process_round
from .measurement import (ALL_CONVENTIONS, AssignmentConvention,
                          classify_outcome, flip_ancilla, measure_stabilizer,
                          set_ancilla, stabilizer_branches)
from .noise import (DeviceParams, ancilla_relaxation_flip, coherent_dephase,
                    longitudinal_relaxation, per_round_probability,
                    phase_flip_channel, prepare_encoded, sample_detuning)
from .qstate import (DensityOperator, PAULI_MATRICES, PauliString,
                     apply_channel, apply_unitary, expectation)


class RunMode(Enum):
    EXACT_ENUMERATION = "exact_enumeration"
    MONTE_CARLO = "monte_carlo"

    @classmethod
    def parse(cls, value) -> "RunMode":
        if isinstance(value, cls):
            return value
        aliases = {"exact": cls.EXACT_ENUMERATION,
                   "exact_enumeration": cls.EXACT_ENUMERATION,
                   "monte_carlo": cls.MONTE_CARLO,
                   "mc": cls.MONTE_CARLO}
        try:
            return aliases[str(value)]
        except KeyError:
            raise ValueError(f"unknown run mode {value!r}") from None


_SQRT_HALF = 1.0 / math.sqrt(2.0)

#: (label, alpha, beta, readout axis, eigenvalue sign) for the six logical
#: basis states entering the process fidelity, in fixed order.
SIX_BASIS_STATES = (
    ("0", 1.0, 0.0, "Z", 1),
    ("1", 0.0, 1.0, "Z", -1),
    ("+x", _SQRT_HALF, _SQRT_HALF, "X", 1),
    ("-x", _SQRT_HALF, -_SQRT_HALF, "X", -1),
    ("+y", _SQRT_HALF, _SQRT_HALF * 1j, "Y", 1),
    ("-y", _SQRT_HALF, -_SQRT_HALF * 1j, "Y", -1),
)

#: The two stored states of the phase-memory experiments.
XL_STATES = (
    ("+x", _SQRT_HALF, _SQRT_HALF, 1),
    ("-x", _SQRT_HALF, -_SQRT_HALF, -1),
)

SINGLE_ROUND_VARIANTS = ("unencoded", "encoded_idle", "qec", "no_feedback")
NATURAL_VARIANTS = ("unencoded_best", "encoded_majority_only", "qec",
                    "no_feedback")

_SYNDROME_CLASS = {(1, 1): 0, (-1, 1): 1, (-1, -1): 2, (1, -1): 3}
_NO_MEASUREMENT_SYNDROME = (1.0, 0.0, 0.0, 0.0)
_CHUNK = 4096
_SEED_MASK = (1 << 64) - 1


def _trial_rng(seed: int, grid_idx: int, conv_idx: int, state_idx: int,
               trial: int) -> np.random.Generator:
    """Independent stream per (seed, grid point, convention, state, trial).

    The counter-based generator is keyed injectively by the five indices,
    so every draw is fixed by them alone, independent of scheduling.
    """
    combo = (((grid_idx * 8 + state_idx) * 4 + conv_idx) << 40) + trial
    key = np.array([seed & _SEED_MASK, combo & _SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class RoundRecord:
    """One stabilizer round as recorded into the controller trace."""

    syndrome: Syndrome
    reported: tuple[int, int]
    update: FrameUpdate


@dataclass(frozen=True)
class ExperimentRecord:
    """Full outcome trace of one Monte Carlo trial."""

    trial_index: int
    syndromes: tuple[Syndrome, ...]
    reported: tuple[tuple[int, int], ...]
    updates: tuple[FrameUpdate, ...]
    final_value: float


@dataclass(frozen=True)
class SweepResult:
    """Per-grid-point aggregates of one experiment sweep."""

    x: tuple[float, ...]
    fidelity: tuple[float, ...]
    stderr: tuple[float, ...]
    syndrome_probs: tuple[tuple[float, float, float, float], ...]
    trials: int
    seed: int
    per_round_no_error: tuple[tuple[float, ...], ...] | None = None
    records: tuple[ExperimentRecord, ...] | None = None

    def __post_init__(self):
        for probs in self.syndrome_probs:
            if abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError(f"syndrome probabilities sum to {sum(probs)}")
        if any(s < 0 for s in self.stderr):
            raise ValueError("standard errors must be non-negative")


@dataclass(frozen=True)
class BellResult:
    """Outcome of the entanglement-by-measurement experiment."""

    fidelity: float
    stderr: float
    branch_probability: dict
    branch_fidelity: dict
    trials: int
    seed: int


def _resolve_conventions(convention) -> tuple[AssignmentConvention, ...]:
    if convention == "symmetrized":
        return ALL_CONVENTIONS
    if isinstance(convention, AssignmentConvention):
        return (convention,)
    return (AssignmentConvention.from_label(str(convention)),)


def _prepare_register(alpha: complex, beta: complex,
                      params: DeviceParams) -> DensityOperator:
    """Encoded data state with preparation errors, ancilla heralded in 0."""
    return DensityOperator.basis_state(1, 0).tensor(
        prepare_encoded(alpha, beta, params))


_STABS4 = tuple(PauliString("I" + s.letters) for s in STABILIZER_GENERATORS)
_X_IMPRINT = PAULI_MATRICES["X"]

_AXIS_PERMS = {"X": X_LOGICAL_PERMUTATIONS, "Y": Y_LOGICAL_PERMUTATIONS,
               "Z": (Z_LOGICAL,)}


def _signed_stab4(index: int, frame: LogicalFrame) -> PauliString:
    # Measurement bases are adapted to the frame: pending corrections flip
    # the sign under which a stabilizer outcome is recorded.
    sign = frame_sign(STABILIZER_GENERATORS[index], frame)
    return PauliString(_STABS4[index].letters, sign)


@lru_cache(maxsize=1024)
def _frame_adjusted(axis_or_maj: str, frame: LogicalFrame,
                    offset: int) -> tuple:
    """Frame-conjugated readout observables, cached (the frame space is tiny)."""
    if axis_or_maj == "maj":
        terms = MAJORITY_VOTE_TERMS
    else:
        terms = tuple((obs, 1.0 / len(_AXIS_PERMS[axis_or_maj]))
                      for obs in _AXIS_PERMS[axis_or_maj])
    out = []
    for obs, weight in terms:
        conj = conjugate_by_frame(obs, frame)
        out.append((PauliString("I" * offset + conj.letters, conj.sign), weight))
    return tuple(out)


def _logical_axis_value(state: DensityOperator, frame: LogicalFrame,
                        axis: str) -> float:
    """Frame-corrected logical expectation along one axis, permutation mean."""
    return sum(weight * expectation(state, obs)
               for obs, weight in _frame_adjusted(axis, frame, state.n_qubits - 3))


def _majority_value(state: DensityOperator, frame: LogicalFrame) -> float:
    """Frame-corrected expectation of the majority-vote logical X."""
    return sum(weight * expectation(state, obs)
               for obs, weight in _frame_adjusted("maj", frame, state.n_qubits - 3))


def _apply_error_channel(state: DensityOperator, p: float) -> DensityOperator:
    if p == 0.0:
        return state
    channel = phase_flip_channel(p)
    for pos in range(state.n_qubits - 3, state.n_qubits):
        state = apply_channel(state, channel, [pos])
    return state


# ---------------------------------------------------------------------------
# one stabilizer round

def _round_exact(weight: float, state: DensityOperator, frame: LogicalFrame,
                 conv: AssignmentConvention, params: DeviceParams,
                 correct: bool):
    """All branches of one round: two measurements, resets, imprint, update."""
    branches = [(weight, state, (), ())]
    for j in (0, 1):
        stab = _signed_stab4(j, frame)
        grown = []
        for w, st, trues, reps in branches:
            for p, result, post in stabilizer_branches(st, stab, conv, params, j):
                if result.reported == 1:
                    post = set_ancilla(post, 0, current=1)  # controller reset
                grown.append((w * p, post, trues + (result.true_outcome,),
                              reps + (result.reported,)))
        branches = grown
    out = []
    for w, st, trues, reps in branches:
        if trues.count(1) % 2 == 1:
            st = apply_unitary(st, _X_IMPRINT, [st.n_qubits - 3])
        update = process_round(reps, conv)
        if not correct:
            update = detection_only(update)
        record = RoundRecord(syndrome=classify_outcome(reps, conv),
                             reported=reps, update=update)
        out.append((w, st, apply_update(frame, update), record))
    return out


def _round_mc(state: DensityOperator, frame: LogicalFrame,
              conv: AssignmentConvention, params: DeviceParams,
              rng: np.random.Generator, correct: bool):
    trues, reps = [], []
    for j in (0, 1):
        stab = _signed_stab4(j, frame)
        result, state = measure_stabilizer(state, stab, conv, params, rng, j)
        if result.reported == 1:
            state = set_ancilla(state, 0, current=1)  # controller reset
        trues.append(result.true_outcome)
        reps.append(result.reported)
    if trues.count(1) % 2 == 1:
        state = apply_unitary(state, _X_IMPRINT, [state.n_qubits - 3])
    reps = tuple(reps)
    update = process_round(reps, conv)
    if not correct:
        update = detection_only(update)
    record = RoundRecord(syndrome=classify_outcome(reps, conv),
                         reported=reps, update=update)
    return state, apply_update(frame, update), record


# ---------------------------------------------------------------------------
# entanglement by XX measurement

_BELL_TARGET = np.zeros(4, dtype=complex)
_BELL_TARGET[0] = _BELL_TARGET[3] = _SQRT_HALF


def _bell_fidelity(state: DensityOperator) -> float:
    pair = state.partial_trace((1, 2))
    return float(np.real(_BELL_TARGET.conj() @ pair.matrix @ _BELL_TARGET))


def _bell_initial(params: DeviceParams) -> DensityOperator:
    # |00> with independent per-qubit preparation flips; the pair fidelity
    # is the product of the single-qubit ones.
    f_single = math.sqrt(params.init_fidelity_two_qubit)
    qubit = np.diag([f_single, 1.0 - f_single]).astype(complex)
    pair = np.kron(qubit, qubit)
    return DensityOperator.basis_state(1, 0).tensor(DensityOperator(pair, 2))


def run_bell(pair: tuple[int, int], trials: int, params: DeviceParams,
             mode=RunMode.EXACT_ENUMERATION, convention="11",
             seed: int = 0) -> BellResult:
    """Deterministic entanglement of two data qubits by XX measurement.

    The qubits are prepared in |00>, the XX stabilizer is measured through
    the ancilla, and the branch reported as -1 receives a Z correction so
    both branches end in the same target Bell state (|00>+|11>)/sqrt(2).
    Returns the overall fidelity with the target plus the per-branch
    post-selected fidelities.
    """
    mode = RunMode.parse(mode)
    pair = tuple(pair)
    if len(pair) != 2 or pair[0] == pair[1] or any(q not in (1, 2, 3) for q in pair):
        raise ValueError(f"pair must name two distinct data qubits, got {pair}")
    conv = _resolve_conventions(convention)[0]
    stab = PauliString("IXX")
    z_fix = PAULI_MATRICES["Z"]

    def correct_branch(reported: int, state: DensityOperator) -> DensityOperator:
        if conv.outcome_for(0, reported) == -1:
            return apply_unitary(state, z_fix, [1])
        return state

    initial = _bell_initial(params)
    if mode is RunMode.EXACT_ENUMERATION:
        acc_p = {1: 0.0, -1: 0.0}
        acc_f = {1: 0.0, -1: 0.0}
        for p, result, post in stabilizer_branches(initial, stab, conv, params, 0):
            post = correct_branch(result.reported, post)
            branch = conv.outcome_for(0, result.reported)
            acc_p[branch] += p
            acc_f[branch] += p * _bell_fidelity(post)
        total = sum(acc_f.values())
        branch_fid = {b: acc_f[b] / acc_p[b] if acc_p[b] > 0 else 0.0
                      for b in (1, -1)}
        return BellResult(fidelity=total, stderr=0.0,
                          branch_probability=dict(acc_p),
                          branch_fidelity=branch_fid, trials=0, seed=seed)

    counts = {1: 0, -1: 0}
    sums = {1: 0.0, -1: 0.0}
    sums_sq = 0.0
    total = 0.0
    for trial in range(trials):
        rng = _trial_rng(seed, 0, 0, 0, trial)
        result, post = measure_stabilizer(initial, stab, conv, params, rng, 0)
        post = correct_branch(result.reported, post)
        branch = conv.outcome_for(0, result.reported)
        fid = _bell_fidelity(post)
        counts[branch] += 1
        sums[branch] += fid
        total += fid
        sums_sq += fid * fid
    mean = total / trials
    var = max(sums_sq / trials - mean * mean, 0.0)
    return BellResult(
        fidelity=mean, stderr=math.sqrt(var / trials),
        branch_probability={b: counts[b] / trials for b in (1, -1)},
        branch_fidelity={b: sums[b] / counts[b] if counts[b] else 0.0
                         for b in (1, -1)},
        trials=trials, seed=seed)


# ---------------------------------------------------------------------------
# single round of error correction under applied errors

_UNENCODED_STATES = (
    ("0", np.array([1.0, 0.0]), "Z", 1),
    ("1", np.array([0.0, 1.0]), "Z", -1),
    ("+x", np.array([_SQRT_HALF, _SQRT_HALF]), "X", 1),
    ("-x", np.array([_SQRT_HALF, -_SQRT_HALF]), "X", -1),
    ("+y", np.array([_SQRT_HALF, _SQRT_HALF * 1j]), "Y", 1),
    ("-y", np.array([_SQRT_HALF, -_SQRT_HALF * 1j]), "Y", -1),
)


def _unencoded_process_fidelity(p_e: float) -> float:
    fids = []
    channel = phase_flip_channel(p_e)
    for _label, vec, axis, sign in _UNENCODED_STATES:
        state = apply_channel(DensityOperator.from_state_vector(vec), channel, [0])
        value = expectation(state, PauliString(axis))
        fids.append(0.5 * (1.0 + sign * value))
    return process_fidelity(LogicalStateFidelities(*fids))


def _single_round_exact(p_e, conv, params, variant):
    """(process fidelity, pooled syndrome distribution) for one grid point."""
    fids = []
    syn = np.zeros(4)
    measured = variant in ("qec", "no_feedback")
    for _label, alpha, beta, axis, sign in SIX_BASIS_STATES:
        state = _apply_error_channel(_prepare_register(alpha, beta, params), p_e)
        if not measured:
            value = _logical_axis_value(state, LogicalFrame.identity(), axis)
        else:
            value = 0.0
            for w, st, frame, record in _round_exact(
                    1.0, state, LogicalFrame.identity(), conv, params,
                    correct=(variant == "qec")):
                value += w * _logical_axis_value(st, frame, axis)
                syn[_SYNDROME_CLASS[(record.syndrome.s1, record.syndrome.s2)]] += w
        value *= params.prep_code_fidelity
        fids.append(0.5 * (1.0 + sign * value))
    probs = tuple(syn / 6.0) if measured else _NO_MEASUREMENT_SYNDROME
    return process_fidelity(LogicalStateFidelities(*fids)), probs


def _single_round_mc_chunk(args):
    (params, conv_label, variant, p_e, pe_idx, conv_idx, state_idx, seed,
     start, stop, keep_records) = args
    conv = AssignmentConvention.from_label(conv_label)
    _label, alpha, beta, axis, _sign = SIX_BASIS_STATES[state_idx]
    base = _apply_error_channel(_prepare_register(alpha, beta, params), p_e)
    measured = variant in ("qec", "no_feedback")
    correct = variant == "qec"
    total = 0.0
    total_sq = 0.0
    syn = np.zeros(4)
    records = []
    for trial in range(start, stop):
        if measured:
            rng = _trial_rng(seed, pe_idx, conv_idx, state_idx, trial)
            state, frame, record = _round_mc(base, LogicalFrame.identity(),
                                             conv, params, rng, correct)
            syn[_SYNDROME_CLASS[(record.syndrome.s1, record.syndrome.s2)]] += 1
            trace = (record,)
        else:
            state, frame, trace = base, LogicalFrame.identity(), ()
        value = params.prep_code_fidelity * _logical_axis_value(state, frame, axis)
        total += value
        total_sq += value * value
        if keep_records:
            records.append(ExperimentRecord(
                trial_index=trial,
                syndromes=tuple(r.syndrome for r in trace),
                reported=tuple(r.reported for r in trace),
                updates=tuple(r.update for r in trace),
                final_value=value))
    return total, total_sq, syn, records


def _map_chunks(worker, common_args, n_trials, threads, keep_records):
    chunks = [(s, min(s + _CHUNK, n_trials)) for s in range(0, n_trials, _CHUNK)]
    jobs = [common_args + (s, e, keep_records) for s, e in chunks]
    if threads <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, jobs))


def run_single_round_qec(pe_grid, trials, params: DeviceParams,
                         convention="symmetrized", variant: str = "qec",
                         mode=RunMode.EXACT_ENUMERATION, seed: int = 0,
                         threads: int = 1,
                         collect_records: bool = False) -> SweepResult:
    """Process fidelity of one correction round versus applied error rate.

    Six logical basis states are prepared with the configured preparation
    errors, every data qubit passes through the phase-flip channel at each
    grid probability, and the chosen variant then runs a stabilizer round
    with feedback ("qec"), a round without corrections ("no_feedback"),
    nothing ("encoded_idle"), or replaces the logical qubit by a bare
    physical one ("unencoded").  ``convention`` is an assignment label,
    an `AssignmentConvention`, or "symmetrized" to average all four.
    """
    mode = RunMode.parse(mode)
    if variant not in SINGLE_ROUND_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    pe_grid = [float(p) for p in pe_grid]
    for p in pe_grid:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"grid value {p} outside [0, 1]")
    convs = _resolve_conventions(convention)

    xs, fid, err, syn_rows, records = [], [], [], [], []
    for pe_idx, p_e in enumerate(pe_grid):
        xs.append(p_e)
        if variant == "unencoded":
            # No measurement and exact channels: both modes are deterministic.
            fid.append(_unencoded_process_fidelity(p_e))
            err.append(0.0)
            syn_rows.append(_NO_MEASUREMENT_SYNDROME)
            continue
        if mode is RunMode.EXACT_ENUMERATION:
            per_conv = [_single_round_exact(p_e, conv, params, variant)
                        for conv in convs]
            fid.append(float(np.mean([f for f, _ in per_conv])))
            err.append(0.0)
            syn_rows.append(tuple(np.mean([s for _, s in per_conv], axis=0)))
            continue
        conv_f, conv_var, conv_syn = [], [], []
        for conv_idx, conv in enumerate(convs):
            state_fids, state_vars = [], []
            syn = np.zeros(4)
            n_syn = 0
            for state_idx, (_l, _a, _b, _ax, sign) in enumerate(SIX_BASIS_STATES):
                parts = _map_chunks(
                    _single_round_mc_chunk,
                    (params, conv.label, variant, p_e, pe_idx, conv_idx,
                     state_idx, seed),
                    trials, threads, collect_records)
                total = sum(p[0] for p in parts)
                total_sq = sum(p[1] for p in parts)
                for p in parts:
                    syn += p[2]
                    records.extend(p[3])
                n_syn += trials if variant != "encoded_idle" else 0
                mean = total / trials
                var = max(total_sq / trials - mean * mean, 0.0)
                state_fids.append(0.5 * (1.0 + sign * mean))
                state_vars.append(var / (4.0 * trials))
            conv_f.append(process_fidelity(LogicalStateFidelities(*state_fids)))
            conv_var.append(sum(state_vars) / 16.0)
            if variant == "encoded_idle":
                conv_syn.append(np.array(_NO_MEASUREMENT_SYNDROME))
            else:
                conv_syn.append(syn / n_syn)
        fid.append(float(np.mean(conv_f)))
        err.append(math.sqrt(sum(conv_var)) / len(convs))
        syn_rows.append(tuple(np.mean(conv_syn, axis=0)))

    return SweepResult(x=tuple(xs), fidelity=tuple(fid), stderr=tuple(err),
                       syndrome_probs=tuple(syn_rows),
                       trials=0 if mode is RunMode.EXACT_ENUMERATION else trials,
                       seed=seed,
                       records=tuple(records) if collect_records else None)


# ---------------------------------------------------------------------------
# multiple rounds, incoherent error budget split over rounds

def _multi_round_exact(p_e, n_rounds, conv, params):
    p_n = per_round_probability(p_e, n_rounds)
    value_sum = {1: 0.0, -1: 0.0}
    round_syn = np.zeros((max(n_rounds - 1, 1), 4))
    for _label, alpha, beta, sign in XL_STATES:
        branches = [(1.0, _prepare_register(alpha, beta, params),
                     LogicalFrame.identity())]
        for round_idx in range(n_rounds):
            branches = [(w, _apply_error_channel(st, p_n), frame)
                        for w, st, frame in branches]
            if round_idx == n_rounds - 1:
                break
            grown = []
            for w, st, frame in branches:
                for w2, st2, frame2, record in _round_exact(
                        w, st, frame, conv, params, correct=True):
                    cls = _SYNDROME_CLASS[(record.syndrome.s1, record.syndrome.s2)]
                    round_syn[round_idx, cls] += w2 / 2.0  # half per stored state
                    grown.append((w2, st2, frame2))
            branches = grown
        value_sum[sign] = params.prep_code_fidelity * sum(
            w * _majority_value(st, frame) for w, st, frame in branches)
    fid = ((1.0 + value_sum[1]) / 2.0 + (1.0 - value_sum[-1]) / 2.0) / 2.0
    if n_rounds == 1:
        return fid, _NO_MEASUREMENT_SYNDROME, ()
    per_round = tuple(float(row[0]) for row in round_syn)
    pooled = tuple(np.mean(round_syn, axis=0))
    return fid, pooled, per_round


def _multi_round_mc_chunk(args):
    (params, conv_label, n_rounds, p_e, pe_idx, state_idx, seed, start, stop,
     keep_records) = args
    conv = AssignmentConvention.from_label(conv_label)
    _label, alpha, beta, _sign = XL_STATES[state_idx]
    p_n = per_round_probability(p_e, n_rounds)
    base = _prepare_register(alpha, beta, params)
    total = 0.0
    total_sq = 0.0
    round_syn = np.zeros((max(n_rounds - 1, 1), 4))
    records = []
    for trial in range(start, stop):
        rng = _trial_rng(seed, pe_idx, 0, state_idx, trial)
        state, frame = base, LogicalFrame.identity()
        trace = []
        for round_idx in range(n_rounds):
            state = _apply_error_channel(state, p_n)
            if round_idx == n_rounds - 1:
                break
            state, frame, record = _round_mc(state, frame, conv, params, rng,
                                             correct=True)
            cls = _SYNDROME_CLASS[(record.syndrome.s1, record.syndrome.s2)]
            round_syn[round_idx, cls] += 1
            trace.append(record)
        value = params.prep_code_fidelity * _majority_value(state, frame)
        total += value
        total_sq += value * value
        if keep_records:
            records.append(ExperimentRecord(
                trial_index=trial,
                syndromes=tuple(r.syndrome for r in trace),
                reported=tuple(r.reported for r in trace),
                updates=tuple(r.update for r in trace),
                final_value=value))
    return total, total_sq, round_syn, records


def run_multi_round_qec(n_rounds: int, pe_grid, trials, params: DeviceParams,
                        mode=RunMode.EXACT_ENUMERATION, convention="11",
                        seed: int = 0, threads: int = 1,
                        collect_records: bool = False) -> SweepResult:
    """Mean stored-state fidelity after n rounds of error correction.

    The total error probability is split over the rounds; each of the first
    n-1 rounds runs stabilizer measurements with feedback and the final
    round is the majority-vote readout.  Reports the average fidelity of
    the two stored +/-X states, the pooled syndrome distribution of the
    measurement rounds, and the per-round no-error probabilities.
    """
    mode = RunMode.parse(mode)
    if n_rounds not in (1, 2, 3):
        raise ValueError(f"round count must be 1..3, got {n_rounds}")
    pe_grid = [float(p) for p in pe_grid]
    for p in pe_grid:
        if not 0.0 <= p <= 0.5:
            raise ValueError(f"grid value {p} outside [0, 0.5]")
    conv = _resolve_conventions(convention)[0]

    xs, fid, err, syn_rows, per_round_rows, records = [], [], [], [], [], []
    for pe_idx, p_e in enumerate(pe_grid):
        xs.append(p_e)
        if mode is RunMode.EXACT_ENUMERATION:
            f, pooled, per_round = _multi_round_exact(p_e, n_rounds, conv, params)
            fid.append(f)
            err.append(0.0)
            syn_rows.append(pooled)
            per_round_rows.append(per_round)
            continue
        state_fids, state_vars = [], []
        round_syn = np.zeros((max(n_rounds - 1, 1), 4))
        for state_idx, (_l, _a, _b, sign) in enumerate(XL_STATES):
            parts = _map_chunks(
                _multi_round_mc_chunk,
                (params, conv.label, n_rounds, p_e, pe_idx, state_idx, seed),
                trials, threads, collect_records)
            total = sum(p[0] for p in parts)
            total_sq = sum(p[1] for p in parts)
            for p in parts:
                round_syn += p[2]
                records.extend(p[3])
            mean = total / trials
            var = max(total_sq / trials - mean * mean, 0.0)
            state_fids.append(0.5 * (1.0 + sign * mean))
            state_vars.append(var / (4.0 * trials))
        fid.append(float(np.mean(state_fids)))
        err.append(math.sqrt(sum(state_vars)) / 2.0)
        if n_rounds == 1:
            syn_rows.append(_NO_MEASUREMENT_SYNDROME)
            per_round_rows.append(())
        else:
            normalized = round_syn / (2 * trials)
            syn_rows.append(tuple(np.mean(normalized, axis=0)))
            per_round_rows.append(tuple(float(r[0]) for r in normalized))

    return SweepResult(x=tuple(xs), fidelity=tuple(fid), stderr=tuple(err),
                       syndrome_probs=tuple(syn_rows),
                       trials=0 if mode is RunMode.EXACT_ENUMERATION else trials,
                       seed=seed, per_round_no_error=tuple(per_round_rows),
                       records=tuple(records) if collect_records else None)


# ---------------------------------------------------------------------------
# storage under natural quasistatic dephasing

def _segment_retention(t_half: float, t1: float) -> float:
    if math.isinf(t1):
        return 1.0
    return math.exp(-math.sqrt(t_half / t1))


def _natural_product_fidelity(t: float, trials: int, params: DeviceParams,
                              rng: np.random.Generator, best_only: bool):
    """Vectorized storage fidelity for the variants without measurements.

    For product states under purely local evolution every term of the
    majority-vote operator factorizes, so per-trial expectations follow in
    closed form from the sampled detunings; this path is checked against
    the density-operator path in the tests.
    """
    sigmas = np.array([0.0 if math.isinf(ti) else math.sqrt(2.0) / ti
                       for ti in params.t2_star])
    delta = rng.normal(0.0, 1.0, size=(trials, 3)) * sigmas
    cos = np.cos(delta * t)
    retention = np.array([_segment_retention(t / 2.0, ti) ** 2
                          for ti in params.t1_qubit])
    if best_only:
        values = cos[:, 2] * retention[2]
    else:
        g = cos * retention * (1.0 - 2.0 * np.asarray(params.p_in))
        values = params.prep_code_fidelity * (
            g.sum(axis=1) - g.prod(axis=1)) / 2.0
    fidelity = 0.5 * (1.0 + values)
    mean = float(fidelity.mean())
    se = float(fidelity.std(ddof=0) / math.sqrt(trials))
    return mean, se


def _natural_mc_chunk(args):
    (params, conv_label, variant, t, x_idx, state_idx, seed, start, stop,
     keep_records) = args
    conv = AssignmentConvention.from_label(conv_label)
    _label, alpha, beta, _sign = XL_STATES[state_idx]
    correct = variant == "qec"
    total = 0.0
    total_sq = 0.0
    syn = np.zeros(4)
    records = []
    for trial in range(start, stop):
        rng = _trial_rng(seed, x_idx, 0, state_idx, trial)
        sample = sample_detuning(params, rng)
        state = _prepare_register(alpha, beta, params)
        state = coherent_dephase(state, sample, t / 2.0)
        for q in (1, 2, 3):
            state = longitudinal_relaxation(state, q, t / 2.0, params)
        if ancilla_relaxation_flip(t / 2.0, params, rng):
            state = flip_ancilla(state)
        state, frame, record = _round_mc(state, LogicalFrame.identity(), conv,
                                         params, rng, correct)
        syn[_SYNDROME_CLASS[(record.syndrome.s1, record.syndrome.s2)]] += 1
        # The correction round itself takes wall time; its duration counts
        # toward qubit relaxation (majority-vote readout counts as zero).
        for q in (1, 2, 3):
            state = longitudinal_relaxation(state, q, params.round_duration,
                                            params)
        state = coherent_dephase(state, sample, t / 2.0)
        for q in (1, 2, 3):
            state = longitudinal_relaxation(state, q, t / 2.0, params)
        value = params.prep_code_fidelity * _majority_value(state, frame)
        total += value
        total_sq += value * value
        if keep_records:
            records.append(ExperimentRecord(
                trial_index=trial, syndromes=(record.syndrome,),
                reported=(record.reported,), updates=(record.update,),
                final_value=value))
    return total, total_sq, syn, records


def run_natural_dephasing(times, trials: int, params: DeviceParams,
                          variant: str, convention="11",
                          mode=RunMode.MONTE_CARLO, seed: int = 0,
                          threads: int = 1,
                          collect_records: bool = False) -> SweepResult:
    """Storage fidelity versus time under quasistatic natural dephasing.

    Each trial draws one constant detuning per qubit.  The state evolves
    freely for half the storage time, the "qec"/"no_feedback" variants then
    run one stabilizer round (the idle ancilla may have relaxed during the
    wait, corrupting its reference), and evolution continues with the same
    detunings for the second half before majority-vote readout.  The
    "unencoded_best" variant stores a bare superposition on the qubit with
    the longest dephasing time; "encoded_majority_only" skips the
    measurement round.  Monte Carlo only: the continuous detuning
    distribution has no finite branch enumeration.
    """
    mode = RunMode.parse(mode)
    if mode is not RunMode.MONTE_CARLO:
        raise ValueError("natural dephasing requires monte_carlo mode")
    if variant not in NATURAL_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("storage times must be non-negative")
    conv = _resolve_conventions(convention)[0]

    xs, fid, err, syn_rows, records = [], [], [], [], []
    for x_idx, t in enumerate(times):
        xs.append(t)
        if variant in ("unencoded_best", "encoded_majority_only"):
            rng = _trial_rng(seed, x_idx, 0, 0, 0)
            mean, se = _natural_product_fidelity(
                t, trials, params, rng, best_only=(variant == "unencoded_best"))
            fid.append(mean)
            err.append(se)
            syn_rows.append(_NO_MEASUREMENT_SYNDROME)
            continue
        state_fids, state_vars = [], []
        syn = np.zeros(4)
        for state_idx, (_l, _a, _b, sign) in enumerate(XL_STATES):
            parts = _map_chunks(
                _natural_mc_chunk,
                (params, conv.label, variant, t, x_idx, state_idx, seed),
                trials, threads, collect_records)
            total = sum(p[0] for p in parts)
            total_sq = sum(p[1] for p in parts)
            for p in parts:
                syn += p[2]
                records.extend(p[3])
            mean = total / trials
            var = max(total_sq / trials - mean * mean, 0.0)
            state_fids.append(0.5 * (1.0 + sign * mean))
            state_vars.append(var / (4.0 * trials))
        fid.append(float(np.mean(state_fids)))
        err.append(math.sqrt(sum(state_vars)) / 2.0)
        syn_rows.append(tuple(syn / (2 * trials)))

    return SweepResult(x=tuple(xs), fidelity=tuple(fid), stderr=tuple(err),
                       syndrome_probs=tuple(syn_rows), trials=trials,
                       seed=seed,
                       records=tuple(records) if collect_records else None)
