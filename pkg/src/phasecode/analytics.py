"""Closed-form model curves, nonlinear least-squares fitting, input-error
inference, and readout calibration.

Models (selected by ``model_id``):

* ``f_qec``       F(p) = O + A (1 - 3p^2 + 2p^3), one corrected round
* ``f_linear``    F(p) = O + A (1 - p), no correction
* ``weighted``    F(p) = O + A [w qec(p) + (1-w) lin(p)], shared O and A
* ``multi_round_state``
                  F(p) = w/2 [1 + A' Fm^(n-1) (1-6 p_n^2+4 p_n^3)^n]
                       + (1-w)/2 [1 + A' Fm^(n-1) (1-2p)]
                  with p_n the per-round split of p and Fm(p) the effective
                  measurement fidelity of the configured readout assignment
                  (omit f0/f1 for an ideal readout, Fm = 1)
* ``decay``       F(t) = (1 + A exp(-(t/T)^n_exp)) / 2
* ``syndrome_ideal`` / ``syndrome_detected``
                  one of the four syndrome-class probabilities (``category``
                  selects it), before/after readout errors
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measurement import (ALL_CONVENTIONS, AssignmentConvention,
                          effective_measurement_fidelity)
from .noise import DeviceParams, per_round_probability

MODEL_IDS = ("f_qec", "f_linear", "weighted", "multi_round_state", "decay",
             "syndrome_ideal", "syndrome_detected")

#: Documented default starting points for fits, by model.
DEFAULT_INITIAL_GUESSES = {
    "f_qec": {"O": 0.05, "A": 0.7},
    "f_linear": {"O": 0.05, "A": 0.7},
    "weighted": {"w": 0.5, "A": 0.7, "O": 0.05},
    "multi_round_state": {"w": 0.5, "a_prime": 0.7},
    "decay": {"A": 1.0, "T": 10.0, "n_exp": 1.5},
}


@dataclass(frozen=True)
class CurveModel:
    """A named closed-form curve with its parameter vector."""

    model_id: str
    params: dict

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise ValueError(f"unknown model id {self.model_id!r}")

    def require(self, *names: str) -> list:
        missing = [n for n in names if n not in self.params]
        if missing:
            raise ValueError(f"model {self.model_id!r} missing parameters "
                             f"{missing}")
        return [self.params[n] for n in names]


@dataclass(frozen=True)
class FitResult:
    """Least-squares estimate with one-sigma uncertainties."""

    params: dict
    sigma: dict
    residual_sum_of_squares: float
    converged: bool
    iterations: int = 0

    def __post_init__(self):
        if any(s < 0 for s in self.sigma.values()):
            raise ValueError("uncertainties must be non-negative")


def _qec_shape(p: float) -> float:
    return 1.0 - 3.0 * p * p + 2.0 * p ** 3


def _multi_round_shape(p_n: float, n: int) -> float:
    return (1.0 - 6.0 * p_n * p_n + 4.0 * p_n ** 3) ** n


def _model_measurement_fidelity(params: dict, p_e: float) -> float:
    if "f0" not in params and "f1" not in params:
        return 1.0
    conv = AssignmentConvention.from_label(str(params.get("convention", "11")))
    device = DeviceParams.ideal().with_overrides(
        f0_readout=params["f0"], f1_readout=params["f1"])
    return effective_measurement_fidelity(p_e, conv, device)


def evaluate_model(model: CurveModel, x: float) -> float:
    """Evaluate a closed-form model at one point of its domain."""
    mid = model.model_id
    if mid == "f_qec":
        offset, amplitude = model.require("O", "A")
        _check_probability(x)
        return offset + amplitude * _qec_shape(x)
    if mid == "f_linear":
        offset, amplitude = model.require("O", "A")
        _check_probability(x)
        return offset + amplitude * (1.0 - x)
    if mid == "weighted":
        weight, amplitude, offset = model.require("w", "A", "O")
        _check_probability(x)
        mix = weight * _qec_shape(x) + (1.0 - weight) * (1.0 - x)
        return offset + amplitude * mix
    if mid == "multi_round_state":
        weight, a_prime = model.require("w", "a_prime")
        rounds = int(model.params.get("n_rounds", 1))
        p_n = per_round_probability(x, rounds)
        amplitude = a_prime * _model_measurement_fidelity(model.params, x) ** (rounds - 1)
        corrected = 0.5 * (1.0 + amplitude * _multi_round_shape(p_n, rounds))
        linear = 0.5 * (1.0 + amplitude * (1.0 - 2.0 * x))
        return weight * corrected + (1.0 - weight) * linear
    if mid == "decay":
        amplitude, t_decay, n_exp = model.require("A", "T", "n_exp")
        if x < 0:
            raise ValueError(f"decay model needs t >= 0, got {x}")
        return 0.5 * (1.0 + amplitude * math.exp(-((x / t_decay) ** n_exp)))
    if mid == "syndrome_ideal":
        p_in = model.require("p_in1", "p_in2", "p_in3")
        category = int(model.params.get("category", 0))
        return syndrome_probabilities(p_in, x)[category]
    if mid == "syndrome_detected":
        p_in = model.require("p_in1", "p_in2", "p_in3")
        f0, f1 = model.require("f0", "f1")
        conv = AssignmentConvention.from_label(str(model.params.get("convention", "11")))
        category = int(model.params.get("category", 0))
        ideal = syndrome_probabilities(p_in, x)
        return detected_syndrome_probabilities(ideal, conv, f0, f1)[category]
    raise ValueError(f"unknown model id {mid!r}")


def _check_probability(x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"error probability {x} outside [0, 1]")


def syndrome_probabilities(p_in: Sequence[float], p_e: float):
    """Ideal probabilities of the four syndrome classes.

    ``p_in`` are per-qubit errors already present in the prepared state;
    ``p_e`` is the common applied error.  They combine per qubit as
    p_tot = p_in + p_e - 2 p_in p_e.  The no-error class collects zero or
    three flips; the class naming qubit i collects a flip on i alone or on
    both other qubits.  Returns ``(P0, P1, P2, P3)`` summing to one.
    """
    if len(p_in) != 3:
        raise ValueError("need three input-error probabilities")
    for p in (*p_in, p_e):
        _check_probability(p)
    tot = [p + p_e - 2.0 * p * p_e for p in p_in]
    probs = [0.0, 0.0, 0.0, 0.0]
    for pattern in itertools.product((0, 1), repeat=3):
        weight = 1.0
        for flipped, p in zip(pattern, tot):
            weight *= p if flipped else 1.0 - p
        flips = sum(pattern)
        if flips in (0, 3):
            probs[0] += weight
        elif flips == 1:
            probs[pattern.index(1) + 1] += weight
        else:
            probs[pattern.index(0) + 1] += weight
    return tuple(probs)


_CLASS_SYNDROMES = ((1, 1), (-1, 1), (-1, -1), (1, -1))


def detected_syndrome_probabilities(p: Sequence[float],
                                    conv: AssignmentConvention,
                                    f0: float, f1: float):
    """Mix ideal syndrome probabilities through the two readout channels.

    Each stabilizer's report independently flips with probability 1 - F0 or
    1 - F1 according to the ancilla state the convention assigns to the true
    outcome.  Output sums to one.
    """
    if len(p) != 4:
        raise ValueError("need four syndrome-class probabilities")
    if abs(sum(p) - 1.0) > 1e-9:
        raise ValueError(f"input probabilities sum to {sum(p)}, expected 1")
    fid = (f0, f1)
    detected = [0.0, 0.0, 0.0, 0.0]
    for true_class, p_true in enumerate(p):
        s = _CLASS_SYNDROMES[true_class]
        keep = [fid[conv.ancilla_for(j, s[j])] for j in (0, 1)]
        for rep_class, r in enumerate(_CLASS_SYNDROMES):
            weight = p_true
            for j in (0, 1):
                weight *= keep[j] if r[j] == s[j] else 1.0 - keep[j]
            detected[rep_class] += weight
    return tuple(detected)


def symmetrized_detected_probabilities(p: Sequence[float], f0: float, f1: float):
    """Average of `detected_syndrome_probabilities` over all four conventions."""
    stacked = np.array([detected_syndrome_probabilities(p, conv, f0, f1)
                        for conv in ALL_CONVENTIONS])
    return tuple(float(v) for v in stacked.mean(axis=0))


def infer_input_errors(measured: Sequence[float]):
    """Solve the ideal syndrome model for the per-qubit input errors.

    Inverts `syndrome_probabilities` at zero applied error by damped Newton
    iteration seeded with the single-error probabilities themselves (exact
    to first order).  Raises if no solution exists in [0, 0.5]^3 or the
    round trip fails.
    """
    if len(measured) != 4:
        raise ValueError("need four measured probabilities")
    if abs(sum(measured) - 1.0) > 1e-2:
        raise ValueError(f"measured probabilities sum to {sum(measured)}")
    target = np.array(measured[1:], dtype=float)
    p = np.clip(target.copy(), 0.0, 0.49)

    def residual(vec):
        probs = syndrome_probabilities(tuple(vec), 0.0)
        return np.array(probs[1:]) - target

    res = residual(p)
    for _ in range(100):
        if np.max(np.abs(res)) < 1e-13:
            break
        jac = np.zeros((3, 3))
        h = 1e-8
        for j in range(3):
            bumped = p.copy()
            bumped[j] += h
            jac[:, j] = (residual(bumped) - res) / h
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular system while inverting syndrome model") from exc
        scale = 1.0
        for _ in range(30):
            trial = np.clip(p + scale * step, 0.0, 0.5)
            trial_res = residual(trial)
            if np.linalg.norm(trial_res) < np.linalg.norm(res):
                p, res = trial, trial_res
                break
            scale *= 0.5
        else:
            break
    recovered = syndrome_probabilities(tuple(p), 0.0)
    if max(abs(a - b) for a, b in zip(recovered[1:], target)) > 1e-9:
        raise ValueError("no input-error triple in [0, 0.5]^3 reproduces the "
                         "measured probabilities")
    return tuple(float(v) for v in p)


def _model_function(model_id: str, fixed: dict):
    def fun(x: float, params: dict) -> float:
        return evaluate_model(CurveModel(model_id, {**fixed, **params}), x)
    return fun


def fit_curve(model_id: str, x: Sequence[float], y: Sequence[float],
              sigma: Sequence[float] | None = None,
              initial: dict | None = None,
              fixed: dict | None = None,
              max_iterations: int = 200,
              relative_tolerance: float = 1e-10) -> FitResult:
    """Weighted least squares by damped Gauss-Newton.

    ``initial`` names the free parameters and their starting values (falls
    back to `DEFAULT_INITIAL_GUESSES`); ``fixed`` holds parameters held
    constant.  Points are weighted by 1/sigma^2 when ``sigma`` is given and
    equally otherwise.  One-sigma uncertainties come from the inverse
    normal matrix; for unweighted fits it is scaled by the residual
    variance (the data sets the noise scale), while supplied sigmas are
    taken as absolute.  Non-convergence is flagged, not fatal; a singular
    design raises.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if initial is None:
        if model_id not in DEFAULT_INITIAL_GUESSES:
            raise ValueError(f"no default initial guess for {model_id!r}")
        initial = dict(DEFAULT_INITIAL_GUESSES[model_id])
    names = list(initial)
    theta = np.array([float(initial[n]) for n in names])
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValueError("sigma values must be positive")
        weights = 1.0 / sigma
    else:
        weights = np.ones_like(y)
    if len(x) < len(names):
        raise ValueError(f"{len(names)} free parameters need at least as many "
                         f"data rows, got {len(x)}")
    fun = _model_function(model_id, dict(fixed or {}))

    def model_values(vec):
        params = dict(zip(names, vec))
        return np.array([fun(xi, params) for xi in x])

    def objective(vec):
        r = (y - model_values(vec)) * weights
        return r, float(r @ r)

    res, cost = objective(theta)
    lam = 1e-3
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        jac = np.zeros((len(x), len(names)))
        for j in range(len(names)):
            h = 1e-7 * max(1.0, abs(theta[j]))
            bumped = theta.copy()
            bumped[j] += h
            jac[:, j] = (model_values(bumped) - model_values(theta)) / h
        jac = jac * weights[:, None]
        normal = jac.T @ jac
        gradient = jac.T @ res
        stepped = False
        for _ in range(25):
            damped = normal + lam * np.diag(np.maximum(np.diag(normal), 1e-30))
            try:
                step = np.linalg.solve(damped, gradient)
            except np.linalg.LinAlgError as exc:
                raise ValueError("singular design matrix in fit") from exc
            trial = theta + step
            trial_res, trial_cost = objective(trial)
            if trial_cost <= cost:
                improvement = (cost - trial_cost) / max(cost, 1e-300)
                theta, res, cost = trial, trial_res, trial_cost
                lam = max(lam * 0.3, 1e-12)
                stepped = True
                if improvement < relative_tolerance:
                    converged = True
                break
            lam *= 3.0
        if not stepped:
            converged = cost < 1e-20 or np.linalg.norm(gradient) < 1e-12
            break
        if converged:
            break

    jac = np.zeros((len(x), len(names)))
    for j in range(len(names)):
        h = 1e-7 * max(1.0, abs(theta[j]))
        bumped = theta.copy()
        bumped[j] += h
        jac[:, j] = (model_values(bumped) - model_values(theta)) / h
    jac = jac * weights[:, None]
    normal = jac.T @ jac
    if sigma is None:
        dof = max(len(x) - len(names), 1)
        scale = cost / dof
    else:
        scale = 1.0
    try:
        cov = np.linalg.inv(normal) * scale
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular design matrix in fit") from exc
    return FitResult(params=dict(zip(names, map(float, theta))),
                     sigma=dict(zip(names, map(float, sig))),
                     residual_sum_of_squares=cost,
                     converged=converged,
                     iterations=iterations)


def calibrate_readout(single_qubit_z: Sequence[float], multi_qubit_z: dict,
                      f_n: float) -> dict:
    """Readout-correction factors from calibration expectation values.

    ``single_qubit_z`` holds <Z_i> of each qubit prepared and read out
    immediately; because initialization and readout use the same gates,
    <Z_i> = F_N C_i^2 with F_N the auxiliary-spin initialization fidelity,
    so C_i = sqrt(<Z_i>/F_N) and the initialization factor equals C_i.
    ``multi_qubit_z`` maps tuples of 1-based qubit indices to the measured
    joint <Z...Z>; each multi-qubit factor is the joint value divided by
    F_N and the participating initialization factors.
    """
    if not 0.0 < f_n <= 1.0:
        raise ValueError(f"f_n={f_n} outside (0, 1]")
    if len(single_qubit_z) != 3:
        raise ValueError("need three single-qubit <Z> values")
    factors: dict = {}
    c_init = {}
    for i, z in enumerate(single_qubit_z, start=1):
        if not 0.0 < z <= 1.0:
            raise ValueError(f"<Z{i}>={z} outside (0, 1]")
        c = math.sqrt(z / f_n)
        _check_factor(f"C_Q{i}", c)
        factors[f"C_Q{i}"] = c
        c_init[i] = z / (f_n * c)
        factors[f"C_init_Q{i}"] = c_init[i]
    for qubits, z in multi_qubit_z.items():
        qubits = tuple(qubits)
        if not 0.0 < z <= 1.0:
            raise ValueError(f"<Z{qubits}>={z} outside (0, 1]")
        denom = f_n
        for q in qubits:
            denom *= c_init[q]
        name = "C_Q" + "Q".join(str(q) for q in qubits)
        value = z / denom
        _check_factor(name, value)
        factors[name] = value
    return factors


def _check_factor(name: str, value: float) -> None:
    if not 0.0 < value <= 1.2:
        raise ValueError(f"calibration factor {name}={value} outside (0, 1.2]")
