"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The statistical tests
use fixed seeds and are fully deterministic.
"""

import math
import time

import numpy as np
import pytest

from phasecode.analytics import (CurveModel, calibrate_readout,
                                 detected_syndrome_probabilities,
                                 evaluate_model, fit_curve,
                                 syndrome_probabilities)
from phasecode.experiments import (run_multi_round_qec, run_natural_dephasing,
                                   run_single_round_qec)
from phasecode.measurement import AssignmentConvention
from phasecode.noise import DeviceParams, STORAGE_RUN_P_IN, per_round_probability

CONV11 = AssignmentConvention.from_label("11")


def _report(number, message):
    print(f"\nACCEPTANCE criterion {number}: PASS - {message}")


def test_criterion_01_single_round_exact_curves():
    """Ideal-device single-round sweep equals the closed forms to 1e-10."""
    start = time.perf_counter()
    params = DeviceParams.ideal()
    grid = np.linspace(0.0, 0.5, 11)
    qec = run_single_round_qec(grid, 0, params, convention="11",
                               variant="qec", mode="exact")
    expected = 1 - 3 * grid**2 + 2 * grid**3
    worst_qec = np.max(np.abs(np.array(qec.fidelity) - expected))
    unencoded = run_single_round_qec(grid, 0, params, variant="unencoded",
                                     mode="exact")
    worst_lin = np.max(np.abs(np.array(unencoded.fidelity) - (1 - grid)))
    elapsed = time.perf_counter() - start
    assert worst_qec < 1e-10
    assert worst_lin < 1e-10
    assert elapsed < 5.0
    _report(1, f"max deviations {worst_qec:.2e} (qec), {worst_lin:.2e} "
               f"(unencoded) in {elapsed:.2f} s")


def test_criterion_02_multi_round_exact_curves():
    """n-round state fidelity equals (1 + (1-6p_n^2+4p_n^3)^n)/2 to 1e-10."""
    start = time.perf_counter()
    params = DeviceParams.ideal()
    grid = np.linspace(0.0, 0.5, 11)
    worst = 0.0
    for n in (1, 2, 3):
        res = run_multi_round_qec(n, grid, 0, params, mode="exact")
        p_n = np.array([per_round_probability(p, n) for p in grid])
        expected = 0.5 * (1 + (1 - 6 * p_n**2 + 4 * p_n**3) ** n)
        worst = max(worst, np.max(np.abs(np.array(res.fidelity) - expected)))
    elapsed = time.perf_counter() - start
    assert worst < 1e-10
    assert elapsed < 30.0
    _report(2, f"max deviation {worst:.2e} over n in (1,2,3) in {elapsed:.2f} s")


def test_criterion_03_syndrome_model():
    """Closed-form syndrome probabilities match the reference value and the
    exact simulation.

    The detected-probability formula assumes each measurement starts from a
    clean ancilla reference, so the congruence run disables the one modelled
    channel that violates that (non-demolition failures,
    post_measurement_fidelity = 1); everything else is at reference values.
    """
    p_in = (0.064, 0.091, 0.077)
    p0 = syndrome_probabilities(p_in, 0.0)[0]
    assert abs(p0 - 0.7858) <= 0.002

    params = DeviceParams.reference().with_overrides(
        p_in=p_in, post_measurement_fidelity=1.0)
    grid = np.linspace(0.0, 1.0, 11)
    res = run_single_round_qec(grid, 0, params, convention="11",
                               variant="qec", mode="exact")
    worst = 0.0
    for i, p_e in enumerate(grid):
        expected = detected_syndrome_probabilities(
            syndrome_probabilities(p_in, p_e), CONV11,
            params.f0_readout, params.f1_readout)
        worst = max(worst, max(abs(a - b) for a, b in
                               zip(expected, res.syndrome_probs[i])))
    assert worst < 1e-10
    _report(3, f"P0(0) = {p0:.4f}; formula vs simulation max deviation "
               f"{worst:.2e}")


def test_criterion_04_monte_carlo_vs_exact():
    """1e5-trial Monte Carlo agrees with exact enumeration within three
    standard errors on fidelity and all four syndrome probabilities."""
    params = DeviceParams.reference()
    trials = 100_000
    for p_e in (0.0, 0.2, 0.4):
        exact = run_single_round_qec([p_e], 0, params, convention="11",
                                     variant="qec", mode="exact")
        mc = run_single_round_qec([p_e], trials, params, convention="11",
                                  variant="qec", mode="monte_carlo", seed=404)
        fid_se = max(mc.stderr[0], 1e-9)
        assert abs(mc.fidelity[0] - exact.fidelity[0]) < 3 * fid_se, p_e
        n_syn = 6 * trials
        for a, b in zip(mc.syndrome_probs[0], exact.syndrome_probs[0]):
            se = math.sqrt(b * (1 - b) / n_syn)
            assert abs(a - b) < 3 * se, (p_e, a, b)
    _report(4, "fidelity and syndrome probabilities within 3 standard errors "
               "at p_e in (0, 0.2, 0.4)")


def test_criterion_05_correction_completeness():
    """All 18 single-Z-error cases are corrected exactly; without feedback
    the X/Y logical expectations are not restored."""
    from phasecode.code import LogicalFrame, encode, logical_observables
    from phasecode.experiments import SIX_BASIS_STATES, _round_exact
    from phasecode.qstate import DensityOperator, apply_unitary

    params = DeviceParams.ideal()
    z_mat = np.diag([1.0, -1.0]).astype(complex)

    def run_round(alpha, beta, error_qubit, correct):
        state = DensityOperator.basis_state(1, 0).tensor(encode(alpha, beta))
        if error_qubit is not None:
            state = apply_unitary(state, z_mat, [error_qubit])
        branches = _round_exact(1.0, state, LogicalFrame.identity(), CONV11,
                                params, correct)
        assert len(branches) == 1
        _w, post, frame, _rec = branches[0]
        return np.array(logical_observables(post.partial_trace((1, 2, 3)),
                                            frame))

    corrected_cases = 0
    for _label, alpha, beta, axis, sign in SIX_BASIS_STATES:
        reference = run_round(alpha, beta, None, True)
        for qubit in (1, 2, 3):
            observed = run_round(alpha, beta, qubit, True)
            assert np.max(np.abs(observed - reference)) < 1e-12
            corrected_cases += 1
    assert corrected_cases == 18

    uncorrected = 0
    axis_index = {"X": 0, "Y": 1}
    for _label, alpha, beta, axis, sign in SIX_BASIS_STATES:
        if axis not in axis_index:
            continue
        for qubit in (1, 2, 3):
            observed = run_round(alpha, beta, qubit, False)
            if abs(observed[axis_index[axis]] - sign) > 1e-6:
                uncorrected += 1
    assert uncorrected > 0
    _report(5, f"18/18 error cases corrected to 1e-12; {uncorrected} X/Y "
               f"readouts left uncorrected without feedback")


def test_criterion_06_quasistatic_dephasing_oracle():
    """Simulated unencoded storage at T2* = 18.2 ms fits the decay model
    with T = 18.2 +/- 0.3 ms and stretch exponent 2.0 +/- 0.1."""
    start = time.perf_counter()
    params = DeviceParams.ideal().with_overrides(t2_star=(12.0, 9.1, 18.2))
    times = np.linspace(1.0, 36.0, 13)
    res = run_natural_dephasing(times, 100_000, params,
                                variant="unencoded_best", seed=606)
    fit = fit_curve("decay", times, res.fidelity, sigma=res.stderr,
                    initial={"A": 1.0, "T": 10.0, "n_exp": 1.5})
    elapsed = time.perf_counter() - start
    assert fit.converged
    assert abs(fit.params["T"] - 18.2) <= 0.3
    assert abs(fit.params["n_exp"] - 2.0) <= 0.1
    assert elapsed < 60.0
    _report(6, f"T = {fit.params['T']:.2f} ms, n = {fit.params['n_exp']:.3f} "
               f"in {elapsed:.1f} s")


def test_criterion_07_fit_recovery():
    """Synthetic weighted-model data recovers (w, A, O) within 3 reported
    sigmas in at least 95 of 100 repetitions."""
    rng = np.random.default_rng(707)
    truth = {"w": 0.81, "A": 0.557, "O": 0.086}
    grid = np.linspace(0.0, 1.0, 21)
    base = np.array([evaluate_model(CurveModel("weighted", truth), x)
                     for x in grid])
    successes = 0
    for _ in range(100):
        y = base + rng.normal(0.0, 0.01, len(grid))
        fit = fit_curve("weighted", grid, y, sigma=[0.01] * len(grid),
                        initial={"w": 0.5, "A": 0.7, "O": 0.05})
        if all(abs(fit.params[k] - v) <= 3 * fit.sigma[k]
               for k, v in truth.items()):
            successes += 1
    assert successes >= 95
    _report(7, f"{successes}/100 repetitions recovered all parameters "
               f"within 3 sigma")


def test_criterion_08_multi_round_advantage_model_level():
    """Fitted model curves show three rounds beating one round at high error
    rates and losing at low rates."""
    f0, f1 = 0.890, 0.988
    # Fit parameters: (w, A') = (0.71, 0.810) for three rounds as reported;
    # the one-round weight 0.56 is the reported uncalibrated fit (stated to
    # match the calibrated shape) and A' = 0.850 takes the two-round value,
    # the nearest reported amplitude.
    one = CurveModel("multi_round_state",
                     {"w": 0.56, "a_prime": 0.850, "n_rounds": 1})
    three = CurveModel("multi_round_state",
                       {"w": 0.71, "a_prime": 0.810, "n_rounds": 3,
                        "f0": f0, "f1": f1, "convention": "11"})
    high = np.linspace(0.35, 0.4999, 60)
    for p in high:
        assert evaluate_model(three, p) > evaluate_model(one, p), p
    low = np.linspace(0.0, 0.1, 60)
    for p in low:
        assert evaluate_model(one, p) > evaluate_model(three, p), p
    _report(8, "n=3 beats n=1 on [0.35, 0.5); n=1 beats n=3 on [0, 0.1]")


def test_criterion_09_natural_dephasing_storage():
    """Storage under natural dephasing: the corrected logical qubit beats
    majority-vote-only storage over a contiguous intermediate window, falls
    below it at long times, and stays above 1/2 at the longest times."""
    start = time.perf_counter()
    params = DeviceParams.reference().with_overrides(p_in=STORAGE_RUN_P_IN)
    times = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 17.0, 20.0, 24.0, 28.0,
             32.0, 40.0]
    trials = 10_000
    qec = run_natural_dephasing(times, trials, params, variant="qec",
                                seed=909)
    majority = run_natural_dephasing(times, trials, params,
                                     variant="encoded_majority_only",
                                     seed=909)
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0

    qec_f = np.array(qec.fidelity)
    maj_f = np.array(majority.fidelity)
    margin = 3 * np.hypot(np.array(qec.stderr), np.array(majority.stderr))

    above = qec_f > maj_f + margin
    runs = np.split(np.arange(len(times)), np.where(np.diff(above))[0] + 1)
    window_lengths = [len(r) for r in runs if above[r[0]]]
    assert window_lengths and max(window_lengths) >= 2, \
        "no contiguous window where correction beats majority-only storage"

    assert qec_f[-1] > 0.5 + 3 * qec.stderr[-1], \
        "long-time corrected fidelity not above 1/2"

    last_window_end = max(r[-1] for r in runs if above[r[0]])
    tail = np.arange(last_window_end + 1, len(times))
    falls_below = tail.size > 0 and bool(
        np.any(qec_f[tail] + margin[tail] < maj_f[tail]))
    assert falls_below, (
        "corrected storage never falls below majority-only at long times "
        f"(its advantage window extends through t = {times[last_window_end]} "
        f"ms of a {times[-1]} ms grid): qec = {qec_f.round(4).tolist()} vs "
        f"majority-only = {maj_f.round(4).tolist()}.  The mid-time stabilizer "
        "projection keeps the corrected curve strictly above the "
        "majority-only curve, which decays to 1/2, so this ordering cannot "
        "occur in the modelled device; the long-time statement that does "
        "hold (corrections detrimental relative to detection-only, fidelity "
        "above 1/2) is covered by "
        "test_experiments.py::TestNaturalDephasing::"
        "test_corrections_detrimental_at_long_times")
    _report(9, f"window through t={times[last_window_end]} ms, long-time "
               f"fidelity {qec_f[-1]:.3f} in {elapsed:.0f} s")


def test_criterion_10_readout_calibration_round_trip():
    """Calibration factors invert exactly; the reference single-qubit case
    is self-consistent under forward evaluation."""
    rng = np.random.default_rng(1010)
    worst = 0.0
    for _ in range(100):
        f_n = rng.uniform(0.85, 1.0)
        c = rng.uniform(0.8, 1.0, size=3)
        pair = rng.uniform(0.8, 1.0)
        triple = rng.uniform(0.8, 1.0)
        single = tuple(f_n * ci**2 for ci in c)
        multi = {(1, 2): f_n * c[0] * c[1] * pair,
                 (2, 3): f_n * c[1] * c[2] * rng.uniform(0.8, 1.0),
                 (1, 2, 3): f_n * c[0] * c[1] * c[2] * triple}
        factors = calibrate_readout(single, multi, f_n)
        worst = max(worst,
                    abs(factors["C_Q1"] - c[0]), abs(factors["C_Q2"] - c[1]),
                    abs(factors["C_Q3"] - c[2]), abs(factors["C_Q1Q2"] - pair),
                    abs(factors["C_Q1Q2Q3"] - triple))
    assert worst < 1e-10

    forward = 0.94 * 0.95**2
    factors = calibrate_readout((forward, forward, forward), {}, 0.94)
    assert abs(factors["C_Q1"] - 0.95) < 1e-12
    _report(10, f"round-trip max deviation {worst:.2e}; C_Q1 = 0.95 at "
                f"F_N = 0.94 self-consistent")


def test_criterion_11_figure_rendering(tmp_path):
    """[secondary] The plotting package renders fig3b, fig4b and fig4d from
    sweep outputs, one labelled series per input CSV, byte-identically on
    repeated invocation."""
    import json
    import subprocess

    pytest.importorskip("phasecode_plots")
    from phasecode.cli import main as phasecode_main

    def run_cli(args):
        assert phasecode_main(args) == 0

    # Criterion-1 style outputs: exact single-round sweeps.
    ideal = ("f0_readout=1,f1_readout=1,post_measurement_fidelity=1,"
             "p_in=0;0;0,prep_code_fidelity=1")
    fig3b_inputs = []
    for variant in ("qec", "no_feedback", "encoded_idle", "unencoded"):
        out = tmp_path / f"sr_{variant}.csv"
        run_cli(["run", "--experiment", "single_round_qec", "--variant",
                 variant, "--pe", "0:1:11", "--mode", "exact",
                 "--convention", "11", "--output", str(out)])
        fig3b_inputs.append((str(out), variant))
    # Criterion-2 style outputs: exact multi-round sweeps.
    fig4b_inputs = []
    for n in (1, 2, 3):
        out = tmp_path / f"mr_{n}.csv"
        run_cli(["run", "--experiment", "multi_round_qec", "--rounds", str(n),
                 "--pe", "0:0.5:11", "--mode", "exact",
                 "--device", ideal, "--output", str(out)])
        fig4b_inputs.append((str(out), f"{n} rounds"))
    # Criterion-9 style outputs: storage sweeps (reduced trials; the figure
    # only needs the schema and a few points).
    fig4d_inputs = []
    for variant in ("qec", "encoded_majority_only"):
        out = tmp_path / f"nat_{variant}.csv"
        run_cli(["run", "--experiment", "natural_dephasing", "--variant",
                 variant, "--times", "2:32:6", "--trials", "400",
                 "--seed", "7", "--mode", "monte_carlo",
                 "--output", str(out)])
        fig4d_inputs.append((str(out), variant))

    specs = {
        "fig3b": fig3b_inputs,
        "fig4b": fig4b_inputs,
        "fig4d": fig4d_inputs,
    }
    images = {}
    for figure, inputs in specs.items():
        series = [{"path": path, "label": label} for path, label in inputs]
        series[0]["role"] = "qec"
        spec_path = tmp_path / f"{figure}.json"
        spec_path.write_text(json.dumps({
            "figure": figure, "series": series,
            "output": str(tmp_path / figure)}))
        proc = subprocess.run(["phasecode-plots", str(spec_path)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        svg = (tmp_path / f"{figure}.svg").read_text()
        for _path, label in inputs:
            assert label in svg, (figure, label)
        images[figure] = {ext: (tmp_path / f"{figure}.{ext}").read_bytes()
                          for ext in ("png", "svg")}
        proc = subprocess.run(["phasecode-plots", str(spec_path)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        for ext, blob in images[figure].items():
            assert (tmp_path / f"{figure}.{ext}").read_bytes() == blob, \
                (figure, ext)
    _report(11, "fig3b, fig4b, fig4d rendered with labelled series, "
                "byte-identical on re-render")
