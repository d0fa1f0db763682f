"""Command-line entry point: experiment dispatch, deterministic seeding,
CSV/JSON emission, analytic curve generation, and curve fitting.

Three subcommands:

* ``run``      execute an experiment sweep; writes a CSV of per-grid-point
               results plus a JSON metadata sidecar holding the fully
               resolved configuration (re-running from the sidecar alone
               reproduces the output byte for byte).
* ``curves``   tabulate a closed-form model over a grid (CSV columns x,y).
* ``analyze``  fit a model to a results CSV; writes a JSON fit report.

Sweep CSVs use the fixed header
``x,fidelity,stderr,p_syn0,p_syn1,p_syn2,p_syn3,trials``; curve CSVs use
``x,y``.  The entanglement experiment is not a sweep and uses
``branch,fidelity,probability,trials``.  Numbers are serialized with 17
significant digits so outputs round-trip exactly.

Exit codes: 0 success (including flagged non-converged fits), 2 invalid
configuration (the message names the offending field), 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

from . import __version__
from .analytics import CurveModel, evaluate_model, fit_curve
from .experiments import (BellResult, RunMode, SweepResult, run_bell,
                          run_multi_round_qec, run_natural_dephasing,
                          run_single_round_qec)
from .noise import DeviceParams

OUTPUT_DIR_ENV = "PHASECODE_OUTPUT_DIR"

SWEEP_HEADER = "x,fidelity,stderr,p_syn0,p_syn1,p_syn2,p_syn3,trials"
CURVE_HEADER = "x,y"
BELL_HEADER = "branch,fidelity,probability,trials"

EXPERIMENTS = ("single_round_qec", "multi_round_qec", "natural_dephasing",
               "bell")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field name."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"{fieldname}: {message}")
        self.fieldname = fieldname


@dataclass
class RunConfig:
    """Fully resolved configuration of one ``run`` invocation."""

    experiment: str
    variant: str | None = None
    grid: str = "0:0.5:11"
    trials: int = 10000
    seed: int = 0
    mode: str = "monte_carlo"
    convention: str = "11"
    rounds: int = 1
    pair: tuple[int, int] = (2, 3)
    device: dict = field(default_factory=dict)
    threads: int = 1
    output: str = "sweep.csv"
    trace: str | None = None

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment",
                              f"must be one of {EXPERIMENTS}, got {self.experiment!r}")
        try:
            values = parse_grid(self.grid)
        except ValueError as exc:
            raise ConfigError("grid", str(exc)) from None
        if any(b < a for a, b in zip(values, values[1:])):
            raise ConfigError("grid", "grid must be monotone non-decreasing")
        if self.trials < 1:
            raise ConfigError("trials", f"must be >= 1, got {self.trials}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed", "must be a 64-bit non-negative integer")
        try:
            RunMode.parse(self.mode)
        except ValueError as exc:
            raise ConfigError("mode", str(exc)) from None
        if self.convention not in ("00", "01", "10", "11", "symmetrized"):
            raise ConfigError("convention",
                              f"unknown assignment {self.convention!r}")
        if self.rounds not in (1, 2, 3):
            raise ConfigError("rounds", f"must be 1..3, got {self.rounds}")
        if self.threads < 1:
            raise ConfigError("threads", f"must be >= 1, got {self.threads}")
        try:
            self.resolved_device()
        except ValueError as exc:
            raise ConfigError("device", str(exc)) from None

    def resolved_device(self) -> DeviceParams:
        return DeviceParams.reference().with_overrides(**self.device)

    def grid_values(self) -> list[float]:
        return parse_grid(self.grid)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["pair"] = list(self.pair)
        data["device_resolved"] = self.resolved_device().to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        data.pop("device_resolved", None)
        if "pair" in data and data["pair"] is not None:
            data["pair"] = tuple(data["pair"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        return cls(**data)


def parse_grid(spec: str) -> list[float]:
    """Parse ``start:stop:count`` (inclusive endpoints) into grid values."""
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise ValueError(f"grid spec must be start:stop:count, got {spec!r}")
    start, stop = float(parts[0]), float(parts[1])
    count = int(parts[2])
    if count < 1:
        raise ValueError(f"grid needs at least one point, got {count}")
    if count == 1:
        return [start]
    return [start + (stop - start) * i / (count - 1) for i in range(count)]


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def _out_path(path: str) -> str:
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def write_sweep_csv(path: str, result: SweepResult) -> None:
    lines = [SWEEP_HEADER]
    for i, x in enumerate(result.x):
        probs = result.syndrome_probs[i]
        lines.append(",".join([
            fmt(x), fmt(result.fidelity[i]), fmt(result.stderr[i]),
            fmt(probs[0]), fmt(probs[1]), fmt(probs[2]), fmt(probs[3]),
            str(result.trials)]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_bell_csv(path: str, result: BellResult) -> None:
    lines = [BELL_HEADER,
             ",".join(["overall", fmt(result.fidelity), fmt(1.0),
                       str(result.trials)])]
    for branch in (1, -1):
        lines.append(",".join([
            f"{branch:+d}", fmt(result.branch_fidelity[branch]),
            fmt(result.branch_probability[branch]), str(result.trials)]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trace_csv(path: str, result: SweepResult) -> None:
    lines = ["trial,round,s1,s2,reported1,reported2,"
             "z_correction,logical_flip,ancilla_reset"]
    for record in result.records or ():
        for rnd, (syn, rep, upd) in enumerate(zip(
                record.syndromes, record.reported, record.updates)):
            lines.append(",".join([
                str(record.trial_index), str(rnd), f"{syn.s1:+d}", f"{syn.s2:+d}",
                str(rep[0]), str(rep[1]),
                "0" if upd.z_correction is None else str(upd.z_correction),
                str(int(upd.logical_flip)), str(int(upd.ancilla_reset))]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _sidecar_path(output: str) -> str:
    root, _ext = os.path.splitext(output)
    return root + ".meta.json"


def write_sidecar(path: str, config: RunConfig, outputs: dict) -> None:
    payload = {"version": __version__, "command": "run",
               "config": config.to_dict(), "outputs": outputs}
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dispatch_run(config: RunConfig):
    params = config.resolved_device()
    grid = config.grid_values()
    mode = RunMode.parse(config.mode)
    collect = config.trace is not None
    if config.experiment == "single_round_qec":
        return run_single_round_qec(
            grid, config.trials, params, convention=config.convention,
            variant=config.variant or "qec", mode=mode, seed=config.seed,
            threads=config.threads, collect_records=collect)
    if config.experiment == "multi_round_qec":
        return run_multi_round_qec(
            config.rounds, grid, config.trials, params, mode=mode,
            convention=config.convention, seed=config.seed,
            threads=config.threads, collect_records=collect)
    if config.experiment == "natural_dephasing":
        return run_natural_dephasing(
            grid, config.trials, params, variant=config.variant or "qec",
            convention=config.convention, mode=mode, seed=config.seed,
            threads=config.threads, collect_records=collect)
    return run_bell(config.pair, config.trials, params, mode=mode,
                    convention=config.convention, seed=config.seed)


def _parse_kv(spec: str) -> dict:
    out = {}
    if not spec:
        return out
    for item in spec.split(","):
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce_params(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if key in ("convention",):
            out[key] = value
        elif key in ("n_rounds", "category"):
            out[key] = int(value)
        else:
            out[key] = float(value)
    return out


def _coerce_device(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if isinstance(value, str) and ";" in value:
            out[key] = tuple(float(v) for v in value.split(";"))
        elif key in ("t2_star", "t1_qubit", "p_in") and isinstance(value, str):
            out[key] = (float(value),) * 3
        elif isinstance(value, str):
            out[key] = float(value)
        else:
            out[key] = value
    return out


def cmd_run(args) -> int:
    config_data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 3
        config_data = loaded.get("config", loaded)  # accept a sidecar too
    overrides = {}
    for name in ("experiment", "variant", "trials", "seed", "mode",
                 "convention", "rounds", "threads", "output", "trace"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.pe is not None and args.times is not None:
        print("error: grid: give either --pe or --times, not both",
              file=sys.stderr)
        return 2
    if args.pe is not None:
        overrides["grid"] = args.pe
    if args.times is not None:
        overrides["grid"] = args.times
    if args.device:
        try:
            device = _coerce_device(_parse_kv(args.device))
        except ValueError as exc:
            print(f"error: device: {exc}", file=sys.stderr)
            return 2
        merged = dict(config_data.get("device", {}))
        merged.update(device)
        overrides["device"] = merged
    if args.pair:
        overrides["pair"] = tuple(int(q) for q in args.pair.split(","))

    try:
        config = RunConfig.from_dict({**config_data, **overrides})
        config.validate()
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        result = _dispatch_run(config)
    except ValueError as exc:
        # Domain checks that depend on the experiment (grid range, variants).
        print(f"error: grid/variant: {exc}", file=sys.stderr)
        return 2
    out = _out_path(config.output)
    try:
        if isinstance(result, BellResult):
            write_bell_csv(out, result)
        else:
            write_sweep_csv(out, result)
            if config.trace:
                write_trace_csv(_out_path(config.trace), result)
        write_sidecar(_sidecar_path(out), config, {"csv": out})
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


def cmd_curves(args) -> int:
    try:
        params = _coerce_params(_parse_kv(args.params))
        model = CurveModel(args.model, params)
        grid = parse_grid(args.grid)
        rows = [(x, evaluate_model(model, x)) for x in grid]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = _out_path(args.output)
    try:
        with open(out, "w", newline="") as fh:
            fh.write(CURVE_HEADER + "\n")
            for x, y in rows:
                fh.write(f"{fmt(x)},{fmt(y)}\n")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


def _read_xy_csv(path: str):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if "x" not in header:
        raise ValueError(f"CSV {path} has no x column")
    xi = header.index("x")
    yi = header.index("fidelity") if "fidelity" in header else header.index("y")
    x = [float(r[xi]) for r in rows]
    y = [float(r[yi]) for r in rows]
    sigma = None
    if "stderr" in header:
        s = [float(r[header.index("stderr")]) for r in rows]
        if all(v > 0 for v in s):
            sigma = s
    return x, y, sigma


def cmd_analyze(args) -> int:
    try:
        x, y, sigma = _read_xy_csv(args.input)
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: cannot read input CSV: {exc}", file=sys.stderr)
        return 2
    try:
        initial = _coerce_params(_parse_kv(args.initial)) if args.initial else None
        fixed = _coerce_params(_parse_kv(args.fixed)) if args.fixed else None
        result = fit_curve(args.model, x, y, sigma=sigma, initial=initial,
                           fixed=fixed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    payload = {
        "model": args.model,
        "params": result.params,
        "sigma": result.sigma,
        "residual_sum_of_squares": result.residual_sum_of_squares,
        "converged": result.converged,
        "iterations": result.iterations,
    }
    if "w" in result.params:
        # Derived quantity only (never fitted): the mean probability of
        # successfully correcting a single-qubit error, (w + 2) / 3.
        payload["mean_correction_probability"] = {
            "value": (result.params["w"] + 2.0) / 3.0,
            "sigma": result.sigma["w"] / 3.0,
        }
    out = _out_path(args.output)
    try:
        with open(out, "w", newline="") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 3
    for name, value in result.params.items():
        print(f"{name} = {value:.6g} +/- {result.sigma[name]:.3g}")
    if "w" in result.params:
        derived = payload["mean_correction_probability"]
        print(f"mean single-error correction probability = "
              f"{derived['value']:.4g} +/- {derived['sigma']:.2g}")
    if not result.converged:
        print("warning: fit did not converge; parameters are unreliable")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasecode",
        description="Simulate and analyse repeated error correction on a "
                    "three-qubit phase-flip code.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment sweep")
    run_p.add_argument("--config", help="JSON config file or a run sidecar")
    run_p.add_argument("--experiment", choices=EXPERIMENTS)
    run_p.add_argument("--variant")
    run_p.add_argument("--pe", help="error-probability grid start:stop:count")
    run_p.add_argument("--times", help="storage-time grid start:stop:count (ms)")
    run_p.add_argument("--trials", type=int)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--mode", choices=("exact", "exact_enumeration",
                                          "monte_carlo"))
    run_p.add_argument("--convention",
                       choices=("00", "01", "10", "11", "symmetrized"))
    run_p.add_argument("--rounds", type=int)
    run_p.add_argument("--pair", help="data qubit pair, e.g. 2,3")
    run_p.add_argument("--device",
                       help="device overrides, e.g. f0_readout=1,p_in=0;0;0")
    run_p.add_argument("--threads", type=int)
    run_p.add_argument("--output")
    run_p.add_argument("--trace", help="write per-trial controller trace CSV")
    run_p.set_defaults(func=cmd_run)

    curves_p = sub.add_parser("curves", help="tabulate an analytic model")
    curves_p.add_argument("--model", required=True)
    curves_p.add_argument("--params", default="",
                          help="model parameters, e.g. O=0.086,A=0.557")
    curves_p.add_argument("--grid", required=True)
    curves_p.add_argument("--output", required=True)
    curves_p.set_defaults(func=cmd_curves)

    analyze_p = sub.add_parser("analyze", help="fit a model to a results CSV")
    analyze_p.add_argument("--model", required=True)
    analyze_p.add_argument("--input", required=True)
    analyze_p.add_argument("--initial", default="")
    analyze_p.add_argument("--fixed", default="")
    analyze_p.add_argument("--output", required=True)
    analyze_p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
