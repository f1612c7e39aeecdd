"""Command-line front end: ``mrqm {tf,optimize,simulate,sweep,verify,budget}``.

Exit codes: 0 success, 1 verification failure, 2 bad input document or
argument, 3 file I/O error, 4 optimization failed, 5 time-step or window
problem in a simulation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    InvalidArgumentError,
    OptimizationFailedError,
    StepSizeError,
    WindowTooShortError,
)
from .io import SchemaError, config_from_doc, fmt, load_json, save_config, write_json, write_spectrum_csv
from .model import (
    PLATEAU_HALF_WIDTH,
    DeviceConfig,
    absorption_coefficients,
    default_grid,
    efficiency,
    eval_F,
    loss_budget,
    plateau_bandwidth,
    plateau_min_eta,
    spectrum,
)
from .optimizer import OptimizationProblem, optimize
from .timesim import DEFAULT_KAPPA, PulseSpec, compare_fd_td, run

log = logging.getLogger("mrqm")

EXIT_OK, EXIT_VERIFY, EXIT_SCHEMA, EXIT_IO, EXIT_OPT, EXIT_SIM = 0, 1, 2, 3, 4, 5
SWEEP_PARAMS = ("gamma", "gamma_r_tilde", "gamma_mini", "kappa", "threshold")
FIXTURES = ("paper_n4.json", "paper_n4_sim.json", "problem_n4.json", "problem_n2.json")


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    subcommand: str
    inputs: list
    out_dir: str
    seed: int
    version: str = __version__
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    outputs: list = field(default_factory=list)

    def write(self, out: Path) -> Path:
        missing = [p for p in self.outputs if not (out / p).exists()]
        if missing:
            raise CLIError(f"declared outputs missing: {missing}", EXIT_IO)
        return write_json(out / "manifest.json", asdict(self))


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("mrqm") / "fixtures" / name))


def resolve_input(path: str) -> Path:
    """Existing file path, or the name of a bundled fixture (with or without ``.json``)."""
    p = Path(path)
    if p.exists():
        return p
    name = path if path.endswith(".json") else path + ".json"
    if name in FIXTURES:
        return fixture_path(name)
    raise CLIError(f"cannot read {path}: no such file", EXIT_IO)


def read_doc(path: str) -> dict:
    try:
        return load_json(resolve_input(path))
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: invalid JSON ({exc})", EXIT_SCHEMA) from None
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}", EXIT_IO) from None


def read_config(path: str) -> tuple[DeviceConfig, dict]:
    doc = read_doc(path)
    try:
        return config_from_doc(doc), doc
    except SchemaError as exc:
        raise CLIError(f"{path}: {exc}", EXIT_SCHEMA) from None


def parse_grid(spec: str | None, delta_unit: float) -> np.ndarray:
    if not spec:
        return default_grid(delta_unit)
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise CLIError(f"--grid expects lo:hi:step, got {spec!r}", EXIT_SCHEMA) from None
    if step <= 0 or hi <= lo:
        raise CLIError("--grid needs lo < hi and step > 0", EXIT_SCHEMA)
    return default_grid(delta_unit, lo, hi, step)


def out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("MRQM_OUT") or "mrqm_out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create output directory {out}: {exc}", EXIT_IO) from None
    return out


def _interval(iv):
    return None if iv is None else [iv[0], iv[1]]


def tf_summary(config: DeviceConfig, grid) -> tuple:
    spec = spectrum(config, grid)
    curve = efficiency(spec)
    hw = PLATEAU_HALF_WIDTH * config.delta_unit
    summary = {
        "config_hash": config.config_hash(),
        "grid": [float(grid[0]), float(grid[-1]), len(grid)],
        "plateau_window": [-hw, hw],
        "min_eta_plateau": curve.min_over(-hw, hw),
        "max_eta_plateau": float(curve.eta[(curve.grid >= -hw - 1e-12) & (curve.grid <= hw + 1e-12)].max()),
        "plateau_0.999": _interval(plateau_bandwidth(curve, 0.999)),
        "plateau_0.9999": _interval(plateau_bandwidth(curve, 0.9999)),
    }
    return spec, curve, summary


# ---------------------------------------------------------------- subcommands

def cmd_tf(args) -> int:
    if not args.config:
        raise CLIError("tf needs --config", EXIT_SCHEMA)
    config, _ = read_config(args.config)
    grid = parse_grid(args.grid, config.delta_unit)
    spec, curve, summary = tf_summary(config, grid)
    out = out_dir(args)
    write_spectrum_csv(out / "spectrum.csv", spec, curve)
    write_json(out / "summary.json", summary)
    RunManifest("tf", [args.config], str(out), args.seed, outputs=["spectrum.csv", "summary.json"]).write(out)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_optimize(args) -> int:
    path = args.problem or args.config
    if not path:
        raise CLIError("optimize needs --problem", EXIT_SCHEMA)
    try:
        problem = OptimizationProblem.from_dict(read_doc(path))
    except (InvalidArgumentError, TypeError, KeyError) as exc:
        raise CLIError(f"{path}: {exc}", EXIT_SCHEMA) from None
    try:
        result = optimize(problem, n_starts=args.starts, seed=args.seed, max_evals=args.max_evals,
                          tol=args.tol, jobs=args.jobs)
    except OptimizationFailedError as exc:
        log.error("optimization failed: %s %s", exc, exc.diagnostics)
        return EXIT_OPT
    out = out_dir(args)
    write_json(out / "opt_result.json", result.to_dict())
    save_config(out / "config.json", result.config)
    RunManifest("optimize", [path], str(out), args.seed, outputs=["opt_result.json", "config.json"]).write(out)
    print(json.dumps(result.to_dict(), indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not args.config:
        raise CLIError("simulate needs --config", EXIT_SCHEMA)
    config, doc = read_config(args.config)
    sim = doc.get("simulation") or {}
    if math.isinf(config.kappa):
        raise CLIError("simulation needs a finite kappa in the config", EXIT_SCHEMA)
    try:
        pulse = PulseSpec(**sim.get("pulse", {}))
        n_spins = int(sim.get("n_spins", 200))
        t_end = sim.get("t_end")
        dt = args.dt if args.dt is not None else sim.get("dt")
        record = run(config, n_spins, pulse, t_end=t_end, dt=dt, check_dt=not args.no_dt_check)
        err = compare_fd_td(record, config)
    except (InvalidArgumentError, TypeError) as exc:
        raise CLIError(f"{args.config}: simulation: {exc}", EXIT_SCHEMA) from None
    except StepSizeError as exc:
        log.error("%s (suggested dt %.3g)", exc, exc.suggested_dt)
        return EXIT_SIM
    except WindowTooShortError as exc:
        log.error("%s (suggested t_end %.3g)", exc, exc.suggested_span)
        return EXIT_SIM
    out = out_dir(args)
    record.write_csv(out / "timeseries.csv")
    outputs = ["timeseries.csv", "sim_report.json"]
    if args.trajectories:
        outputs += [p.name for p in record.write_channel_csvs(out)]
    report = {"config_hash": config.config_hash(), "n_spins": n_spins, "pulse": pulse.to_dict(),
              "ledger": record.summary(), "fd_td_error": err}
    write_json(out / "sim_report.json", report)
    RunManifest("simulate", [args.config], str(out), args.seed, outputs=outputs).write(out)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    try:
        return [math.inf if v.strip() in ("inf", "Infinity") else float(v) for v in text.split(",")]
    except ValueError:
        raise CLIError(f"--values expects a comma-separated list, got {text!r}", EXIT_SCHEMA) from None


def _sweep_point(config: DeviceConfig, param: str, value: float, threshold: float, grid) -> list:
    cfg = config
    if param == "gamma":
        cfg = config.with_losses(value, value)
    elif param == "gamma_r_tilde":
        cfg = config.with_losses(value, config.channels[0].gamma_mini)
    elif param == "gamma_mini":
        cfg = config.with_losses(config.gamma_r_tilde, value)
    elif param == "kappa":
        cfg = DeviceConfig(config.n_channels, config.channels, config.delta_unit, value, config.gamma_r_tilde)
    else:
        threshold = value
    curve = efficiency(spectrum(cfg, grid))
    hw = PLATEAU_HALF_WIDTH * cfg.delta_unit
    iv = plateau_bandwidth(curve, threshold)
    return [("plateau_min_eta", curve.min_over(-hw, hw)),
            ("plateau_width", 0.0 if iv is None else iv[1] - iv[0])]


def cmd_sweep(args) -> int:
    if not args.config:
        raise CLIError("sweep needs --config", EXIT_SCHEMA)
    if args.param not in SWEEP_PARAMS:
        raise CLIError(f"unknown sweep parameter {args.param!r}; choose from {SWEEP_PARAMS}", EXIT_SCHEMA)
    config, _ = read_config(args.config)
    values = _parse_values(args.values)
    grid = parse_grid(args.grid, config.delta_unit)
    try:
        jobs = [(config, args.param, v, args.threshold, grid) for v in values]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_sweep_point, *zip(*jobs)))
        else:
            rows = [_sweep_point(*j) for j in jobs]
    except InvalidArgumentError as exc:
        raise CLIError(f"sweep: {exc}", EXIT_SCHEMA) from None
    out = out_dir(args)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("index,param,value,metric,metric_value\n")
        for i, (v, metrics) in enumerate(zip(values, rows)):
            for name, m in metrics:
                fh.write(f"{i},{args.param},{fmt(v)},{name},{fmt(m)}\n")
    RunManifest("sweep", [args.config], str(out), args.seed, outputs=["sweep.csv"]).write(out)
    print((out / "sweep.csv").read_text(), end="")
    return EXIT_OK


def verification_checks(config: DeviceConfig, tolerances: dict) -> list[dict]:
    """Regression checks of a device against the published N = 4 claims."""
    tol = {
        "moderate_loss_floor": 0.999,
        "moderate_loss_target": 0.9999,
        "high_loss_floor": 0.998,
        "plateau_edge": 0.8,
        "plateau_edge_tol": 0.005,
        "absorption": [0.567, 0.278],
        "absorption_tol": 1e-3,
        "matching_tol": 2e-3,
    }
    tol.update(tolerances or {})
    checks = []

    def add(name, passed, measured, expected, **extra):
        checks.append({"name": name, "passed": bool(passed), "measured": measured, "expected": expected, **extra})

    moderate = plateau_min_eta(config.with_losses(1e-2, 1e-2))
    add("plateau_moderate_loss", moderate >= tol["moderate_loss_floor"], moderate,
        f">= {tol['moderate_loss_floor']}", meets_target=moderate >= tol["moderate_loss_target"])
    high = plateau_min_eta(config.with_losses(1e-1, 1e-1))
    add("plateau_high_loss", high >= tol["high_loss_floor"], high, f">= {tol['high_loss_floor']}")

    curve = efficiency(spectrum(config.with_losses(1e-2, 1e-2)))
    iv = plateau_bandwidth(curve, tol["moderate_loss_target"])
    edge = tol["plateau_edge"] * config.delta_unit
    ok = iv is not None and all(abs(abs(x) - edge) <= tol["plateau_edge_tol"] for x in iv)
    add("plateau_interval", ok, _interval(iv), f"[-{edge}, {edge}] +- {tol['plateau_edge_tol']}")

    ac = absorption_coefficients(config)
    got = [ac.get(1, float("nan")), ac.get(2, float("nan"))]
    ok = all(abs(g - e) <= tol["absorption_tol"] for g, e in zip(got, tol["absorption"]))
    add("absorption_coefficients", ok, got, f"{tol['absorption']} +- {tol['absorption_tol']}")

    lossless = config.with_losses(0.0, 0.0)
    resid = abs(eval_F(lossless, 0.0) - 1)
    add("matching_F0", resid <= tol["matching_tol"], resid, f"<= {tol['matching_tol']}")

    good, bad = loss_budget(5e-5, 5e-5, config.delta_unit), loss_budget(1e-2, 1e-2, config.delta_unit)
    add("loss_budget", good.passes and not bad.passes and abs(good.condition_value - 7.72e-5) < 5e-8,
        [good.condition_value, bad.condition_value], "5e-5 passes (~7.72e-5), 1e-2 fails")
    return checks


def cmd_verify(args) -> int:
    config, doc = read_config(args.config or "paper_n4.json")
    tolerances = dict(doc.get("tolerances", {}))
    if args.threshold is not None:
        tolerances["moderate_loss_floor"] = args.threshold
        tolerances["high_loss_floor"] = args.threshold
    checks = verification_checks(config, tolerances)
    for c in checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: measured {c['measured']}, expected {c['expected']}")
    failed = [c["name"] for c in checks if not c["passed"]]
    if args.out or os.environ.get("MRQM_OUT"):
        out = out_dir(args)
        write_json(out / "verify.json", {"checks": checks, "failed": failed})
        RunManifest("verify", [args.config or "paper_n4.json"], str(out), args.seed,
                    outputs=["verify.json"]).write(out)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_budget(args) -> int:
    try:
        report = loss_budget(args.gamma_r_tilde, args.gamma_mini, args.delta, args.target)
    except InvalidArgumentError as exc:
        raise CLIError(str(exc), EXIT_SCHEMA) from None
    doc = report.to_dict()
    if args.out or os.environ.get("MRQM_OUT"):
        out = out_dir(args)
        write_json(out / "budget.json", doc)
        RunManifest("budget", [], str(out), args.seed, outputs=["budget.json"]).write(out)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_common(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="device config / problem JSON (or bundled fixture name)")
    p.add_argument("--out", default=d(None), help="output directory (falls back to $MRQM_OUT)")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--jobs", type=int, default=d(1))
    p.add_argument("--grid", default=d(None), help="frequency grid lo:hi:step in units of Delta")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrqm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _add_common(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tf", parents=[common], help="reflection spectrum and plateau summary")
    p.set_defaults(func=cmd_tf)

    p = sub.add_parser("optimize", parents=[common], help="multistart fit of the device parameters")
    p.add_argument("--problem", help="problem JSON (or bundled fixture name)")
    p.add_argument("--starts", type=int, default=50)
    p.add_argument("--max-evals", type=int, default=200_000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", parents=[common], help="time-domain run and FD/TD comparison")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--no-dt-check", action="store_true", help="skip the step-size precondition")
    p.add_argument("--trajectories", action="store_true", help="also write per-channel CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="plateau metrics versus one parameter")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values; 'inf' allowed for kappa")
    p.add_argument("--threshold", type=float, default=0.9999)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="regression checks against the published optimum")
    p.add_argument("--threshold", type=float, default=None, help="override both plateau floors")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("budget", parents=[common], help="loss budget for a plateau-filling pulse")
    p.add_argument("--gamma-r-tilde", type=float, required=True)
    p.add_argument("--gamma-mini", type=float, required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--target", type=float, default=1e-4)
    p.set_defaults(func=cmd_budget)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        log.error("%s", exc)
        return exc.code
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
