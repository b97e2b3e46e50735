"""Batch front end: optimize pulses, map fidelity landscapes, run self-checks.

Commands
    optimize CONFIG            minimax pulse design; writes result.json,
                               history.csv, waveform.csv
    landscape CONFIG           fidelity map of a waveform; writes
                               landscape.csv and a plot script
    baseline KIND CONFIG       emit a reference waveform (naive | sech)
    check                      run the property suites

Exit codes: 0 success, 1 usage/config error, 2 optimizer hit the iteration
limit (results still written), 3 property-suite failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .baselines import (
    default_sech_sequence,
    landscape,
    naive_2pi_pulse,
    sech_sequence,
    write_landscape_csv,
)
from .checks import run_all_checks, write_failure_report
from .config import ConfigError, RunConfig, load_config
from .controls import read_waveform_csv, synthesize, write_waveform_csv
from .minimax import (
    OptimizerOptions,
    ParameterGrid,
    default_reqc_grid,
    default_target_map,
    initial_guess,
    optimize,
    write_history_csv,
)
from .systems import (
    SystemParameters,
    identity_target,
    phase_gate_target,
    reqc_model,
    stub_model,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_CHECK_FAILED = 3

_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render a heat map from a landscape CSV (gamma,delta,F,T).\"\"\"
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else "landscape.csv"
rows = []
with open(path) as fh:
    for record in csv.DictReader(fh):
        rows.append((float(record["gamma"]), float(record["delta"]),
                     float(record["F"]), float(record["T"])))
gammas = sorted({r[0] for r in rows})
deltas = sorted({r[1] for r in rows})
grid = np.full((len(gammas), len(deltas)), np.nan)
for g, d, f, _ in rows:
    grid[gammas.index(g), deltas.index(d)] = f
fig, ax = plt.subplots(figsize=(7, 4.5))
mesh = ax.pcolormesh(deltas, gammas, grid, shading="nearest", vmin=0.0, vmax=1.0)
fig.colorbar(mesh, ax=ax, label="worst-case fidelity")
ax.set_xlabel("inhomogeneous shift (Rabi units)")
ax.set_ylabel("relative field strength")
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=160, bbox_inches="tight")
print("wrote", out)
"""


def _thread_count(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PULSEFORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"warning: ignoring non-integer PULSEFORGE_THREADS={env!r}",
                  file=sys.stderr)
    return os.cpu_count() or 1


def _select_model(cfg: RunConfig):
    return reqc_model() if cfg.model == "reqc" else stub_model()


def _gate_target(cfg: RunConfig, model):
    n = len(model.qubit_indices)
    return phase_gate_target() if cfg.target == "phase_gate" else identity_target(n)


def _build_grid_and_targets(cfg: RunConfig, model):
    gate = _gate_target(cfg, model)
    if cfg.grid_preset == "default_reqc_49":
        return default_reqc_grid(), default_target_map(gate, cfg.far_threshold)
    points = tuple(
        SystemParameters(gamma=g, delta=d) for g, d, _ in cfg.grid_points
    )
    ident = identity_target(gate.dimension)
    by_point = {
        (g, d): (gate if t == "gate" else ident) for g, d, t in cfg.grid_points
    }

    def target_for(xi: SystemParameters):
        return by_point.get((xi.gamma, xi.delta)) or (
            ident if abs(xi.delta) >= cfg.far_threshold else gate
        )

    return ParameterGrid(points=points), target_for


def _result_payload(cfg: RunConfig, grid, result) -> dict:
    return {
        "version": __version__,
        "model": cfg.model,
        "target": cfg.target,
        "duration": result.coefficients.duration,
        "n_harmonics": result.coefficients.n_harmonics,
        "n_controls": result.coefficients.n_controls,
        "amplitude_bound": result.coefficients.amplitude_bound,
        "n_steps": cfg.n_steps,
        "seed": cfg.seed,
        "coefficients": result.coefficients.coefficients.tolist(),
        "grid": [[p.gamma, p.delta] for p in grid.points],
        "per_point_J": result.per_point_j.tolist(),
        "J_max": result.j_max,
        "converged": result.converged,
        "termination_reason": result.termination_reason,
        "n_iterations": result.n_iterations,
    }


def cmd_optimize(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    model = _select_model(cfg)
    try:
        grid, target_map = _build_grid_and_targets(cfg, model)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    init = initial_guess(
        duration=cfg.duration,
        n_harmonics=cfg.n_harmonics,
        amplitude_bound=cfg.amplitude_bound,
        n_controls=model.n_channels,
        seed=cfg.seed,
    )
    options = OptimizerOptions(
        p_schedule=cfg.p_schedule,
        tol_g=cfg.tol_g,
        tol_step=cfg.tol_step,
        max_iters=cfg.max_iters,
        seed=cfg.seed,
    )
    result = optimize(
        model, grid, target_map, init,
        options=options, n_steps=cfg.n_steps, threads=_thread_count(args),
    )

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "result.json", "w", encoding="utf-8") as fh:
        json.dump(_result_payload(cfg, grid, result), fh, indent=2)
    write_history_csv(result.history, out / "history.csv")
    write_waveform_csv(synthesize(result.coefficients, cfg.n_steps), out / "waveform.csv")
    print(
        f"J_max = {result.j_max:.6e} after {result.n_iterations} iterations "
        f"({result.termination_reason}); artifacts in {out}"
    )
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_landscape(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    model = _select_model(cfg)

    if args.baseline is not None:
        if args.baseline == "naive":
            waveform = naive_2pi_pulse(cfg.duration, cfg.n_steps)
        else:
            waveform = sech_sequence(
                default_sech_sequence(total_duration=cfg.duration), cfg.n_steps
            )
    else:
        if args.waveform is None:
            print("error: landscape needs --waveform PATH or --baseline KIND",
                  file=sys.stderr)
            return EXIT_CONFIG
        try:
            waveform = read_waveform_csv(args.waveform)
        except (OSError, ValueError) as exc:
            print(f"error: cannot read waveform {args.waveform}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if waveform.n_channels != model.n_channels:
            print(
                f"error: waveform has {waveform.n_channels} channels, model "
                f"expects {model.n_channels}", file=sys.stderr,
            )
            return EXIT_CONFIG

    gate = _gate_target(cfg, model)
    target_map = default_target_map(gate, cfg.far_threshold)
    result = landscape(
        model, waveform, target_map,
        cfg.gamma_range, cfg.delta_range, cfg.resolution,
        threads=_thread_count(args),
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_landscape_csv(result, out / "landscape.csv")
    if args.running_max:
        write_landscape_csv(result, out / "landscape_runmax.csv", apply_running_max=True)
    script = out / "plot_landscape.py"
    script.write_text(_PLOT_SCRIPT, encoding="utf-8")
    script.chmod(0o755)
    n_rows = result.worst_case.size
    print(f"wrote {n_rows} cells to {out / 'landscape.csv'}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.kind == "naive":
        waveform = naive_2pi_pulse(cfg.duration, cfg.n_steps)
    else:
        waveform = sech_sequence(
            default_sech_sequence(total_duration=cfg.duration), cfg.n_steps
        )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"baseline_{args.kind}.csv"
    write_waveform_csv(waveform, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_all_checks(
        seed=args.seed, fast=args.fast,
        corrupt_gradient=args.inject_gradient_sign_flip,
    )
    all_passed = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(
            f"{r.name:24s} {status}  max error {r.max_error:.3e} "
            f"(threshold {r.threshold:.1e}, {r.n_cases} cases)"
        )
        all_passed &= r.passed
    if not all_passed:
        report = Path("check_failure.json")
        write_failure_report(results, report)
        print(f"failing cases serialized to {report}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulseforge",
        description="Robust quantum-gate pulse design toolkit",
    )
    parser.add_argument("--version", action="version", version=f"pulseforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run a minimax pulse optimization")
    p_opt.add_argument("config", help="path to a run configuration file")
    p_opt.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: PULSEFORGE_THREADS or all cores)")
    p_opt.set_defaults(func=cmd_optimize)

    p_land = sub.add_parser("landscape", help="map fidelities over (gamma, delta)")
    p_land.add_argument("config")
    src = p_land.add_mutually_exclusive_group()
    src.add_argument("--waveform", help="waveform CSV to evaluate")
    src.add_argument("--baseline", choices=("naive", "sech"),
                     help="evaluate a built-in reference pulse instead")
    p_land.add_argument("--running-max", action="store_true",
                        help="also write the running-maximum envelope CSV")
    p_land.add_argument("--threads", type=int, default=None)
    p_land.set_defaults(func=cmd_landscape)

    p_base = sub.add_parser("baseline", help="emit a reference waveform CSV")
    p_base.add_argument("kind", choices=("naive", "sech"))
    p_base.add_argument("config")
    p_base.set_defaults(func=cmd_baseline)

    p_check = sub.add_parser("check", help="run the property suites")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--fast", action="store_true",
                         help="smaller sample counts for smoke testing")
    p_check.add_argument("--inject-gradient-sign-flip", action="store_true",
                         help=argparse.SUPPRESS)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
