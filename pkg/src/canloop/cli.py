"""Command line front end.

Subcommands:
  run           one scenario: trace.csv, frames.csv, summary.json
  batch         the scenario grid (every attack kind, one or more seeds)
  synth-report  print the linearized model, gains, and margins
  selfcheck     numerical diagnostics, nonzero exit on any failure

Exit codes: 0 success, 1 selfcheck failure, 2 configuration error,
3 runtime simulation error. CANLOOP_OUT sets the default output
directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import control, engine, kernels, selfcheck, sim
from .canbus import export_frame_log
from .errors import CanloopError, ConfigError, SimulationError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SIMULATION = 3

ATTACK_KINDS = ("none", "fuzzing", "replay", "injection")


def _default_out() -> str:
    return os.environ.get("CANLOOP_OUT", os.getcwd())


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="INI scenario file; flags override its values")
    parser.add_argument("--seed", type=int, help="noise stream seed")
    parser.add_argument("--no-noise", action="store_true",
                        help="disable process and measurement noise")
    parser.add_argument("--offset", type=float,
                        help="attack offset (signal units)")
    parser.add_argument("--t-start", type=float, dest="t_start",
                        help="attack window start [s]")
    parser.add_argument("--duration", type=float,
                        help="attack window length [s]")
    parser.add_argument("--rate", type=int,
                        help="injection rate multiplier (frames per period)")
    parser.add_argument("--mode-flow", choices=sorted(engine.FLOW_MODES),
                        dest="mode_flow", help="intake flow model")
    parser.add_argument("--mode-throttle", choices=sorted(engine.THROTTLE_FORMS),
                        dest="mode_throttle", help="throttle area form")
    parser.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default: CANLOOP_OUT or cwd)")


def _build_config(args, attack_kind=None) -> sim.ScenarioConfig:
    cfg = sim.load_config(args.config) if args.config else sim.ScenarioConfig()
    if attack_kind is not None:
        cfg.attack.kind = attack_kind
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "no_noise", False):
        cfg.noise_enabled = False
    if getattr(args, "offset", None) is not None:
        cfg.attack.offset = args.offset
    if getattr(args, "t_start", None) is not None:
        cfg.attack.t_start = args.t_start
    if getattr(args, "duration", None) is not None:
        cfg.attack.duration = args.duration
    if getattr(args, "rate", None) is not None:
        cfg.attack.rate_multiplier = args.rate
    if getattr(args, "mode_flow", None):
        cfg.flow_mode = args.mode_flow
    if getattr(args, "mode_throttle", None):
        cfg.throttle_form = args.mode_throttle
    return cfg


def _run_one(cfg: sim.ScenarioConfig, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    trace, bus = sim.run_scenario(cfg)
    sim.export_trace(trace, os.path.join(out_dir, "trace.csv"))
    export_frame_log(bus.delivered, os.path.join(out_dir, "frames.csv"))
    summary = sim.summarize(trace)
    summary["attack"] = cfg.attack.kind
    summary["seed"] = cfg.seed if cfg.noise_enabled else None
    summary["kernel"] = trace.meta["kernel"]
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True)
        fh.write("\n")
    return summary


def _cmd_run(args) -> int:
    cfg = _build_config(args, attack_kind=args.attack)
    out_dir = args.out or _default_out()
    summary = _run_one(cfg, out_dir)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _batch_worker(task):
    cfg, out_dir = task
    summary = _run_one(cfg, out_dir)
    sim.write_config(cfg, os.path.join(out_dir, "config.ini"))
    return os.path.basename(out_dir), summary


def _cmd_batch(args) -> int:
    base = _build_config(args)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as err:
        raise ConfigError(f"bad --seeds: {err}") from err
    if not seeds:
        raise ConfigError("--seeds must list at least one seed")
    out_root = args.out or _default_out()
    tasks = []
    for seed in seeds:
        for kind in ATTACK_KINDS:
            cfg = replace(base, seed=seed,
                          attack=replace(base.attack, kind=kind))
            cfg.validate()
            tasks.append((cfg, os.path.join(out_root, f"{kind}-seed{seed}")))
    os.makedirs(out_root, exist_ok=True)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_batch_worker, tasks))
    else:
        outcomes = [_batch_worker(t) for t in tasks]
    for name, summary in outcomes:
        print(name, json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_synth_report(args) -> int:
    cfg = _build_config(args)
    cfg.validate()
    model, gains = control.synthesize(
        cfg.params, cfg.omega_set_rpm, cfg.load_torque,
        control.SynthesisWeights([list(r) for r in cfg.w_cost], cfg.u_cost),
        [list(r) for r in cfg.q_cov], cfg.r_var,
        cfg.control_period_ms / 1000.0, cfg.flow_mode,
    )
    weights = control.SynthesisWeights([list(r) for r in cfg.w_cost], cfg.u_cost)
    print(control.matrix_report(model, gains, weights))
    print(f"kernel = {kernels.kernel_name()}")
    return EXIT_OK


def _cmd_selfcheck(args) -> int:
    cfg = sim.load_config(args.config) if args.config else sim.ScenarioConfig()
    results = selfcheck.run_selfcheck(cfg)
    print(selfcheck.format_report(results, verbose=args.verbose))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canloop",
        description="Deterministic engine-speed control loop over a "
                    "simulated CAN bus, with attack scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--attack", choices=ATTACK_KINDS, default="none")
    _add_scenario_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run every attack kind per seed")
    p_batch.add_argument("--seeds", default=str(sim.DEFAULT_SEED),
                         help="comma-separated seed list")
    p_batch.add_argument("--workers", type=int, default=1,
                         help="parallel scenario processes")
    _add_scenario_flags(p_batch)
    p_batch.set_defaults(func=_cmd_batch)

    p_synth = sub.add_parser("synth-report", help="print model and gains")
    _add_scenario_flags(p_synth)
    p_synth.set_defaults(func=_cmd_synth_report)

    p_check = sub.add_parser("selfcheck", help="run numerical diagnostics")
    p_check.add_argument("--config", metavar="PATH",
                         help="INI scenario file to check")
    p_check.add_argument("--verbose", action="store_true",
                         help="print the measured residual of every check")
    p_check.set_defaults(func=_cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as err:
        print(f"simulation error: {err}", file=sys.stderr)
        return EXIT_SIMULATION
    except CanloopError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
