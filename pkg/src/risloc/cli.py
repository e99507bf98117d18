"""Command-line entry points for the Monte-Carlo harness.

Subcommands:
  bounds     theoretical-limit sweeps over SNR x p_fail (Bernoulli masks)
  run        estimator sweeps over SNR x p_fail (fixed-count masks)
  trace      per-iteration convergence of the successive detector
  mask-demo  one mask realization with per-element estimates
  rician     estimator sweep over the Rician K-factor axis

Every subcommand writes a data CSV plus a JSON sidecar with the resolved
configuration and library versions.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .estimators import l1_jlfd, localize_fixed_mask, successive_jlfd
from .harness import (
    ExperimentConfig,
    desk_grid,
    experiment_schedule,
    load_config,
    metrics,
    output_dir,
    point_scenario,
    axis_points,
    run_sweep,
    write_metrics_csv,
    write_sidecar,
    write_trials_csv,
    _effective_pfail,
    _fmt,
    _point_mask,
)
from .scene import synthesize


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file (flags override)")
    p.add_argument("--preset", choices=["desk", "room"], help="scenario preset")
    p.add_argument("--snr", type=float, nargs="+", help="SNR points in dB")
    p.add_argument("--pfail", type=float, nargs="+", help="failure probabilities")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per axis point")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="process-pool size (0 = inline)")
    p.add_argument("--output", type=Path, help="output directory")
    p.add_argument("--tag", default=None, help="basename for output files")


def _build_config(args: argparse.Namespace, **overrides) -> ExperimentConfig:
    import dataclasses

    if args.config:
        base = load_config(args.config)
    else:
        base = ExperimentConfig()
    updates = {}
    if args.preset is not None:
        updates["preset"] = args.preset
    if args.snr is not None:
        updates["snr_db"] = tuple(args.snr)
    if args.pfail is not None:
        updates["p_fail"] = tuple(args.pfail)
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.output is not None:
        updates["output"] = str(args.output)
    updates.update(overrides)
    return dataclasses.replace(base, **updates)


def _emit(config: ExperimentConfig, tag: str, args) -> int:
    results = run_sweep(config)
    out = output_dir(config)
    base = args.tag or tag
    write_trials_csv(results, out / f"{base}_trials.csv")
    write_metrics_csv(metrics(results), out / f"{base}_metrics.csv")
    write_sidecar(config, out / f"{base}_config.json")
    print(f"wrote {out / (base + '_trials.csv')}")
    print(f"wrote {out / (base + '_metrics.csv')}")
    return 0


def _cmd_bounds(args) -> int:
    config = _build_config(
        args,
        estimators=(),
        bounds=("crb_perfect", "crb_knownloc", "lb"),
        mask_mode="bernoulli",
    )
    return _emit(config, "bounds", args)


def _cmd_run(args) -> int:
    overrides = {"mask_mode": "fixed-count"}
    if args.estimators is not None:
        overrides["estimators"] = tuple(args.estimators)
    if args.bounds:
        overrides["bounds"] = tuple(args.bounds)
    if args.num_failures is not None:
        overrides["num_failures"] = args.num_failures
    config = _build_config(args, **overrides)
    return _emit(config, "run", args)


def _cmd_rician(args) -> int:
    overrides = {
        "mask_mode": "fixed-count",
        "k_factor": tuple(args.kfactor),
    }
    if args.estimators is not None:
        overrides["estimators"] = tuple(args.estimators)
    if args.num_failures is not None:
        overrides["num_failures"] = args.num_failures
    config = _build_config(args, **overrides)
    return _emit(config, "rician", args)


TRACE_COLUMNS = [
    ("trial", "index"),
    ("iteration", "index (0 = all-ones initialization)"),
    ("pos_err", "m"),
    ("n_detected", "count"),
    ("selected_k", "hypothesis index (0 = stop; -1 = initialization row)"),
]


def _cmd_trace(args) -> int:
    config = _build_config(
        args,
        estimators=("successive",),
        mask_mode="fixed-count",
        num_failures=args.num_failures,
    )
    if len(config.snr_db) != 1 or len(config.p_fail) != 1:
        print("trace expects exactly one SNR and one p_fail", file=sys.stderr)
        return 2
    point = axis_points(config)[0]
    scenario = point_scenario(config, point)
    schedule = experiment_schedule(config, scenario)
    mask = _point_mask(config, point, scenario.num_elements)
    rows = []
    for trial in range(config.trials):
        rng = np.random.default_rng([config.master_seed, point.index, trial])
        obs = synthesize(scenario, schedule, mask, rng=rng)
        est = successive_jlfd(
            obs.y,
            schedule,
            scenario,
            config.grid,
            p_fail=_effective_pfail(point.p_fail, scenario.num_elements),
        )
        for it, p, m, khat in est.per_iteration_trace:
            rows.append(
                (
                    trial,
                    it,
                    float(np.linalg.norm(p - scenario.ue_true_position)),
                    int(np.count_nonzero(~np.isclose(m, 1.0))),
                    -1 if khat is None else int(khat),
                )
            )
        # final row after the unit-disk coefficient refinement
        rows.append(
            (
                trial,
                est.info["iterations"] + 1,
                float(np.linalg.norm(est.p_hat - scenario.ue_true_position)),
                len(est.failing_set),
                -1,
            )
        )
    out = output_dir(config)
    base = args.tag or "trace"
    path = out / f"{base}_trials.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# successive-detector iteration trace; column units:\n")
        for name, unit in TRACE_COLUMNS:
            fh.write(f"#   {name}: {unit}\n")
        fh.write(",".join(name for name, _ in TRACE_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    write_sidecar(config, out / f"{base}_config.json")
    print(f"wrote {path}")
    return 0


MASK_COLUMNS = [
    ("element", "index (row-major grid order)"),
    ("x", "m"),
    ("y", "m"),
    ("m_true_re", "unitless"),
    ("m_true_im", "unitless"),
    ("m_l1_re", "unitless"),
    ("m_l1_im", "unitless"),
    ("m_succ_re", "unitless"),
    ("m_succ_im", "unitless"),
]


def _cmd_mask_demo(args) -> int:
    config = _build_config(
        args, mask_mode="fixed-count", num_failures=args.num_failures
    )
    point = axis_points(config)[0]
    scenario = point_scenario(config, point)
    schedule = experiment_schedule(config, scenario)
    mask = _point_mask(config, point, scenario.num_elements)
    rng = np.random.default_rng([config.master_seed, point.index, 0])
    obs = synthesize(scenario, schedule, mask, rng=rng)
    xi = config.xi if config.xi is not None else 2.0 * np.sqrt(scenario.snr)
    est_l1 = l1_jlfd(obs.y, schedule, scenario, config.grid, xi=xi)
    est_succ = successive_jlfd(
        obs.y,
        schedule,
        scenario,
        config.grid,
        p_fail=_effective_pfail(point.p_fail, scenario.num_elements),
    )
    out = output_dir(config)
    base = args.tag or "mask_demo"
    path = out / f"{base}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# per-element true and estimated masks; column units:\n")
        for name, unit in MASK_COLUMNS:
            fh.write(f"#   {name}: {unit}\n")
        fh.write(",".join(name for name, _ in MASK_COLUMNS) + "\n")
        for n in range(scenario.num_elements):
            row = [
                n,
                scenario.element_positions[n, 0],
                scenario.element_positions[n, 1],
                mask.m[n].real,
                mask.m[n].imag,
                est_l1.m_hat[n].real,
                est_l1.m_hat[n].imag,
                est_succ.m_hat[n].real,
                est_succ.m_hat[n].imag,
            ]
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    write_sidecar(config, out / f"{base}_config.json")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risloc",
        description="RIS localization under pixel failures: bounds and estimator sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="CRB / mismatch lower-bound sweeps")
    _add_common(p)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("run", help="estimator Monte-Carlo sweeps")
    _add_common(p)
    p.add_argument(
        "--estimators", nargs="+", choices=["agnostic", "l1", "successive"]
    )
    p.add_argument(
        "--bounds", nargs="+", choices=["crb_perfect", "crb_knownloc", "lb"]
    )
    p.add_argument("--num-failures", type=int, help="override floor(N*p_fail)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("trace", help="successive-detector per-iteration trace")
    _add_common(p)
    p.add_argument("--num-failures", type=int, default=3)
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("mask-demo", help="dump one true/estimated mask set")
    _add_common(p)
    p.add_argument("--num-failures", type=int, default=3)
    p.set_defaults(func=_cmd_mask_demo)

    p = sub.add_parser("rician", help="estimator sweep over the Rician K-factor")
    _add_common(p)
    p.add_argument("--kfactor", type=float, nargs="+", required=True)
    p.add_argument(
        "--estimators", nargs="+", choices=["agnostic", "l1", "successive"]
    )
    p.add_argument("--num-failures", type=int, help="override floor(N*p_fail)")
    p.set_defaults(func=_cmd_rician)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
