"""Command-line front end.

Subcommands:

    lattice    inspect the partition lattice of a small ground set
    solve      build the closed form and write the trajectory plus tables
    integrate  fixed-step numerical integration (coefficients and measures)
    simulate   Monte Carlo estimate of the partition distribution
    compare    run all available routes and check them against each other

Exit codes: 0 success, 2 configuration error, 3 degenerate rates,
4 tolerance failure.  The RECOMB_LOG environment variable (debug, info,
warning, error) controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from recomb.closed_form import (
    DegeneracyError,
    build_closed_form,
    linear_solution,
)
from recomb.dynamics import (
    CoefficientTrajectory,
    CoefficientVector,
    integrate_coefficients,
    integrate_measure,
)
from recomb.measures import mixture, tv_deviation
from recomb.partitions import (
    Partition,
    bell_number,
    count_two_block,
    ground_set,
    lattice,
    mobius,
)
from recomb.process import estimate_distribution, tv_distance
from recomb.scenario import (
    Scenario,
    ScenarioError,
    write_coefficient_csv,
    write_empirical_csv,
    write_measure_trajectory_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERACY = 3
EXIT_TOLERANCE = 4

MOBIUS_ROW_LIMIT = 6  # full Moebius row printed only for small lattices

log = logging.getLogger("recomb")


def _setup_logging() -> None:
    level = os.environ.get("RECOMB_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _is_interval_two_block(p: Partition, ground: tuple[int, ...]) -> bool:
    if p.block_count != 2:
        return False
    first, second = p.blocks
    return first + second == ground


def _linear_regime(scenario: Scenario) -> bool:
    """Support restricted to ordered two-block partitions (the single-block
    partition is allowed, its operator is the identity)."""
    g = scenario.ground
    support = [p for p in scenario.rates.support() if p.block_count > 1]
    return bool(support) and all(_is_interval_two_block(p, g) for p in support)


def cmd_lattice(args) -> int:
    n = args.n
    if not 1 <= n <= 10:
        log.error("lattice size must be between 1 and 10")
        return EXIT_CONFIG
    info: dict = {
        "n": n,
        "bell": bell_number(n),
        "two_block": count_two_block(n),
    }
    full = args.full and n <= MOBIUS_ROW_LIMIT
    if args.full and not full:
        log.warning("full enumeration limited to n <= %d", MOBIUS_ROW_LIMIT)
    if full:
        g = ground_set(n)
        parts = lattice(g).parts
        bottom = Partition.singletons(g)
        info["partitions"] = [str(p) for p in parts]
        info["mobius_bottom_row"] = {str(p): mobius(bottom, p) for p in parts}
    if args.format == "json":
        print(json.dumps(info, indent=2))
    else:
        print(f"n = {n}")
        print(f"bell number = {info['bell']}")
        print(f"two-block partitions = {info['two_block']}")
        if full:
            for p in info["partitions"]:
                print(f"  {p}  mobius(bottom, .) = {info['mobius_bottom_row'][p]}")
    return EXIT_OK


def cmd_solve(args) -> int:
    scenario = Scenario.from_file(args.config)
    if args.step is not None:
        scenario.step = args.step
    out = _out_dir(args)
    try:
        sol = build_closed_form(scenario.rates)
    except DegeneracyError as exc:
        (out / "degeneracy.json").write_text(
            json.dumps(exc.report.to_json_dict(), indent=2)
        )
        log.error("degenerate rates: %s", exc)
        return EXIT_DEGENERACY
    grid = scenario.grid.array()
    g = scenario.ground
    values = np.array([sol.evaluate(g, t).values for t in grid])
    traj = CoefficientTrajectory(g, grid, values)
    write_coefficient_csv(out / "trajectory.csv", traj)
    (out / "solution.json").write_text(json.dumps(sol.to_json_dict(), indent=2))
    log.info("wrote %s and %s", out / "trajectory.csv", out / "solution.json")
    return EXIT_OK


def cmd_integrate(args) -> int:
    scenario = Scenario.from_file(args.config)
    if args.step is not None:
        scenario.step = args.step
    out = _out_dir(args)
    grid = scenario.grid.array()
    g = scenario.ground
    traj = integrate_coefficients(
        scenario.rates, CoefficientVector.delta_top(g), grid, step=scenario.step
    )
    write_coefficient_csv(out / "coefficients.csv", traj, include_drift=True)
    meta = {
        "step": traj.step,
        "max_drift": float(np.abs(traj.drift).max()),
    }
    omega0 = scenario.build_measure()
    if omega0 is not None:
        mtraj = integrate_measure(scenario.rates, omega0, grid, step=scenario.step)
        dev = np.array(
            [
                tv_deviation(mtraj.state(k), mixture(traj.state(k), omega0))
                for k in range(grid.size)
            ]
        )
        write_measure_trajectory_csv(out / "measure_trajectory.csv", mtraj, dev)
        meta["max_mixture_dev"] = float(dev.max())
        meta["max_measure_drift"] = float(np.abs(mtraj.drift).max())
    (out / "integrate_meta.json").write_text(json.dumps(meta, indent=2))
    log.info("integration metadata: %s", meta)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = Scenario.from_file(args.config)
    if scenario.monte_carlo is None:
        raise ScenarioError("simulate needs a monte_carlo block in the scenario")
    samples = args.samples or scenario.monte_carlo.samples
    seed = scenario.monte_carlo.seed if args.seed is None else args.seed
    t = scenario.mc_time()
    out = _out_dir(args)
    dist = estimate_distribution(scenario.rates, t, samples, seed)
    write_empirical_csv(out / "empirical.csv", dist)
    meta = {
        "seed": seed,
        "samples": samples,
        "t": t,
        "generator": dist.generator,
    }
    (out / "empirical_meta.json").write_text(json.dumps(meta, indent=2))
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = Scenario.from_file(args.config)
    if args.step is not None:
        scenario.step = args.step
    out = _out_dir(args)
    grid = scenario.grid.array()
    g = scenario.ground
    lat = lattice(g)
    report: dict = {
        "times": [float(t) for t in grid],
        "partitions": [str(p) for p in lat.parts],
        "linear_regime": _linear_regime(scenario),
        "fallback": None,
        "tolerances": {
            "closed_vs_integrated": scenario.tolerances.closed_vs_integrated,
        },
    }

    sol = None
    try:
        sol = build_closed_form(scenario.rates)
        report["degeneracy"] = sol.report.to_json_dict()
    except DegeneracyError as exc:
        report["degeneracy"] = exc.report.to_json_dict()
        report["fallback"] = "numerical"

    traj = integrate_coefficients(
        scenario.rates, CoefficientVector.delta_top(g), grid, step=scenario.step
    )
    report["integrated"] = [[float(v) for v in row] for row in traj.values]
    report["max_drift"] = float(np.abs(traj.drift).max())

    checks: list[bool] = []
    if sol is not None:
        closed = np.array([sol.evaluate(g, t).values for t in grid])
        report["closed"] = [[float(v) for v in row] for row in closed]
        dev = np.abs(closed - traj.values).max(axis=1)
        report["closed_vs_integrated"] = {
            "per_time": [float(d) for d in dev],
            "max": float(dev.max()),
            "pass": bool(dev.max() <= scenario.tolerances.closed_vs_integrated),
        }
        checks.append(report["closed_vs_integrated"]["pass"])
        if report["linear_regime"]:
            lin = np.array([linear_solution(scenario.rates, g, t).values for t in grid])
            report["closed_vs_linear_max"] = float(np.abs(closed - lin).max())

    omega0 = scenario.build_measure()
    if omega0 is not None:
        mtraj = integrate_measure(scenario.rates, omega0, grid, step=scenario.step)
        dev = np.array(
            [
                tv_deviation(mtraj.state(k), mixture(traj.state(k), omega0))
                for k in range(grid.size)
            ]
        )
        report["measure_vs_mixture"] = {
            "per_time": [float(d) for d in dev],
            "max": float(dev.max()),
            "pass": bool(dev.max() <= scenario.tolerances.closed_vs_integrated),
        }
        checks.append(report["measure_vs_mixture"]["pass"])

    if scenario.monte_carlo is not None:
        samples = args.samples or scenario.monte_carlo.samples
        seed = scenario.monte_carlo.seed if args.seed is None else args.seed
        t = scenario.mc_time()
        dist = estimate_distribution(scenario.rates, t, samples, seed)
        if sol is not None:
            reference = sol.evaluate(g, t)
        else:
            ref_traj = integrate_coefficients(
                scenario.rates,
                CoefficientVector.delta_top(g),
                np.array([0.0, t]) if t > 0 else np.array([0.0]),
                step=scenario.step,
            )
            reference = ref_traj.state(-1)
        gate = scenario.tolerances.tv_gate(lat.size, samples)
        tv = tv_distance(dist.frequencies(), reference)
        report["monte_carlo"] = {
            "t": t,
            "samples": samples,
            "seed": seed,
            "frequencies": {str(p): f for p, f in sorted(
                dist.frequencies().items(), key=lambda kv: str(kv[0])
            )},
            "tv": tv,
            "gate": gate,
            "pass": bool(tv <= gate),
        }
        checks.append(report["monte_carlo"]["pass"])

    passed = all(checks) if checks else True
    report["pass"] = passed
    (out / "comparison.json").write_text(json.dumps(report, indent=2))
    log.info("comparison written to %s (pass=%s)", out / "comparison.json", passed)
    return EXIT_OK if passed else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recomb",
        description="Recombination dynamics on partition lattices: "
        "closed form, numerical integration, and Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lattice", help="inspect the partition lattice")
    p.add_argument("n", type=int)
    p.add_argument("--full", action="store_true", help="print the enumeration and Moebius row")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_lattice, needs_out=False)

    for name, func, help_text in (
        ("solve", cmd_solve, "closed-form solve"),
        ("integrate", cmd_integrate, "fixed-step numerical integration"),
        ("simulate", cmd_simulate, "Monte Carlo estimate"),
        ("compare", cmd_compare, "cross-check every available route"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name in ("solve", "integrate", "compare"):
            p.add_argument("--step", type=float, default=None)
        if name in ("simulate", "compare"):
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--samples", type=int, default=None)
        p.set_defaults(func=func, needs_out=True)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        log.error("configuration error: %s", exc)
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"degenerate rates: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY


if __name__ == "__main__":
    sys.exit(main())
