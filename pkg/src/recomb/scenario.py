"""Scenario files and table I/O for the command-line front end.

A scenario is a JSON document:

    {
      "n": 3,
      "alphabet_sizes": [2, 2, 2],            // optional, default all 2
      "rates": {"1|2,3": 0.4, "1|2|3": 0.8},  // partition text keys
      "two_block_only": false,                 // restrict keys to two-block partitions
      "initial_measure": "uniform",            // or "product:p1,p2;q1,q2" or "file:PATH"
                                               // or an inline nested array (dense tensor), optional
      "time_grid": {"start": 0, "end": 5.0, "points": 11},
      "step": 0.01,                            // optional integrator step
      "monte_carlo": {"samples": 100000, "seed": 42, "t": 1.0},   // optional
      "tolerances": {"closed_vs_integrated": 1e-6, "monte_carlo_tv": null}
    }

All emitted CSV numbers carry 17 significant digits so files re-parse to the
exact in-memory values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from recomb.dynamics import CoefficientTrajectory, MeasureTrajectory, RateSystem
from recomb.measures import (
    Measure,
    TypeSpace,
    measure_from_csv,
    product_measure,
    uniform_measure,
)
from recomb.partitions import Partition, ground_set, lattice, parse_partition
from recomb.process import EmpiricalDistribution

__all__ = [
    "ScenarioError",
    "TimeGrid",
    "MonteCarloBlock",
    "Tolerances",
    "Scenario",
    "FLOAT_FORMAT",
    "write_coefficient_csv",
    "read_coefficient_csv",
    "write_measure_trajectory_csv",
    "write_empirical_csv",
    "read_empirical_csv",
]

FLOAT_FORMAT = ".17g"


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class TimeGrid:
    start: float
    end: float
    points: int

    def array(self) -> np.ndarray:
        if self.start != 0.0:
            raise ScenarioError("time grid must start at 0")
        if self.points < 1 or self.end <= self.start:
            raise ScenarioError("time grid needs end > 0 and at least one point")
        return np.linspace(self.start, self.end, self.points)


@dataclass(frozen=True)
class MonteCarloBlock:
    samples: int
    seed: int
    t: float | None = None  # defaults to the grid end


@dataclass(frozen=True)
class Tolerances:
    closed_vs_integrated: float = 1e-6
    monte_carlo_tv: float | None = None  # default: max(0.01, 5*sqrt(B(n)/N))

    def tv_gate(self, lattice_size: int, n_samples: int) -> float:
        if self.monte_carlo_tv is not None:
            return self.monte_carlo_tv
        return max(0.01, 5.0 * math.sqrt(lattice_size / n_samples))


@dataclass
class Scenario:
    n: int
    rates: RateSystem
    alphabet_sizes: tuple[int, ...]
    grid: TimeGrid
    two_block_only: bool = False
    initial_measure: str | list | None = None
    step: float | None = None
    monte_carlo: MonteCarloBlock | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    base_dir: Path = field(default_factory=Path)

    @property
    def ground(self) -> tuple[int, ...]:
        return ground_set(self.n)

    @property
    def space(self) -> TypeSpace:
        return TypeSpace(self.ground, self.alphabet_sizes)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "Scenario":
        try:
            n = int(doc["n"])
        except KeyError as exc:
            raise ScenarioError("scenario needs a site count 'n'") from exc
        if n < 1:
            raise ScenarioError("n must be at least 1")
        ground = ground_set(n)

        sizes = doc.get("alphabet_sizes")
        sizes = (2,) * n if sizes is None else tuple(int(s) for s in sizes)
        if len(sizes) != n or any(s < 1 for s in sizes):
            raise ScenarioError("alphabet_sizes must list one positive size per site")

        raw_rates = doc.get("rates", {})
        if not isinstance(raw_rates, dict):
            raise ScenarioError("rates must be a mapping of partition keys to numbers")
        two_block_only = bool(doc.get("two_block_only", False))
        parsed: dict[Partition, float] = {}
        for key, value in raw_rates.items():
            try:
                p = parse_partition(key, ground)
            except ValueError as exc:
                raise ScenarioError(f"bad rate key {key!r}: {exc}") from exc
            value = float(value)
            if value < 0:
                raise ScenarioError(f"negative rate for {key!r}")
            if two_block_only and p.block_count != 2:
                raise ScenarioError(
                    f"two_block_only scenario has a non-two-block key {key!r}"
                )
            parsed[p] = value
        rates = RateSystem(ground, parsed)

        grid_doc = doc.get("time_grid", {"start": 0.0, "end": 1.0, "points": 11})
        grid = TimeGrid(
            float(grid_doc.get("start", 0.0)),
            float(grid_doc.get("end", 1.0)),
            int(grid_doc.get("points", 11)),
        )
        grid.array()  # validate now

        step = doc.get("step")
        step = None if step is None else float(step)
        if step is not None and step <= 0:
            raise ScenarioError("step must be positive")

        mc_doc = doc.get("monte_carlo")
        monte_carlo = None
        if mc_doc is not None:
            try:
                monte_carlo = MonteCarloBlock(
                    int(mc_doc["samples"]),
                    int(mc_doc["seed"]),
                    None if mc_doc.get("t") is None else float(mc_doc["t"]),
                )
            except KeyError as exc:
                raise ScenarioError("monte_carlo block needs samples and seed") from exc
            if monte_carlo.samples < 1:
                raise ScenarioError("monte_carlo samples must be positive")

        tol_doc = doc.get("tolerances", {})
        tolerances = Tolerances(
            float(tol_doc.get("closed_vs_integrated", 1e-6)),
            None
            if tol_doc.get("monte_carlo_tv") is None
            else float(tol_doc["monte_carlo_tv"]),
        )

        measure_spec = doc.get("initial_measure")
        if measure_spec is not None and not isinstance(measure_spec, (str, list)):
            raise ScenarioError(
                "initial_measure must be a string spec or an inline tensor"
            )

        return cls(
            n=n,
            rates=rates,
            alphabet_sizes=sizes,
            grid=grid,
            two_block_only=two_block_only,
            initial_measure=measure_spec,
            step=step,
            monte_carlo=monte_carlo,
            tolerances=tolerances,
            base_dir=base_dir or Path(),
        )

    @classmethod
    def from_file(cls, path) -> "Scenario":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ScenarioError("scenario file must hold a JSON object")
        return cls.from_dict(doc, base_dir=path.parent)

    def build_measure(self) -> Measure | None:
        spec = self.initial_measure
        if spec is None:
            return None
        space = self.space
        if isinstance(spec, list):
            # inline dense tensor, nested by site in ascending order
            try:
                return Measure(space, np.asarray(spec, dtype=float))
            except ValueError as exc:
                raise ScenarioError(f"bad inline measure tensor: {exc}") from exc
        if spec == "uniform":
            return uniform_measure(space)
        if spec.startswith("product:"):
            body = spec[len("product:") :]
            try:
                site_weights = [
                    [float(x) for x in chunk.split(",")] for chunk in body.split(";")
                ]
                return product_measure(space, site_weights)
            except ValueError as exc:
                raise ScenarioError(f"bad product measure spec {spec!r}: {exc}") from exc
        if spec.startswith("file:"):
            path = Path(spec[len("file:") :])
            if not path.is_absolute():
                path = self.base_dir / path
            try:
                nu = measure_from_csv(path)
            except (OSError, ValueError) as exc:
                raise ScenarioError(f"cannot load measure {path}: {exc}") from exc
            if nu.space != space:
                raise ScenarioError(
                    f"measure file space {nu.space} does not match the scenario"
                )
            return nu
        raise ScenarioError(f"unknown initial_measure spec {spec!r}")

    def mc_time(self) -> float:
        if self.monte_carlo is None:
            raise ScenarioError("scenario has no monte_carlo block")
        return self.grid.end if self.monte_carlo.t is None else self.monte_carlo.t


def _fmt(x: float) -> str:
    return format(float(x), FLOAT_FORMAT)


def write_coefficient_csv(
    path, traj: CoefficientTrajectory, include_drift: bool = False
) -> None:
    """Columns: t, one per partition key, optionally the conservation drift."""
    lat = lattice(traj.ground)
    drift = traj.drift
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"] + [str(p) for p in lat.parts]
        if include_drift:
            header.append("drift")
        writer.writerow(header)
        for k, t in enumerate(traj.times):
            row = [_fmt(t)] + [_fmt(v) for v in traj.values[k]]
            if include_drift:
                row.append(_fmt(drift[k]))
            writer.writerow(row)


def read_coefficient_csv(path) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Times, partition keys, and the value matrix of a trajectory CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError("trajectory CSV must start with a 't' column")
        keys = header[1:]
        if keys and keys[-1] == "drift":
            keys = keys[:-1]
        width = len(keys)
        times, rows = [], []
        for row in reader:
            times.append(float(row[0]))
            rows.append([float(x) for x in row[1 : 1 + width]])
    return np.array(times), keys, np.array(rows)


def write_measure_trajectory_csv(
    path, traj: MeasureTrajectory, mixture_dev: np.ndarray | None = None
) -> None:
    """Columns: t, one per state (letters joined by '.'), drift, and the
    deviation from the coefficient-mixture representation when supplied."""
    space = traj.space
    labels = [".".join(str(c) for c in coords) for coords in np.ndindex(*space.sizes)]
    drift = traj.drift
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"] + labels + ["drift"]
        if mixture_dev is not None:
            header.append("mixture_dev")
        writer.writerow(header)
        flat = traj.tensors.reshape(traj.tensors.shape[0], -1)
        for k, t in enumerate(traj.times):
            row = [_fmt(t)] + [_fmt(v) for v in flat[k]] + [_fmt(drift[k])]
            if mixture_dev is not None:
                row.append(_fmt(mixture_dev[k]))
            writer.writerow(row)


def write_empirical_csv(path, dist: EmpiricalDistribution) -> None:
    """Columns: partition key, count, frequency; rows sorted by key."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["partition", "count", "frequency"])
        for p in sorted(dist.counts, key=str):
            c = dist.counts[p]
            writer.writerow([str(p), c, _fmt(c / dist.n_samples)])


def read_empirical_csv(path, ground) -> dict[Partition, int]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return {parse_partition(row[0], ground): int(row[1]) for row in reader}
