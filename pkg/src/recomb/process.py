"""Exact continuous-time Monte Carlo simulation of the backward partitioning
chain on the partition lattice.

The chain starts from the single-block partition and progressively refines:
each block is replaced by a proper partition of itself at the corresponding
marginal rate, independently across blocks.  Its distribution at time t
matches the coefficient vector of the forward dynamics, which is what the
estimator here is compared against.

Sampling uses competing exponentials over a flat per-state catalog of block
refinements (direct method).  The generator is counter-based (numpy Philox),
so seeded replicate streams are reproducible and independent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from recomb.dynamics import RateSystem
from recomb.partitions import Partition, is_refinement, restrict

__all__ = [
    "GENERATOR_NAME",
    "make_rng",
    "ProcessState",
    "EmpiricalDistribution",
    "exit_rate",
    "step",
    "simulate_path",
    "estimate_distribution",
    "transition_product_check",
    "BlockIndependenceReport",
    "tv_distance",
]

GENERATOR_NAME = "philox"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded counter-based generator; stream identity goes into metadata."""
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass
class ProcessState:
    """Current partition and elapsed time of one chain."""

    current: Partition
    time: float = 0.0


@dataclass
class EmpiricalDistribution:
    """Replicate counts per partition, with the sampling metadata."""

    counts: dict[Partition, int]
    n_samples: int
    t: float
    seed: int | None = None
    generator: str = GENERATOR_NAME

    def frequency(self, p: Partition) -> float:
        return self.counts.get(p, 0) / self.n_samples

    def frequencies(self) -> dict[Partition, float]:
        return {p: c / self.n_samples for p, c in self.counts.items()}

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        """Pool replicates from independent streams; associative and
        commutative, so parallel workers can combine in any order."""
        if self.t != other.t:
            raise ValueError("cannot merge estimates at different horizons")
        counts = dict(self.counts)
        for p, c in other.counts.items():
            counts[p] = counts.get(p, 0) + c
        return EmpiricalDistribution(
            counts,
            self.n_samples + other.n_samples,
            t=self.t,
            seed=None,
            generator=self.generator,
        )


@dataclass
class _Catalog:
    """Flat refinement catalog of one partition state."""

    successors: list[Partition]
    cumulative: np.ndarray
    total: float


def exit_rate(rates: RateSystem, c: Partition) -> float:
    """Total rate of leaving the state c: each block contributes the rate of
    events that split it."""
    if c.ground != rates.ground:
        raise ValueError("partition is not on the rate system's ground set")
    return float(sum(rates.splitting_rate(block) for block in c.blocks))


def _catalog(rates: RateSystem, c: Partition) -> _Catalog:
    cached = rates._catalogs.get(c)
    if cached is None:
        successors: list[Partition] = []
        weights: list[float] = []
        for k, block in enumerate(c.blocks):
            if len(block) == 1:
                continue
            rest = c.blocks[:k] + c.blocks[k + 1 :]
            for sigma, r in sorted(
                rates.marginal(block).items(), key=lambda kv: str(kv[0])
            ):
                if r <= 0.0 or sigma.block_count == 1:
                    continue
                successors.append(Partition(rest + sigma.blocks))
                weights.append(r)
        cumulative = np.cumsum(weights) if weights else np.zeros(0)
        total = float(cumulative[-1]) if weights else 0.0
        cached = _Catalog(successors, cumulative, total)
        rates._catalogs[c] = cached
    return cached


def step(rates: RateSystem, state: ProcessState, rng: np.random.Generator) -> ProcessState:
    """One jump of the chain: exponential waiting time at the exit rate, then
    a block refinement drawn proportionally to its marginal rate.  The result
    strictly refines the input."""
    cat = _catalog(rates, state.current)
    if cat.total <= 0.0:
        raise ValueError(f"state {state.current} is absorbing")
    dt = rng.exponential(1.0 / cat.total)
    k = int(np.searchsorted(cat.cumulative, rng.random() * cat.total, side="right"))
    k = min(k, len(cat.successors) - 1)
    return ProcessState(cat.successors[k], state.time + dt)


def simulate_path(
    rates: RateSystem,
    t_end: float,
    rng: np.random.Generator,
    start: Partition | None = None,
) -> Partition:
    """Value of the chain at t_end, started from the single-block partition
    (or from ``start``)."""
    if t_end < 0:
        raise ValueError("time horizon must be nonnegative")
    current = Partition.whole(rates.ground) if start is None else start
    if current.ground != rates.ground:
        raise ValueError("start partition is not on the ground set")
    t = 0.0
    while True:
        cat = _catalog(rates, current)
        if cat.total <= 0.0:
            return current
        t += rng.exponential(1.0 / cat.total)
        if t > t_end:
            return current
        k = int(np.searchsorted(cat.cumulative, rng.random() * cat.total, side="right"))
        k = min(k, len(cat.successors) - 1)
        current = cat.successors[k]


def estimate_distribution(
    rates: RateSystem,
    t: float,
    n_samples: int,
    seed: int,
    start: Partition | None = None,
) -> EmpiricalDistribution:
    """Relative frequencies over independent replicates of the chain at time t."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = make_rng(seed)
    counts: dict[Partition, int] = {}
    for _ in range(n_samples):
        p = simulate_path(rates, t, rng, start=start)
        counts[p] = counts.get(p, 0) + 1
    return EmpiricalDistribution(counts, n_samples, t=t, seed=seed)


def tv_distance(frequencies: Mapping[Partition, float], reference) -> float:
    """Total variation distance between two distributions on the lattice:
    half the sum of absolute differences."""
    ref = reference.as_dict() if hasattr(reference, "as_dict") else dict(reference)
    keys = set(frequencies) | set(ref)
    return 0.5 * sum(abs(frequencies.get(p, 0.0) - ref.get(p, 0.0)) for p in keys)


@dataclass
class BlockIndependenceReport:
    """Empirical transition probability against the per-block product of
    closed-form factors, with the binomial z-score."""

    start: Partition
    end: Partition
    t: float
    n_samples: int
    empirical: float
    predicted: float
    z_score: float

    def to_json_dict(self) -> dict:
        return {
            "start": str(self.start),
            "end": str(self.end),
            "t": self.t,
            "n_samples": self.n_samples,
            "empirical": self.empirical,
            "predicted": self.predicted,
            "z_score": self.z_score,
        }


def transition_product_check(
    rates: RateSystem,
    c: Partition,
    d: Partition,
    t: float,
    n_samples: int,
    seed: int,
) -> BlockIndependenceReport:
    """Estimate the transition probability from c to d over a horizon t and
    compare it with the product of closed-form block factors.

    The end partition must refine the start; anything else has probability
    zero and is rejected."""
    from recomb.closed_form import build_closed_form

    if not is_refinement(d, c):
        raise ValueError("end partition must refine the start partition")
    if t < 0:
        raise ValueError("time horizon must be nonnegative")
    rng = make_rng(seed)
    hits = 0
    for _ in range(n_samples):
        if simulate_path(rates, t, rng, start=c) == d:
            hits += 1
    empirical = hits / n_samples
    sol = build_closed_form(rates)
    predicted = 1.0
    for block in c.blocks:
        predicted *= sol.evaluate(block, t).value(restrict(d, block))
    se = (predicted * (1.0 - predicted) / n_samples) ** 0.5
    if se > 0:
        z = (empirical - predicted) / se
    else:
        z = 0.0 if empirical == predicted else float("inf")
    return BlockIndependenceReport(c, d, t, n_samples, empirical, predicted, z)
