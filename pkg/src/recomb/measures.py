"""Finite product type spaces, nonnegative measures as dense tensors, and
the block-product operators driven by partitions.

Weights live in a dense float tensor in row-major mixed-radix order over the
sites in ascending order, so projections and tensor products are exact index
arithmetic.  Measures are value types: every operation is pure and results
are safe to share between threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from recomb.partitions import Partition, as_ground, lattice, meet_of_set

__all__ = [
    "TypeSpace",
    "Measure",
    "norm",
    "tv_deviation",
    "project",
    "recombinator",
    "mixture",
    "invariant_partition_set",
    "uniform_measure",
    "product_measure",
    "measure_to_csv",
    "measure_from_csv",
]

# dense tensors only; keep the full state space well inside memory
MAX_STATES = 1 << 26

_NEG_TOL = 1e-12


@dataclass(frozen=True)
class TypeSpace:
    """A product of finite per-site alphabets, ordered by site index."""

    sites: tuple[int, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sites", as_ground(self.sites))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) != len(self.sites):
            raise ValueError("one alphabet size per site required")
        if any(s < 1 for s in self.sizes):
            raise ValueError("alphabet sizes must be positive")
        if self.n_states > MAX_STATES:
            raise ValueError("state space too large for a dense tensor")

    @classmethod
    def regular(cls, n: int, size: int = 2) -> "TypeSpace":
        return cls(tuple(range(1, n + 1)), (size,) * n)

    @property
    def n_states(self) -> int:
        out = 1
        for s in self.sizes:
            out *= s
        return out

    def axis(self, site: int) -> int:
        return self.sites.index(site)

    def subspace(self, u) -> "TypeSpace":
        g = as_ground(u)
        if not set(g) <= set(self.sites):
            raise ValueError(f"{g} is not a subset of the sites {self.sites}")
        return TypeSpace(g, tuple(self.sizes[self.axis(s)] for s in g))


class Measure:
    """A nonnegative measure on a finite product space, stored densely."""

    __slots__ = ("space", "weights")

    def __init__(self, space: TypeSpace, weights, validate: bool = True):
        w = np.asarray(weights, dtype=float)
        if w.shape != tuple(space.sizes):
            raise ValueError(f"weights must have shape {tuple(space.sizes)}")
        if validate and w.size and w.min() < -_NEG_TOL * max(1.0, abs(w).max()):
            raise ValueError("measure weights must be nonnegative")
        self.space = space
        self.weights = w

    def norm(self) -> float:
        return float(self.weights.sum())

    def __repr__(self) -> str:
        return f"Measure(space={self.space.sites}, norm={self.norm():.6g})"


def norm(nu: Measure) -> float:
    """Total mass; the total variation norm of a nonnegative measure."""
    return nu.norm()


def tv_deviation(a: Measure | np.ndarray, b: Measure | np.ndarray) -> float:
    """Total variation norm of the (signed) difference: sum of |entries|."""
    wa = a.weights if isinstance(a, Measure) else np.asarray(a)
    wb = b.weights if isinstance(b, Measure) else np.asarray(b)
    return float(np.abs(wa - wb).sum())


def project(nu: Measure, u) -> Measure:
    """Marginal over the sites outside u.  Preserves the total mass."""
    g = as_ground(u)
    space = nu.space
    if not set(g) <= set(space.sites):
        raise ValueError(f"{g} is not a subset of the sites {space.sites}")
    drop = tuple(i for i, s in enumerate(space.sites) if s not in g)
    out = nu.weights.sum(axis=drop) if drop else nu.weights.copy()
    return Measure(space.subspace(g), out, validate=False)


def recombinator(a: Partition, nu: Measure) -> Measure:
    """Replace nu by the mass-normalized product of its marginals over the
    blocks of a, in site order.  The zero measure maps to itself."""
    space = nu.space
    if a.ground != space.sites:
        raise ValueError(f"partition ground {a.ground} != sites {space.sites}")
    w = nu.weights
    if w.size and w.min() < -_NEG_TOL * max(1.0, abs(w).max()):
        raise ValueError("recombinator is only defined for nonnegative measures")
    total = float(w.sum())
    if total == 0.0:
        return Measure(space, np.zeros_like(w), validate=False)
    if a.block_count == 1:
        return Measure(space, w.copy(), validate=False)
    scaled = w / total  # unit mass first; a direct total**(1-r) can overflow
    operands: list = []
    for block in a.blocks:
        drop = tuple(i for i, s in enumerate(space.sites) if s not in block)
        operands.append(scaled.sum(axis=drop))
        operands.append([space.axis(s) for s in block])
    out = np.einsum(*operands, list(range(len(space.sites))))
    out *= total
    return Measure(space, out, validate=False)


def mixture(coeffs, nu0: Measure) -> Measure:
    """Weighted combination sum_c coeffs(c) * recombinator(c, nu0).

    Accepts a Partition -> float mapping or any object with an as_dict()
    method producing one.
    """
    items = coeffs.as_dict() if hasattr(coeffs, "as_dict") else dict(coeffs)
    out = np.zeros(tuple(nu0.space.sizes))
    for p, c in items.items():
        if c == 0.0:
            continue
        out += float(c) * recombinator(p, nu0).weights
    return Measure(nu0.space, out, validate=False)


def invariant_partition_set(
    nu: Measure, eps: float = 1e-10
) -> tuple[set[Partition], Partition]:
    """Partitions whose block-product operator fixes nu (relative tolerance
    eps), together with their meet."""
    total = nu.norm()
    if total <= 0.0:
        raise ValueError("invariant partitions are undefined for the zero measure")
    fixed = {
        p
        for p in lattice(nu.space.sites).parts
        if tv_deviation(recombinator(p, nu), nu) <= eps * total
    }
    return fixed, meet_of_set(fixed, nu.space.sites)


def uniform_measure(space: TypeSpace) -> Measure:
    w = np.full(tuple(space.sizes), 1.0 / space.n_states)
    return Measure(space, w, validate=False)


def product_measure(space: TypeSpace, site_weights: Iterable[Iterable[float]]) -> Measure:
    """Tensor product of per-site weight vectors, in site order."""
    vectors = [np.asarray(v, dtype=float) for v in site_weights]
    if len(vectors) != len(space.sites):
        raise ValueError("one weight vector per site required")
    for v, s in zip(vectors, space.sizes):
        if v.shape != (s,):
            raise ValueError("weight vector length must match the alphabet size")
        if v.min() < 0:
            raise ValueError("site weights must be nonnegative")
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return Measure(space, out)


def measure_to_csv(nu: Measure, path) -> None:
    """Flat CSV: one row per state, letter columns (0-based) plus weight."""
    space = nu.space
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{s}" for s in space.sites] + ["weight"])
        flat = nu.weights.reshape(-1)
        for j, coords in enumerate(np.ndindex(*space.sizes)):
            writer.writerow([*coords, format(flat[j], ".17g")])


def measure_from_csv(path) -> Measure:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "weight" or len(header) < 2:
            raise ValueError("expected site columns followed by a weight column")
        sites = tuple(int(name.lstrip("x")) for name in header[:-1])
        rows = [(tuple(int(x) for x in row[:-1]), float(row[-1])) for row in reader]
    if not rows:
        raise ValueError("no states in measure file")
    sizes = tuple(max(c[i] for c, _ in rows) + 1 for i in range(len(sites)))
    space = TypeSpace(sites, sizes)
    if len(rows) != space.n_states:
        raise ValueError("measure file must list every state exactly once")
    w = np.zeros(sizes)
    for coords, value in rows:
        w[coords] = value
    return Measure(space, w)
