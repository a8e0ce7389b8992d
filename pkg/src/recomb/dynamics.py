"""The nonlinear dynamics on coefficient vectors over the partition lattice
and on measures, with a fixed-step 4th-order integrator as numerical oracle.

The coefficient system:

    da/dt (A) = -rho_total * a(A) + sum_{B coarser than A} gain(a; A, B) * rate(B)

where the gain factor is the blockwise marginal product defined below.  The
measure system applies block-product operators instead.  Both right-hand
sides are compiled once per rate system into a stacked-marginal gather
program so integration stays cheap at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from recomb.measures import Measure, TypeSpace
from recomb.partitions import (
    Partition,
    as_ground,
    is_refinement,
    lattice,
    restrict,
)

__all__ = [
    "RateSystem",
    "CoefficientVector",
    "CoefficientTrajectory",
    "MeasureTrajectory",
    "refinement_gain",
    "meet_gain",
    "coefficient_rhs",
    "measure_rhs",
    "integrate_coefficients",
    "integrate_measure",
    "default_step",
]

_NEG_TOL = 1e-8
MAX_STEP_FRACTION = 0.25  # step * rho_total must stay below this


class RateSystem:
    """Nonnegative recombination rates on the partitions of a ground set.

    Immutable by convention; derived tables (marginal rates per subset,
    compiled right-hand sides, simulation catalogs) are cached on first use.
    """

    __slots__ = (
        "ground",
        "rates",
        "total",
        "_marginals",
        "_splitting",
        "_coeff_program",
        "_measure_programs",
        "_catalogs",
    )

    def __init__(self, ground, rates: Mapping[Partition, float]):
        g = as_ground(ground)
        clean: dict[Partition, float] = {}
        for p, r in rates.items():
            if not isinstance(p, Partition):
                raise TypeError("rate keys must be Partition objects")
            if p.ground != g:
                raise ValueError(f"partition {p} is not on the ground set {g}")
            r = float(r)
            if r < 0:
                raise ValueError(f"negative rate for {p}")
            clean[p] = r
        self.ground = g
        self.rates = clean
        self.total = float(sum(clean.values()))
        self._marginals: dict[tuple[int, ...], dict[Partition, float]] = {}
        self._splitting: dict[tuple[int, ...], float] = {}
        self._coeff_program = None
        self._measure_programs: dict[TypeSpace, _GatherProgram] = {}
        self._catalogs: dict[Partition, object] = {}

    @classmethod
    def from_strings(cls, ground, rates: Mapping[str, float]) -> "RateSystem":
        from recomb.partitions import parse_partition

        g = as_ground(ground)
        return cls(g, {parse_partition(k, g): v for k, v in rates.items()})

    def rate(self, p: Partition) -> float:
        return self.rates.get(p, 0.0)

    def support(self) -> list[Partition]:
        return [p for p, r in self.rates.items() if r > 0]

    def marginal(self, u) -> dict[Partition, float]:
        """Rates induced on the subsystem u by summing over restriction fibers."""
        g = as_ground(u)
        cached = self._marginals.get(g)
        if cached is None:
            if not set(g) <= set(self.ground):
                raise ValueError(f"{g} is not a subset of the ground set")
            out: dict[Partition, float] = {}
            for p, r in self.rates.items():
                q = restrict(p, g)
                out[q] = out.get(q, 0.0) + r
            self._marginals[g] = cached = out
        return dict(cached)

    def rate_vector(self, u=None) -> np.ndarray:
        """Marginal rates on u in lattice enumeration order (u defaults to S)."""
        g = self.ground if u is None else as_ground(u)
        lat = lattice(g)
        marg = self.marginal(g)
        vec = np.zeros(lat.size)
        for p, r in marg.items():
            vec[lat.index[p]] = r
        return vec

    def splitting_rate(self, u) -> float:
        """Total rate of events whose partition separates the sites of u."""
        g = as_ground(u)
        cached = self._splitting.get(g)
        if cached is None:
            total = 0.0
            want = set(g)
            for p, r in self.rates.items():
                if r == 0.0:
                    continue
                for block in p.blocks:
                    if g[0] in block:
                        if not want <= set(block):
                            total += r
                        break
            self._splitting[g] = cached = total
        return cached

    def __repr__(self) -> str:
        return f"RateSystem(n={len(self.ground)}, total={self.total:.6g})"


@dataclass
class CoefficientVector:
    """A real vector indexed by the partitions of a ground set."""

    ground: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.ground = as_ground(self.ground)
        lat = lattice(self.ground)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (lat.size,):
            raise ValueError(f"values must have length {lat.size}")
        self.values = v

    @classmethod
    def delta_top(cls, ground) -> "CoefficientVector":
        """The initial condition: all mass on the single-block partition."""
        g = as_ground(ground)
        lat = lattice(g)
        v = np.zeros(lat.size)
        v[lat.top_index] = 1.0
        return cls(g, v)

    @classmethod
    def from_dict(cls, ground, mapping: Mapping[Partition, float]) -> "CoefficientVector":
        g = as_ground(ground)
        lat = lattice(g)
        v = np.zeros(lat.size)
        for p, x in mapping.items():
            v[lat.index[p]] = float(x)
        return cls(g, v)

    def value(self, p: Partition) -> float:
        return float(self.values[lattice(self.ground).index[p]])

    def as_dict(self) -> dict[Partition, float]:
        lat = lattice(self.ground)
        return {p: float(self.values[i]) for i, p in enumerate(lat.parts)}

    def sum(self) -> float:
        return float(self.values.sum())

    def is_probability(self, tol: float = 1e-12) -> bool:
        return bool(self.values.min() >= -tol and abs(self.sum() - 1.0) <= tol)

    def marginal(self, u) -> "CoefficientVector":
        g = as_ground(u)
        m = lattice(self.ground).marginal_matrix(g)
        return CoefficientVector(g, m @ self.values)


def refinement_gain(q: CoefficientVector, a: Partition, b: Partition) -> float:
    """Blockwise marginal product: the gain coefficient of the nonlinear system.

    For a finer than b this is

        ||q||_1 ** (1 - |b|) * prod_i ( sum of q over partitions restricting
                                        to a's trace on the i-th block of b )

    and zero otherwise; it is also zero for the zero vector.  Only defined
    for nonnegative q.
    """
    if q.ground != a.ground or a.ground != b.ground:
        raise ValueError("ground-set mismatch")
    v = q.values
    if v.min() < -_NEG_TOL * max(1.0, abs(v).max()):
        raise ValueError("gain coefficients are only defined for nonnegative vectors")
    if not is_refinement(a, b):
        return 0.0
    total = float(v.sum())
    if total == 0.0:
        return 0.0
    lat = lattice(q.ground)
    out = total ** (1 - b.block_count)
    for block in b.blocks:
        sub = lattice(block)
        target = sub.index[restrict(a, block)]
        out *= float(lat.marginal_matrix(block)[target] @ v)
    return out


def meet_gain(q: CoefficientVector, a: Partition, b: Partition) -> float:
    """Linearized gain: total mass of partitions whose meet with b equals a."""
    if q.ground != a.ground or a.ground != b.ground:
        raise ValueError("ground-set mismatch")
    if not is_refinement(a, b):
        return 0.0
    lat = lattice(q.ground)
    col = lat.meet_table[:, lat.index[b]]
    return float(q.values[col == lat.index[a]].sum())


class _GatherProgram:
    """Compiled right-hand side: one stacked marginalization matmul, one
    gathered block product per supported partition, one weighted reduction.
    """

    __slots__ = ("stack", "gather", "weights", "powers", "total", "width")

    def __init__(self, stack, gather, weights, powers, total, width):
        self.stack = stack      # (Q, N) stacked marginalization matrix
        self.gather = gather    # (K, rmax, N) indices into the extended marginal vector
        self.weights = weights  # (K, N) or (K, 1) rate weights, zero where no gain
        self.powers = powers    # (K,) exponent 1 - block_count for the mass prefactor
        self.total = total      # rho_total
        self.width = width      # N

    def rhs(self, vec: np.ndarray) -> np.ndarray:
        loss = -self.total * vec
        if self.gather.size == 0:
            return loss
        s = float(vec.sum())
        if s <= 0.0:
            return loss
        marg = np.empty(self.stack.shape[0] + 1)
        marg[:-1] = self.stack @ vec
        marg[-1] = 1.0
        prod = marg[self.gather].prod(axis=1)
        scale = s ** self.powers
        gain = ((self.weights * scale[:, None]) * prod).sum(axis=0)
        return gain + loss


def _build_coefficient_program(rates: RateSystem) -> _GatherProgram:
    lat = lattice(rates.ground)
    supported = [(p, r) for p, r in rates.rates.items() if r > 0]
    n_states = lat.size
    if not supported:
        return _GatherProgram(
            np.zeros((0, n_states)),
            np.zeros((0, 0, n_states), dtype=np.int64),
            np.zeros((0, 1)),
            np.zeros(0),
            rates.total,
            n_states,
        )
    blocks = sorted({block for p, _ in supported for block in p.blocks})
    offsets: dict[tuple[int, ...], int] = {}
    rows = []
    q = 0
    for u in blocks:
        m = lat.marginal_matrix(u)
        offsets[u] = q
        rows.append(m)
        q += m.shape[0]
    stack = np.vstack(rows)
    one_slot = q  # extended marginal vector carries a trailing constant 1
    rmax = max(p.block_count for p, _ in supported)
    gather = np.full((len(supported), rmax, n_states), one_slot, dtype=np.int64)
    weights = np.zeros((len(supported), n_states))
    powers = np.zeros(len(supported))
    finer = lat.finer
    for k, (p, r) in enumerate(supported):
        for i, u in enumerate(p.blocks):
            gather[k, i] = offsets[u] + lat.restriction_index(u)
        weights[k] = r * finer[:, lat.index[p]]
        powers[k] = 1 - p.block_count
    return _GatherProgram(stack, gather, weights, powers, rates.total, n_states)


def _coefficient_program(rates: RateSystem) -> _GatherProgram:
    if rates._coeff_program is None:
        rates._coeff_program = _build_coefficient_program(rates)
    return rates._coeff_program


def _build_measure_program(rates: RateSystem, space: TypeSpace) -> _GatherProgram:
    if space.sites != rates.ground:
        raise ValueError("measure sites must match the rate system ground set")
    n_states = space.n_states
    supported = [(p, r) for p, r in rates.rates.items() if r > 0 and p.block_count > 1]
    kept = rates.total - sum(r for _, r in supported)  # identity-acting mass
    if not supported:
        return _GatherProgram(
            np.zeros((0, n_states)),
            np.zeros((0, 0, n_states), dtype=np.int64),
            np.zeros((0, 1)),
            np.zeros(0),
            rates.total - kept,
            n_states,
        )
    coords = np.array(list(np.ndindex(*space.sizes)), dtype=np.int64).T  # (n, N)
    blocks = sorted({block for p, _ in supported for block in p.blocks})
    offsets: dict[tuple[int, ...], int] = {}
    proj_index: dict[tuple[int, ...], np.ndarray] = {}
    rows = []
    q = 0
    for u in blocks:
        axes = [space.axis(s) for s in u]
        sizes_u = tuple(space.sizes[ax] for ax in axes)
        idx = np.ravel_multi_index([coords[ax] for ax in axes], sizes_u)
        proj_index[u] = idx
        n_u = int(np.prod(sizes_u))
        m = np.zeros((n_u, n_states))
        m[idx, np.arange(n_states)] = 1.0
        offsets[u] = q
        rows.append(m)
        q += n_u
    stack = np.vstack(rows)
    one_slot = q
    rmax = max(p.block_count for p, _ in supported)
    gather = np.full((len(supported), rmax, n_states), one_slot, dtype=np.int64)
    weights = np.zeros((len(supported), 1))
    powers = np.zeros(len(supported))
    for k, (p, r) in enumerate(supported):
        for i, u in enumerate(p.blocks):
            gather[k, i] = offsets[u] + proj_index[u]
        weights[k, 0] = r
        powers[k] = 1 - p.block_count
    # single-block rates act as the identity, cancelling part of the loss term
    return _GatherProgram(stack, gather, weights, powers, rates.total - kept, n_states)


def _measure_program(rates: RateSystem, space: TypeSpace) -> _GatherProgram:
    prog = rates._measure_programs.get(space)
    if prog is None:
        rates._measure_programs[space] = prog = _build_measure_program(rates, space)
    return prog


def coefficient_rhs(a: CoefficientVector, rates: RateSystem) -> CoefficientVector:
    """Right-hand side of the induced system on the partition lattice.

    Entries sum to zero for nonnegative input, mirroring mass conservation.
    """
    if a.ground != rates.ground:
        raise ValueError("ground-set mismatch")
    v = a.values
    if v.min() < -_NEG_TOL * max(1.0, abs(v).max()):
        raise ValueError("coefficient vector must be nonnegative")
    return CoefficientVector(a.ground, _coefficient_program(rates).rhs(v))


def measure_rhs(omega: Measure, rates: RateSystem) -> np.ndarray:
    """Right-hand side of the measure-valued system; a signed tensor whose
    entries sum to zero."""
    w = omega.weights
    if w.min() < -_NEG_TOL * max(1.0, abs(w).max()):
        raise ValueError("measure must be nonnegative")
    prog = _measure_program(rates, omega.space)
    return prog.rhs(w.reshape(-1)).reshape(w.shape)


def default_step(rates: RateSystem, span: float) -> float:
    """Default integrator step: 0.05 / rho_total, capped by the grid span."""
    if rates.total <= 0.0:
        return max(span, 1.0) / 8.0
    return min(0.05 / rates.total, max(span, 1e-12))


def _validate_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 1:
        raise ValueError("grid must be a 1-d array of times")
    if g[0] != 0.0:
        raise ValueError("grid must start at 0")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    return g


def _validate_step(step, rates: RateSystem, span: float) -> float:
    if step is None:
        return default_step(rates, span)
    step = float(step)
    if step <= 0:
        raise ValueError("step must be positive")
    if step * rates.total > MAX_STEP_FRACTION + 1e-12:
        raise ValueError(
            f"step {step} too large: step * rho_total must be <= {MAX_STEP_FRACTION}"
        )
    return step


def _rk4(rhs, y0: np.ndarray, grid: np.ndarray, step: float) -> np.ndarray:
    out = np.empty((grid.size,) + y0.shape)
    out[0] = y0
    y = y0.astype(float).copy()
    for k in range(grid.size - 1):
        span = grid[k + 1] - grid[k]
        nsub = max(1, math.ceil(span / step - 1e-12))
        h = span / nsub
        for _ in range(nsub):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


@dataclass
class CoefficientTrajectory:
    """Coefficient states on a time grid, plus the conservation diagnostic."""

    ground: tuple[int, ...]
    times: np.ndarray
    values: np.ndarray  # (T, B)
    step: float = field(default=float("nan"))

    def state(self, k: int) -> CoefficientVector:
        return CoefficientVector(self.ground, self.values[k])

    @property
    def drift(self) -> np.ndarray:
        """Per-grid-point deviation of the entry sum from its initial value.

        Reported, never corrected: conservation is a correctness signal.
        """
        sums = self.values.sum(axis=1)
        return sums - sums[0]


@dataclass
class MeasureTrajectory:
    """Measure states on a time grid, plus the conservation diagnostic."""

    space: TypeSpace
    times: np.ndarray
    tensors: np.ndarray  # (T, *sizes)
    step: float = field(default=float("nan"))

    def state(self, k: int) -> Measure:
        return Measure(self.space, self.tensors[k], validate=False)

    @property
    def drift(self) -> np.ndarray:
        sums = self.tensors.reshape(self.tensors.shape[0], -1).sum(axis=1)
        return sums - sums[0]


def integrate_coefficients(
    rates: RateSystem,
    a0: CoefficientVector,
    grid,
    step: float | None = None,
) -> CoefficientTrajectory:
    """Classical 4th-order fixed-step integration of the coefficient system."""
    if a0.ground != rates.ground:
        raise ValueError("ground-set mismatch")
    g = _validate_grid(grid)
    h = _validate_step(step, rates, float(g[-1] - g[0]) if g.size > 1 else 1.0)
    prog = _coefficient_program(rates)
    values = _rk4(prog.rhs, a0.values, g, h)
    return CoefficientTrajectory(rates.ground, g, values, step=h)


def integrate_measure(
    rates: RateSystem,
    omega0: Measure,
    grid,
    step: float | None = None,
) -> MeasureTrajectory:
    """Fixed-step integration of the measure-valued system."""
    g = _validate_grid(grid)
    h = _validate_step(step, rates, float(g[-1] - g[0]) if g.size > 1 else 1.0)
    prog = _measure_program(rates, omega0.space)
    flat = _rk4(prog.rhs, omega0.weights.reshape(-1), g, h)
    tensors = flat.reshape((g.size,) + tuple(omega0.space.sizes))
    return MeasureTrajectory(omega0.space, g, tensors, step=h)
