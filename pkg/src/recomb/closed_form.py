"""Closed-form solution machinery over the subset lattice.

For each nonempty subset u of the ground set the solver tabulates decay
rates and mixing coefficients so that the coefficient vector at time t is

    a_t(A) = sum_{B coarser than A} coeff(A, B) * exp(-decay(B) * t)

built bottom-up over subsets by the block recursion.  The build requires
all decay rates of a subsystem to be distinct; coincidences are classified
and either reported (harmless: pairs away from the top element, where the
coefficients extend continuously) or fatal (a pair hitting the top decay
rate, which breaks the pure-exponential form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

import numpy as np
from scipy.special import gammainc

from recomb.dynamics import CoefficientVector, RateSystem
from recomb.partitions import Partition, as_ground, lattice

__all__ = [
    "DEGENERACY_TOL",
    "DegeneracyPair",
    "DegeneracyReport",
    "DegeneracyError",
    "NonInvertibleError",
    "ClosedFormSolution",
    "marginal_rates",
    "marginal_vector",
    "decay_rate",
    "linear_decay_rate",
    "split_block_count",
    "linear_solution",
    "rates_from_linear_decay",
    "detect_degeneracy",
    "build_closed_form",
    "exp_convolution",
    "exp_monomial_convolution",
]

DEGENERACY_TOL = 1e-9
MAX_MONOMIAL_ORDER = 20

_DIAG_TOL = 1e-12


class NonInvertibleError(RuntimeError):
    """The coefficient table has a vanishing diagonal entry."""


@dataclass(frozen=True)
class DegeneracyPair:
    subset: tuple[int, ...]
    a: Partition
    b: Partition
    value_a: float
    value_b: float
    classification: str  # "bad" | "harmless"


@dataclass
class DegeneracyReport:
    """Coinciding decay-rate pairs per subsystem, smallest subsystem first."""

    pairs: list[DegeneracyPair] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return bool(self.pairs)

    @property
    def has_bad(self) -> bool:
        return any(p.classification == "bad" for p in self.pairs)

    def to_json_dict(self) -> dict:
        return {
            "degenerate": self.degenerate,
            "bad": self.has_bad,
            "pairs": [
                {
                    "subset": ",".join(str(x) for x in p.subset),
                    "a": str(p.a),
                    "b": str(p.b),
                    "decay_a": p.value_a,
                    "decay_b": p.value_b,
                    "classification": p.classification,
                }
                for p in self.pairs
            ],
        }


class DegeneracyError(RuntimeError):
    """Raised when a decay rate collides with the top decay rate."""

    def __init__(self, report: DegeneracyReport):
        bad = [p for p in report.pairs if p.classification == "bad"]
        super().__init__(
            f"{len(bad)} bad decay-rate coincidence(s); closed form unavailable"
        )
        self.report = report


def _subsets(ground: tuple[int, ...]):
    """All nonempty subsets, smallest first, lexicographic within a size."""
    for size in range(1, len(ground) + 1):
        yield from combinations(ground, size)


def marginal_rates(rates: RateSystem, u) -> dict[Partition, float]:
    """Rates induced on the subsystem u; their total equals the full total."""
    return rates.marginal(u)


def marginal_vector(q: CoefficientVector, u) -> CoefficientVector:
    """Marginal of a coefficient vector: sums over restriction fibers."""
    return q.marginal(u)


def _top_decay(rates: RateSystem, u: tuple[int, ...]) -> float:
    """Decay rate of the single-block partition of u: total rate minus the
    marginal rate of staying whole."""
    marg = rates.marginal(u)
    return rates.total - marg.get(Partition.whole(u), 0.0)


def decay_rate(rates: RateSystem, u, a: Partition) -> float:
    """Total transition rate out of a partition state: additive over blocks,
    each block contributing the rate of events that split it."""
    g = as_ground(u)
    if a.ground != g:
        raise ValueError("partition is not on the requested subset")
    if not set(g) <= set(rates.ground):
        raise ValueError("subset is not inside the ground set")
    return float(sum(_top_decay(rates, block) for block in a.blocks))


def linear_decay_rate(rates: RateSystem, u, a: Partition) -> float:
    """Decay rate of the linearized system: marginal rate mass outside the
    interval from a to the top."""
    g = as_ground(u)
    if a.ground != g:
        raise ValueError("partition is not on the requested subset")
    marg = rates.marginal(g)
    kept = sum(r for p, r in marg.items() if a.refines(p))
    return float(rates.total - kept)


def split_block_count(a: Partition, b: Partition) -> int:
    """Number of blocks of a that b separates; zero iff b is coarser than a.

    The decay rate satisfies
    decay(a) = sum_b split_block_count(a, b) * rate(b)."""
    if a.ground != b.ground:
        raise ValueError("ground-set mismatch")
    owner: dict[int, int] = {}
    for k, block in enumerate(b.blocks):
        for x in block:
            owner[x] = k
    return sum(1 for block in a.blocks if len({owner[x] for x in block}) > 1)


def linear_solution(rates: RateSystem, u, t: float) -> CoefficientVector:
    """Solution of the linearized system at time t, as a probability vector.

    Evaluated through the Moebius form over interval-complement decay rates;
    the defining sum over subsets of the lattice serves as a test oracle.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    g = as_ground(u)
    lat = lattice(g)
    rvec = rates.rate_vector(g)
    chi = rates.total - lat.finer.astype(float) @ rvec
    vals = lat.mobius_matrix @ np.exp(-chi * t)
    return CoefficientVector(g, vals)


def rates_from_linear_decay(
    chi_table: Mapping[Partition, float], rho_total: float, u
) -> dict[Partition, float]:
    """Invert the linear decay rates back to rates by upper Moebius inversion.

    The top-element rate is not determined by the decay rates; it is fixed
    by the supplied total."""
    g = as_ground(u)
    lat = lattice(g)
    if set(chi_table) != set(lat.parts):
        raise ValueError("decay table must cover every partition of the subset")
    chi = np.array([chi_table[p] for p in lat.parts])
    vals = -(lat.mobius_matrix @ chi)
    vals[lat.top_index] += rho_total
    return {p: float(vals[i]) for i, p in enumerate(lat.parts)}


def _decay_tables(rates: RateSystem) -> dict[tuple[int, ...], np.ndarray]:
    ground = rates.ground
    tops = {u: _top_decay(rates, u) for u in _subsets(ground)}
    tables: dict[tuple[int, ...], np.ndarray] = {}
    for u in _subsets(ground):
        lat = lattice(u)
        tables[u] = np.array(
            [sum(tops[block] for block in p.blocks) for p in lat.parts]
        )
    return tables


def _scan_degeneracies(
    rates: RateSystem, decay: dict[tuple[int, ...], np.ndarray], tol_abs: float
) -> DegeneracyReport:
    """Pairwise coincidence scan.  A pair hitting the top decay rate is bad
    exactly when rate mass sits strictly between the partition and the top;
    the coefficient column then cannot vanish and monomial terms would be
    needed.  All other coincidences leave the exponential ansatz intact."""
    report = DegeneracyReport()
    for u, psi in decay.items():
        lat = lattice(u)
        if lat.size < 2:
            continue
        top = lat.top_index
        rvec = rates.rate_vector(u)
        finer = lat.finer
        # mass of the upward interval [B, top), per partition B
        interval_mass = finer.astype(float) @ rvec - rvec[top]
        close = np.abs(psi[:, None] - psi[None, :]) <= tol_abs
        for i in range(lat.size):
            for j in range(i + 1, lat.size):
                if not close[i, j]:
                    continue
                if top in (i, j):
                    other = i if j == top else j
                    kind = "bad" if interval_mass[other] > 0.0 else "harmless"
                else:
                    kind = "harmless"
                report.pairs.append(
                    DegeneracyPair(
                        u, lat.parts[i], lat.parts[j],
                        float(psi[i]), float(psi[j]), kind,
                    )
                )
    return report


def detect_degeneracy(rates: RateSystem, tol: float = DEGENERACY_TOL) -> DegeneracyReport:
    """List all decay-rate coincidences, classified bad or harmless.

    Comparison is relative to max(rho_total, 1)."""
    decay = _decay_tables(rates)
    return _scan_degeneracies(rates, decay, tol * max(rates.total, 1.0))


class ClosedFormSolution:
    """Per-subset decay and coefficient tables with O(1) evaluation.

    Immutable once built; evaluation is pure.  Inverse coefficient tables
    are filled in lazily and cached.
    """

    def __init__(self, rates, decay, coeff, report):
        self.rates: RateSystem = rates
        self._decay: dict[tuple[int, ...], np.ndarray] = decay
        self._coeff: dict[tuple[int, ...], np.ndarray] = coeff
        self.report: DegeneracyReport = report
        self._inverse: dict[tuple[int, ...], np.ndarray] = {}

    def _key(self, u) -> tuple[int, ...]:
        g = as_ground(u)
        if g not in self._coeff:
            raise ValueError(f"no table for subset {g}")
        return g

    def decay_table(self, u) -> np.ndarray:
        return self._decay[self._key(u)]

    def decay(self, u, a: Partition) -> float:
        g = self._key(u)
        return float(self._decay[g][lattice(g).index[a]])

    def coefficient_table(self, u) -> np.ndarray:
        return self._coeff[self._key(u)]

    def coefficient(self, u, a: Partition, b: Partition) -> float:
        g = self._key(u)
        lat = lattice(g)
        return float(self._coeff[g][lat.index[a], lat.index[b]])

    def evaluate(self, u, t: float) -> CoefficientVector:
        """The probability vector at time t on the subsystem u."""
        if t < 0:
            raise ValueError("time must be nonnegative")
        g = self._key(u)
        vals = self._coeff[g] @ np.exp(-self._decay[g] * t)
        return CoefficientVector(g, vals)

    def inverse_table(self, u) -> np.ndarray:
        """Inverse of the coefficient table in the incidence algebra."""
        g = self._key(u)
        cached = self._inverse.get(g)
        if cached is None:
            self._inverse[g] = cached = _invert_incidence(g, self._coeff[g])
        return cached

    def inverse_coefficient(self, u, a: Partition, b: Partition) -> float:
        g = self._key(u)
        lat = lattice(g)
        return float(self.inverse_table(g)[lat.index[a], lat.index[b]])

    def decoupled_coefficient(self, u, a: Partition, t: float) -> float:
        """Inverse-transformed coefficient; decays as a pure exponential
        exp(-decay(a) * t)."""
        g = self._key(u)
        lat = lattice(g)
        row = self.inverse_table(g)[lat.index[a]]
        return float(row @ self.evaluate(g, t).values)

    def recovered_rates(self, u) -> dict[Partition, float]:
        """Rates reconstructed from decay rates and coefficients; round-trips
        with the marginal input rates."""
        g = self._key(u)
        lat = lattice(g)
        vals = -(self._coeff[g] @ self._decay[g])
        vals[lat.top_index] += self.rates.total
        return {p: float(vals[i]) for i, p in enumerate(lat.parts)}

    def to_json_dict(self) -> dict:
        out = {
            "ground": ",".join(str(x) for x in self.rates.ground),
            "rho_total": self.rates.total,
            "degeneracy": self.report.to_json_dict(),
            "subsets": {},
        }
        for u, psi in self._decay.items():
            lat = lattice(u)
            theta = self._coeff[u]
            key = ",".join(str(x) for x in u)
            rows = {}
            for i, a in enumerate(lat.parts):
                nz = {
                    str(lat.parts[j]): theta[i, j]
                    for j in range(lat.size)
                    if theta[i, j] != 0.0
                }
                rows[str(a)] = nz
            out["subsets"][key] = {
                "decay": {str(p): float(psi[i]) for i, p in enumerate(lat.parts)},
                "coeff": rows,
            }
        return out


def _invert_incidence(ground: tuple[int, ...], theta: np.ndarray) -> np.ndarray:
    lat = lattice(ground)
    diag = np.diag(theta)
    scale = max(1.0, float(np.abs(theta).max()))
    if np.abs(diag).min() <= _DIAG_TOL * scale:
        raise NonInvertibleError(
            "coefficient table has a vanishing diagonal entry; "
            "inverse requires positive rates on all two-block partitions"
        )
    finer = lat.finer
    eta = np.zeros_like(theta)
    order = np.argsort(lat.block_counts, kind="stable")  # coarsest first
    for i in order:
        eta[i, i] = 1.0 / diag[i]
        for j in np.nonzero(finer[i])[0]:
            if j == i:
                continue
            between = finer[i] & finer[:, j]
            between[i] = False
            s = theta[i, between] @ eta[between, j]
            eta[i, j] = -s / diag[i]
    return eta


def build_closed_form(
    rates: RateSystem, tol_degeneracy: float = DEGENERACY_TOL
) -> ClosedFormSolution:
    """Build decay and coefficient tables for every nonempty subset.

    Raises DegeneracyError when a decay rate collides with the top decay
    rate of its subsystem (the pure-exponential form then fails).  Harmless
    coincidences are attached to the returned solution's report; the
    coefficients extend continuously there.
    """
    ground = rates.ground
    tol_abs = tol_degeneracy * max(rates.total, 1.0)
    decay = _decay_tables(rates)
    report = _scan_degeneracies(rates, decay, tol_abs)
    if report.has_bad:
        raise DegeneracyError(report)
    # distinctness is inherited downward from the full system: a collision in
    # a subsystem forces one with the identical decay gap at the top level
    if report.pairs and not any(p.subset == ground for p in report.pairs):
        raise AssertionError(
            "subsystem decay collision without a top-level one; "
            "marginal rates are inconsistent"
        )

    coeff: dict[tuple[int, ...], np.ndarray] = {}
    for u in _subsets(ground):
        lat = lattice(u)
        B = lat.size
        theta = np.zeros((B, B))
        if B == 1:
            theta[0, 0] = 1.0
            coeff[u] = theta
            continue
        psi = decay[u]
        top = lat.top_index
        finer = lat.finer
        rvec = rates.rate_vector(u)
        psi_top = psi[top]
        for jb in range(B):
            if jb == top:
                continue
            if abs(psi_top - psi[jb]) <= tol_abs:
                # harmless top collision: no rate mass in [B, top), so the
                # whole column vanishes and the exponential set stays valid
                continue
            col = np.zeros(B)
            for jc in np.nonzero(finer[jb])[0]:
                if jc == top or rvec[jc] == 0.0:
                    continue
                prod = np.ones(B)
                for block in lat.parts[jc].blocks:
                    ridx = lat.restriction_index(block)
                    sub = coeff[block]
                    prod *= sub[:, ridx[jb]][ridx]
                col += rvec[jc] * prod
            theta[:, jb] = np.where(finer[:, jb], col / (psi_top - psi[jb]), 0.0)
        theta[:, top] = -theta.sum(axis=1)
        theta[top, top] = 1.0
        coeff[u] = theta
    return ClosedFormSolution(rates, decay, coeff, report)


def exp_convolution(alpha: float, beta: float, t: float) -> float:
    """Convolution of two exponential decays:
    integral_0^t exp(-beta*s) exp(-alpha*(t-s)) ds.

    Equals (exp(-beta t) - exp(-alpha t)) / (alpha - beta) away from the
    diagonal and t*exp(-alpha t) on it; symmetric in the two rates.
    """
    if alpha < 0 or beta < 0 or t < 0:
        raise ValueError("rates and time must be nonnegative")
    hi, lo = (alpha, beta) if alpha >= beta else (beta, alpha)
    d = hi - lo
    if d == 0.0:
        return t * math.exp(-hi * t)
    z = d * t
    if z < 1e-5:
        # short series of (1 - exp(-z)) / z; avoids cancellation near the diagonal
        series = 1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0
        return t * math.exp(-lo * t) * series
    return math.exp(-lo * t) * (-math.expm1(-z)) / d


def exp_monomial_convolution(rho: float, sigma: float, m: int, t: float) -> float:
    """Convolution of a monomial-weighted decay with an exponential decay:
    exp(-rho*t) * integral_0^t s^m / m! * exp((rho - sigma) s) ds.

    Order zero agrees with exp_convolution.  The monomial order is capped;
    nested degenerate solutions beyond that are out of scope.
    """
    if rho < 0 or sigma < 0 or t < 0:
        raise ValueError("rates and time must be nonnegative")
    m = int(m)
    if m < 0:
        raise ValueError("monomial order must be nonnegative")
    if m > MAX_MONOMIAL_ORDER:
        raise ValueError(f"monomial order capped at {MAX_MONOMIAL_ORDER}")
    if t == 0.0:
        return 0.0
    d = rho - sigma
    if d == 0.0:
        return t ** (m + 1) / math.factorial(m + 1) * math.exp(-rho * t)
    z = d * t
    if z >= 30.0:
        # alternating closed form; terms decay by factor <= m/z < 1 here
        acc = (-1.0) ** (m + 1) * math.exp(-rho * t) / d ** (m + 1)
        for ell in range(m + 1):
            acc += (
                (-1.0) ** ell
                * t ** (m - ell)
                / (math.factorial(m - ell) * d ** (ell + 1))
                * math.exp(-sigma * t)
            )
        return acc
    if z > -1.0:
        # series around the diagonal; all terms positive for z > 0
        base = 1.0
        acc = 1.0 / (m + 1)
        for j in range(1, 500):
            base *= z / j
            term = base / (m + j + 1)
            acc += term
            if abs(term) <= 1e-18 * abs(acc):
                break
        return math.exp(-rho * t) * t ** (m + 1) / math.factorial(m) * acc
    # d < 0 with a large argument: regularized lower incomplete gamma
    x = -z
    return math.exp(-rho * t) * float(gammainc(m + 1, x)) / (-d) ** (m + 1)
