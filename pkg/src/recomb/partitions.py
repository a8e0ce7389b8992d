"""Set partitions of a finite ground set and their refinement lattice.

Partitions are stored in canonical block form: each block is a sorted tuple
of site labels and blocks are ordered by their smallest element.  Partitions
of subsets keep the original site labels, so moving between a system and its
subsystems never relabels anything.

Text format used in configs and CSV keys: blocks joined by ``|``, elements
by ``,``, e.g. ``1,2|3,4``.  Whitespace is ignored.

All objects here are immutable after construction and safe to share across
threads; the per-ground-set cache is at worst rebuilt on a race.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Partition",
    "ground_set",
    "bell_number",
    "count_two_block",
    "enumerate_partitions",
    "is_refinement",
    "meet",
    "meet_of_set",
    "restrict",
    "join_disjoint",
    "mobius",
    "parse_partition",
    "Lattice",
    "lattice",
    "IncidenceElement",
    "convolve",
    "delta_element",
    "zeta_element",
    "mobius_element",
]


def ground_set(n: int) -> tuple[int, ...]:
    """The ground set {1, ..., n}."""
    if n < 1:
        raise ValueError("ground set must have at least one site")
    return tuple(range(1, n + 1))


def as_ground(elements) -> tuple[int, ...]:
    """Validate and normalize a ground set: nonempty, strictly increasing ints."""
    g = tuple(int(x) for x in elements)
    if not g:
        raise ValueError("ground set must be nonempty")
    if any(a >= b for a, b in zip(g, g[1:])):
        raise ValueError(f"ground set must be strictly increasing, got {g}")
    return g


class Partition:
    """A set partition in canonical form; equality and hashing are structural."""

    __slots__ = ("blocks", "_ground", "_hash")

    def __init__(self, blocks: Iterable[Iterable[int]]):
        canon = sorted(tuple(sorted(int(x) for x in block)) for block in blocks)
        if not canon:
            raise ValueError("a partition needs at least one block")
        seen: set[int] = set()
        for block in canon:
            if not block:
                raise ValueError("blocks must be nonempty")
            for x in block:
                if x in seen:
                    raise ValueError(f"site {x} appears in more than one block")
                seen.add(x)
        self.blocks: tuple[tuple[int, ...], ...] = tuple(canon)
        self._ground = tuple(sorted(seen))
        self._hash = hash(self.blocks)

    @classmethod
    def _from_canonical(cls, blocks, ground) -> "Partition":
        self = object.__new__(cls)
        self.blocks = blocks
        self._ground = ground
        self._hash = hash(blocks)
        return self

    @classmethod
    def singletons(cls, ground) -> "Partition":
        """The finest partition (all blocks of size one)."""
        g = as_ground(ground)
        return cls._from_canonical(tuple((x,) for x in g), g)

    @classmethod
    def whole(cls, ground) -> "Partition":
        """The coarsest partition (a single block)."""
        g = as_ground(ground)
        return cls._from_canonical((g,), g)

    @property
    def ground(self) -> tuple[int, ...]:
        return self._ground

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    def refines(self, other: "Partition") -> bool:
        return is_refinement(self, other)

    def restrict(self, u) -> "Partition":
        return restrict(self, u)

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return "|".join(",".join(str(x) for x in block) for block in self.blocks)

    def __repr__(self) -> str:
        return f"Partition({self})"


def parse_partition(text: str, ground) -> Partition:
    """Parse the ``1,2|3,4`` text format against a declared ground set.

    Rejects duplicates and missing sites relative to the ground set.
    """
    g = as_ground(ground)
    compact = "".join(text.split())
    if not compact:
        raise ValueError("empty partition string")
    blocks = []
    for chunk in compact.split("|"):
        if not chunk:
            raise ValueError(f"empty block in partition string {text!r}")
        try:
            blocks.append([int(x) for x in chunk.split(",")])
        except ValueError as exc:
            raise ValueError(f"bad partition string {text!r}") from exc
    p = Partition(blocks)
    if p.ground != g:
        raise ValueError(
            f"partition {text!r} does not cover the ground set {g} exactly"
        )
    return p


_BELL: list[int] = [1]


def bell_number(n: int) -> int:
    """Number of partitions of an n-set, by the standard binomial recursion."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    while len(_BELL) <= n:
        m = len(_BELL) - 1
        _BELL.append(sum(comb(m, k) * _BELL[k] for k in range(m + 1)))
    return _BELL[n]


def count_two_block(n: int) -> int:
    """Number of partitions of an n-set into exactly two blocks: 2^(n-1) - 1."""
    if n < 1:
        raise ValueError("n must be positive")
    return 2 ** (n - 1) - 1


def _iter_rgs(ground: tuple[int, ...]):
    """Yield canonical partitions in lexicographic restricted-growth-string order."""
    n = len(ground)
    labels = [0] * n

    def rec(i: int, m: int):
        if i == n:
            blocks: list[list[int]] = [[] for _ in range(m)]
            for pos, lab in enumerate(labels):
                blocks[lab].append(ground[pos])
            yield Partition._from_canonical(
                tuple(tuple(b) for b in blocks), ground
            )
            return
        for v in range(m + 1):
            labels[i] = v
            yield from rec(i + 1, m + 1 if v == m else m)

    yield from rec(0, 0)


def enumerate_partitions(ground) -> list[Partition]:
    """All partitions of the ground set, in restricted-growth-string order."""
    return list(lattice(as_ground(ground)).parts)


def _check_same_ground(a: Partition, b: Partition) -> None:
    if a.ground != b.ground:
        raise ValueError(f"ground-set mismatch: {a.ground} vs {b.ground}")


def is_refinement(a: Partition, b: Partition) -> bool:
    """True iff every block of a is contained in some block of b."""
    _check_same_ground(a, b)
    owner: dict[int, int] = {}
    for k, block in enumerate(b.blocks):
        for x in block:
            owner[x] = k
    for block in a.blocks:
        k = owner[block[0]]
        if any(owner[x] != k for x in block[1:]):
            return False
    return True


def meet(a: Partition, b: Partition) -> Partition:
    """Coarsest common refinement: all nonempty pairwise block intersections."""
    _check_same_ground(a, b)
    owner: dict[int, int] = {}
    for k, block in enumerate(b.blocks):
        for x in block:
            owner[x] = k
    blocks = []
    for block in a.blocks:
        groups: dict[int, list[int]] = {}
        for x in block:
            groups.setdefault(owner[x], []).append(x)
        blocks.extend(groups.values())
    return Partition(blocks)


def meet_of_set(partitions: Iterable[Partition], ground) -> Partition:
    """Iterated meet; the empty collection yields the coarsest partition."""
    g = as_ground(ground)
    result = Partition.whole(g)
    for p in partitions:
        if p.ground != g:
            raise ValueError(f"ground-set mismatch: {p.ground} vs {g}")
        result = meet(result, p)
    return result


def restrict(a: Partition, u) -> Partition:
    """The induced partition of a nonempty subset u: nonempty traces of blocks."""
    g = as_ground(u)
    if not set(g) <= set(a.ground):
        raise ValueError(f"{g} is not a subset of the ground set {a.ground}")
    keep = set(g)
    blocks = [tuple(x for x in block if x in keep) for block in a.blocks]
    return Partition(b for b in blocks if b)


def join_disjoint(parts: Iterable[Partition]) -> Partition:
    """Combine partitions of pairwise disjoint ground sets into one partition."""
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one partition to join")
    blocks: list[tuple[int, ...]] = []
    seen: set[int] = set()
    for p in parts:
        if seen & set(p.ground):
            raise ValueError("ground sets overlap")
        seen.update(p.ground)
        blocks.extend(p.blocks)
    return Partition(blocks)


class Lattice:
    """Enumeration, order, meet and Moebius tables for one ground set.

    Heavy tables are built lazily and kept for the lifetime of the cache
    entry; everything is read-only after construction.
    """

    def __init__(self, ground: tuple[int, ...]):
        self.ground = ground
        self.parts: tuple[Partition, ...] = tuple(_iter_rgs(ground))
        self.size = len(self.parts)
        self.index: dict[Partition, int] = {p: i for i, p in enumerate(self.parts)}
        self.top_index = self.index[Partition.whole(ground)]
        self.bottom_index = self.index[Partition.singletons(ground)]
        self.block_counts = np.array([p.block_count for p in self.parts])
        self._finer: np.ndarray | None = None
        self._meet_table: np.ndarray | None = None
        self._mobius: np.ndarray | None = None
        self._restrict_index: dict[tuple[int, ...], np.ndarray] = {}
        self._marginal_matrix: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def finer(self) -> np.ndarray:
        """Boolean matrix: finer[i, j] iff parts[i] refines parts[j]."""
        if self._finer is None:
            B = self.size
            f = np.zeros((B, B), dtype=bool)
            for i, a in enumerate(self.parts):
                for j, b in enumerate(self.parts):
                    f[i, j] = is_refinement(a, b)
            self._finer = f
        return self._finer

    @property
    def meet_table(self) -> np.ndarray:
        """meet_table[i, j] = index of parts[i] meet parts[j]."""
        if self._meet_table is None:
            B = self.size
            m = np.zeros((B, B), dtype=np.int64)
            for i in range(B):
                m[i, i] = i
                for j in range(i + 1, B):
                    k = self.index[meet(self.parts[i], self.parts[j])]
                    m[i, j] = m[j, i] = k
            self._meet_table = m
        return self._meet_table

    @property
    def mobius_matrix(self) -> np.ndarray:
        """Integer matrix of the Moebius function, the inverse of zeta.

        Computed by the memoized interval recursion; zero outside the order.
        """
        if self._mobius is None:
            finer = self.finer
            B = self.size
            mob = np.zeros((B, B), dtype=np.int64)
            # process coarser elements after all strictly finer ones
            order = np.argsort(-self.block_counts, kind="stable")
            for i in range(B):
                mob[i, i] = 1
                for j in order:
                    if j == i or not finer[i, j]:
                        continue
                    inside = finer[i] & finer[:, j]
                    inside[j] = False
                    mob[i, j] = -int(mob[i, inside].sum())
            self._mobius = mob
        return self._mobius

    def zeta_matrix(self) -> np.ndarray:
        return self.finer.astype(float)

    def restriction_index(self, u) -> np.ndarray:
        """restriction_index(u)[j] = index of parts[j] restricted to u, in lattice(u)."""
        g = as_ground(u)
        cached = self._restrict_index.get(g)
        if cached is None:
            sub = lattice(g)
            cached = np.array(
                [sub.index[restrict(p, g)] for p in self.parts], dtype=np.int64
            )
            self._restrict_index[g] = cached
        return cached

    def marginal_matrix(self, u) -> np.ndarray:
        """0/1 matrix sending a vector on this lattice to its marginal on lattice(u)."""
        g = as_ground(u)
        cached = self._marginal_matrix.get(g)
        if cached is None:
            sub = lattice(g)
            ridx = self.restriction_index(g)
            m = np.zeros((sub.size, self.size))
            m[ridx, np.arange(self.size)] = 1.0
            self._marginal_matrix[g] = cached = m
        return cached


@lru_cache(maxsize=None)
def lattice(ground: tuple[int, ...]) -> Lattice:
    return Lattice(as_ground(ground))


def mobius(a: Partition, b: Partition) -> int:
    """Moebius function of the refinement order; zero unless a refines b."""
    _check_same_ground(a, b)
    lat = lattice(a.ground)
    return int(lat.mobius_matrix[lat.index[a], lat.index[b]])


class IncidenceElement:
    """A real function on ordered pairs a <= b of partitions, stored densely.

    Entries outside the refinement order are forced to zero.
    """

    __slots__ = ("ground", "matrix")

    def __init__(self, ground, matrix):
        lat = lattice(as_ground(ground))
        m = np.asarray(matrix, dtype=float)
        if m.shape != (lat.size, lat.size):
            raise ValueError(f"matrix must be {lat.size}x{lat.size}")
        self.ground = lat.ground
        self.matrix = np.where(lat.finer, m, 0.0)

    @classmethod
    def from_pairs(
        cls, ground, pairs: Mapping[tuple[Partition, Partition], float]
    ) -> "IncidenceElement":
        lat = lattice(as_ground(ground))
        m = np.zeros((lat.size, lat.size))
        for (a, b), v in pairs.items():
            if not is_refinement(a, b):
                if v != 0:
                    raise ValueError(f"nonzero value on non-comparable pair ({a}, {b})")
                continue
            m[lat.index[a], lat.index[b]] = v
        return cls(ground, m)

    def value(self, a: Partition, b: Partition) -> float:
        lat = lattice(self.ground)
        return float(self.matrix[lat.index[a], lat.index[b]])


def _check_element_grounds(x: IncidenceElement, y: IncidenceElement) -> None:
    if x.ground != y.ground:
        raise ValueError("ground-set mismatch")


def convolve(x: IncidenceElement, y: IncidenceElement) -> IncidenceElement:
    """Incidence-algebra convolution: sum over the interval [a, b]."""
    _check_element_grounds(x, y)
    return IncidenceElement(x.ground, x.matrix @ y.matrix)


def delta_element(ground) -> IncidenceElement:
    lat = lattice(as_ground(ground))
    return IncidenceElement(ground, np.eye(lat.size))


def zeta_element(ground) -> IncidenceElement:
    lat = lattice(as_ground(ground))
    return IncidenceElement(ground, lat.zeta_matrix())


def mobius_element(ground) -> IncidenceElement:
    lat = lattice(as_ground(ground))
    return IncidenceElement(ground, lat.mobius_matrix.astype(float))
