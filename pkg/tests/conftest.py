import numpy as np
import pytest
from hypothesis import strategies as st

from recomb.dynamics import RateSystem
from recomb.partitions import Partition, ground_set, lattice


@st.composite
def partition_of(draw, n: int):
    """Random partition of {1..n} via a restricted growth string."""
    ground = ground_set(n)
    labels = [0]
    used = 1
    for _ in range(n - 1):
        v = draw(st.integers(min_value=0, max_value=used))
        labels.append(v)
        used = max(used, v + 1)
    blocks = [[] for _ in range(used)]
    for pos, lab in enumerate(labels):
        blocks[lab].append(ground[pos])
    return Partition(blocks)


def random_rates(n: int, seed: int, total: float = 4.0, low: float = 0.1) -> RateSystem:
    """Strictly positive rates on every partition, normalized to a fixed total."""
    rng = np.random.default_rng(seed)
    lat = lattice(ground_set(n))
    draw = rng.uniform(low, 1.0, lat.size)
    draw *= total / draw.sum()
    return RateSystem(ground_set(n), dict(zip(lat.parts, draw)))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
