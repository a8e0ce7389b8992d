from itertools import combinations

import numpy as np
import pytest

from recomb.dynamics import (
    CoefficientVector,
    RateSystem,
    coefficient_rhs,
    default_step,
    integrate_coefficients,
    integrate_measure,
    measure_rhs,
    meet_gain,
    refinement_gain,
)
from recomb.measures import Measure, TypeSpace, mixture, product_measure, tv_deviation
from recomb.partitions import (
    Partition,
    ground_set,
    is_refinement,
    lattice,
    restrict,
)

from conftest import random_rates


def random_probability(n, seed):
    rng = np.random.default_rng(seed)
    lat = lattice(ground_set(n))
    v = rng.random(lat.size)
    return CoefficientVector(ground_set(n), v / v.sum())


class TestRateSystem:
    def test_total(self):
        rates = random_rates(3, seed=0, total=3.0)
        assert rates.total == pytest.approx(3.0)

    def test_negative_rejected(self):
        g = ground_set(2)
        with pytest.raises(ValueError):
            RateSystem(g, {Partition.whole(g): -1.0})

    def test_wrong_ground_rejected(self):
        with pytest.raises(ValueError):
            RateSystem(ground_set(3), {Partition.whole((1, 2)): 1.0})

    def test_marginal_definition(self):
        # induced rates sum the fibers of restriction
        rates = random_rates(4, seed=1)
        for u in [(1, 2), (2, 3, 4), (1, 4)]:
            marg = rates.marginal(u)
            expected = {}
            for p, r in rates.rates.items():
                q = restrict(p, u)
                expected[q] = expected.get(q, 0.0) + r
            assert set(marg) == set(expected)
            for p in marg:
                assert marg[p] == pytest.approx(expected[p], abs=1e-15)

    def test_marginal_total_preserved(self):
        rates = random_rates(4, seed=2)
        for u in [(1,), (1, 3), (2, 3, 4)]:
            assert sum(rates.marginal(u).values()) == pytest.approx(rates.total)

    def test_marginal_of_full_set_is_identity(self):
        rates = random_rates(3, seed=3)
        marg = rates.marginal((1, 2, 3))
        assert marg == rates.rates

    def test_bottom_rate_restricts_to_bottom(self):
        g = ground_set(3)
        rates = RateSystem(g, {Partition.singletons(g): 1.0})
        marg = rates.marginal((1, 2))
        assert marg[Partition.singletons((1, 2))] == pytest.approx(1.0)


class TestGainCoefficients:
    def test_gain_at_top_is_identity(self):
        q = random_probability(3, seed=4)
        top = Partition.whole((1, 2, 3))
        for a in lattice((1, 2, 3)).parts:
            assert refinement_gain(q, a, top) == pytest.approx(q.value(a))
            assert meet_gain(q, a, top) == pytest.approx(q.value(a))

    def test_gain_of_zero_vector(self):
        g = ground_set(3)
        zero = CoefficientVector(g, np.zeros(5))
        a = Partition.singletons(g)
        assert refinement_gain(zero, a, Partition.whole(g)) == 0.0

    def test_gain_zero_off_order(self):
        q = random_probability(3, seed=5)
        a = Partition([[1, 2], [3]])
        b = Partition([[1], [2, 3]])
        assert refinement_gain(q, a, b) == 0.0
        assert meet_gain(q, a, b) == 0.0

    def test_gain_row_sums_to_mass(self):
        q = random_probability(4, seed=6)
        lat = lattice(ground_set(4))
        for b in lat.parts:
            total = sum(refinement_gain(q, a, b) for a in lat.parts)
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_meet_gain_counts_whole_fiber(self):
        # on two sites every partition meets the bottom at the bottom,
        # so the linearized gain there is the full mass
        g = ground_set(2)
        q = CoefficientVector.from_dict(
            g, {Partition.whole(g): 0.5, Partition.singletons(g): 0.5}
        )
        bottom = Partition.singletons(g)
        assert meet_gain(q, bottom, bottom) == pytest.approx(1.0)

    def test_gains_agree_on_singleton_pair_partitions(self):
        # the two gain notions coincide at the top and on two-block
        # partitions with a singleton part
        q = random_probability(4, seed=7)
        g = ground_set(4)
        for a in lattice(g).parts:
            if a.block_count == 2 and min(len(b) for b in a.blocks) == 1:
                assert refinement_gain(q, a, a) == pytest.approx(meet_gain(q, a, a))

    def test_gain_matches_direct_definition(self):
        # brute-force oracle: product over coarse blocks of the mass of
        # partitions restricting like the finer one, scaled by the total
        for n in (2, 3, 4):
            rng = np.random.default_rng(40 + n)
            lat = lattice(ground_set(n))
            q = CoefficientVector(ground_set(n), rng.uniform(0.0, 2.0, lat.size))
            mass = q.values.sum()
            for b in lat.parts:
                for a in lat.parts:
                    if not is_refinement(a, b):
                        continue
                    expected = mass ** (1 - b.block_count)
                    for u in b.blocks:
                        target = restrict(a, u)
                        expected *= sum(
                            q.value(c) for c in lat.parts if restrict(c, u) == target
                        )
                    assert refinement_gain(q, a, b) == pytest.approx(
                        expected, abs=1e-12
                    )

    def test_gain_blockwise_marginal_product(self):
        # the gain factors through the marginals of the coarse blocks
        for n in (2, 3, 4):
            q = random_probability(n, seed=10 + n)
            lat = lattice(ground_set(n))
            for b in lat.parts:
                margs = {u: q.marginal(u) for u in b.blocks}
                for a in lat.parts:
                    if not is_refinement(a, b):
                        continue
                    expected = 1.0
                    for u in b.blocks:
                        expected *= margs[u].value(restrict(a, u))
                    assert refinement_gain(q, a, b) == pytest.approx(
                        expected, abs=1e-13
                    )

    def test_marginal_reduction_relation(self):
        # summing gains over a restriction fiber gives the subsystem gain
        n = 4
        g = ground_set(n)
        q = random_probability(n, seed=17)
        lat = lattice(g)
        for size in (1, 2, 3):
            for u in combinations(g, size):
                sub = lattice(u)
                qu = q.marginal(u)
                for d in lat.parts:
                    b = restrict(d, u)
                    for a in sub.parts:
                        if not is_refinement(a, b):
                            continue
                        total = sum(
                            refinement_gain(q, c, d)
                            for c in lat.parts
                            if is_refinement(c, d) and restrict(c, u) == a
                        )
                        assert total == pytest.approx(
                            refinement_gain(qu, a, b), abs=1e-12
                        )

    def test_negative_vector_rejected(self):
        g = ground_set(2)
        bad = CoefficientVector(g, np.array([0.5, -0.5]))
        with pytest.raises(ValueError):
            refinement_gain(bad, Partition.whole(g), Partition.whole(g))


class TestCoefficientRhs:
    def test_at_initial_condition(self):
        # starting from all mass on the top block, the flow feeds each
        # partition at its own rate
        rates = random_rates(4, seed=8)
        lat = lattice(ground_set(4))
        rhs = coefficient_rhs(CoefficientVector.delta_top(ground_set(4)), rates)
        expected = rates.rate_vector().copy()
        expected[lat.top_index] -= rates.total
        np.testing.assert_allclose(rhs.values, expected, atol=1e-14)

    def test_zero_rates(self):
        g = ground_set(3)
        rates = RateSystem(g, {})
        rhs = coefficient_rhs(random_probability(3, seed=9), rates)
        assert np.all(rhs.values == 0.0)

    def test_entries_sum_to_zero(self):
        rates = random_rates(4, seed=10)
        rhs = coefficient_rhs(random_probability(4, seed=11), rates)
        assert rhs.values.sum() == pytest.approx(0.0, abs=1e-13)

    def test_matches_direct_gain_formula(self):
        rates = random_rates(3, seed=12)
        q = random_probability(3, seed=13)
        lat = lattice(ground_set(3))
        rhs = coefficient_rhs(q, rates)
        for i, a in enumerate(lat.parts):
            direct = -rates.total * q.value(a) + sum(
                refinement_gain(q, a, b) * rates.rate(b)
                for b in lat.parts
                if is_refinement(a, b)
            )
            assert rhs.values[i] == pytest.approx(direct, abs=1e-13)

    def test_top_rate_is_immaterial(self):
        # adding mass on the single-block partition changes nothing
        g = ground_set(3)
        base = random_rates(3, seed=14)
        shifted = dict(base.rates)
        shifted[Partition.whole(g)] = shifted.get(Partition.whole(g), 0.0) + 2.0
        rates2 = RateSystem(g, shifted)
        q = random_probability(3, seed=15)
        np.testing.assert_allclose(
            coefficient_rhs(q, base).values,
            coefficient_rhs(q, rates2).values,
            atol=1e-13,
        )


class TestMeasureRhs:
    def test_product_measure_is_equilibrium(self):
        space = TypeSpace.regular(3, 2)
        nu = product_measure(space, [[0.3, 0.7], [0.5, 0.5], [0.2, 0.8]])
        rates = random_rates(3, seed=16)
        out = measure_rhs(nu, rates)
        assert np.abs(out).max() <= 1e-14

    def test_top_only_rates_give_zero(self):
        g = ground_set(3)
        space = TypeSpace.regular(3, 2)
        rates = RateSystem(g, {Partition.whole(g): 5.0})
        rng = np.random.default_rng(17)
        nu = Measure(space, rng.random((2, 2, 2)))
        assert np.abs(measure_rhs(nu, rates)).max() == 0.0

    def test_entry_sum_zero(self):
        space = TypeSpace.regular(3, 2)
        rng = np.random.default_rng(18)
        nu = Measure(space, rng.random((2, 2, 2)))
        rates = random_rates(3, seed=19)
        assert measure_rhs(nu, rates).sum() == pytest.approx(0.0, abs=1e-13)

    def test_matches_direct_operator_sum(self):
        from recomb.measures import recombinator

        space = TypeSpace.regular(3, 2)
        rng = np.random.default_rng(20)
        nu = Measure(space, rng.random((2, 2, 2)))
        rates = random_rates(3, seed=21)
        direct = np.zeros((2, 2, 2))
        for p, r in rates.rates.items():
            direct += r * (recombinator(p, nu).weights - nu.weights)
        np.testing.assert_allclose(measure_rhs(nu, rates), direct, atol=1e-13)


class TestIntegration:
    def test_zero_rates_constant(self):
        g = ground_set(3)
        rates = RateSystem(g, {})
        a0 = random_probability(3, seed=22)
        traj = integrate_coefficients(rates, a0, np.linspace(0, 2, 5))
        for k in range(5):
            np.testing.assert_array_equal(traj.values[k], a0.values)

    def test_two_site_exact_exponential(self):
        # da/dt(top) = -rho * a(top) has the explicit solution exp(-rho t)
        g = ground_set(2)
        rho = 0.9
        rates = RateSystem(g, {Partition.singletons(g): rho})
        grid = np.linspace(0, 4, 9)
        traj = integrate_coefficients(rates, CoefficientVector.delta_top(g), grid)
        top = lattice(g).top_index
        err = np.abs(traj.values[:, top] - np.exp(-rho * grid)).max()
        assert err < 10 * (traj.step * rho) ** 4

    def test_conservation_over_long_horizon(self):
        rates = random_rates(4, seed=23)
        grid = np.linspace(0, 10, 21)
        traj = integrate_coefficients(
            rates, CoefficientVector.delta_top(ground_set(4)), grid
        )
        assert np.abs(traj.drift).max() < 1e-10

    def test_forward_invariance(self):
        rates = random_rates(4, seed=24)
        grid = np.linspace(0, 10, 21)
        traj = integrate_coefficients(
            rates, CoefficientVector.delta_top(ground_set(4)), grid
        )
        assert traj.values.min() >= -1e-12

    def test_measure_constant_cases(self):
        space = TypeSpace.regular(3, 2)
        nu = product_measure(space, [[0.3, 0.7], [0.5, 0.5], [0.2, 0.8]])
        rates = random_rates(3, seed=25)
        traj = integrate_measure(rates, nu, np.linspace(0, 2, 5))
        for k in range(5):
            np.testing.assert_allclose(traj.tensors[k], nu.weights, atol=1e-12)
        assert np.abs(traj.drift).max() < 1e-12

    def test_equivalence_with_mixture(self):
        # the measure flow equals the coefficient mixture applied to the
        # initial measure, grid point by grid point
        rng = np.random.default_rng(26)
        space = TypeSpace.regular(4, 2)
        w = rng.random((2, 2, 2, 2))
        nu = Measure(space, w / w.sum())
        rates = random_rates(4, seed=27)
        grid = np.array([0.0, 0.1, 1.0, 3.0])
        step = 0.02 / rates.total
        mt = integrate_measure(rates, nu, grid, step=step)
        ct = integrate_coefficients(
            rates, CoefficientVector.delta_top(ground_set(4)), grid, step=step
        )
        for k in range(grid.size):
            dev = tv_deviation(mt.state(k), mixture(ct.state(k), nu))
            assert dev <= 1e-8

    def test_grid_validation(self):
        rates = random_rates(2, seed=28)
        a0 = CoefficientVector.delta_top(ground_set(2))
        with pytest.raises(ValueError):
            integrate_coefficients(rates, a0, [1.0, 2.0])
        with pytest.raises(ValueError):
            integrate_coefficients(rates, a0, [0.0, 0.0, 1.0])

    def test_step_guard(self):
        rates = random_rates(2, seed=29, total=4.0)
        a0 = CoefficientVector.delta_top(ground_set(2))
        with pytest.raises(ValueError):
            integrate_coefficients(rates, a0, [0.0, 1.0], step=1.0)

    def test_default_step_rule(self):
        rates = random_rates(3, seed=30, total=5.0)
        assert default_step(rates, 10.0) == pytest.approx(0.05 / 5.0)

    def test_negative_initial_rejected(self):
        g = ground_set(2)
        rates = random_rates(2, seed=31)
        bad = CoefficientVector(g, np.array([1.2, -0.2]))
        with pytest.raises(ValueError):
            coefficient_rhs(bad, rates)
