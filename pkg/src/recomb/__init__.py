"""Lattice-based solver for the general recombination dynamics on finite type spaces.

Three independent routes to the same object: a recursive closed form over the
partition lattice, fixed-step numerical integration of the nonlinear dynamics,
and exact Monte Carlo simulation of the backward partitioning chain.
"""

from recomb.closed_form import (
    ClosedFormSolution,
    DegeneracyError,
    DegeneracyReport,
    NonInvertibleError,
    build_closed_form,
    decay_rate,
    detect_degeneracy,
    exp_convolution,
    exp_monomial_convolution,
    linear_decay_rate,
    linear_solution,
    marginal_rates,
    marginal_vector,
    rates_from_linear_decay,
    split_block_count,
)
from recomb.dynamics import (
    CoefficientTrajectory,
    CoefficientVector,
    MeasureTrajectory,
    RateSystem,
    coefficient_rhs,
    integrate_coefficients,
    integrate_measure,
    measure_rhs,
    meet_gain,
    refinement_gain,
)
from recomb.measures import (
    Measure,
    TypeSpace,
    invariant_partition_set,
    measure_from_csv,
    measure_to_csv,
    mixture,
    norm,
    product_measure,
    project,
    recombinator,
    tv_deviation,
    uniform_measure,
)
from recomb.partitions import (
    IncidenceElement,
    Lattice,
    Partition,
    bell_number,
    convolve,
    count_two_block,
    delta_element,
    enumerate_partitions,
    ground_set,
    is_refinement,
    join_disjoint,
    lattice,
    meet,
    meet_of_set,
    mobius,
    mobius_element,
    parse_partition,
    restrict,
    zeta_element,
)
from recomb.process import (
    EmpiricalDistribution,
    ProcessState,
    estimate_distribution,
    exit_rate,
    make_rng,
    simulate_path,
    step,
    transition_product_check,
    tv_distance,
)
from recomb.scenario import Scenario, ScenarioError

__all__ = [
    "ClosedFormSolution",
    "CoefficientTrajectory",
    "CoefficientVector",
    "DegeneracyError",
    "DegeneracyReport",
    "EmpiricalDistribution",
    "IncidenceElement",
    "Lattice",
    "Measure",
    "MeasureTrajectory",
    "NonInvertibleError",
    "Partition",
    "ProcessState",
    "RateSystem",
    "Scenario",
    "ScenarioError",
    "TypeSpace",
    "bell_number",
    "build_closed_form",
    "coefficient_rhs",
    "convolve",
    "count_two_block",
    "decay_rate",
    "delta_element",
    "detect_degeneracy",
    "enumerate_partitions",
    "estimate_distribution",
    "exit_rate",
    "exp_convolution",
    "exp_monomial_convolution",
    "ground_set",
    "integrate_coefficients",
    "integrate_measure",
    "invariant_partition_set",
    "is_refinement",
    "join_disjoint",
    "lattice",
    "linear_decay_rate",
    "linear_solution",
    "make_rng",
    "marginal_rates",
    "marginal_vector",
    "measure_from_csv",
    "measure_rhs",
    "measure_to_csv",
    "meet",
    "meet_gain",
    "meet_of_set",
    "mixture",
    "mobius",
    "mobius_element",
    "norm",
    "parse_partition",
    "product_measure",
    "project",
    "rates_from_linear_decay",
    "recombinator",
    "refinement_gain",
    "restrict",
    "simulate_path",
    "split_block_count",
    "step",
    "transition_product_check",
    "tv_deviation",
    "tv_distance",
    "uniform_measure",
    "zeta_element",
]
