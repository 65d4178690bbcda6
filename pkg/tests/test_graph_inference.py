"""Localized block filtering/smoothing: oracles, invariances, cost counts."""

from __future__ import annotations

import numpy as np
import pytest

from fhmmlocal.distributions import (
    DenseTable,
    FactorizedDistribution,
    ltv_distance,
    marginalize,
    point_mass,
)
from fhmmlocal.errors import (
    CapacityError,
    DegenerateDistributionError,
    InvalidArgumentError,
)
from fhmmlocal.exact import filter_exact, smooth_exact
from fhmmlocal.factor_graph import (
    Partition,
    from_factors,
    singleton_partition,
    trivial_partition,
)
from fhmmlocal.graph_inference import (
    CostCounter,
    approx_bayes_update,
    backward_block_kernel,
    block_predict,
    build_locality_plan,
    graph_filter,
    graph_smoother,
    initial_distribution,
)
from fhmmlocal.model import (
    FhmmModel,
    GaussianChainEmission,
    ObservationSequence,
    log_factor_tables,
    sample_trajectory,
)
from conftest import random_chain_model, reference_chain_model


# ---------------------------------------------------------------------------
# plan geometry
# ---------------------------------------------------------------------------

def test_plan_chain_singleton_m0():
    model = reference_chain_model(5)
    plan = build_locality_plan(model.graph, singleton_partition(5), 0)
    bp = plan.blocks[2]
    assert bp.block == (2,)
    assert bp.factors == (1, 2)
    assert bp.variables == (1, 2, 3)
    assert bp.covering_blocks == (1, 2, 3)
    assert bp.joint_variables == (1, 2, 3)
    edge = plan.blocks[0]
    assert edge.factors == (0,)
    assert edge.joint_variables == (0, 1)


def test_plan_saturates_at_large_radius():
    model = reference_chain_model(4)
    plan = build_locality_plan(model.graph, singleton_partition(4), 5)
    for bp in plan.blocks:
        assert bp.joint_variables == (0, 1, 2, 3)
        assert bp.factors == (0, 1, 2)


def test_plan_rejects_negative_radius():
    model = reference_chain_model(3)
    with pytest.raises(InvalidArgumentError):
        build_locality_plan(model.graph, singleton_partition(3), -1)


# ---------------------------------------------------------------------------
# direct-summation oracle for one update step
#
# The block update normalizes over the covering-block joint; normalizing the
# full product over all variables instead must give the same block marginal
# because blocks outside the cover integrate to one.
# ---------------------------------------------------------------------------

def _direct_block_update(model, plan, mu, y_step):
    M, L = model.num_variables, model.cardinality
    dense = mu.to_dense().nd()
    tabs = log_factor_tables(model, y_step)
    out = []
    for bp in plan.blocks:
        logw = np.zeros((L,) * M)
        for f in bp.factors:
            fv = model.graph.factor_to_variables[f]
            shape = [1] * M
            for v in fv:
                shape[v] = L
            logw = logw + tabs[f].reshape(shape)
        w = np.exp(logw - logw.max())
        joint = dense * w
        joint = joint / joint.sum()
        drop = tuple(i for i in range(M) if i not in bp.block)
        out.append(DenseTable(bp.block, L, joint.sum(axis=drop)))
    return FactorizedDistribution(plan.partition, tuple(out))


@pytest.mark.parametrize("M,m", [(3, 0), (4, 0), (4, 1), (5, 0), (5, 1), (5, 2)])
def test_update_matches_direct_summation(M, m, rng):
    model = random_chain_model(rng, M)
    plan = build_locality_plan(model.graph, singleton_partition(M), m)
    mu = initial_distribution(model, plan.partition)
    y = rng.normal(size=M - 1)
    got = approx_bayes_update(model, plan, mu, y)
    want = _direct_block_update(model, plan, mu, y)
    for k in range(len(plan.partition.blocks)):
        assert np.max(np.abs(got.block_tables[k].values - want.block_tables[k].values)) < 1e-12


def test_update_matches_direct_summation_multi_blocks(rng):
    model = random_chain_model(rng, 5)
    part = Partition.from_blocks([(0, 1), (2,), (3, 4)], 5)
    plan = build_locality_plan(model.graph, part, 0)
    mu = initial_distribution(model, part)
    y = rng.normal(size=4)
    got = approx_bayes_update(model, plan, mu, y)
    want = _direct_block_update(model, plan, mu, y)
    for k in range(len(part.blocks)):
        assert np.max(np.abs(got.block_tables[k].values - want.block_tables[k].values)) < 1e-12


# ---------------------------------------------------------------------------
# invariances
# ---------------------------------------------------------------------------

class _ShiftedEmission(GaussianChainEmission):
    """Gaussian family with every factor value multiplied by exp(shift)."""

    def __init__(self, base: GaussianChainEmission, shift: float):
        super().__init__(base.state_values, base.scale, base.variance)
        object.__setattr__(self, "log_shift", float(shift))

    def log_factor_table(self, factor, factor_variables, y):
        return super().log_factor_table(factor, factor_variables, y) + self.log_shift


@pytest.mark.parametrize("shift", [37.2, -11.5])
def test_update_invariant_to_likelihood_rescaling(shift, rng):
    model = random_chain_model(rng, 4)
    scaled = FhmmModel(
        model.graph,
        model.cardinality,
        model.transitions,
        model.initial,
        _ShiftedEmission(model.emission, shift),
    )
    plan = build_locality_plan(model.graph, singleton_partition(4), 1)
    mu = initial_distribution(model, plan.partition)
    y = rng.normal(size=3)
    base = approx_bayes_update(model, plan, mu, y)
    resc = approx_bayes_update(scaled, plan, mu, y)
    for k in range(4):
        assert np.max(np.abs(base.block_tables[k].values - resc.block_tables[k].values)) < 1e-12


def test_filter_invariant_to_block_input_order(rng):
    model = random_chain_model(rng, 4)
    _, obs = sample_trajectory(model, 6, seed=2)
    pa = Partition.from_blocks([(0,), (1, 2), (3,)], 4)
    pb = Partition.from_blocks([(3,), (0,), (1, 2)], 4)
    fa, la = graph_filter(model, build_locality_plan(model.graph, pa, 1), obs)
    fb, lb = graph_filter(model, build_locality_plan(model.graph, pb, 1), obs)
    assert np.array_equal(la, lb)
    for t in range(len(fa)):
        for k in range(3):
            assert np.array_equal(fa[t].block_tables[k].values, fb[t].block_tables[k].values)


def test_filter_workers_bitwise_identical(rng):
    model = random_chain_model(rng, 5)
    _, obs = sample_trajectory(model, 8, seed=9)
    plan = build_locality_plan(model.graph, singleton_partition(5), 1)
    f1, l1 = graph_filter(model, plan, obs, workers=1)
    f2, l2 = graph_filter(model, plan, obs, workers=3)
    assert np.array_equal(l1, l2)
    for t in range(len(f1)):
        for k in range(5):
            assert np.array_equal(f1[t].block_tables[k].values, f2[t].block_tables[k].values)


# ---------------------------------------------------------------------------
# exactness and decay
# ---------------------------------------------------------------------------

def test_trivial_partition_matches_exact(rng):
    model = random_chain_model(rng, 4)
    _, obs = sample_trajectory(model, 10, seed=21)
    exact_f, exact_ln = filter_exact(model, obs)
    exact_s = smooth_exact(model, exact_f)
    plan = build_locality_plan(model.graph, trivial_partition(4), 0)
    gf, gln = graph_filter(model, plan, obs)
    gs = graph_smoother(model, plan, gf)
    assert np.max(np.abs(exact_ln - gln)) < 1e-12
    for t in range(11):
        assert np.max(np.abs(gf[t].block_tables[0].values - exact_f[t].values)) < 1e-12
        assert np.max(np.abs(gs[t].block_tables[0].values - exact_s[t].values)) < 1e-12


def test_larger_radius_tightens_interior_marginals():
    model = reference_chain_model(7)
    _, obs = sample_trajectory(model, 30, seed=4)
    exact_f, _ = filter_exact(model, obs)
    part = singleton_partition(7)
    errs = []
    for m in (0, 2):
        plan = build_locality_plan(model.graph, part, m)
        gf, _ = graph_filter(model, plan, obs)
        errs.append(
            np.mean([ltv_distance(gf[t], exact_f[t], (3,)) for t in range(1, 31)])
        )
    assert errs[1] < errs[0]


def test_block_predict_is_per_variable_kernel(rng):
    model = random_chain_model(rng, 3)
    part = Partition.from_blocks([(0, 1), (2,)], 3)
    mu = initial_distribution(model, part)
    out = block_predict(model, mu)
    expected = np.einsum(
        "ab,ax,bz->xz",
        mu.block_tables[0].nd(),
        model.transitions[0],
        model.transitions[1],
    )
    assert np.max(np.abs(out.block_tables[0].nd() - expected)) < 1e-14
    assert np.max(np.abs(out.block_tables[1].values - mu.block_tables[1].values @ model.transitions[2])) < 1e-14


# ---------------------------------------------------------------------------
# backward kernel
# ---------------------------------------------------------------------------

def test_backward_kernel_hand_example():
    model = FhmmModel.homogeneous_chain(
        2,
        np.array([[0.9, 0.1], [0.3, 0.7]]),
        np.array([0.5, 0.5]),
        GaussianChainEmission(np.array([0.0, 1.0]), 1.0, 1.0),
    )
    filt = DenseTable((0,), 2, np.array([0.5, 0.5]))
    B = backward_block_kernel(model, filt)
    assert np.allclose(B[0], [0.75, 0.25])
    assert np.allclose(B[1], [0.125, 0.875])
    assert np.allclose(B.sum(axis=1), 1.0)


def test_backward_kernel_block_is_kron(rng):
    model = random_chain_model(rng, 3)
    vals = rng.uniform(0.1, 1.0, size=4)
    filt = DenseTable((0, 1), 2, vals / vals.sum())
    B = backward_block_kernel(model, filt)
    P = np.kron(model.transitions[0], model.transitions[1])
    num = P * filt.values[:, None]
    expected = (num / num.sum(axis=0)).T
    assert np.max(np.abs(B - expected)) < 1e-14


def test_backward_kernel_zero_mass_raises():
    model = FhmmModel.homogeneous_chain(
        2,
        np.array([[1.0, 0.0], [1.0, 0.0]]),  # state 1 unreachable
        np.array([1.0, 0.0]),
        GaussianChainEmission(np.array([0.0, 1.0]), 1.0, 1.0),
    )
    filt = DenseTable((0,), 2, np.array([1.0, 0.0]))
    with pytest.raises(DegenerateDistributionError):
        backward_block_kernel(model, filt)


def test_smoother_rejects_impossible_successor_mass():
    em = GaussianChainEmission(np.array([0.0, 1.0]), 1.0, 1.0)
    g = from_factors(2, [])
    P = np.array([[1.0, 0.0], [1.0, 0.0]])
    model = FhmmModel(g, 2, np.stack([P, P]), np.array([[1.0, 0.0], [1.0, 0.0]]), em)
    part = singleton_partition(2)
    plan = build_locality_plan(g, part, 0)
    at0 = FactorizedDistribution(
        part, (point_mass((0,), 2, (0,)), point_mass((1,), 2, (0,)))
    )
    at1 = FactorizedDistribution(
        part, (point_mass((0,), 2, (1,)), point_mass((1,), 2, (1,)))
    )
    with pytest.raises(DegenerateDistributionError):
        graph_smoother(model, plan, [at0, at1])


# ---------------------------------------------------------------------------
# cost accounting and capacity
# ---------------------------------------------------------------------------

def test_cost_counter_chain_m0(rng):
    model = random_chain_model(rng, 4)
    T = 3
    _, obs = sample_trajectory(model, T, seed=1)
    plan = build_locality_plan(model.graph, singleton_partition(4), 0)
    counter = CostCounter()
    graph_filter(model, plan, obs, counter=counter)
    # per step: edge blocks 1 factor * 2^2 joint, interior blocks 2 * 2^3
    assert counter.block_step_cost == {0: 4, 1: 16, 2: 16, 3: 4}
    assert counter.factor_evaluations == T * (4 + 16 + 16 + 4)


def test_cost_counter_matches_plan_geometry(rng):
    model = random_chain_model(rng, 6)
    _, obs = sample_trajectory(model, 2, seed=5)
    for m in (0, 1, 2):
        plan = build_locality_plan(model.graph, singleton_partition(6), m)
        counter = CostCounter()
        graph_filter(model, plan, obs, counter=counter)
        for bp in plan.blocks:
            expected = len(bp.factors) * 2 ** len(bp.joint_variables)
            assert counter.block_step_cost[bp.index] == expected


def test_joint_size_cap(rng):
    model = random_chain_model(rng, 6)
    _, obs = sample_trajectory(model, 2, seed=6)
    plan = build_locality_plan(model.graph, singleton_partition(6), 2)
    with pytest.raises(CapacityError):
        graph_filter(model, plan, obs, joint_size_bits=2.0)


def test_plan_graph_mismatch_rejected(rng):
    model = random_chain_model(rng, 4)
    other = random_chain_model(rng, 5)
    plan = build_locality_plan(other.graph, singleton_partition(5), 0)
    _, obs = sample_trajectory(model, 2, seed=0)
    with pytest.raises(InvalidArgumentError):
        graph_filter(model, plan, obs)
