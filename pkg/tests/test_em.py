"""Pairwise smoothing statistics, M-step closed forms, and the EM loop."""

from __future__ import annotations

import numpy as np
import pytest

from fhmmlocal.em import (
    EmConfig,
    SmoothingStatistics,
    collect_smoothing_statistics,
    em_fit,
    m_step,
    pair_space_smoothing,
    pair_time_smoothing,
)
from fhmmlocal.errors import DegenerateDistributionError, DegenerateStatisticsError
from fhmmlocal.factor_graph import Partition, from_factors, singleton_partition
from fhmmlocal.graph_inference import build_locality_plan, graph_filter, graph_smoother
from fhmmlocal.model import (
    FhmmModel,
    GaussianChainEmission,
    ObservationSequence,
    sample_trajectory,
)
from conftest import random_chain_model, reference_chain_model


# ---------------------------------------------------------------------------
# pairwise tables
# ---------------------------------------------------------------------------

def test_pair_time_identity_kernel():
    pair = pair_time_smoothing(
        np.array([0.5, 0.5]), np.array([0.5, 0.5]), np.eye(2)
    )
    assert np.allclose(pair, np.diag([0.5, 0.5]))


def test_pair_time_successor_marginal_identity(rng):
    # marginalizing out the earlier state must return the smoother marginal
    for _ in range(200):
        p = rng.dirichlet(np.ones(3), size=3)
        pf = rng.dirichlet(np.ones(3))
        sm = rng.dirichlet(np.ones(3))
        pair = pair_time_smoothing(pf, sm, p)
        assert np.max(np.abs(pair.sum(axis=0) - sm)) < 1e-10
        assert np.all(pair >= 0)


def test_pair_time_consistent_inputs_give_joint(rng):
    p = rng.dirichlet(np.ones(2), size=2)
    pf = rng.dirichlet(np.ones(2))
    pair = pair_time_smoothing(pf, pf @ p, p)
    assert np.max(np.abs(pair - p * pf[:, None])) < 1e-14


def test_pair_time_impossible_mass_raises():
    p = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DegenerateDistributionError):
        pair_time_smoothing(np.array([1.0, 0.0]), np.array([0.0, 1.0]), p)


def test_pair_space_is_outer_product():
    a = np.array([0.3, 0.7])
    b = np.array([0.9, 0.1])
    assert np.allclose(pair_space_smoothing(a, b), np.outer(a, b))


# ---------------------------------------------------------------------------
# statistics collection
# ---------------------------------------------------------------------------

def test_collect_statistics_shapes_and_marginals(rng):
    model = random_chain_model(rng, 3)
    _, obs = sample_trajectory(model, 5, seed=0)
    plan = build_locality_plan(model.graph, singleton_partition(3), 1)
    filters, _ = graph_filter(model, plan, obs)
    smoothers = graph_smoother(model, plan, filters)
    stats = collect_smoothing_statistics(model, plan, filters, smoothers)
    assert stats.filter_marginals.shape == (6, 3, 2)
    assert stats.smooth_marginals.shape == (6, 3, 2)
    assert stats.space_pairs.shape == (5, 2, 2, 2)
    for t in range(6):
        for v in range(3):
            assert np.allclose(stats.filter_marginals[t, v], filters[t].variable_marginal(v))
    # product form for cross-block factors
    for t in range(1, 6):
        for f in range(2):
            a, b = model.graph.factor_to_variables[f]
            want = np.outer(stats.smooth_marginals[t, a], stats.smooth_marginals[t, b])
            assert np.allclose(stats.space_pairs[t - 1, f], want)


def test_collect_statistics_uses_block_joint(rng):
    model = random_chain_model(rng, 3)
    _, obs = sample_trajectory(model, 4, seed=1)
    part = Partition.from_blocks([(0,), (1, 2)], 3)
    plan = build_locality_plan(model.graph, part, 1)
    filters, _ = graph_filter(model, plan, obs)
    smoothers = graph_smoother(model, plan, filters)
    stats = collect_smoothing_statistics(model, plan, filters, smoothers)
    # factor 1 couples variables 1 and 2, which share a block: the joint
    # block marginal is used, not the product of singles
    for t in range(1, 5):
        joint = smoothers[t].marginal((1, 2)).nd()
        assert np.array_equal(stats.space_pairs[t - 1, 1], joint)
        prod = np.outer(stats.smooth_marginals[t, 0], stats.smooth_marginals[t, 1])
        assert np.allclose(stats.space_pairs[t - 1, 0], prod)


def test_collect_statistics_requires_arity_two(rng):
    g = from_factors(3, [[0, 1, 2]])
    em = GaussianChainEmission(np.array([0.0, 1.0]), 1.0, 1.0)
    model = FhmmModel(g, 2, np.full((3, 2, 2), 0.5), np.full((3, 2), 0.5), em)
    obs = ObservationSequence(np.zeros((2, 1)))
    plan = build_locality_plan(g, singleton_partition(3), 0)
    filters, _ = graph_filter(model, plan, obs)
    smoothers = graph_smoother(model, plan, filters)
    with pytest.raises(DegenerateStatisticsError):
        collect_smoothing_statistics(model, plan, filters, smoothers)


# ---------------------------------------------------------------------------
# M-step closed forms
# ---------------------------------------------------------------------------

def test_m_step_hand_example():
    # self-consistent statistics: smoothing equals prediction, so the pair
    # tables are exactly kernel * filter and the kernel reproduces itself
    P = np.array([[0.6, 0.4], [0.2, 0.8]])
    model = reference_chain_model(2, scale=1.0, variance=1.0)
    model = FhmmModel(
        model.graph, 2, np.stack([P, P]), np.full((2, 2), 0.5), model.emission
    )
    pf = np.array([0.5, 0.5])
    sm1 = pf @ P
    filter_marginals = np.stack([np.stack([pf, pf]), np.stack([sm1, sm1])])
    smooth_marginals = np.stack([np.stack([pf, pf]), np.stack([sm1, sm1])])
    space_pairs = np.zeros((1, 1, 2, 2))
    space_pairs[0, 0, 1, 1] = 1.0
    stats = SmoothingStatistics(filter_marginals, smooth_marginals, space_pairs)
    obs = ObservationSequence(np.array([[3.0]]))
    up = m_step(model, obs, stats, floor=1e-8)
    assert np.allclose(up.mu0_hat, [0.5, 0.5])
    assert np.max(np.abs(up.p_hat - P)) < 1e-9
    # state values (0, 1): configuration (1, 1) has pair value 2
    assert up.c_hat == pytest.approx(3.0 * 2 / 4)
    assert up.sigma2_hat == pytest.approx(1e-12)


def test_m_step_sigma2_with_residual():
    model = reference_chain_model(2, scale=1.0, variance=1.0)
    pf = np.array([0.5, 0.5])
    marg = np.stack([np.stack([pf, pf]), np.stack([pf, pf])])
    space_pairs = np.zeros((1, 1, 2, 2))
    space_pairs[0, 0] = np.array([[0.5, 0.0], [0.0, 0.5]])  # pair values 0 and 2
    stats = SmoothingStatistics(marg, marg, space_pairs)
    obs = ObservationSequence(np.array([[1.0]]))
    up = m_step(model, obs, stats)
    # c = (1*0*0.5 + 1*2*0.5) / (0 + 4*0.5) = 0.5
    assert up.c_hat == pytest.approx(0.5)
    # residual = 0.5*(1-0)^2 + 0.5*(1-1)^2 = 0.5 over T*F = 1
    assert up.sigma2_hat == pytest.approx(0.5)


def test_m_step_flooring_keeps_rows_stochastic():
    model = reference_chain_model(2, scale=1.0, variance=1.0)
    P = np.array([[1.0, 0.0], [0.0, 1.0]])
    model = FhmmModel(
        model.graph, 2, np.stack([P, P]), np.full((2, 2), 0.5), model.emission
    )
    pf = np.array([1.0, 0.0])
    marg = np.stack([np.stack([pf, pf]), np.stack([pf, pf])])
    space_pairs = np.zeros((1, 1, 2, 2))
    space_pairs[0, 0, 1, 1] = 1.0
    stats = SmoothingStatistics(marg, marg, space_pairs)
    obs = ObservationSequence(np.array([[2.0]]))
    up = m_step(model, obs, stats, floor=1e-8)
    assert np.allclose(up.p_hat.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(up.p_hat > 0)


def test_m_step_degenerate_scale_denominator():
    model = reference_chain_model(2, scale=1.0, variance=1.0)
    pf = np.array([0.5, 0.5])
    marg = np.stack([np.stack([pf, pf]), np.stack([pf, pf])])
    space_pairs = np.zeros((1, 1, 2, 2))
    space_pairs[0, 0, 0, 0] = 1.0  # state values (0, 0): pair value 0
    stats = SmoothingStatistics(marg, marg, space_pairs)
    obs = ObservationSequence(np.array([[2.0]]))
    with pytest.raises(DegenerateStatisticsError):
        m_step(model, obs, stats)


# ---------------------------------------------------------------------------
# EM loop
# ---------------------------------------------------------------------------

def _em_setup(T=60, seed=0):
    truth = reference_chain_model(3, scale=2.0, variance=1.0)
    _, obs = sample_trajectory(truth, T, seed=seed)
    plan = build_locality_plan(
        truth.graph, Partition.from_blocks([(0,), (1, 2)], 3), 1
    )
    return truth, obs, plan


def test_em_trace_parameters_stay_feasible():
    truth, obs, plan = _em_setup()
    init = reference_chain_model(3, scale=1.0, variance=3.0)
    est = em_fit(init, obs, EmConfig(plan=plan, max_iterations=40, tolerance=1e-9))
    assert len(est.trace) <= 40
    for row in est.trace:
        assert np.allclose(row.p_hat.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(row.p_hat >= 0)
        assert row.mu0_hat.sum() == pytest.approx(1.0, abs=1e-12)
        assert row.sigma2_hat > 0
    assert est.status in ("converged", "max_iterations")


def test_em_surrogate_mostly_increases():
    truth, obs, plan = _em_setup(T=80, seed=3)
    init = reference_chain_model(3, scale=1.2, variance=2.5)
    est = em_fit(init, obs, EmConfig(plan=plan, max_iterations=60, tolerance=1e-10))
    values = [row.surrogate_log_likelihood for row in est.trace]
    assert values[-1] > values[0]
    drops = [a - b for a, b in zip(values, values[1:]) if b < a]
    assert all(d < 1e-2 for d in drops)


def test_em_converged_status_and_stability():
    truth, obs, plan = _em_setup(T=60, seed=1)
    init = reference_chain_model(3, scale=1.5, variance=2.0)
    first = em_fit(init, obs, EmConfig(plan=plan, max_iterations=200, tolerance=1e-8))
    assert first.status == "converged"
    # restarting at the reached point must barely move
    restart = FhmmModel.homogeneous_chain(
        3,
        first.p_hat,
        first.mu0_hat,
        GaussianChainEmission(np.array([0.0, 1.0]), first.c_hat, first.sigma2_hat),
    )
    again = em_fit(restart, obs, EmConfig(plan=plan, max_iterations=5, tolerance=1e-12))
    assert abs(again.c_hat - first.c_hat) < 1e-3
    assert abs(again.sigma2_hat - first.sigma2_hat) < 1e-3
    assert np.max(np.abs(again.p_hat - first.p_hat)) < 1e-3


def test_em_truth_init_moves_little():
    truth, obs, plan = _em_setup(T=200, seed=5)
    est = em_fit(truth, obs, EmConfig(plan=plan, max_iterations=3, tolerance=1e-15))
    assert est.c_hat == pytest.approx(2.0, rel=0.15)
    assert est.sigma2_hat == pytest.approx(1.0, rel=0.35)


def test_em_low_noise_kernel_recovery():
    # with nearly noiseless observations the states are pinned, so the
    # transition estimate approaches the empirical transition frequencies
    truth = reference_chain_model(3, scale=2.0, variance=0.05)
    states, obs = sample_trajectory(truth, 300, seed=8)
    plan = build_locality_plan(
        truth.graph, Partition.from_blocks([(0,), (1, 2)], 3), 1
    )
    init = reference_chain_model(3, scale=1.0, variance=1.0)
    est = em_fit(init, obs, EmConfig(plan=plan, max_iterations=150, tolerance=1e-7))
    counts = np.zeros((2, 2))
    for v in range(3):
        for x, z in zip(states[:-1, v], states[1:, v]):
            counts[x, z] += 1
    empirical = counts / counts.sum(axis=1, keepdims=True)
    assert np.max(np.abs(est.p_hat - empirical)) < 0.05
    assert est.c_hat == pytest.approx(2.0, abs=0.1)


def test_em_single_iteration_budget():
    truth, obs, plan = _em_setup(T=30, seed=2)
    init = reference_chain_model(3, scale=1.5, variance=2.0)
    est = em_fit(init, obs, EmConfig(plan=plan, max_iterations=1))
    assert est.status == "max_iterations"
    assert len(est.trace) == 1
