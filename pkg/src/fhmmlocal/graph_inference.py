"""Localized, factorized filtering and smoothing driven by the factor graph.

The approximation keeps a product law over the blocks of a partition.  For
each block K the update materializes the joint table over every block that
intersects K's radius-m variable neighbourhood, multiplies in the factors of
K's radius-m factor neighbourhood, normalizes, and keeps the K-marginal.
Block updates read only the incoming product law, so they are independent of
one another and may run in any order or in parallel.

With the trivial one-block partition the update touches every factor and the
recursions coincide with the exact ones for any radius.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .distributions import (
    DenseTable,
    FactorizedDistribution,
    outer_product_tables,
)
from .errors import CapacityError, DegenerateDistributionError, InvalidArgumentError
from .factor_graph import FactorGraph, Partition, neighborhoods
from .model import FhmmModel, ObservationSequence, check_observations, log_factor_tables

DEFAULT_JOINT_SIZE_BITS = 22.0


@dataclass(frozen=True)
class BlockPlan:
    """Static per-block update geometry."""

    index: int
    block: tuple[int, ...]
    factors: tuple[int, ...]
    variables: tuple[int, ...]
    covering_blocks: tuple[int, ...]
    joint_variables: tuple[int, ...]


@dataclass(frozen=True)
class LocalityPlan:
    """Partition plus radius plus the per-block geometry derived from them."""

    graph: FactorGraph
    partition: Partition
    radius: int
    blocks: tuple[BlockPlan, ...]


def build_locality_plan(graph: FactorGraph, partition: Partition, m: int) -> LocalityPlan:
    """Resolve the per-block neighbourhoods and covering blocks for radius m."""
    if partition.num_variables != graph.num_variables:
        raise InvalidArgumentError("partition does not match graph size")
    if m < 0:
        raise InvalidArgumentError("radius m must be >= 0")
    plans = []
    for k, block in enumerate(partition.blocks):
        nb = neighborhoods(graph, block, m)
        nvars = set(nb.variables)
        for f in nb.factors:
            if not set(graph.factor_to_variables[f]) <= nvars:
                raise InvalidArgumentError(
                    f"factor {f} reaches outside the variable neighbourhood of block {block}"
                )
        covering = tuple(
            k2 for k2, other in enumerate(partition.blocks) if nvars & set(other)
        )
        joint = tuple(sorted(set().union(*(partition.blocks[k2] for k2 in covering))))
        plans.append(BlockPlan(k, block, nb.factors, nb.variables, covering, joint))
    return LocalityPlan(graph, partition, m, tuple(plans))


@dataclass
class CostCounter:
    """Instrumented work counts for the block updates.

    ``factor_evaluations`` counts (configuration, factor) pairs touched:
    every factor of a block update is applied across that block's full joint
    table.  ``block_step_cost`` records the same count per block for a single
    update step (it is plan-determined, hence identical across steps).
    """

    factor_evaluations: int = 0
    block_step_cost: dict[int, int] = field(default_factory=dict)


def initial_distribution(model: FhmmModel, partition: Partition) -> FactorizedDistribution:
    """Time-zero product law: each block is the product of its initial pmfs."""
    tables = tuple(
        outer_product_tables([model.initial[v] for v in block], block, model.cardinality)
        for block in partition.blocks
    )
    return FactorizedDistribution(partition, tables)


def _check_plan(model: FhmmModel, plan: LocalityPlan) -> None:
    if plan.graph != model.graph:
        raise InvalidArgumentError("plan was built for a different graph")


def _one_block_update(
    model: FhmmModel,
    plan: LocalityPlan,
    bp: BlockPlan,
    block_nds: list[np.ndarray],
    log_tables: list[np.ndarray],
    joint_size_bits: float,
) -> tuple[DenseTable, float, int]:
    L = model.cardinality
    k = len(bp.joint_variables)
    if k * math.log2(L) > joint_size_bits:
        raise CapacityError(
            f"block {bp.block}: joint over {k} variables of cardinality {L} "
            f"exceeds the {joint_size_bits}-bit cap"
        )
    pos = {v: i for i, v in enumerate(bp.joint_variables)}
    joint = np.ones((L,) * k)
    for k2 in bp.covering_blocks:
        other = plan.partition.blocks[k2]
        shape = [1] * k
        for v in other:
            shape[pos[v]] = L
        joint = joint * block_nds[k2].reshape(shape)
    logw = np.zeros((L,) * k)
    for f in bp.factors:
        shape = [1] * k
        for v in model.graph.factor_to_variables[f]:
            shape[pos[v]] = L
        logw = logw + log_tables[f].reshape(shape)
    shift = float(logw.max())
    post = joint * np.exp(logw - shift)
    total = float(post.sum())
    if total <= 0.0:
        raise DegenerateDistributionError(f"block {bp.block} lost all mass in the update")
    post /= total
    drop = tuple(i for i, v in enumerate(bp.joint_variables) if v not in set(bp.block))
    values = post.sum(axis=drop) if drop else post
    cost = len(bp.factors) * post.size
    return (
        DenseTable(bp.block, L, values.reshape(-1)),
        float(np.log(total) + shift),
        cost,
    )


def _update_with_log_norm(
    model: FhmmModel,
    plan: LocalityPlan,
    mu: FactorizedDistribution,
    y_step: np.ndarray,
    counter: CostCounter | None,
    joint_size_bits: float,
    pool: ThreadPoolExecutor | None,
) -> tuple[FactorizedDistribution, float]:
    log_tables = log_factor_tables(model, y_step)
    block_nds = [tb.nd() for tb in mu.block_tables]

    def run(bp: BlockPlan) -> tuple[DenseTable, float, int]:
        return _one_block_update(model, plan, bp, block_nds, log_tables, joint_size_bits)

    if pool is not None:
        results = list(pool.map(run, plan.blocks))
    else:
        results = [run(bp) for bp in plan.blocks]
    if counter is not None:
        for bp, (_, _, cost) in zip(plan.blocks, results):
            counter.factor_evaluations += cost
            counter.block_step_cost[bp.index] = cost
    tables = tuple(r[0] for r in results)
    step_log_norm = float(sum(r[1] for r in results))
    return FactorizedDistribution(plan.partition, tables), step_log_norm


def approx_bayes_update(
    model: FhmmModel,
    plan: LocalityPlan,
    mu: FactorizedDistribution,
    y_step: np.ndarray,
    counter: CostCounter | None = None,
    joint_size_bits: float = DEFAULT_JOINT_SIZE_BITS,
    workers: int = 1,
) -> FactorizedDistribution:
    """Condition a product law on one observation step, block by block."""
    _check_plan(model, plan)
    if mu.partition != plan.partition:
        raise InvalidArgumentError("distribution partition does not match the plan")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out, _ = _update_with_log_norm(
                model, plan, mu, y_step, counter, joint_size_bits, pool
            )
    else:
        out, _ = _update_with_log_norm(
            model, plan, mu, y_step, counter, joint_size_bits, None
        )
    return out


def block_predict(model: FhmmModel, mu: FactorizedDistribution) -> FactorizedDistribution:
    """One step of the latent dynamics applied block-wise."""
    L = model.cardinality
    tables = []
    for block, tb in zip(mu.partition.blocks, mu.block_tables):
        nd = tb.nd()
        for i, v in enumerate(block):
            nd = np.moveaxis(np.moveaxis(nd, i, -1) @ model.transitions[v], -1, i)
        tables.append(DenseTable(block, L, nd.reshape(-1)))
    return FactorizedDistribution(mu.partition, tuple(tables))


def graph_filter(
    model: FhmmModel,
    plan: LocalityPlan,
    obs: ObservationSequence,
    counter: CostCounter | None = None,
    joint_size_bits: float = DEFAULT_JOINT_SIZE_BITS,
    workers: int = 1,
) -> tuple[list[FactorizedDistribution], np.ndarray]:
    """Product filtering laws at times 0..T plus per-step log normalizers.

    The step normalizer is the sum over blocks of each block's log update
    mass; their total over time is the surrogate log-likelihood (and equals
    the exact log-likelihood for the trivial partition).
    """
    _check_plan(model, plan)
    check_observations(model, obs)
    current = initial_distribution(model, plan.partition)
    out = [current]
    log_norms = np.zeros(obs.length)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(1, obs.length + 1):
            predicted = block_predict(model, current)
            current, log_norms[t - 1] = _update_with_log_norm(
                model, plan, predicted, obs.values[t - 1], counter, joint_size_bits, pool
            )
            out.append(current)
    finally:
        if pool is not None:
            pool.shutdown()
    return out, log_norms


def backward_block_kernel(model: FhmmModel, filter_table: DenseTable) -> np.ndarray:
    """Backward kernel of one block given its filtering law.

    Entry [z, x] is the backward probability of block configuration x given
    successor configuration z; rows are normalized over x.  Configurations
    are flat mixed-radix indices (first block variable most significant).
    Any successor row with zero predictive mass raises a degeneracy error.
    """
    block = filter_table.variables
    if not block:
        raise InvalidArgumentError("filter table must cover at least one variable")
    for v in block:
        if not 0 <= v < model.num_variables:
            raise InvalidArgumentError(f"variable {v} out of range")
    P = reduce(np.kron, [model.transitions[v] for v in block])
    num = P * filter_table.values[:, None]
    denom = num.sum(axis=0)
    if np.any(denom <= 0):
        raise DegenerateDistributionError(
            f"backward kernel for block {block}: a successor configuration has zero predictive mass"
        )
    return (num / denom).T


def graph_smoother(
    model: FhmmModel,
    plan: LocalityPlan,
    filters: list[FactorizedDistribution],
) -> list[FactorizedDistribution]:
    """Product smoothing laws at times 0..T from the filtering laws.

    Runs the backward kernel per block.  Unlike the strict public kernel
    constructor, a successor configuration carrying no smoothing mass is
    allowed to have zero predictive mass (the 0/0 term contributes nothing).
    """
    _check_plan(model, plan)
    if not filters:
        raise InvalidArgumentError("need at least the time-zero filtering law")
    partition = plan.partition
    L = model.cardinality
    kernels = [
        reduce(np.kron, [model.transitions[v] for v in block]) for block in partition.blocks
    ]
    reversed_out = [filters[-1]]
    for t in range(len(filters) - 2, -1, -1):
        tables = []
        for k, block in enumerate(partition.blocks):
            num = kernels[k] * filters[t].block_tables[k].values[:, None]
            denom = num.sum(axis=0)
            succ = reversed_out[-1].block_tables[k].values
            if np.any((succ > 0) & (denom <= 0)):
                raise DegenerateDistributionError(
                    f"block {block}: smoothing mass at time {t + 1} has zero predictive mass"
                )
            ratio = np.divide(succ, denom, out=np.zeros_like(succ), where=denom > 0)
            raw = num @ ratio
            total = raw.sum()
            if not total > 0:
                raise DegenerateDistributionError(
                    f"block {block}: smoothing law at time {t} has zero total mass"
                )
            tables.append(DenseTable(block, L, raw / total))
        reversed_out.append(FactorizedDistribution(partition, tuple(tables)))
    return list(reversed(reversed_out))
