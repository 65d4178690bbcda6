"""Exact filtering and smoothing on the full product state space.

The joint table over all M variables has L**M entries, so these recursions
are reference implementations for small models: the predict step applies one
variable's kernel at a time (M * L**(M+1) multiply-adds per step) and the
correct step multiplies in all emission factors in log space.

Also here: a trajectory-enumeration oracle (``brute_force_posterior``) that
shares no code with the recursions beyond model evaluation.  It exists to
check everything else and is deliberately written against the definition of
the posterior, not against any recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import DenseTable, normalize, outer_product_tables
from .errors import CapacityError, DegenerateDistributionError, InvalidArgumentError
from .model import FhmmModel, ObservationSequence, check_observations, log_factor_tables

DEFAULT_STATE_CAP = 2 ** 20
DEFAULT_TRAJECTORY_CAP = 2 ** 24


@dataclass
class OpCounter:
    """Counts kernel multiply-add operations actually issued."""

    kernel_multiply_adds: int = 0


def _check_capacity(model: FhmmModel, state_cap: int) -> None:
    size = model.cardinality ** model.num_variables
    if size > state_cap:
        raise CapacityError(
            f"joint table needs {size} entries, exceeding the cap of {state_cap}"
        )


def _check_joint(model: FhmmModel, table: DenseTable) -> None:
    if table.variables != tuple(range(model.num_variables)):
        raise InvalidArgumentError("table must cover every model variable")
    if table.cardinality != model.cardinality:
        raise InvalidArgumentError("table cardinality does not match the model")


def dense_prior(model: FhmmModel, state_cap: int = DEFAULT_STATE_CAP) -> DenseTable:
    """Time-zero joint law: product of the per-variable initial pmfs."""
    _check_capacity(model, state_cap)
    return outer_product_tables(
        [model.initial[v] for v in range(model.num_variables)],
        list(range(model.num_variables)),
        model.cardinality,
    )


def _sweep_kernels(nd: np.ndarray, model: FhmmModel, transpose: bool, counter: OpCounter | None) -> np.ndarray:
    """Apply every per-variable kernel (or its transpose) once, in variable order."""
    L = model.cardinality
    for v in range(model.num_variables):
        mat = model.transitions[v].T if transpose else model.transitions[v]
        nd = np.moveaxis(np.moveaxis(nd, v, -1) @ mat, -1, v)
        if counter is not None:
            counter.kernel_multiply_adds += nd.size * L
    return nd


def predict(
    model: FhmmModel,
    table: DenseTable,
    counter: OpCounter | None = None,
    state_cap: int = DEFAULT_STATE_CAP,
) -> DenseTable:
    """One step of the latent dynamics applied to a joint law."""
    _check_capacity(model, state_cap)
    _check_joint(model, table)
    out = _sweep_kernels(table.nd(), model, transpose=False, counter=counter)
    return DenseTable(table.variables, table.cardinality, out.reshape(-1))


def _correct(model: FhmmModel, table: DenseTable, y_step: np.ndarray) -> tuple[DenseTable, float]:
    """Multiply in all emission factors and renormalize; also return log mass."""
    _check_joint(model, table)
    L, M = model.cardinality, model.num_variables
    logw = np.zeros((L,) * M)
    for f, log_table in enumerate(log_factor_tables(model, y_step)):
        fvars = model.graph.factor_to_variables[f]
        shape = [1] * M
        for v in fvars:
            shape[v] = L
        logw = logw + log_table.reshape(shape)
    shift = float(logw.max())
    weighted = table.nd() * np.exp(logw - shift)
    total = float(weighted.sum())
    if total <= 0.0:
        raise DegenerateDistributionError("correction step produced zero total mass")
    return (
        DenseTable(table.variables, L, (weighted / total).reshape(-1)),
        float(np.log(total) + shift),
    )


def correct(
    model: FhmmModel,
    table: DenseTable,
    y_step: np.ndarray,
    state_cap: int = DEFAULT_STATE_CAP,
) -> DenseTable:
    """Condition a joint law on one observation step."""
    _check_capacity(model, state_cap)
    return _correct(model, table, y_step)[0]


def filter_exact(
    model: FhmmModel,
    obs: ObservationSequence,
    counter: OpCounter | None = None,
    state_cap: int = DEFAULT_STATE_CAP,
) -> tuple[list[DenseTable], np.ndarray]:
    """Joint filtering laws at times 0..T plus per-step log normalizers.

    The log normalizers sum to the log-likelihood of the observations.
    """
    _check_capacity(model, state_cap)
    check_observations(model, obs)
    current = dense_prior(model, state_cap)
    out = [current]
    log_norms = np.zeros(obs.length)
    for t in range(1, obs.length + 1):
        predicted = predict(model, current, counter=counter, state_cap=state_cap)
        current, log_norms[t - 1] = _correct(model, predicted, obs.values[t - 1])
        out.append(current)
    return out, log_norms


def smooth_exact(
    model: FhmmModel,
    filters: list[DenseTable],
    counter: OpCounter | None = None,
    state_cap: int = DEFAULT_STATE_CAP,
) -> list[DenseTable]:
    """Joint smoothing laws at times 0..T from the filtering laws.

    Each backward step divides the successor smoothing law by the one-step
    predictive law and pulls the ratio back through the transposed kernels.
    A 0/0 ratio is taken as 0; mass appearing where the predictive law is
    zero is impossible and raises a degeneracy error.
    """
    _check_capacity(model, state_cap)
    if not filters:
        raise InvalidArgumentError("need at least the time-zero filtering law")
    for table in filters:
        _check_joint(model, table)
    out = [filters[-1]]
    for t in range(len(filters) - 2, -1, -1):
        predictive = _sweep_kernels(filters[t].nd(), model, transpose=False, counter=counter)
        successor = out[0].nd()
        if np.any((successor > 0) & (predictive <= 0)):
            raise DegenerateDistributionError(
                f"smoothing mass at time {t + 1} not reachable from the filter at time {t}"
            )
        ratio = np.divide(successor, predictive, out=np.zeros_like(successor), where=predictive > 0)
        pulled = _sweep_kernels(ratio, model, transpose=True, counter=counter)
        values = filters[t].nd() * pulled
        out.insert(0, normalize(DenseTable(filters[t].variables, model.cardinality, values.reshape(-1))))
    return out


def _factor_value_tables(model: FhmmModel, obs: ObservationSequence, horizon: int) -> list[list[np.ndarray]]:
    """Flat per-(step, factor) tables of plain density values."""
    tables: list[list[np.ndarray]] = []
    for s in range(1, horizon + 1):
        step_tables = log_factor_tables(model, obs.values[s - 1])
        tables.append([np.exp(tb).reshape(-1) for tb in step_tables])
    return tables


def _accumulate_trajectories(
    model: FhmmModel,
    obs: ObservationSequence,
    horizon: int,
    marginal_cols: list[int],
    cap: int,
    chunk: int = 1 << 18,
) -> tuple[np.ndarray, float]:
    """Sum trajectory weights, optionally binned by the states in marginal_cols.

    Column j of the trajectory layout is (time j // M, variable j % M).
    Returns (binned weights, total weight).
    """
    M, L = model.num_variables, model.cardinality
    n_axes = (horizon + 1) * M
    total_count = L ** n_axes
    if total_count > cap:
        raise CapacityError(
            f"enumeration needs {total_count} trajectories, exceeding the cap of {cap}"
        )
    value_tables = _factor_value_tables(model, obs, horizon)
    bins = np.zeros(L ** len(marginal_cols))
    total_weight = 0.0
    for start in range(0, total_count, chunk):
        idx = np.arange(start, min(start + chunk, total_count))
        digits = np.stack(np.unravel_index(idx, (L,) * n_axes), axis=1)
        states = digits.reshape(idx.size, horizon + 1, M)
        w = np.ones(idx.size)
        for v in range(M):
            w *= model.initial[v, states[:, 0, v]]
        for s in range(1, horizon + 1):
            for v in range(M):
                w *= model.transitions[v, states[:, s - 1, v], states[:, s, v]]
            for f in range(model.num_factors):
                enc = np.zeros(idx.size, dtype=np.int64)
                for fv in model.graph.factor_to_variables[f]:
                    enc = enc * L + states[:, s, fv]
                w *= value_tables[s - 1][f][enc]
        total_weight += float(w.sum())
        if marginal_cols:
            enc = np.zeros(idx.size, dtype=np.int64)
            for col in marginal_cols:
                enc = enc * L + digits[:, col]
            bins += np.bincount(enc, weights=w, minlength=bins.size)
        else:
            bins[0] += float(w.sum())
    return bins, total_weight


def brute_force_posterior(
    model: FhmmModel,
    obs: ObservationSequence,
    t: int,
    U: list[int] | tuple[int, ...],
    mode: str = "filter",
    cap: int = DEFAULT_TRAJECTORY_CAP,
) -> DenseTable:
    """Posterior marginal of the variables U at time t by full enumeration.

    mode "filter" conditions on observations 1..t, mode "smooth" on all of
    them.  Exponential cost; intended as an oracle for tiny models.
    """
    check_observations(model, obs)
    if mode not in ("filter", "smooth"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if not 0 <= t <= obs.length:
        raise InvalidArgumentError(f"time {t} outside 0..{obs.length}")
    us = sorted(set(int(u) for u in U))
    if not us:
        raise InvalidArgumentError("need at least one marginal variable")
    if us[0] < 0 or us[-1] >= model.num_variables:
        raise InvalidArgumentError("marginal variable out of range")
    horizon = t if mode == "filter" else obs.length
    M = model.num_variables
    cols = [t * M + u for u in us]
    bins, _ = _accumulate_trajectories(model, obs, horizon, cols, cap)
    return normalize(DenseTable(tuple(us), model.cardinality, bins))


def brute_force_evidence(
    model: FhmmModel, obs: ObservationSequence, cap: int = DEFAULT_TRAJECTORY_CAP
) -> float:
    """Total weight of all trajectories: the likelihood of the observations."""
    check_observations(model, obs)
    _, total = _accumulate_trajectories(model, obs, obs.length, [], cap)
    return total
