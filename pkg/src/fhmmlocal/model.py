"""Factorial hidden Markov model with a factorized Gaussian emission.

The latent chain is a product of independent per-variable Markov chains on a
common finite state space.  Observations attach to the factors of a bipartite
graph; each factor contributes a Gaussian density whose mean is a common
scale times the sum of the mapped state values of its variables.  Emission
evaluation goes through the small ``log_factor_table`` interface so other
factor families can be substituted (tests use flat and rescaled variants).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .factor_graph import FactorGraph, build_chain_graph


@dataclass(frozen=True)
class GaussianChainEmission:
    """Gaussian factor family: y^f ~ N(scale * sum of mapped states, variance).

    ``state_values`` maps state indices to numeric values, decoupling labels
    from arithmetic (e.g. three states mapped to -1, 0, 1).
    """

    state_values: np.ndarray
    scale: float
    variance: float

    def __post_init__(self) -> None:
        values = np.asarray(self.state_values, dtype=float).reshape(-1).copy()
        values.flags.writeable = False
        object.__setattr__(self, "state_values", values)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "variance", float(self.variance))
        object.__setattr__(self, "_mean_by_arity", {})

    @property
    def cardinality(self) -> int:
        return self.state_values.size

    def log_factor_table(self, factor: int, factor_variables: Sequence[int], y: float) -> np.ndarray:
        """Log density over all local configurations of one factor.

        Shape (L, ..., L) with one axis per factor variable in ascending
        order.  The mean is identical for any variable identity, so only the
        arity matters for this family.
        """
        if self.variance <= 0:
            raise InvalidArgumentError("emission variance must be positive")
        arity = len(factor_variables)
        if arity < 1:
            raise InvalidArgumentError("factor arity must be >= 1")
        mean = self._mean_by_arity.get(arity)
        if mean is None:
            summed = reduce(np.add.outer, [self.state_values] * arity)
            mean = self.scale * summed
            mean.flags.writeable = False
            self._mean_by_arity[arity] = mean
        return -0.5 * np.log(2.0 * np.pi * self.variance) - (y - mean) ** 2 / (2.0 * self.variance)


@dataclass(frozen=True)
class FhmmModel:
    """Per-variable transition kernels and initial laws plus an emission family.

    transitions: array (M, L, L), row-stochastic in the last axis; entry
        [v, x, z] is the probability variable v moves from state x to z.
    initial: array (M, L) of per-variable initial pmfs.
    """

    graph: FactorGraph
    cardinality: int
    transitions: np.ndarray
    initial: np.ndarray
    emission: GaussianChainEmission

    def __post_init__(self) -> None:
        M, L = self.graph.num_variables, self.cardinality
        transitions = np.asarray(self.transitions, dtype=float)
        initial = np.asarray(self.initial, dtype=float)
        if transitions.shape != (M, L, L):
            raise InvalidArgumentError(
                f"transitions shape {transitions.shape} != {(M, L, L)}"
            )
        if initial.shape != (M, L):
            raise InvalidArgumentError(f"initial shape {initial.shape} != {(M, L)}")
        transitions = transitions.copy()
        initial = initial.copy()
        transitions.flags.writeable = False
        initial.flags.writeable = False
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "initial", initial)

    @property
    def num_variables(self) -> int:
        return self.graph.num_variables

    @property
    def num_factors(self) -> int:
        return self.graph.num_factors

    @classmethod
    def homogeneous_chain(
        cls,
        num_variables: int,
        transition: np.ndarray,
        initial: np.ndarray,
        emission: GaussianChainEmission,
    ) -> "FhmmModel":
        """Chain-graph model with one shared kernel and initial law."""
        transition = np.asarray(transition, dtype=float)
        initial = np.asarray(initial, dtype=float)
        L = transition.shape[0]
        return cls(
            graph=build_chain_graph(num_variables),
            cardinality=L,
            transitions=np.broadcast_to(transition, (num_variables, L, L)).copy(),
            initial=np.broadcast_to(initial, (num_variables, L)).copy(),
            emission=emission,
        )


@dataclass(frozen=True)
class ObservationSequence:
    """T observation steps, one float per factor per step."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidArgumentError("observations must be a (T, F) array")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("observations must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def num_factors(self) -> int:
        return self.values.shape[1]


def check_observations(model: FhmmModel, obs: ObservationSequence) -> None:
    if obs.num_factors != model.num_factors:
        raise InvalidArgumentError(
            f"observations have {obs.num_factors} columns, graph has {model.num_factors} factors"
        )


def emission_factor(model: FhmmModel, factor: int, local_config: Sequence[int], y: float) -> float:
    """Density contribution of one factor at one local configuration."""
    if not 0 <= factor < model.num_factors:
        raise InvalidArgumentError(f"factor index {factor} out of range")
    fvars = model.graph.factor_to_variables[factor]
    if len(local_config) != len(fvars):
        raise InvalidArgumentError(
            f"local configuration has {len(local_config)} states, factor {factor} has {len(fvars)} variables"
        )
    for x in local_config:
        if not 0 <= int(x) < model.cardinality:
            raise InvalidArgumentError("state out of range")
    table = model.emission.log_factor_table(factor, fvars, y)
    return float(np.exp(table[tuple(int(x) for x in local_config)]))


def log_factor_tables(model: FhmmModel, y_step: np.ndarray) -> list[np.ndarray]:
    """Per-factor log tables for one observation step (inference work-horse)."""
    y_step = np.asarray(y_step, dtype=float).reshape(-1)
    if y_step.size != model.num_factors:
        raise InvalidArgumentError("observation step has wrong number of entries")
    return [
        model.emission.log_factor_table(f, model.graph.factor_to_variables[f], float(y_step[f]))
        for f in range(model.num_factors)
    ]


def full_likelihood(model: FhmmModel, config: Sequence[int], y_step: np.ndarray) -> float:
    """Product of all factor densities at one full latent configuration."""
    if len(config) != model.num_variables:
        raise InvalidArgumentError("configuration length mismatch")
    y_step = np.asarray(y_step, dtype=float).reshape(-1)
    if y_step.size != model.num_factors:
        raise InvalidArgumentError("observation step has wrong number of entries")
    out = 1.0
    for f in range(model.num_factors):
        local = [config[v] for v in model.graph.factor_to_variables[f]]
        out *= emission_factor(model, f, local, float(y_step[f]))
    return out


def _draw_categorical(pmf: np.ndarray, u: float) -> int:
    cdf = np.cumsum(pmf)
    return int(min(np.searchsorted(cdf, u, side="right"), pmf.size - 1))


def sample_trajectory(model: FhmmModel, length: int, seed: int) -> tuple[np.ndarray, ObservationSequence]:
    """Simulate states x_0..x_T and observations y_1..y_T.

    Deterministic for a fixed seed: numpy's PCG64 generator, one uniform per
    variable (ascending) per step for states, then one normal per factor
    (ascending) per step for observations.
    """
    if length < 1:
        raise InvalidArgumentError("trajectory length must be >= 1")
    violation = validate(model)
    if violation is not None:
        raise InvalidArgumentError(violation)
    rng = np.random.default_rng(seed)
    M, F = model.num_variables, model.num_factors
    states = np.zeros((length + 1, M), dtype=np.int64)
    observations = np.zeros((length, F))
    sd = np.sqrt(model.emission.variance)
    svals = model.emission.state_values
    for v in range(M):
        states[0, v] = _draw_categorical(model.initial[v], rng.random())
    for t in range(1, length + 1):
        for v in range(M):
            states[t, v] = _draw_categorical(model.transitions[v, states[t - 1, v]], rng.random())
        for f in range(F):
            fvars = model.graph.factor_to_variables[f]
            mean = model.emission.scale * float(sum(svals[states[t, v]] for v in fvars))
            observations[t - 1, f] = rng.normal(mean, sd)
    return states, ObservationSequence(observations)


def validate(model: FhmmModel) -> str | None:
    """Return a description of the first invariant violation, or None.

    Violations are reported, not raised, so callers can surface them in
    whatever channel fits (CLI, logs, asserts).
    """
    M, L = model.num_variables, model.cardinality
    for v in range(M):
        if np.any(model.initial[v] < 0):
            return f"initial law for variable {v} has a negative entry"
        s = float(model.initial[v].sum())
        if abs(s - 1.0) > 1e-12:
            return f"initial law for variable {v} sums to {s:.12g}"
        for x in range(L):
            if np.any(model.transitions[v, x] < 0):
                return f"row {x} of the transition kernel for variable {v} has a negative entry"
            s = float(model.transitions[v, x].sum())
            if abs(s - 1.0) > 1e-12:
                return f"row {x} of the transition kernel for variable {v} sums to {s:.12g}"
    if model.emission.cardinality != L:
        return (
            f"emission maps {model.emission.cardinality} states, model cardinality is {L}"
        )
    if model.emission.variance <= 0:
        return f"emission variance {model.emission.variance:.12g} is not positive"
    if model.emission.scale <= 0:
        return f"emission scale {model.emission.scale:.12g} is not positive"
    if len(set(model.emission.state_values.tolist())) != L:
        return "emission state values are not distinct"
    return None
