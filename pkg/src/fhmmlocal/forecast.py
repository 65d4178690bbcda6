"""Observation-space means for validation and one-step-ahead prediction.

Both quantities integrate the per-factor emission mean (scale times summed
state values of the factor's two variables) against product marginals:
smoothed means use the smoother at the same time step, forecasts push the
filter marginals through the transition kernels first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import FactorizedDistribution
from .errors import InvalidArgumentError
from .model import FhmmModel


@dataclass(frozen=True)
class MeanSeries:
    """Per-time per-factor expected observation values.

    kind is "smoothed" (mean at the same time) or "forecast" (mean one step
    past each filtering time); times[i] labels row i of values.
    """

    kind: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("smoothed", "forecast"):
            raise InvalidArgumentError(f"unknown series kind {self.kind!r}")
        times = np.asarray(self.times, dtype=int).copy()
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 2 or times.shape != (values.shape[0],):
            raise InvalidArgumentError("times and values shapes are inconsistent")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


def _pair_mean_matrix(model: FhmmModel) -> np.ndarray:
    svals = model.emission.state_values
    return model.emission.scale * (svals[:, None] + svals[None, :])


def _factor_pairs(model: FhmmModel) -> list[tuple[int, int]]:
    pairs = []
    for f in range(model.num_factors):
        fvars = model.graph.factor_to_variables[f]
        if len(fvars) != 2:
            raise InvalidArgumentError(
                f"factor {f} has arity {len(fvars)}; mean series need arity-2 factors"
            )
        pairs.append((fvars[0], fvars[1]))
    return pairs


def smoothed_emission_mean(
    model: FhmmModel, smoothers: list[FactorizedDistribution]
) -> MeanSeries:
    """Expected observation per factor under the smoothing marginals."""
    pairs = _factor_pairs(model)
    mean_matrix = _pair_mean_matrix(model)
    values = np.zeros((len(smoothers), model.num_factors))
    for t, dist in enumerate(smoothers):
        for f, (a, b) in enumerate(pairs):
            values[t, f] = dist.variable_marginal(a) @ mean_matrix @ dist.variable_marginal(b)
    return MeanSeries("smoothed", np.arange(len(smoothers)), values)


def one_step_forecast(
    model: FhmmModel, filters: list[FactorizedDistribution]
) -> MeanSeries:
    """Expected next observation per factor from each filtering time.

    Row i predicts time i+1: filter marginals at time i are pushed through
    the per-variable kernels before taking the emission mean.  With identity
    kernels this reduces to the smoothed mean of the filter marginals.
    """
    pairs = _factor_pairs(model)
    mean_matrix = _pair_mean_matrix(model)
    values = np.zeros((len(filters), model.num_factors))
    for t, dist in enumerate(filters):
        for f, (a, b) in enumerate(pairs):
            qa = dist.variable_marginal(a) @ model.transitions[a]
            qb = dist.variable_marginal(b) @ model.transitions[b]
            values[t, f] = qa @ mean_matrix @ qb
    return MeanSeries("forecast", np.arange(1, len(filters) + 1), values)
