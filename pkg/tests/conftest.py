"""Shared builders for randomized test models."""

from __future__ import annotations

import numpy as np
import pytest

from fhmmlocal.model import FhmmModel, GaussianChainEmission


def random_stochastic(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Rows drawn from a Dirichlet(1) so every entry is strictly positive."""
    return rng.dirichlet(np.ones(cols), size=rows)


def random_chain_model(rng: np.random.Generator, num_variables: int, cardinality: int = 2) -> FhmmModel:
    transition = random_stochastic(rng, cardinality, cardinality)
    initial = random_stochastic(rng, 1, cardinality)[0]
    state_values = np.sort(rng.uniform(-2.0, 2.0, size=cardinality))
    emission = GaussianChainEmission(
        state_values,
        scale=rng.uniform(0.5, 2.5),
        variance=rng.uniform(0.5, 4.0),
    )
    return FhmmModel.homogeneous_chain(num_variables, transition, initial, emission)


def reference_chain_model(num_variables: int, scale: float = 1.0, variance: float = 1.0) -> FhmmModel:
    """The two-state chain used throughout the experiment-style tests."""
    transition = np.array([[0.6, 0.4], [0.2, 0.8]])
    initial = np.array([0.5, 0.5])
    emission = GaussianChainEmission(np.array([0.0, 1.0]), scale, variance)
    return FhmmModel.homogeneous_chain(num_variables, transition, initial, emission)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
