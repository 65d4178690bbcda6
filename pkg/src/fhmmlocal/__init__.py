"""Factorial hidden Markov models with graph-localized approximate inference.

The package provides exact joint filtering/smoothing for small models, a
block-factorized approximation whose accuracy is controlled by a locality
radius on the emission factor graph, EM parameter estimation driven by the
approximate smoother, and observation-mean forecasting, plus file formats
and a CLI tying them together.
"""

from .distributions import (
    DenseTable,
    FactorizedDistribution,
    ltv_distance,
    marginalize,
    normalize,
    product_join,
    tv_distance,
)
from .em import EmConfig, EmEstimate, em_fit, m_step
from .errors import (
    CapacityError,
    DegenerateDistributionError,
    DegenerateStatisticsError,
    FhmmError,
    InvalidArgumentError,
    ParseError,
    UnsupportedQueryError,
)
from .exact import (
    brute_force_evidence,
    brute_force_posterior,
    correct,
    filter_exact,
    predict,
    smooth_exact,
)
from .factor_graph import (
    FactorGraph,
    GraphConstants,
    Partition,
    boundary_sets,
    build_chain_graph,
    graph_constants,
    graph_distance,
    locality_exponents,
    neighborhoods,
    singleton_partition,
    trivial_partition,
)
from .forecast import MeanSeries, one_step_forecast, smoothed_emission_mean
from .graph_inference import (
    CostCounter,
    LocalityPlan,
    approx_bayes_update,
    backward_block_kernel,
    block_predict,
    build_locality_plan,
    graph_filter,
    graph_smoother,
)
from .model import (
    FhmmModel,
    GaussianChainEmission,
    ObservationSequence,
    emission_factor,
    full_likelihood,
    sample_trajectory,
    validate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
