"""Weighted-block Nakamoto consensus: analytics, fork trees, simulation and attack walks."""

from .analytics import (
    SemiMarkovModel,
    ThresholdQuery,
    consensus_rate_alpha,
    consistency_threshold_ironclad,
    embedded_chain,
    improvement_ratio,
    nakamoto_threshold,
    optimal_q_closed,
    optimal_q_numeric,
    pattern_stats,
    theta_lower_bound,
    tolerance_ratio_exact,
)
from .errors import (
    BoundaryMaximizerError,
    DegenerateParameterError,
    DomainError,
    InvalidParameterError,
    NoRootError,
)
from .forkgraph import BlockTree, Chain, validate_delta_fork
from .kernels import BACKEND
from .params import CharacteristicString, DerivedRates, ProtocolParams, derive_rates, sample_string
from .patterns import decompose_patterns, empirical_alpha
from .simulator import MetricsReport, SimConfig, estimate_qtilde, run_parallel, run_simulation
from .walk import WalkConfig, WalkOutcome, run_walks, step_distribution, tail_crossover

__version__ = "0.1.0"
