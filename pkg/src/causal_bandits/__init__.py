"""Causal bandits: interventional models, best-arm algorithms and experiments."""

from .baselines import successive_reject
from .causal_model import (
    Action,
    CapacityError,
    CausalBanditError,
    CausalModel,
    DomainError,
    InconsistencyError,
    InvalidActionError,
    Variable,
    interventional_parent_dist,
    true_mean,
)
from .general_bandit import (
    EtaDistribution,
    TruncationLevels,
    m_eta,
    optimize_eta,
    parallel_eta,
    run_algorithm2,
    theorem3_truncation,
)
from .harness import ExperimentConfig, run_experiment
from .parallel_bandit import ParallelEnv, compute_m, run_algorithm1

__version__ = "0.1.0"
