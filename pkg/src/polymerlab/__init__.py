"""Directed polymers in heavy-tailed random environments.

Modules: ``disorder`` (weight laws), ``polymer`` (environments and exact
partition functions), ``chaos`` (multilinear expansion), ``limits``
(centering, limit laws, Poisson-field sampler), ``stats`` (distribution
comparison) and ``experiment`` (configs, replica runs, persistence).
"""

from .disorder import CutoffSpec, Family, TailSpec
from .errors import CostGuardError, DivergentMomentError, DomainError, UnsupportedRegimeError
from .experiment import BetaSchedule, ExperimentConfig, SweepRow, run_replicas
from .limits import CenteringSpec, PoissonField, Theorem
from .polymer import Environment, PartitionResult, generate_env, log_partition, log_partition_restricted
from .stats import EmpiricalSample, SlopeFit

__version__ = "0.1.0"

__all__ = [
    "BetaSchedule", "CenteringSpec", "CostGuardError", "CutoffSpec", "DivergentMomentError",
    "DomainError", "EmpiricalSample", "Environment", "ExperimentConfig", "Family", "PartitionResult",
    "PoissonField", "SlopeFit", "SweepRow", "TailSpec", "Theorem", "UnsupportedRegimeError",
    "generate_env", "log_partition", "log_partition_restricted", "run_replicas",
]
