"""Finite-armed stochastic linear bandits: allocation lower bounds, policies and a Monte Carlo harness."""

from .conc import Thresholds, empirical_violation_rate, f_delta
from .design import (
    Allocation,
    PullPlan,
    Spanner,
    barycentric_spanner,
    constraint_gradient,
    lower_bound_constant,
    pull_plan,
    solve_allocation,
    spanner_coefficients,
    truncated_plan,
)
from .env import LinearBanditEnv, replication_seed
from .errors import (
    BadArmIndex,
    BanditError,
    ConfigError,
    HorizonExceeded,
    InfeasibleNumerics,
    InstanceError,
    NonUniqueOptimum,
    NumericalError,
    RankDeficient,
    Singular,
)
from .harness import (
    ExperimentConfig,
    GramAverage,
    counterexample_report,
    kl_decomposition,
    run_experiment,
    lower_bound_diagnostic,
    write_csv,
)
from .instances import ActionSet, Instance, catalog, compute_gaps, counterexample, example2, finite_armed, validate
from .policies import PolicyConfig, RegretTrace, policy_run

__version__ = "0.1.0"
