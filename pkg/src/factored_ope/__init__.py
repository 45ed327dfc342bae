"""Factored-action-space off-policy evaluation toolkit.

Tabular factored MDPs, factored policies, seeded trajectory simulation, the
decomposed importance-sampling estimator family, an exact enumeration
oracle, replicate metrics, and a sweep harness that reproduces the finding
suite as CSV tables.
"""

__version__ = "0.1.0"

from .errors import (
    CoverageViolationError,
    DataPolicyMismatchError,
    DegenerateWeightsError,
    EnumerationLimitError,
    FactoredOpeError,
    InvalidAbstractionError,
    SizingError,
)
from .estimators import (
    ESTIMATOR_IDS,
    Estimate,
    Grouping,
    WeightStats,
    WeightTensor,
    apply_estimator,
    compute_weights,
    dec_is_estimate,
    dec_pdis_estimate,
    dec_pdwis_estimate,
    group_factors,
    is_estimate,
    on_policy_estimate,
    pdis_estimate,
    pdwis_estimate,
)
from .experiment import (
    ExperimentConfig,
    ResultRow,
    builtin_experiments,
    run_experiment,
)
from .mdp import (
    FactorisationReport,
    FactoredMdp,
    Mdp1Params,
    abstract_state,
    build_mdp1,
    build_mdp2,
    check_reward_factorisation,
    check_transition_factorisation,
    derive_sub_transitions,
    load_mdp,
    mdp_from_name,
    save_mdp,
)
from .metrics import MetricsSummary, ReplicateSet, bias, ess, mse, summarize, variance
from .oracle import (
    AssumptionReport,
    MomentReport,
    check_assumption_covariances,
    enumerate_trajectories,
    exact_estimator_moments,
    exact_q,
)
from .policies import (
    BUILTIN_PAIR_LABELS,
    FactoredPolicy,
    PolicyPair,
    builtin_policy_pair,
    check_policy_factorisation,
    joint_probability,
    load_pair,
    policy_divergence,
    save_pair,
)
from .sampling import (
    AbstractedTrajectory,
    Dataset,
    DatasetMeta,
    Trajectory,
    abstract_trajectory,
    generate_dataset,
    load_dataset,
    rollout_actions,
    save_dataset,
    subset,
)
