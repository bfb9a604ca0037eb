"""Look-ahead tree policies with scoring weights tuned by derivative-free search."""
from .mdp import (
    ChainWalk,
    ContractViolation,
    DoubleIntegrator,
    GenerativeModel,
    PendulumSwingup,
    UnsupportedDomainError,
    initial_states,
    make_model,
    step,
    value_iteration_oracle,
)
from .tree import (
    LookaheadTree,
    TreeNode,
    act,
    baseline_scorer,
    build_tree,
    feature_dimension,
    features,
    preset_theta,
    score,
    select_action,
)
from .optimizers import (
    CemConfig,
    GpoConfig,
    OnePlusOneConfig,
    OptimizerRun,
    SearchSpace,
    cem_maximize,
    expected_improvement,
    gp_posterior,
    gpo_maximize,
    one_plus_one_maximize,
)
from .harness import EvaluationSpec, RolloutRecord, budget_sweep, objective, rollout, run_campaign

__version__ = "0.1.0"
