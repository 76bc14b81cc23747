"""Desk-scale lab for token-MDP imitation training and beam-search decoding.

Everything runs on tiny synthetic MDPs small enough for exact enumeration, so
softmax-policy identities, analytic gradients, backward-induction values and
decoding behaviour can all be checked against independent oracles.
"""

from ._version import __version__
from .errors import (
    BeamLabError,
    CapExceededError,
    CoverageError,
    InvalidTrajectoryError,
    NonTerminalContextError,
    TerminalContextError,
)
from .mdp import (
    DEFAULT_ENUMERATION_CAP,
    Context,
    DemoSet,
    RewardTable,
    TokenMdp,
    Trajectory,
    Vocabulary,
    enumerate_trajectories,
    rollout,
    step,
    terminal_reward,
)
from .model import InitSpec, LogitModel, entropy, init_model, load_model, save_model
from .objectives import (
    GradientTable,
    LossReport,
    TrainConfig,
    direct_v_update,
    finite_diff_grad,
    overall_loss,
    reinforce_grad,
    sft_grad,
    sft_loss,
    train_step,
    v_grad,
    v_loss,
)
from .oracle import (
    SoftQTable,
    brute_force_best_sequence,
    dump_oracle_csv,
    estimation_error,
    optimal_policy,
    policy_expected_reward,
    soft_q_backward,
)
from .decoder import (
    BeamHypothesis,
    DecodeTrace,
    ScoreDecomposition,
    beam_search,
    dump_decomposition_csv,
    greedy_decode,
    over_optimism_report,
    score_decomposition,
)
from .harness import (
    ExperimentConfig,
    RunReport,
    RunRow,
    emit_report,
    over_optimism_experiment_config,
    run_experiment,
    train_run,
    value_gap_series,
)
from .tasks import generate_task, load_task, save_task

__all__ = [
    "__version__",
    "BeamLabError",
    "CapExceededError",
    "CoverageError",
    "InvalidTrajectoryError",
    "NonTerminalContextError",
    "TerminalContextError",
    "DEFAULT_ENUMERATION_CAP",
    "Context",
    "DemoSet",
    "RewardTable",
    "TokenMdp",
    "Trajectory",
    "Vocabulary",
    "enumerate_trajectories",
    "rollout",
    "step",
    "terminal_reward",
    "InitSpec",
    "LogitModel",
    "entropy",
    "init_model",
    "load_model",
    "save_model",
    "GradientTable",
    "LossReport",
    "TrainConfig",
    "direct_v_update",
    "finite_diff_grad",
    "overall_loss",
    "reinforce_grad",
    "sft_grad",
    "sft_loss",
    "train_step",
    "v_grad",
    "v_loss",
    "SoftQTable",
    "brute_force_best_sequence",
    "dump_oracle_csv",
    "estimation_error",
    "optimal_policy",
    "policy_expected_reward",
    "soft_q_backward",
    "BeamHypothesis",
    "DecodeTrace",
    "ScoreDecomposition",
    "beam_search",
    "dump_decomposition_csv",
    "greedy_decode",
    "over_optimism_report",
    "score_decomposition",
    "ExperimentConfig",
    "RunReport",
    "RunRow",
    "emit_report",
    "over_optimism_experiment_config",
    "run_experiment",
    "train_run",
    "value_gap_series",
    "generate_task",
    "load_task",
    "save_task",
]
