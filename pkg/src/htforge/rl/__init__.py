"""Reinforcement learning engine: numpy policy network plus PPO trainer."""

from .nets import (
    ActionSpace,
    Adam,
    PolicyParams,
    evaluate_actions,
    greedy_actions,
    init_params,
    multi_binary,
    multi_discrete,
    sample_actions,
)
from .ppo import (
    PpoConfig,
    TrainingCurve,
    TrainSummary,
    compute_gae,
    load_checkpoint,
    ppo_loss_and_grads,
    run_policy,
    save_checkpoint,
    train,
)

__all__ = [
    "ActionSpace",
    "Adam",
    "PolicyParams",
    "PpoConfig",
    "TrainingCurve",
    "TrainSummary",
    "compute_gae",
    "evaluate_actions",
    "greedy_actions",
    "init_params",
    "load_checkpoint",
    "multi_binary",
    "multi_discrete",
    "ppo_loss_and_grads",
    "run_policy",
    "sample_actions",
    "save_checkpoint",
    "train",
]
