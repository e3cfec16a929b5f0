"""Suggestion and control policies over the simulation."""

from .baselines import (
    BRUTE_FORCE_MAX_HOSPITALS,
    BRUTE_FORCE_MAX_PATIENTS,
    GreedyPolicy,
    RandomPolicy,
    SizeError,
    brute_force_joint,
    greedy_suggest,
    projected_assignment_value,
    projected_unassigned_value,
    suggestion_rationale,
)
from .encoding import CapacityError, ObsNorm, action_from_flat, encode, flat_valid_actions, obs_length
from .evaluate import EvalSummary, evaluate, greedy_rollout_mortality, rollout
from .nets import ActorCritic, Adam, masked_log_softmax
from .ppo import MciEnv, PPOConfig, TrainingDiverged, TrainResult, compute_gae, curve_to_csv, ppo_loss_and_grad, train_ppo
from .store import (
    LearnedPolicy,
    PolicyLoadError,
    PolicySpec,
    act,
    build_policy,
    load_policy,
    save_policy,
)

__all__ = [
    "ActorCritic",
    "Adam",
    "BRUTE_FORCE_MAX_HOSPITALS",
    "BRUTE_FORCE_MAX_PATIENTS",
    "CapacityError",
    "EvalSummary",
    "GreedyPolicy",
    "LearnedPolicy",
    "MciEnv",
    "ObsNorm",
    "PPOConfig",
    "PolicyLoadError",
    "PolicySpec",
    "RandomPolicy",
    "SizeError",
    "TrainResult",
    "TrainingDiverged",
    "act",
    "action_from_flat",
    "brute_force_joint",
    "build_policy",
    "compute_gae",
    "curve_to_csv",
    "encode",
    "evaluate",
    "flat_valid_actions",
    "greedy_rollout_mortality",
    "greedy_suggest",
    "load_policy",
    "masked_log_softmax",
    "obs_length",
    "ppo_loss_and_grad",
    "projected_assignment_value",
    "projected_unassigned_value",
    "rollout",
    "save_policy",
    "suggestion_rationale",
    "train_ppo",
]
