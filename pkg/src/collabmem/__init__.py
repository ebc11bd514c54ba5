"""Collaborative memory agents trained with group-relative policy optimization
and adaptive, ranking-consistency credit assignment, on a synthetic environment."""

from .credit import credit_weights, final_rewards, integrate_rewards, ndcg_consistency
from .env import EnvConfig, Episode, generate_episode, load_episodes, save_episodes
from .errors import CollabMemError, ConfigError, DataError, StorageError
from .harness import RunConfig, RunReport, convergence_step, evaluate, report, train
from .optim import GrpoConfig, clipped_objective, group_advantages, kl_estimate, update_agent
from .policies import PolicyParams, init_policies, logprob_grad, logprob_of
from .rewards import RewardConfig, answer_reward, extraction_reward, profile_reward, retrieval_reward
from .trajectory import run_trajectory, sample_group

__version__ = "0.1.0"

__all__ = [
    "CollabMemError", "ConfigError", "DataError", "EnvConfig", "Episode", "GrpoConfig", "PolicyParams",
    "RewardConfig", "RunConfig", "RunReport", "StorageError", "answer_reward", "clipped_objective",
    "convergence_step", "credit_weights", "evaluate", "extraction_reward", "final_rewards",
    "generate_episode", "group_advantages", "init_policies", "integrate_rewards", "kl_estimate",
    "load_episodes", "logprob_grad", "logprob_of", "ndcg_consistency", "profile_reward", "report",
    "retrieval_reward", "run_trajectory", "sample_group", "save_episodes", "train", "update_agent",
]
