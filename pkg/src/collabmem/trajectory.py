"""Sequential rollouts of the extraction -> profile -> retrieval pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .env import Episode, History, Query
from .errors import ConfigError, StepError
from .policies import (
    AGENTS,
    EXTRACTION,
    PROFILE,
    RETRIEVAL,
    ActionRecord,
    CoarseProfile,
    ExtractionState,
    FineMemory,
    PolicyParams,
    ProfileState,
    RetrievalOutcome,
    RetrievalState,
    extraction_act,
    profile_act,
    retrieval_act,
)
from .rewards import (
    LocalRewards,
    RewardConfig,
    answer_reward,
    extraction_reward,
    profile_reward,
    retrieval_reward,
)

ProfileScorer = Callable[[CoarseProfile, Episode], float]


@dataclass(frozen=True, eq=False)
class Trajectory:
    episode: Episode
    actions: tuple[ActionRecord, ActionRecord, ActionRecord]
    rewards: LocalRewards
    k: int

    @property
    def episode_id(self) -> int:
        return self.episode.episode_id

    @property
    def s0(self) -> History:
        return self.episode.history

    @property
    def s1(self) -> FineMemory:
        return self.actions[0].action

    @property
    def s2(self) -> tuple[tuple[FineMemory, CoarseProfile], Query]:
        return (self.actions[0].action, self.actions[1].action), self.episode.query

    @property
    def s3(self) -> RetrievalOutcome:
        return self.actions[2].action

    @property
    def states(self):
        return (self.s0, self.s1, self.s2, self.s3)

    def agent_state(self, n: int):
        """The policy-facing state in which action ``a_n`` was taken."""
        h = self.episode.history
        if n == 0:
            return ExtractionState(h)
        if n == 1:
            return ProfileState(h, self.s1)
        if n == 2:
            (fine, prof), query = self.s2
            return RetrievalState(h, fine, prof, query, self.k)
        raise IndexError(n)

    def __eq__(self, other):
        return (
            isinstance(other, Trajectory)
            and self.episode is other.episode
            and self.actions == other.actions
            and self.rewards == other.rewards
            and self.k == other.k
        )


def compute_rewards(episode: Episode, fine: FineMemory, profile: CoarseProfile, outcome: RetrievalOutcome,
                    reward_cfg: RewardConfig, profile_scorer: ProfileScorer | None = None) -> LocalRewards:
    evidence = episode.query.evidence_ids
    scorer = profile_scorer or profile_reward
    return LocalRewards(
        r_cons_f=extraction_reward(fine.included_ids, evidence, reward_cfg.alpha),
        r_cons_c=float(scorer(profile, episode)),
        r_ret=retrieval_reward(outcome.retrieved_ids, evidence, reward_cfg.beta),
        r_ans=answer_reward(outcome.answer, episode.query.correct_option),
    )


def run_trajectory(
    policies: Mapping[str, PolicyParams],
    episode: Episode,
    K: int,
    reward_cfg: RewardConfig,
    rng: np.random.Generator,
    profile_scorer: ProfileScorer | None = None,
) -> Trajectory:
    missing = [a for a in AGENTS if a not in policies]
    if missing:
        raise ConfigError(f"policies: missing agents {missing}")
    h = episode.history
    step = 0
    try:
        fine, lp0 = extraction_act(policies[EXTRACTION], h, rng)
        step = 1
        prof, lp1 = profile_act(policies[PROFILE], fine, h, rng)
        step = 2
        outcome, lp2 = retrieval_act(policies[RETRIEVAL], (fine, prof), episode.query, K, rng, h)
        step = 3
        rewards = compute_rewards(episode, fine, prof, outcome, reward_cfg, profile_scorer)
    except StepError:
        raise
    except Exception as exc:
        raise StepError(step, exc) from exc
    actions = (
        ActionRecord(EXTRACTION, fine, lp0),
        ActionRecord(PROFILE, prof, lp1),
        ActionRecord(RETRIEVAL, outcome, lp2),
    )
    return Trajectory(episode, actions, rewards, K)


@dataclass(frozen=True, eq=False)
class TrajectoryGroup:
    episode_id: int
    trajectories: tuple[Trajectory, ...]
    local_rewards: dict[str, np.ndarray]
    global_rewards: np.ndarray

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory]) -> "TrajectoryGroup":
        trajectories = tuple(trajectories)
        if len(trajectories) < 2:
            raise ConfigError(f"G: a group needs at least 2 trajectories, got {len(trajectories)}")
        local = np.array([t.rewards.local() for t in trajectories]).T
        return cls(
            episode_id=trajectories[0].episode_id,
            trajectories=trajectories,
            local_rewards={a: local[n] for n, a in enumerate(AGENTS)},
            global_rewards=np.array([t.rewards.r_ans for t in trajectories]),
        )

    def local_matrix(self) -> np.ndarray:
        return np.stack([self.local_rewards[a] for a in AGENTS])

    def __len__(self):
        return len(self.trajectories)


def trajectory_rng(group_rng_seed, index: int) -> np.random.Generator:
    entropy = list(group_rng_seed) if isinstance(group_rng_seed, (tuple, list)) else [int(group_rng_seed)]
    return np.random.default_rng(np.random.SeedSequence(entropy + [int(index)]))


def sample_group(
    policies: Mapping[str, PolicyParams],
    episode: Episode,
    G: int,
    K: int,
    reward_cfg: RewardConfig,
    group_rng_seed,
    profile_scorer: ProfileScorer | None = None,
) -> TrajectoryGroup:
    if G < 2:
        raise ConfigError(f"G: group size must be >= 2, got {G}")
    return TrajectoryGroup.from_trajectories(
        run_trajectory(policies, episode, K, reward_cfg, trajectory_rng(group_rng_seed, i), profile_scorer)
        for i in range(G)
    )


# --- debug dump -------------------------------------------------------------


def trajectory_to_dict(traj: Trajectory) -> dict:
    fine, prof, outcome = (rec.action for rec in traj.actions)
    return {
        "episode_id": traj.episode_id,
        "k": traj.k,
        "s1": {"included_ids": sorted(fine.included_ids)},
        "s2": {"predicted_labels": {str(t): l for t, l in sorted(prof.predicted_labels.items())}},
        "s3": {"retrieved_ids": list(outcome.retrieved_ids), "answer": outcome.answer},
        "logprobs": [rec.logprob for rec in traj.actions],
        "rewards": {
            "r_cons_f": traj.rewards.r_cons_f,
            "r_cons_c": traj.rewards.r_cons_c,
            "r_ret": traj.rewards.r_ret,
            "r_ans": traj.rewards.r_ans,
        },
    }


def dump_trajectories(trajectories: Sequence[Trajectory], fh) -> None:
    for t in trajectories:
        fh.write(json.dumps(trajectory_to_dict(t)) + "\n")
