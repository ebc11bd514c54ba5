"""Local and global rewards for the memory pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .env import N_OPTIONS, Episode
from .errors import ConfigError, PreconditionError, ValidationError
from .policies import CoarseProfile


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.8
    beta: float = 0.2
    K: int = 4

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= float(v) <= 1.0:
                raise ConfigError(f"{name}: must be in [0, 1], got {v}")
        if isinstance(self.K, bool) or not isinstance(self.K, int) or self.K < 1:
            raise ConfigError(f"K: must be a positive integer, got {self.K!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"rewards: unknown keys {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LocalRewards:
    r_cons_f: float
    r_cons_c: float
    r_ret: float
    r_ans: float

    def local(self) -> tuple[float, float, float]:
        return (self.r_cons_f, self.r_cons_c, self.r_ret)


def _coverage_overlap(selected, evidence, weight: float) -> float:
    if not isinstance(selected, (set, frozenset)):
        selected = set(selected)
    if not isinstance(evidence, (set, frozenset)):
        evidence = set(evidence)
    if not evidence:
        raise PreconditionError("evidence set must be non-empty")
    if not selected:
        return 0.0
    hit, n_ev, n_union = len(selected & evidence), len(evidence), len(selected | evidence)
    # exact rational arithmetic, rounded once: M = E gives exactly 1.0 for any weight
    p, q = float(weight).as_integer_ratio()
    return hit * (p * n_union + (q - p) * n_ev) / (q * n_ev * n_union)


def extraction_reward(included_ids, evidence_ids, alpha: float = 0.8) -> float:
    """Coverage-weighted overlap of the fine memory with the evidence set."""
    return _coverage_overlap(included_ids, evidence_ids, alpha)


def retrieval_reward(retrieved_ids, evidence_ids, beta: float = 0.2) -> float:
    """Precision-weighted overlap of the retrieved items with the evidence set."""
    return _coverage_overlap(retrieved_ids, evidence_ids, beta)


def profile_reward(profile: CoarseProfile, episode: Episode) -> float:
    """Share of history topics whose predicted label matches the user's preference.

    Deterministic rubric: topics missing from the profile count as wrong.
    """
    topics = episode.history.topic_set
    if not topics:
        return 0.0
    labels = episode.preference.labels
    hits = sum(1 for t in topics if t in profile.predicted_labels and profile.predicted_labels[t] == labels[t])
    return hits / len(topics)


def answer_reward(answer: int, correct_option: int) -> float:
    for name, v in (("answer", answer), ("correct_option", correct_option)):
        if not 0 <= v < N_OPTIONS:
            raise ValidationError("?", name, f"option index {v} outside [0, {N_OPTIONS})")
    return 1.0 if answer == correct_option else 0.0
