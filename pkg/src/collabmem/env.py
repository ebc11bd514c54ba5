"""Synthetic personalized-conversation episodes.

Each episode is a single (history, query) pair. History items carry a topic,
a feature vector and a salience score; a small subset of items is the
ground-truth evidence for the query. Features are laid out in two groups:

* label channels ``[0, n_labels)`` -- a noisy one-hot statement of the user's
  preferred label for the item's topic;
* content channels ``[n_labels, d)`` -- Gaussian noise, shifted towards the
  query features for evidence items and for distractors.

Distractors (a ``noise_rate`` share of the non-evidence items) all belong to
one decoy topic that also appears among the answer options, and are salient,
though always less so than evidence.

The correct answer is the option ``(majority evidence topic, preferred label
for that topic)``; majority ties go to the lowest topic id.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, fields
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError, StorageError, ValidationError

N_OPTIONS = 4

# Probability that a non-evidence item states a random label instead of the
# user's preference. Evidence items always state the true label with bounded
# jitter, so an exact evidence-only memory always reveals the preference.
LABEL_NOISE = 0.3
EVIDENCE_LABEL_JITTER = 0.1
OTHER_LABEL_SPREAD = 0.6
EVIDENCE_TOPIC_STICKINESS = 0.75
EVIDENCE_ALIGN, EVIDENCE_SPREAD = 1.0, 0.5
DISTRACTOR_ALIGN, DISTRACTOR_SPREAD = 0.8, 0.6
# Salience ranges keep a small gap above every non-evidence item.
EVIDENCE_SALIENCE = (0.85, 1.0)
DISTRACTOR_SALIENCE = (0.5, 0.8)
OTHER_SALIENCE = (0.0, 0.8)


@dataclass(frozen=True)
class EnvConfig:
    n_items: int = 40
    n_topics: int = 6
    n_labels: int = 2
    d: int = 8
    evidence_size: int = 4
    noise_rate: float = 0.25
    n_options: int = N_OPTIONS

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_items", "n_topics", "n_labels", "d", "evidence_size", "n_options"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
        if self.n_items < 1:
            raise ConfigError(f"n_items: must be >= 1, got {self.n_items}")
        if self.n_topics < 2:
            raise ConfigError(f"n_topics: must be >= 2, got {self.n_topics}")
        if self.n_labels < 2:
            raise ConfigError(f"n_labels: must be >= 2, got {self.n_labels}")
        if self.d < 2:
            raise ConfigError(f"d: must be >= 2, got {self.d}")
        if self.d <= self.n_labels:
            raise ConfigError(
                f"d: must exceed n_labels ({self.n_labels}) to leave a content channel, got {self.d}"
            )
        if not 1 <= self.evidence_size <= self.n_items:
            raise ConfigError(
                f"evidence_size: must be in [1, n_items={self.n_items}], got {self.evidence_size}"
            )
        if not 0.0 <= float(self.noise_rate) <= 1.0:
            raise ConfigError(f"noise_rate: must be in [0, 1], got {self.noise_rate}")
        if self.n_options != N_OPTIONS:
            raise ConfigError(f"n_options: fixed at {N_OPTIONS}, got {self.n_options}")

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"env: unknown keys {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HistoryItem:
    id: int
    topic: int
    features: tuple[float, ...]
    is_evidence: bool
    salience: float


class History(tuple):
    """Tuple of HistoryItem with cached array views for the policies."""

    @cached_property
    def features(self) -> np.ndarray:
        return np.array([it.features for it in self], dtype=float).reshape(len(self), -1)

    @cached_property
    def topics(self) -> np.ndarray:
        return np.array([it.topic for it in self], dtype=np.int64)

    @cached_property
    def salience(self) -> np.ndarray:
        return np.array([it.salience for it in self], dtype=float)

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([it.id for it in self], dtype=np.int64)

    @cached_property
    def index(self) -> dict[int, int]:
        return {it.id: pos for pos, it in enumerate(self)}

    @cached_property
    def topic_set(self) -> frozenset[int]:
        return frozenset(int(t) for t in self.topics)

    @cached_property
    def ids_are_positions(self) -> bool:
        return bool(np.array_equal(self.ids, np.arange(len(self))))

    @cached_property
    def cache(self) -> dict:
        """Scratch space for derived per-history arrays (feature maps)."""
        return {}


@dataclass(frozen=True)
class UserPreference:
    labels: dict[int, int]


@dataclass(frozen=True)
class Query:
    features: tuple[float, ...]
    evidence_ids: frozenset[int]
    options: tuple[tuple[int, int], ...]
    correct_option: int

    @cached_property
    def feature_array(self) -> np.ndarray:
        return np.array(self.features, dtype=float)


@dataclass(frozen=True)
class Episode:
    episode_id: int
    history: History
    preference: UserPreference
    query: Query
    seed: int

    def __post_init__(self):
        if not isinstance(self.history, History):
            object.__setattr__(self, "history", History(self.history))


def format_option(option: tuple[int, int]) -> str:
    return f"topic={option[0]};label={option[1]}"


def parse_option(text: str) -> tuple[int, int]:
    try:
        topic_part, label_part = text.split(";")
        key_t, topic = topic_part.split("=")
        key_l, label = label_part.split("=")
        if key_t != "topic" or key_l != "label":
            raise ValueError(text)
        return int(topic), int(label)
    except ValueError as exc:
        raise ValueError(f"bad option descriptor {text!r}") from exc


def majority_topic(topics: Iterable[int]) -> int:
    counts = Counter(int(t) for t in topics)
    best = max(counts.values())
    return min(t for t, c in counts.items() if c == best)


def labeling_rule(history: Sequence[HistoryItem], evidence_ids, preference: UserPreference) -> tuple[int, int]:
    """The (topic, label) pair the correct option must encode."""
    by_id = {it.id: it for it in history}
    topic = majority_topic(by_id[i].topic for i in evidence_ids)
    return topic, preference.labels[topic]


def generate_episode(seed: int, cfg: EnvConfig | None = None, episode_id: int = 0) -> Episode:
    cfg = EnvConfig() if cfg is None else cfg
    cfg.validate()
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {seed}")
    rng = np.random.default_rng(seed)
    n, nl, d = cfg.n_items, cfg.n_labels, cfg.d

    pref = {t: int(rng.integers(nl)) for t in range(cfg.n_topics)}
    q_content = rng.standard_normal(d - nl)
    q_features = np.concatenate([np.zeros(nl), q_content])

    topics = rng.integers(cfg.n_topics, size=n)
    evidence = np.sort(rng.choice(n, size=cfg.evidence_size, replace=False))
    main_topic = int(rng.integers(cfg.n_topics))
    for k, idx in enumerate(evidence):
        if k == 0 or rng.random() < EVIDENCE_TOPIC_STICKINESS:
            topics[idx] = main_topic
        else:
            topics[idx] = rng.integers(cfg.n_topics)
    is_evidence = np.zeros(n, dtype=bool)
    is_evidence[evidence] = True

    evidence_topics = {int(topics[i]) for i in evidence}
    off_topics = [t for t in range(cfg.n_topics) if t not in evidence_topics]
    decoy = int(off_topics[int(rng.integers(len(off_topics)))]) if off_topics else None

    others = np.flatnonzero(~is_evidence)
    n_distract = int(round(cfg.noise_rate * len(others)))
    distractors = rng.choice(others, size=n_distract, replace=False) if n_distract else np.array([], int)
    is_distractor = np.zeros(n, dtype=bool)
    is_distractor[distractors] = True
    if decoy is not None:
        topics[is_distractor] = decoy

    content = rng.standard_normal((n, d - nl))
    content[is_evidence] = EVIDENCE_ALIGN * q_content + EVIDENCE_SPREAD * content[is_evidence]
    content[is_distractor] = DISTRACTOR_ALIGN * q_content + DISTRACTOR_SPREAD * content[is_distractor]

    stated = np.array([pref[int(t)] for t in topics])
    flip = (rng.random(n) < LABEL_NOISE) & ~is_evidence
    stated[flip] = rng.integers(nl, size=int(flip.sum()))
    label_ch = np.eye(nl)[stated] + OTHER_LABEL_SPREAD * rng.standard_normal((n, nl))
    label_ch[is_evidence] = np.eye(nl)[stated[is_evidence]] + rng.uniform(
        -EVIDENCE_LABEL_JITTER, EVIDENCE_LABEL_JITTER, size=(cfg.evidence_size, nl)
    )

    salience = rng.uniform(*OTHER_SALIENCE, size=n)
    salience[is_distractor] = rng.uniform(*DISTRACTOR_SALIENCE, size=n_distract)
    salience[is_evidence] = rng.uniform(*EVIDENCE_SALIENCE, size=cfg.evidence_size)

    features = np.concatenate([label_ch, content], axis=1)
    history = History(
        HistoryItem(
            id=i,
            topic=int(topics[i]),
            features=tuple(float(x) for x in features[i]),
            is_evidence=bool(is_evidence[i]),
            salience=float(salience[i]),
        )
        for i in range(n)
    )
    preference = UserPreference(labels=pref)

    evidence_ids = frozenset(int(i) for i in evidence)
    correct = labeling_rule(history, evidence_ids, preference)
    options = _make_options(rng, correct, evidence_topics, decoy, pref, cfg)
    order = rng.permutation(N_OPTIONS)
    options = tuple(options[k] for k in order)
    query = Query(
        features=tuple(float(x) for x in q_features),
        evidence_ids=evidence_ids,
        options=options,
        correct_option=options.index(correct),
    )
    return Episode(episode_id=int(episode_id), history=history, preference=preference, query=query, seed=seed)


def _make_options(rng, correct, evidence_topics, decoy, pref, cfg: EnvConfig) -> list[tuple[int, int]]:
    # One same-topic wrong-label option, the decoy topic with its preferred
    # label, then other off-evidence topics; only the correct option pairs the
    # majority evidence topic with the preferred label.
    topic, label = correct
    wrong = [l for l in range(cfg.n_labels) if l != label]
    options = [correct, (topic, wrong[int(rng.integers(len(wrong)))])]
    if decoy is not None:
        options.append((decoy, pref[decoy]))
    off_topics = [t for t in range(cfg.n_topics) if t not in evidence_topics and t != decoy]
    for t in rng.permutation(off_topics)[: N_OPTIONS - len(options)]:
        options.append((int(t), int(rng.integers(cfg.n_labels))))
    spare = [
        (t, l)
        for t in range(cfg.n_topics)
        for l in range(cfg.n_labels)
        if (t, l) not in options
    ]
    while len(options) < N_OPTIONS:
        options.append(spare.pop(int(rng.integers(len(spare)))))
    return options


def episode_seeds(master_seed: int, split: int, count: int) -> list[int]:
    """Independent 64-bit episode seeds for one data split."""
    ss = np.random.SeedSequence([int(master_seed), int(split)])
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64)] if count else []


def generate_episodes(master_seed: int, cfg: EnvConfig, count: int, split: int = 0, start_id: int = 0) -> list[Episode]:
    return [
        generate_episode(s, cfg, episode_id=start_id + k)
        for k, s in enumerate(episode_seeds(master_seed, split, count))
    ]


# --- JSONL persistence ------------------------------------------------------


def episode_to_dict(ep: Episode) -> dict:
    return {
        "episode_id": ep.episode_id,
        "seed": ep.seed,
        "history": [
            {
                "id": it.id,
                "topic": it.topic,
                "features": list(it.features),
                "is_evidence": it.is_evidence,
                "salience": it.salience,
            }
            for it in ep.history
        ],
        "preference": {str(t): l for t, l in sorted(ep.preference.labels.items())},
        "query": {
            "features": list(ep.query.features),
            "evidence_ids": sorted(ep.query.evidence_ids),
            "options": [format_option(o) for o in ep.query.options],
            "correct_option": ep.query.correct_option,
        },
    }


def episode_from_dict(data: dict) -> Episode:
    eid = data.get("episode_id", "?")
    try:
        history = History(
            HistoryItem(
                id=int(h["id"]),
                topic=int(h["topic"]),
                features=tuple(float(x) for x in h["features"]),
                is_evidence=bool(h["is_evidence"]),
                salience=float(h["salience"]),
            )
            for h in data["history"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(eid, "history", str(exc)) from exc
    try:
        preference = UserPreference({int(t): int(l) for t, l in data["preference"].items()})
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ValidationError(eid, "preference", str(exc)) from exc
    try:
        q = data["query"]
        query = Query(
            features=tuple(float(x) for x in q["features"]),
            evidence_ids=frozenset(int(i) for i in q["evidence_ids"]),
            options=tuple(parse_option(o) for o in q["options"]),
            correct_option=int(q["correct_option"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(eid, "query", str(exc)) from exc
    for key in ("episode_id", "seed"):
        if not isinstance(data.get(key), int):
            raise ValidationError(eid, key, "missing or not an integer")
    ep = Episode(episode_id=data["episode_id"], history=history, preference=preference, query=query, seed=data["seed"])
    validate_episode(ep)
    return ep


def validate_episode(ep: Episode, d: int | None = None) -> None:
    eid = ep.episode_id
    if ep.episode_id < 0:
        raise ValidationError(eid, "episode_id", "must be non-negative")
    if not 0 <= ep.seed < 2**64:
        raise ValidationError(eid, "seed", "must be a 64-bit unsigned integer")
    ids = [it.id for it in ep.history]
    if ids != list(range(len(ids))):
        raise ValidationError(eid, "history", "ids must be distinct and contiguous from 0")
    dims = {len(it.features) for it in ep.history}
    if d is not None:
        dims.add(d)
    if len(dims) > 1:
        raise ValidationError(eid, "history", f"inconsistent feature dimensions {sorted(dims)}")
    for it in ep.history:
        if not 0.0 <= it.salience <= 1.0:
            raise ValidationError(eid, "history", f"item {it.id} salience out of [0, 1]")
        if it.topic < 0:
            raise ValidationError(eid, "history", f"item {it.id} has negative topic")
    missing = {it.topic for it in ep.history} - set(ep.preference.labels)
    if missing:
        raise ValidationError(eid, "preference", f"no label for topics {sorted(missing)}")
    q = ep.query
    if dims and len(q.features) not in dims:
        raise ValidationError(eid, "query.features", "dimension differs from history features")
    if not q.evidence_ids:
        raise ValidationError(eid, "query.evidence_ids", "must be non-empty")
    if not q.evidence_ids <= set(ids):
        raise ValidationError(eid, "query.evidence_ids", "not a subset of history ids")
    flagged = {it.id for it in ep.history if it.is_evidence}
    if flagged != set(q.evidence_ids):
        raise ValidationError(eid, "query.evidence_ids", "differs from items flagged is_evidence")
    if len(q.options) != N_OPTIONS or len(set(q.options)) != N_OPTIONS:
        raise ValidationError(eid, "query.options", f"need exactly {N_OPTIONS} distinct options")
    if not 0 <= q.correct_option < N_OPTIONS:
        raise ValidationError(eid, "query.correct_option", "out of range")
    if q.options[q.correct_option] != labeling_rule(ep.history, q.evidence_ids, ep.preference):
        raise ValidationError(eid, "query.correct_option", "does not match the labeling rule")


def save_episodes(episodes: Sequence[Episode], path) -> int:
    path = Path(path)
    count = 0
    try:
        with path.open("w", encoding="utf-8") as fh:
            for ep in episodes:
                fh.write(json.dumps(episode_to_dict(ep)) + "\n")
                count += 1
    except OSError as exc:
        raise StorageError(path, exc.strerror or str(exc)) from exc
    return count


def load_episodes(path) -> list[Episode]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise StorageError(path, exc.strerror or str(exc)) from exc
    episodes = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(path, lineno, exc.msg) from exc
        if not isinstance(data, dict):
            raise ParseError(path, lineno, "expected a JSON object")
        episodes.append(episode_from_dict(data))
    return episodes
