"""Linear-feature stochastic policies for the three memory agents.

* extraction: independent Bernoulli inclusion per history item,
  ``p = sigmoid(theta . phi(item))`` with ``phi = features + [salience, 1]``.
* profile: per-topic categorical over labels, ``softmax(W psi(topic))`` where
  ``psi`` is the mean feature vector of the included items of that topic
  followed by ``[count, 1]``. ``W`` is stored row-major in ``theta``.
* retrieval: Plackett-Luce top-K over memory items scored by
  ``theta_r . chi(item, query)`` with ``chi = features * query + [salience, 1]``,
  followed by an answer head ``softmax(theta_a . omega(option))`` over the
  four options.

Every policy exposes sampling, exact log-probability of a given action and
its analytic gradient with respect to ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .env import EnvConfig, History, Query
from .errors import FeasibilityError, ParameterError

EXTRACTION, PROFILE, RETRIEVAL = "extraction", "profile", "retrieval"
AGENTS = (EXTRACTION, PROFILE, RETRIEVAL)

# omega(option) = [topic share among retrieved, profile agrees, product]
ANSWER_DIM = 3


def param_dim(agent_id: str, cfg: EnvConfig) -> int:
    block = cfg.d + 2
    if agent_id == EXTRACTION:
        return block
    if agent_id == PROFILE:
        return cfg.n_labels * block
    if agent_id == RETRIEVAL:
        return block + ANSWER_DIM
    raise ParameterError(f"unknown agent {agent_id!r}")


@dataclass(frozen=True, eq=False)
class PolicyParams:
    agent_id: str
    theta: np.ndarray

    def __post_init__(self):
        if self.agent_id not in AGENTS:
            raise ParameterError(f"unknown agent {self.agent_id!r}")
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise ParameterError(f"{self.agent_id}: theta has non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def replace(self, theta) -> "PolicyParams":
        return PolicyParams(self.agent_id, theta)

    def __eq__(self, other):
        return (
            isinstance(other, PolicyParams)
            and self.agent_id == other.agent_id
            and np.array_equal(self.theta, other.theta)
        )

    def __repr__(self):
        return f"PolicyParams({self.agent_id!r}, dim={self.theta.size})"


def init_params(agent_id: str, cfg: EnvConfig, rng: np.random.Generator | None = None, scale: float = 0.01) -> PolicyParams:
    dim = param_dim(agent_id, cfg)
    theta = np.zeros(dim) if rng is None else scale * rng.standard_normal(dim)
    return PolicyParams(agent_id, theta)


def init_policies(cfg: EnvConfig, seed: int | None = None) -> dict[str, PolicyParams]:
    rng = None if seed is None else np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    return {a: init_params(a, cfg, rng) for a in AGENTS}


# --- actions and states -----------------------------------------------------


@dataclass(frozen=True)
class FineMemory:
    included_ids: frozenset[int]


@dataclass(frozen=True)
class CoarseProfile:
    predicted_labels: dict[int, int]


@dataclass(frozen=True)
class RetrievalOutcome:
    retrieved_ids: tuple[int, ...]
    answer: int


@dataclass(frozen=True)
class ExtractionState:
    history: History


@dataclass(frozen=True)
class ProfileState:
    history: History
    fine: FineMemory


@dataclass(frozen=True)
class RetrievalState:
    history: History
    fine: FineMemory
    profile: CoarseProfile
    query: Query
    k: int


State = Union[ExtractionState, ProfileState, RetrievalState]
Action = Union[FineMemory, CoarseProfile, RetrievalOutcome]


@dataclass(frozen=True)
class ActionRecord:
    agent_id: str
    action: Action
    logprob: float


# --- feature maps -----------------------------------------------------------


def phi(history: History) -> np.ndarray:
    cached = history.cache.get("phi")
    if cached is None:
        n = len(history)
        cached = np.column_stack([history.features, history.salience, np.ones(n)]) if n else np.zeros((0, 2))
        history.cache["phi"] = cached
    return cached


def memory_positions(history: History, fine: FineMemory) -> np.ndarray:
    """Positions of the included items in history order."""
    ids = np.fromiter(fine.included_ids, dtype=np.int64, count=len(fine.included_ids))
    if history.ids_are_positions:
        if ids.size and (ids.min() < 0 or ids.max() >= len(history)):
            bad = ids[(ids < 0) | (ids >= len(history))][0]
            raise FeasibilityError(f"fine memory references unknown history id {bad}")
        return np.sort(ids)
    index = history.index
    try:
        return np.array(sorted(index[int(i)] for i in ids), dtype=np.int64)
    except KeyError as exc:
        raise FeasibilityError(f"fine memory references unknown history id {exc.args[0]}") from None


def psi(history: History, fine: FineMemory) -> tuple[list[int], np.ndarray]:
    """Per-topic aggregate of the included items; count is a share of the history length."""
    pos = memory_positions(history, fine)
    if pos.size == 0:
        return [], np.zeros((0, history.features.shape[1] + 2))
    topics = history.topics[pos]
    uniq = np.unique(topics)
    onehot = (topics[None, :] == uniq[:, None]).astype(float)
    counts = onehot.sum(axis=1)
    means = (onehot @ history.features[pos]) / counts[:, None]
    rows = np.column_stack([means, counts / len(history), np.ones(len(uniq))])
    return [int(t) for t in uniq], rows


def chi(history: History, query: Query, pos: np.ndarray) -> np.ndarray:
    key = ("chi", query.features)
    full = history.cache.get(key)
    if full is None:
        q = query.feature_array
        full = np.column_stack([history.features * q, history.salience, np.ones(len(history))])
        history.cache[key] = full
    return full[pos]


def omega(query: Query, retrieved_topics: np.ndarray, profile: CoarseProfile) -> np.ndarray:
    opts = query.options
    m = len(retrieved_topics)
    if m:
        opt_topics = np.array([t for t, _ in opts])
        share = (retrieved_topics[None, :] == opt_topics[:, None]).sum(axis=1) / m
    else:
        share = np.zeros(len(opts))
    labels = profile.predicted_labels
    agree = np.array([1.0 if labels.get(t) == l else 0.0 for t, l in opts])
    return np.column_stack([share, agree, share * agree])


def _check_dim(params: PolicyParams, expected: int) -> None:
    if params.theta.size != expected:
        raise ParameterError(
            f"{params.agent_id}: theta has dimension {params.theta.size}, feature map needs {expected}"
        )


def _expect(params: PolicyParams, agent_id: str) -> None:
    if params.agent_id != agent_id:
        raise ParameterError(f"expected {agent_id} params, got {params.agent_id}")


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=-1, keepdims=True)
    return z - (zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True)))


def _sample_rows(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF."""
    cdf = np.cumsum(np.exp(_log_softmax(logits)), axis=-1)
    u = rng.random(logits.shape[0]) * cdf[:, -1]
    return np.minimum((cdf <= u[:, None]).sum(axis=-1), logits.shape[-1] - 1)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


# --- extraction -------------------------------------------------------------


def _extraction_terms(params: PolicyParams, history: History, mask: np.ndarray, want_grad: bool):
    feats = phi(history)
    _check_dim(params, feats.shape[1])
    z = feats @ params.theta
    lp = float(np.sum(np.where(mask, _log_sigmoid(z), _log_sigmoid(-z))))
    if not want_grad:
        return lp, None
    p = np.exp(_log_sigmoid(z))
    return lp, (mask.astype(float) - p) @ feats


def _inclusion_mask(history: History, fine: FineMemory) -> np.ndarray:
    mask = np.zeros(len(history), dtype=bool)
    mask[memory_positions(history, fine)] = True
    return mask


def extraction_probs(params: PolicyParams, history: History) -> np.ndarray:
    feats = phi(history)
    _check_dim(params, feats.shape[1])
    return np.exp(_log_sigmoid(feats @ params.theta))


def extraction_act(params: PolicyParams, history: History, rng: np.random.Generator):
    _expect(params, EXTRACTION)
    p = extraction_probs(params, history)
    mask = rng.random(len(history)) < p
    fine = FineMemory(frozenset(int(i) for i in history.ids[mask]))
    lp, _ = _extraction_terms(params, history, mask, want_grad=False)
    return fine, lp


# --- profile ----------------------------------------------------------------


def _profile_matrix(params: PolicyParams, block: int) -> np.ndarray:
    if params.theta.size % block or params.theta.size // block < 2:
        raise ParameterError(
            f"profile: theta dimension {params.theta.size} is not n_labels x {block}"
        )
    return params.theta.reshape(-1, block)


def profile_logits(params: PolicyParams, history: History, fine: FineMemory):
    topics, feats = psi(history, fine)
    W = _profile_matrix(params, history.features.shape[1] + 2)
    return topics, feats, feats @ W.T


def profile_act(params: PolicyParams, fine: FineMemory, history: History, rng: np.random.Generator):
    _expect(params, PROFILE)
    pre = profile_logits(params, history, fine)
    draws = _sample_rows(pre[2], rng) if pre[0] else []
    profile = CoarseProfile({t: int(l) for t, l in zip(pre[0], draws)})
    return profile, _profile_terms(params, ProfileState(history, fine), profile, False, pre)[0]


def _profile_terms(params: PolicyParams, state: ProfileState, profile: CoarseProfile, want_grad: bool, pre=None):
    topics, feats, logits = pre if pre is not None else profile_logits(params, state.history, state.fine)
    if set(profile.predicted_labels) != set(topics):
        raise FeasibilityError("profile topics differ from the topics present in fine memory")
    n_labels = logits.shape[1]
    if not topics:
        return 0.0, (np.zeros(params.theta.size) if want_grad else None)
    labels = np.array([profile.predicted_labels[t] for t in topics])
    if labels.min() < 0 or labels.max() >= n_labels:
        raise FeasibilityError(f"profile labels {labels.tolist()} outside [0, {n_labels})")
    lsm = _log_softmax(logits)
    rows = np.arange(len(topics))
    lp = float(lsm[rows, labels].sum())
    if not want_grad:
        return lp, None
    g = -np.exp(lsm)
    g[rows, labels] += 1.0
    return lp, (g.T @ feats).reshape(-1)


def profile_logprob(params, state, profile):
    return _profile_terms(params, state, profile, want_grad=False)[0]


# --- retrieval --------------------------------------------------------------


def retrieval_scores(params: PolicyParams, history: History, fine: FineMemory, query: Query):
    pos = memory_positions(history, fine)
    feats = chi(history, query, pos)
    _check_dim(params, feats.shape[1] + ANSWER_DIM)
    return pos, feats, feats @ params.theta[: feats.shape[1]]


def answer_features(history: History, query: Query, profile: CoarseProfile, retrieved_ids) -> np.ndarray:
    if history.ids_are_positions:
        topics = history.topics[np.array(retrieved_ids, dtype=np.int64)] if retrieved_ids else np.zeros(0, np.int64)
    else:
        index = history.index
        topics = np.array([history.topics[index[i]] for i in retrieved_ids], dtype=np.int64)
    return omega(query, topics, profile)


def retrieval_act(
    params: PolicyParams,
    memory: tuple[FineMemory, CoarseProfile],
    query: Query,
    k: int,
    rng: np.random.Generator,
    history: History,
):
    _expect(params, RETRIEVAL)
    if k < 1:
        raise FeasibilityError(f"K must be >= 1, got {k}")
    fine, profile = memory
    pre = retrieval_scores(params, history, fine, query)
    pos, _, scores = pre
    m = min(k, len(pos))
    # Gumbel top-k is an exact sampler for sequential softmax without replacement.
    keys = scores + rng.gumbel(size=len(pos))
    order = np.argsort(-keys, kind="stable")[:m]
    retrieved = tuple(int(history.ids[pos[j]]) for j in order)
    ans_logits = answer_features(history, query, profile, retrieved) @ params.theta[-ANSWER_DIM:]
    answer = int(_sample_rows(ans_logits[None, :], rng)[0])
    outcome = RetrievalOutcome(retrieved, answer)
    state = RetrievalState(history, fine, profile, query, k)
    return outcome, _retrieval_terms(params, state, outcome, False, pre)[0]


def _plackett_luce(scores: np.ndarray, feats: np.ndarray, chosen: np.ndarray, want_grad: bool):
    """Log-probability of an ordered pick under sequential softmax, and its score-feature gradient."""
    if chosen.size == 0:
        return 0.0, (np.zeros(feats.shape[1]) if want_grad else None)
    e = np.exp(scores - scores.max())
    e_chosen = e[chosen]
    rest = e.sum() - e_chosen.sum()
    # denominators[k] = mass still available at pick k, summed without cancellation
    denominators = max(rest, 0.0) + np.cumsum(e_chosen[::-1])[::-1]
    if e_chosen.min() <= 1e-250:
        return _plackett_luce_loop(scores, feats, chosen, want_grad)
    lp = float(np.log(e_chosen).sum() - np.log(denominators).sum())
    if not want_grad:
        return lp, None
    inv = np.cumsum(1.0 / denominators)
    weight = e * inv[-1]
    weight[chosen] = e_chosen * inv
    return lp, feats[chosen].sum(axis=0) - weight @ feats


def _plackett_luce_loop(scores, feats, chosen, want_grad):
    lp = 0.0
    grad = np.zeros(feats.shape[1]) if want_grad else None
    remaining = np.ones(len(scores), dtype=bool)
    for j in chosen:
        z = scores[remaining]
        zmax = z.max()
        e = np.exp(z - zmax)
        total = e.sum()
        lp += float(scores[j] - zmax - np.log(total))
        if want_grad:
            grad += feats[j] - (e / total) @ feats[remaining]
        remaining[j] = False
    return lp, grad


def _retrieval_terms(params: PolicyParams, state: RetrievalState, outcome: RetrievalOutcome, want_grad: bool,
                     pre=None):
    history, query = state.history, state.query
    pos, feats, scores = pre if pre is not None else retrieval_scores(params, history, state.fine, query)
    ids = outcome.retrieved_ids
    if len(ids) != min(state.k, len(pos)) or len(set(ids)) != len(ids):
        raise FeasibilityError(
            f"retrieval must pick {min(state.k, len(pos))} distinct memory items, got {list(ids)}"
        )
    chosen = []
    for i in ids:
        if i not in state.fine.included_ids:
            raise FeasibilityError(f"retrieved id {i} is not in fine memory")
        chosen.append(int(np.searchsorted(pos, history.index[i])))
    if not 0 <= outcome.answer < len(query.options):
        raise FeasibilityError(f"answer {outcome.answer} out of range")

    block = feats.shape[1]
    grad = np.zeros(params.theta.size) if want_grad else None
    lp, pl_grad = _plackett_luce(scores, feats, np.array(chosen, dtype=np.int64), want_grad)
    if want_grad:
        grad[:block] = pl_grad

    om = answer_features(history, query, state.profile, ids)
    lsm = _log_softmax(om @ params.theta[block:])
    lp += float(lsm[outcome.answer])
    if want_grad:
        grad[block:] += om[outcome.answer] - np.exp(lsm) @ om
    return lp, grad


def answer_probs(params: PolicyParams, state: RetrievalState, retrieved_ids) -> np.ndarray:
    om = answer_features(state.history, state.query, state.profile, retrieved_ids)
    return np.exp(_log_softmax(om @ params.theta[-ANSWER_DIM:]))


# --- generic evaluation -----------------------------------------------------


def _terms(params: PolicyParams, state: State, action: Action, want_grad: bool):
    if params.agent_id == EXTRACTION:
        if not isinstance(state, ExtractionState) or not isinstance(action, FineMemory):
            raise FeasibilityError("extraction expects (ExtractionState, FineMemory)")
        return _extraction_terms(params, state.history, _inclusion_mask(state.history, action), want_grad)
    if params.agent_id == PROFILE:
        if not isinstance(state, ProfileState) or not isinstance(action, CoarseProfile):
            raise FeasibilityError("profile expects (ProfileState, CoarseProfile)")
        return _profile_terms(params, state, action, want_grad)
    if not isinstance(state, RetrievalState) or not isinstance(action, RetrievalOutcome):
        raise FeasibilityError("retrieval expects (RetrievalState, RetrievalOutcome)")
    return _retrieval_terms(params, state, action, want_grad)


def logprob_of(params: PolicyParams, state: State, action: Action) -> float:
    return _terms(params, state, action, want_grad=False)[0]


def logprob_grad(params: PolicyParams, state: State, action: Action) -> np.ndarray:
    return _terms(params, state, action, want_grad=True)[1]


def logprob_and_grad(params: PolicyParams, state: State, action: Action) -> tuple[float, np.ndarray]:
    return _terms(params, state, action, want_grad=True)


# --- greedy (evaluation-mode) actions ---------------------------------------


def extraction_greedy(params: PolicyParams, history: History) -> FineMemory:
    p = extraction_probs(params, history)
    return FineMemory(frozenset(int(i) for i in history.ids[p > 0.5]))


def profile_greedy(params: PolicyParams, fine: FineMemory, history: History) -> CoarseProfile:
    topics, _, logits = profile_logits(params, history, fine)
    return CoarseProfile({t: int(np.argmax(z)) for t, z in zip(topics, logits)})


def retrieval_greedy(params: PolicyParams, memory, query: Query, k: int, history: History) -> RetrievalOutcome:
    fine, profile = memory
    pos, _, scores = retrieval_scores(params, history, fine, query)
    order = np.argsort(-scores, kind="stable")[: min(k, len(pos))]
    retrieved = tuple(int(history.ids[pos[j]]) for j in order)
    state = RetrievalState(history, fine, profile, query, k)
    return RetrievalOutcome(retrieved, int(np.argmax(answer_probs(params, state, retrieved))))


# --- shared-backbone ("single policy") parameterization ---------------------

HEAD_DIM = 2


@dataclass(frozen=True, eq=False)
class SharedPolicy:
    """One parameter vector serving all three agents.

    The backbone ``shared`` covers the longest agent layout; agent ``n`` reads
    the prefix ``shared[:dim_n]`` and adds its two-entry head on the salience
    and bias coordinates of its first feature block.
    """

    cfg: EnvConfig
    shared: np.ndarray
    heads: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: EnvConfig, seed: int | None = None, scale: float = 0.01) -> "SharedPolicy":
        size = max(param_dim(a, cfg) for a in AGENTS)
        if seed is None:
            return cls(cfg, np.zeros(size), {a: np.zeros(HEAD_DIM) for a in AGENTS})
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
        return cls(cfg, scale * rng.standard_normal(size), {a: scale * rng.standard_normal(HEAD_DIM) for a in AGENTS})

    def _head_slice(self) -> slice:
        return slice(self.cfg.d, self.cfg.d + HEAD_DIM)

    def agent_params(self, agent_id: str) -> PolicyParams:
        theta = np.array(self.shared[: param_dim(agent_id, self.cfg)], dtype=float)
        theta[self._head_slice()] += self.heads[agent_id]
        return PolicyParams(agent_id, theta)

    def as_policies(self) -> dict[str, PolicyParams]:
        return {a: self.agent_params(a) for a in AGENTS}

    def pullback(self, agent_id: str, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map a gradient w.r.t. the agent's theta onto (backbone, head)."""
        g_shared = np.zeros_like(self.shared)
        g_shared[: grad.size] = grad
        return g_shared, np.array(grad[self._head_slice()])

    def step(self, g_shared: np.ndarray, g_heads: dict[str, np.ndarray], lr: float) -> "SharedPolicy":
        return SharedPolicy(
            self.cfg,
            self.shared + lr * g_shared,
            {a: self.heads[a] + lr * g_heads.get(a, 0.0) for a in AGENTS},
        )
