"""Newline-delimited JSON adapter for policies and profile scorers living in a child process.

Each request is one JSON object on the child's stdin; the child answers with
one JSON object on stdout. External policies only sample, so they are usable
for evaluation but never for training.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from typing import Mapping, Sequence

from .env import History, Episode, Query, format_option, parse_option
from .errors import DataError, StorageError
from .policies import (
    EXTRACTION,
    PROFILE,
    RETRIEVAL,
    AGENTS,
    CoarseProfile,
    ExtractionState,
    FineMemory,
    PolicyParams,
    ProfileState,
    RetrievalOutcome,
    RetrievalState,
    extraction_greedy,
    profile_greedy,
    retrieval_greedy,
)
from .rewards import RewardConfig, answer_reward, extraction_reward, profile_reward, retrieval_reward


# --- serialization ----------------------------------------------------------


def history_to_json(history: History) -> list[dict]:
    # is_evidence stays hidden: it is the supervision signal, not an observation
    return [
        {"id": it.id, "topic": it.topic, "features": list(it.features), "salience": it.salience}
        for it in history
    ]


def fine_to_json(fine: FineMemory) -> dict:
    return {"included_ids": sorted(fine.included_ids)}


def profile_to_json(profile: CoarseProfile) -> dict:
    return {"predicted_labels": {str(t): l for t, l in sorted(profile.predicted_labels.items())}}


def query_to_json(query: Query) -> dict:
    return {"features": list(query.features), "options": [format_option(o) for o in query.options]}


def state_to_json(agent: str, state) -> dict:
    if agent == EXTRACTION:
        return {"history": history_to_json(state.history)}
    if agent == PROFILE:
        return {"history": history_to_json(state.history), "fine": fine_to_json(state.fine)}
    if agent == RETRIEVAL:
        return {
            "history": history_to_json(state.history),
            "fine": fine_to_json(state.fine),
            "profile": profile_to_json(state.profile),
            "query": query_to_json(state.query),
            "k": state.k,
        }
    raise DataError(f"unknown agent {agent!r}")


def _int_list(value, what: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise DataError(f"{what}: expected a list of integers, got {value!r}")
    return value


def action_from_json(agent: str, payload, state):
    """Decode an action payload and check it is feasible in ``state``."""
    if not isinstance(payload, dict):
        raise DataError(f"{agent} action: expected an object, got {payload!r}")
    history = state.history
    if agent == EXTRACTION:
        ids = _int_list(payload.get("included_ids"), "included_ids")
        unknown = set(ids) - set(history.ids.tolist())
        if unknown:
            raise DataError(f"included_ids: unknown history ids {sorted(unknown)}")
        return FineMemory(frozenset(ids))
    if agent == PROFILE:
        raw = payload.get("predicted_labels")
        if not isinstance(raw, dict):
            raise DataError(f"predicted_labels: expected an object, got {raw!r}")
        try:
            labels = {int(t): int(l) for t, l in raw.items()}
        except (TypeError, ValueError) as exc:
            raise DataError(f"predicted_labels: {exc}") from exc
        return CoarseProfile(labels)
    if agent == RETRIEVAL:
        # the information block names the retrieved memories; answer is an index or an option string
        ids = _int_list(payload.get("information"), "information")
        stray = set(ids) - state.fine.included_ids
        if stray:
            raise DataError(f"information: ids {sorted(stray)} are not in fine memory")
        answer = payload.get("answer")
        if isinstance(answer, str):
            try:
                answer = list(state.query.options).index(parse_option(answer))
            except ValueError as exc:
                raise DataError(f"answer: {answer!r} is not one of the options") from exc
        if isinstance(answer, bool) or not isinstance(answer, int) or not 0 <= answer < len(state.query.options):
            raise DataError(f"answer: expected an option index in [0, {len(state.query.options)}), got {answer!r}")
        return RetrievalOutcome(tuple(ids), answer)
    raise DataError(f"unknown agent {agent!r}")


# --- child process ------------------------------------------------------------


class NdjsonProcess:
    """A child process spoken to one JSON line at a time."""

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.argv = argv
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise StorageError(argv[0] if argv else "<empty command>", exc.strerror or str(exc)) from exc

    def request(self, obj: dict) -> dict:
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise DataError(f"{self.argv[0]}: child process closed its pipe ({exc})") from exc
        if not line:
            raise DataError(f"{self.argv[0]}: child process ended without a response")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{self.argv[0]}: response is not JSON: {exc.msg}") from exc
        if not isinstance(resp, dict):
            raise DataError(f"{self.argv[0]}: response must be a JSON object")
        return resp

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ExternalPolicy:
    def __init__(self, agent: str, process: NdjsonProcess):
        if agent not in AGENTS:
            raise DataError(f"unknown agent {agent!r}")
        self.agent = agent
        self.process = process

    def act(self, state) -> tuple[object, float]:
        resp = self.process.request({"agent": self.agent, "state": state_to_json(self.agent, state)})
        if "action" not in resp:
            raise DataError(f"{self.agent}: response lacks 'action'")
        action = action_from_json(self.agent, resp["action"], state)
        try:
            logprob = float(resp.get("logprob", 0.0))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{self.agent}: logprob is not a number") from exc
        return action, logprob


class ExternalScorer:
    """Profile scorer with the same signature as the built-in rubric."""

    def __init__(self, process: NdjsonProcess):
        self.process = process

    def __call__(self, profile: CoarseProfile, episode: Episode) -> float:
        resp = self.process.request({
            "profile": profile_to_json(profile),
            "history": history_to_json(episode.history),
        })
        score = resp.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise DataError(f"scorer: score must be a real in [0, 1], got {score!r}")
        return float(score)


# --- evaluation with mixed internal/external agents -------------------------


def evaluate_mixed(
    policies: Mapping[str, PolicyParams],
    episodes: Sequence[Episode],
    K: int,
    reward_cfg: RewardConfig,
    external: Mapping[str, ExternalPolicy] | None = None,
    profile_scorer=None,
) -> dict:
    """Like :func:`harness.evaluate`, with any agent optionally served by a child process."""
    if not episodes:
        raise DataError("evaluate: need at least one episode")
    external = dict(external or {})
    scorer = profile_scorer or profile_reward
    totals = [0.0, 0.0, 0.0, 0.0]
    for ep in episodes:
        h = ep.history
        if EXTRACTION in external:
            fine, _ = external[EXTRACTION].act(ExtractionState(h))
        else:
            fine = extraction_greedy(policies[EXTRACTION], h)
        if PROFILE in external:
            prof, _ = external[PROFILE].act(ProfileState(h, fine))
        else:
            prof = profile_greedy(policies[PROFILE], fine, h)
        if RETRIEVAL in external:
            out, _ = external[RETRIEVAL].act(RetrievalState(h, fine, prof, ep.query, K))
        else:
            out = retrieval_greedy(policies[RETRIEVAL], (fine, prof), ep.query, K, h)
        for i, v in enumerate((
            answer_reward(out.answer, ep.query.correct_option),
            extraction_reward(fine.included_ids, ep.query.evidence_ids, reward_cfg.alpha),
            float(scorer(prof, ep)),
            retrieval_reward(out.retrieved_ids, ep.query.evidence_ids, reward_cfg.beta),
        )):
            totals[i] += v
    n = len(episodes)
    return {
        "accuracy": totals[0] / n,
        "r_cons_f": totals[1] / n,
        "r_cons_c": totals[2] / n,
        "r_ret": totals[3] / n,
        "n_episodes": n,
    }
