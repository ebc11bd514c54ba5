from __future__ import annotations

import numpy as np
import pytest

from collabmem.env import EnvConfig, Episode, HistoryItem, Query, UserPreference, generate_episode


def make_episode(topics, evidence, labels=None, d=3, seed=0, salience=None, options=None, n_labels=2):
    """Hand-built episode; features are seeded normals, options default to a valid set."""
    rng = np.random.default_rng(seed)
    salience = salience if salience is not None else [0.5] * len(topics)
    items = tuple(
        HistoryItem(i, t, tuple(rng.normal(size=d).tolist()), i in evidence, float(salience[i]))
        for i, t in enumerate(topics)
    )
    present = sorted(set(topics))
    labels = labels if labels is not None else {t: t % n_labels for t in range(max(present) + 2)}
    pref = UserPreference(dict(labels))
    ev_topics = [topics[i] for i in sorted(evidence)]
    main = min(set(ev_topics), key=lambda t: (-ev_topics.count(t), t))
    correct = (main, labels[main])
    if options is None:
        other = max(present) + 1
        options = [correct, (main, 1 - labels[main]), (other, 0), (other, 1)]
    return Episode(
        episode_id=0,
        history=items,
        preference=pref,
        query=Query(tuple(rng.normal(size=d).tolist()), frozenset(evidence), tuple(options), options.index(correct)),
        seed=seed,
    )


@pytest.fixture
def small_cfg():
    return EnvConfig(n_items=10, n_topics=3, d=3, evidence_size=2)


@pytest.fixture
def episode():
    return generate_episode(42)


# --- acceptance summary: one PASS/FAIL line per criterion ------------------

_CRITERIA: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        note = getattr(item, "criterion_note", "")
        _CRITERIA.setdefault(marker.args[0], []).append((rep.outcome, note))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        status = "PASS" if all(o == "passed" for o, _ in results) else "FAIL"
        notes = "; ".join(note for _, note in results if note)
        terminalreporter.write_line(f"criterion {n}: {status}" + (f"  ({notes})" if notes else ""))
