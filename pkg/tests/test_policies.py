import itertools
import math

import numpy as np
import pytest

from collabmem.env import EnvConfig, generate_episode
from collabmem.errors import FeasibilityError, ParameterError
from collabmem.policies import (
    ANSWER_DIM,
    CoarseProfile,
    ExtractionState,
    FineMemory,
    PolicyParams,
    ProfileState,
    RetrievalOutcome,
    RetrievalState,
    SharedPolicy,
    answer_probs,
    extraction_act,
    extraction_probs,
    init_policies,
    logprob_and_grad,
    logprob_grad,
    logprob_of,
    param_dim,
    profile_act,
    retrieval_act,
)

from conftest import make_episode
from oracles import central_difference, grad_close, ordered_selections

CFG = EnvConfig(n_items=10, n_topics=3, d=3, evidence_size=2)


def random_policies(rng, cfg=CFG, scale=1.0):
    return {a: PolicyParams(a, rng.normal(scale=scale, size=param_dim(a, cfg))) for a in ("extraction", "profile", "retrieval")}


def rollout(pol, ep, k, rng):
    h = ep.history
    fine, lp0 = extraction_act(pol["extraction"], h, rng)
    prof, lp1 = profile_act(pol["profile"], fine, h, rng)
    out, lp2 = retrieval_act(pol["retrieval"], (fine, prof), ep.query, k, rng, h)
    states = (ExtractionState(h), ProfileState(h, fine), RetrievalState(h, fine, prof, ep.query, k))
    return list(zip(("extraction", "profile", "retrieval"), states, (fine, prof, out), (lp0, lp1, lp2)))


def test_zero_theta_examples():
    ep = make_episode(topics=[0, 1], evidence={0})
    zero = init_policies(EnvConfig(n_items=2, d=3, evidence_size=1))
    assert np.array_equal(extraction_probs(zero["extraction"], ep.history), [0.5, 0.5])
    st = ExtractionState(ep.history)
    assert logprob_of(zero["extraction"], st, FineMemory(frozenset({0}))) == pytest.approx(2 * math.log(0.5), abs=1e-12)
    assert logprob_of(zero["extraction"], st, FineMemory(frozenset({0}))) == pytest.approx(-1.3863, abs=1e-4)
    ps = ProfileState(ep.history, FineMemory(frozenset({0, 1})))
    assert logprob_of(zero["profile"], ps, CoarseProfile({0: 1, 1: 0})) == pytest.approx(2 * math.log(0.5), abs=1e-12)
    # empty fine memory: empty profile, logprob 0
    empty = ProfileState(ep.history, FineMemory(frozenset()))
    prof, lp = profile_act(zero["profile"], FineMemory(frozenset()), ep.history, np.random.default_rng(0))
    assert prof.predicted_labels == {} and lp == 0.0
    assert logprob_of(zero["profile"], empty, CoarseProfile({})) == 0.0


def test_retrieval_examples():
    ep = make_episode(topics=[0, 1, 2], evidence={0, 1})
    zero = init_policies(EnvConfig(n_items=3, n_topics=3, d=3, evidence_size=2))["retrieval"]
    prof = CoarseProfile({0: 0, 1: 1, 2: 0})
    one = RetrievalState(ep.history, FineMemory(frozenset({2})), prof, ep.query, 1)
    lp_one = logprob_of(zero, one, RetrievalOutcome((2,), 0))
    assert lp_one == pytest.approx(math.log(0.25), abs=1e-12)  # PL part is 0, answer part ln 1/4
    three = RetrievalState(ep.history, FineMemory(frozenset({0, 1, 2})), prof, ep.query, 2)
    lp = logprob_of(zero, three, RetrievalOutcome((1, 0), 3))
    assert lp == pytest.approx(math.log(1 / 3) + math.log(1 / 2) + math.log(0.25), abs=1e-12)
    # empty memory still answers from the profile-only option scores
    out, lp_empty = retrieval_act(zero, (FineMemory(frozenset()), prof), ep.query, 2, np.random.default_rng(0), ep.history)
    assert out.retrieved_ids == () and 0 <= out.answer < 4 and lp_empty == pytest.approx(math.log(0.25))


def test_gradient_examples():
    ep = make_episode(topics=[0, 1], evidence={0})
    zero = init_policies(EnvConfig(n_items=2, d=3, evidence_size=1))["extraction"]
    st = ExtractionState(ep.history)
    g = logprob_grad(zero, st, FineMemory(frozenset({0, 1})))
    phi = [list(it.features) + [it.salience, 1.0] for it in ep.history]
    assert np.allclose(g, 0.5 * np.array(phi[0]) + 0.5 * np.array(phi[1]), atol=1e-15)


def test_sampling_and_evaluation_agree():
    rng = np.random.default_rng(0)
    for seed in range(30):
        pol = random_policies(rng)
        ep = generate_episode(seed, CFG)
        for agent, state, action, lp in rollout(pol, ep, 3, np.random.default_rng(seed)):
            assert logprob_of(pol[agent], state, action) == pytest.approx(lp, abs=1e-12)
            assert np.isfinite(lp) and lp <= 0


def test_same_stream_same_actions():
    pol = random_policies(np.random.default_rng(1))
    ep = generate_episode(9, CFG)
    a = rollout(pol, ep, 3, np.random.default_rng(5))
    b = rollout(pol, ep, 3, np.random.default_rng(5))
    assert [x[2] for x in a] == [x[2] for x in b]


@pytest.mark.parametrize("agent", ["extraction", "profile", "retrieval"])
def test_gradients_match_finite_differences_20_points(agent):
    rng = np.random.default_rng({"extraction": 0, "profile": 1, "retrieval": 2}[agent])
    for point in range(20):
        pol = random_policies(rng, scale=0.7)
        ep = generate_episode(100 + point, CFG)
        triples = {a: (s, act) for a, s, act, _ in rollout(pol, ep, 3, rng)}
        state, action = triples[agent]
        params = pol[agent]
        lp, g = logprob_and_grad(params, state, action)
        fd = central_difference(lambda th: logprob_of(params.replace(th), state, action), np.array(params.theta))
        assert grad_close(g, fd, rtol=1e-4), (point, g, fd)


def test_zero_features_give_zero_gradient():
    ep = make_episode(topics=[0, 1], evidence={0})
    items = tuple(type(it)(it.id, it.topic, (0.0, 0.0, 0.0), it.is_evidence, 0.0) for it in ep.history)
    from collabmem.env import History
    h = History(items)
    theta = PolicyParams("extraction", np.zeros(5))
    g = logprob_grad(theta, ExtractionState(h), FineMemory(frozenset({0})))
    # only the bias coordinate can carry gradient when features and salience vanish
    assert np.all(g[:4] == 0.0)


def _small(n, seed):
    cfg = EnvConfig(n_items=n, n_topics=3, d=3, evidence_size=1)
    return cfg, generate_episode(seed, cfg)


def test_extraction_normalizes_over_all_patterns():
    for n in (1, 5, 12):
        cfg, ep = _small(n, n)
        params = random_policies(np.random.default_rng(n), cfg)["extraction"]
        st = ExtractionState(ep.history)
        total = math.fsum(
            math.exp(logprob_of(params, st, FineMemory(frozenset(i for i, b in enumerate(bits) if b))))
            for bits in itertools.product((0, 1), repeat=n)
        )
        assert abs(total - 1.0) <= 1e-9


def test_profile_normalizes():
    cfg, ep = _small(6, 3)
    params = random_policies(np.random.default_rng(3), cfg)["profile"]
    fine = FineMemory(frozenset(range(6)))
    st = ProfileState(ep.history, fine)
    topics = sorted({it.topic for it in ep.history})
    total = math.fsum(
        math.exp(logprob_of(params, st, CoarseProfile(dict(zip(topics, labels)))))
        for labels in itertools.product(range(cfg.n_labels), repeat=len(topics))
    )
    assert abs(total - 1.0) <= 1e-9


def test_plackett_luce_and_answer_normalize():
    rng = np.random.default_rng(4)
    for n in range(1, 6):
        for k in range(1, 4):
            cfg, ep = _small(max(n, 1), 10 * n + k)
            params = random_policies(rng, cfg, scale=1.5)["retrieval"]
            prof = CoarseProfile({t: 0 for t in {it.topic for it in ep.history}})
            st = RetrievalState(ep.history, FineMemory(frozenset(range(n))), prof, ep.query, k)
            m = min(n, k)
            # fix the answer and divide out its probability to isolate the selection distribution
            sel_total = 0.0
            for order in ordered_selections(n, m):
                p_ans = answer_probs(params, st, order)
                assert abs(p_ans.sum() - 1.0) <= 1e-12
                sel_total += math.exp(logprob_of(params, st, RetrievalOutcome(order, 0))) / p_ans[0]
            assert abs(sel_total - 1.0) <= 1e-9
            joint = math.fsum(
                math.exp(logprob_of(params, st, RetrievalOutcome(order, a)))
                for order in ordered_selections(n, m) for a in range(4)
            )
            assert abs(joint - 1.0) <= 1e-9


def test_errors():
    ep = generate_episode(0, CFG)
    pol = init_policies(CFG, 0)
    with pytest.raises(ParameterError):
        extraction_act(PolicyParams("extraction", np.zeros(3)), ep.history, np.random.default_rng(0))
    with pytest.raises(FeasibilityError):
        logprob_of(pol["extraction"], ExtractionState(ep.history), FineMemory(frozenset({999})))
    fine = FineMemory(frozenset({0, 1, 2}))
    prof = CoarseProfile({it.topic: 0 for it in ep.history[:3]})
    st = RetrievalState(ep.history, fine, prof, ep.query, 2)
    with pytest.raises(FeasibilityError):
        logprob_of(pol["retrieval"], st, RetrievalOutcome((0, 5), 0))
    with pytest.raises(FeasibilityError):
        logprob_of(pol["retrieval"], st, RetrievalOutcome((0, 0), 0))
    with pytest.raises(FeasibilityError):
        logprob_of(pol["retrieval"], st, RetrievalOutcome((0,), 0))
    with pytest.raises(FeasibilityError):
        logprob_of(pol["profile"], ProfileState(ep.history, fine), CoarseProfile({}))
    with pytest.raises(ParameterError):
        PolicyParams("extraction", [np.nan])
    with pytest.raises(ParameterError):
        PolicyParams("planner", [0.0])


def test_shared_policy_pullback_matches_finite_differences():
    sp = SharedPolicy.init(CFG, seed=3, scale=0.5)
    ep = generate_episode(5, CFG)
    triples = rollout(sp.as_policies(), ep, 3, np.random.default_rng(0))
    flat = np.concatenate([sp.shared] + [sp.heads[a] for a in ("extraction", "profile", "retrieval")])

    def unflatten(x):
        n = sp.shared.size
        heads = {a: x[n + 2 * i: n + 2 * i + 2] for i, a in enumerate(("extraction", "profile", "retrieval"))}
        return SharedPolicy(CFG, x[:n], heads)

    def total_lp(x):
        s = unflatten(x)
        return sum(logprob_of(s.agent_params(a), st, act) for a, st, act, _ in triples)

    g_shared = np.zeros_like(sp.shared)
    g_heads = []
    for a, st, act, _ in triples:
        gs, gh = sp.pullback(a, logprob_grad(sp.agent_params(a), st, act))
        g_shared += gs
        g_heads.append(gh)
    analytic = np.concatenate([g_shared] + g_heads)
    assert grad_close(analytic, central_difference(total_lp, flat))
    assert sp.shared.size == max(param_dim(a, CFG) for a in ("extraction", "profile", "retrieval"))
    assert ANSWER_DIM == 3
