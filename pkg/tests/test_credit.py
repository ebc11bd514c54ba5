import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from collabmem.credit import credit_weights, final_rewards, group_credit, integrate_rewards, ndcg_consistency
from collabmem.errors import DataError

from oracles import dcg_oracle, softmax_oracle


def test_hand_examples():
    assert ndcg_consistency([0.9, 0.1, 0.5], [1, 0, 1]) == pytest.approx(1.0, abs=1e-12)
    dcg = 1 / math.log2(3) + 1 / math.log2(4)
    idcg = 1 + 1 / math.log2(3)
    assert dcg == pytest.approx(1.1309, abs=1e-4)
    assert ndcg_consistency([0.1, 0.9, 0.5], [1, 0, 1]) == pytest.approx(dcg / idcg, abs=1e-12)
    assert ndcg_consistency([0.1, 0.9, 0.5], [1, 0, 1]) == pytest.approx(0.6934, abs=1e-4)
    assert ndcg_consistency([0.3, 0.2, 0.1], [0, 0, 0]) == 1.0
    assert ndcg_consistency([0.3, 0.2], [5, 5]) == 1.0


def test_oracle_all_binary_globals_and_random_locals():
    rng = np.random.default_rng(0)
    for G in range(2, 9):
        locals_ = [rng.random(G) for _ in range(1000)]
        # a share of tied local vectors exercises the index tie-break
        locals_ += [rng.integers(0, 3, size=G).astype(float) for _ in range(200)]
        for bits in itertools.product((0.0, 1.0), repeat=G):
            for loc in locals_[:: max(1, len(locals_) // 150)]:
                assert ndcg_consistency(loc, bits) == dcg_oracle(list(loc), bits)
        bits = rng.integers(0, 2, size=G).astype(float)
        for loc in locals_:
            assert ndcg_consistency(loc, bits) == dcg_oracle(list(loc), list(bits))


def test_rank_invariance_under_increasing_transforms():
    rng = np.random.default_rng(1)
    for _ in range(100):
        G = int(rng.integers(2, 9))
        loc = rng.normal(size=G)
        glob = rng.integers(0, 2, size=G).astype(float)
        a, b = rng.uniform(0.1, 5), rng.normal()
        transforms = [lambda x: a * x + b, lambda x: np.exp(a * x), lambda x: np.arctan(x) + x ** 3]
        base = ndcg_consistency(loc, glob)
        for f in transforms:
            assert ndcg_consistency(f(loc), glob) == pytest.approx(base, abs=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8), st.data())
def test_range_and_perfect_consistency(loc, data):
    glob = data.draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=len(loc), max_size=len(loc)))
    v = ndcg_consistency(loc, glob)
    assert 0.0 <= v <= 1.0 + 1e-12
    if len(set(glob)) == 2:
        ones = [l for l, g in zip(loc, glob) if g == 1.0]
        zeros = [l for l, g in zip(loc, glob) if g == 0.0]
        perfect = min(ones) > max(zeros)
        if perfect:
            assert v == pytest.approx(1.0, abs=1e-12)
        elif min(ones) < max(zeros):
            assert v < 1.0


def test_ndcg_errors():
    with pytest.raises(DataError):
        ndcg_consistency([1, 2], [1, 2, 3])
    with pytest.raises(DataError):
        ndcg_consistency([1], [1])
    with pytest.raises(DataError):
        ndcg_consistency([1, float("nan")], [0, 1])


def test_weight_examples():
    assert np.array_equal(credit_weights([1, 1, 1]), np.full(3, 1 / 3))
    assert credit_weights([1, 0, 0]) == pytest.approx([0.5761, 0.2119, 0.2119], abs=1e-4)
    assert credit_weights([1, 0, 0]) == pytest.approx(softmax_oracle([1, 0, 0]), abs=1e-15)
    with pytest.raises(DataError):
        credit_weights([1, float("inf"), 0])


def test_weights_normalized_and_shift_invariant():
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        v = rng.uniform(0, 1, size=3)
        w = credit_weights(v)
        assert abs(w.sum() - 1.0) <= 1e-9
        assert np.all(w > 0)
        c = rng.normal() * 10
        assert np.allclose(credit_weights(v + c), w, rtol=0, atol=1e-12)


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.permutations(range(3)))
def test_weights_permutation_equivariant(v, perm):
    w = credit_weights(v)
    assert np.allclose(credit_weights(np.asarray(v)[list(perm)]), w[list(perm)], atol=1e-15)


def test_integration_examples():
    local = np.array([[0.9], [0.2], [0.4]])
    out = final_rewards(local, [1.0], [0.3, 0.3, 0.4])
    assert out[0, 0] == pytest.approx(1.2, abs=1e-12)
    assert np.array_equal(final_rewards(local, [0.0], [0.3, 0.3, 0.4]), local)
    eq = final_rewards(local, [1.0], np.full(3, 1 / 3))
    assert np.allclose(eq - local, 1 / 3, atol=1e-15)
    # the opt-in transposed form swaps which term is weighted
    assert final_rewards(local, [1.0], [0.5, 0.5, 0.0], transposed=True)[:, 0] == pytest.approx([1.45, 1.1, 1.0])
    with pytest.raises(DataError):
        final_rewards(local, [1.0, 0.0], [0.3, 0.3, 0.4])


def test_integrate_and_group_credit_on_a_group():
    class _Group:
        global_rewards = np.array([1.0, 0.0, 1.0])

        def local_matrix(self):
            return np.array([[0.9, 0.1, 0.5], [0.1, 0.9, 0.5], [0.5, 0.5, 0.5]])

    g = _Group()
    v, w = group_credit(g.local_matrix(), g.global_rewards)
    assert v[0] == 1.0 and v[1] == pytest.approx(0.6934, abs=1e-4)
    assert w.sum() == pytest.approx(1.0) and w[0] > w[2] > w[1]
    out = integrate_rewards(g, w)
    assert np.allclose(out, g.local_matrix() + w[:, None] * g.global_rewards[None, :])
