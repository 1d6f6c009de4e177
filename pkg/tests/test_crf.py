import itertools
import math

import numpy as np
import pytest

from capunc import autodiff as ad
from capunc import crf
from capunc.autodiff import ShapeError, Tensor

K = 4


def brute_force(s, T, start, stop):
    """Scores of every label path by explicit enumeration."""
    n = s.shape[0]
    paths = list(itertools.product(range(K), repeat=n))
    scores = []
    for y in paths:
        v = start[y[0]] + stop[y[-1]] + sum(s[i, y[i]] for i in range(n))
        v += sum(T[y[i - 1], y[i]] for i in range(1, n))
        scores.append(v)
    return paths, np.array(scores)


def random_instance(rng, n):
    return (
        rng.normal(scale=2.0, size=(n, K)),
        rng.normal(scale=2.0, size=(K, K)),
        rng.normal(size=K),
        rng.normal(size=K),
    )


def nll(s, tags, T, start, stop):
    out = crf.crf_nll(Tensor(s[None]), np.array(tags)[None], Tensor(T), Tensor(start), Tensor(stop))
    return float(out.data[0])


@pytest.mark.parametrize("n, expected", [(1, math.log(4)), (2, 2 * math.log(4)), (5, 5 * math.log(4))])
def test_zero_chain_nll(n, expected):
    z = np.zeros((n, K))
    assert abs(nll(z, [0] * n, np.zeros((K, K)), np.zeros(K), np.zeros(K)) - expected) <= 1e-12


def test_log_partition_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s, T, a, b = random_instance(rng, 3)
        _, scores = brute_force(s, T, a, b)
        ref = np.log(np.exp(scores - scores.max()).sum()) + scores.max()
        assert crf.log_partition(s[None], T, a, b)[0] == pytest.approx(ref, abs=1e-8)


def test_path_probabilities_sum_to_one():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        s, T, a, b = random_instance(rng, n)
        paths, _ = brute_force(s, T, a, b)
        tags = np.array(paths)
        batch = crf.crf_nll(Tensor(np.repeat(s[None], len(paths), 0)), tags, Tensor(T), Tensor(a), Tensor(b))
        assert np.exp(-batch.data).sum() == pytest.approx(1.0, abs=1e-8)


def test_viterbi_is_optimal():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        s, T, a, b = random_instance(rng, n)
        paths, scores = brute_force(s, T, a, b)
        path, score = crf.viterbi(s, T, a, b)
        assert abs(score - scores.max()) <= 1e-10
        assert abs(scores[paths.index(tuple(path))] - scores.max()) <= 1e-10


def test_viterbi_zero_transitions_is_argmax():
    rng = np.random.default_rng(3)
    s = rng.normal(size=(6, K))
    path, _ = crf.viterbi(s, np.zeros((K, K)), np.zeros(K), np.zeros(K))
    assert path == s.argmax(axis=1).tolist()


def test_viterbi_ties_pick_label_zero():
    path, score = crf.viterbi(np.zeros((4, K)), np.zeros((K, K)), np.zeros(K), np.zeros(K))
    assert path == [0, 0, 0, 0] and score == 0.0


def test_viterbi_tie_break_prefers_low_label_at_latest_position():
    # two optimal paths: (1, 0) and (0, 1); they first differ (from the end) at
    # the last position, where label 0 wins
    s = np.full((2, K), -10.0)
    s[0, 0] = s[0, 1] = 0.0
    s[1, 0] = s[1, 1] = 0.0
    T = np.full((K, K), -10.0)
    T[1, 0] = T[0, 1] = 0.0
    path, _ = crf.viterbi(s, T, np.zeros(K), np.zeros(K))
    assert path == [1, 0]


def test_emission_shift_leaves_nll_unchanged():
    rng = np.random.default_rng(4)
    s, T, a, b = random_instance(rng, 5)
    tags = rng.integers(0, K, size=5)
    base = nll(s, tags, T, a, b)
    assert nll(s + 3.7, tags, T, a, b) == pytest.approx(base, abs=1e-10)


def test_padded_batch_matches_individual_sequences():
    rng = np.random.default_rng(5)
    lengths = [5, 2, 3]
    s = rng.normal(size=(3, 5, K))
    tags = rng.integers(0, K, size=(3, 5))
    T, a, b = rng.normal(size=(K, K)), rng.normal(size=K), rng.normal(size=K)
    batch = crf.crf_nll(Tensor(s), tags, Tensor(T), Tensor(a), Tensor(b), lengths=lengths)
    for i, n in enumerate(lengths):
        assert batch.data[i] == pytest.approx(nll(s[i, :n], tags[i, :n], T, a, b), abs=1e-12)


def test_crf_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    params = {
        "s": Tensor(rng.normal(size=(2, 4, K)), name="s"),
        "T": Tensor(rng.normal(size=(K, K)), name="T"),
        "start": Tensor(rng.normal(size=K), name="start"),
        "stop": Tensor(rng.normal(size=K), name="stop"),
    }
    tags = rng.integers(0, K, size=(2, 4))
    w = Tensor(np.array([0.3, 1.7]))

    def f(p):
        out = crf.crf_nll(p["s"], tags, p["T"], p["start"], p["stop"], lengths=[4, 3])
        return ad.sum_all(ad.mul(out, w))

    err, per = ad.grad_check(f, params, step=1e-5)
    assert err <= 1e-4, per


def test_crf_rejects_empty_and_mismatched():
    with pytest.raises(ShapeError):
        crf.crf_nll(Tensor(np.zeros((1, 0, K))), np.zeros((1, 0), int), Tensor(np.zeros((K, K))), Tensor(np.zeros(K)), Tensor(np.zeros(K)))
    with pytest.raises(ShapeError):
        crf.crf_nll(Tensor(np.zeros((1, 3, K))), np.zeros((1, 2), int), Tensor(np.zeros((K, K))), Tensor(np.zeros(K)), Tensor(np.zeros(K)))
    with pytest.raises(ShapeError):
        crf.viterbi(np.zeros((0, K)), np.zeros((K, K)), np.zeros(K), np.zeros(K))
