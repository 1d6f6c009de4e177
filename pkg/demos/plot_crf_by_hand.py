"""
A linear-chain CRF checked by hand
==================================

Four punctuation labels, a handful of words.  Small enough to list every
label path, which makes the forward algorithm and Viterbi easy to trust.
"""

import itertools

import numpy as np

from capunc import crf
from capunc.autodiff import Tensor

rng = np.random.default_rng(0)
n, K = 4, 4
s = rng.normal(scale=2.0, size=(n, K))  # emission scores, one row per word
T = rng.normal(size=(K, K))  # T[a, b]: score of label a followed by b
start, stop = rng.normal(size=K), rng.normal(size=K)

# every one of the 4**4 = 256 paths, scored explicitly
paths = list(itertools.product(range(K), repeat=n))
scores = np.array([
    start[y[0]] + stop[y[-1]] + sum(s[i, y[i]] for i in range(n)) + sum(T[y[i - 1], y[i]] for i in range(1, n))
    for y in paths
])

# the forward algorithm gives log Z without enumerating anything
logz = crf.log_partition(s[None], T, start, stop)[0]
print("log Z, forward algorithm:", logz)
print("log Z, enumeration:      ", np.log(np.exp(scores).sum()))

# exp(-nll) of every path is its probability, so they add up to one
nll = crf.crf_nll(Tensor(np.repeat(s[None], len(paths), 0)), np.array(paths), Tensor(T), Tensor(start), Tensor(stop))
print("sum of path probabilities:", np.exp(-nll.data).sum())

# Viterbi finds the best path in O(n K^2)
path, best = crf.viterbi(s, T, start, stop)
print("Viterbi:", path, best)
print("argmax: ", list(paths[int(scores.argmax())]), scores.max())

# with all scores zero every path is equally likely: nll = n ln 4
z = np.zeros((n, K))
print("zero chain nll:", crf.crf_nll(Tensor(z[None]), np.zeros((1, n), int), Tensor(np.zeros((K, K))),
                                     Tensor(np.zeros(K)), Tensor(np.zeros(K))).data[0], "=", n * np.log(4))
