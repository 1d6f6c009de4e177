"""Linear-chain CRF over punctuation labels.

A path ``y`` through ``n`` positions scores

    start[y_1] + sum_i s_i[y_i] + sum_i T[y_{i-1}, y_i] + stop[y_n]

and the negative log-likelihood of a gold path is ``logZ - score(gold)``.
Batches are padded; each sequence carries its true length and positions at
or beyond it take no part in the chain.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .autodiff import ShapeError, Tensor, _emit, _logsumexp


def _check(emissions: np.ndarray, trans: np.ndarray, start: np.ndarray, stop: np.ndarray) -> int:
    if emissions.ndim != 3:
        raise ShapeError(f"crf: emissions must be (batch, length, labels), got {emissions.shape}")
    k = emissions.shape[-1]
    if trans.shape != (k, k) or start.shape != (k,) or stop.shape != (k,):
        raise ShapeError(
            f"crf: transition shapes {trans.shape}, {start.shape}, {stop.shape} "
            f"do not match {k} labels"
        )
    return k


def _forward_alphas(s, trans, start, lengths):
    """alpha[b, t, j] = log-sum of all prefixes ending in label j at t."""
    b, n, k = s.shape
    alpha = np.zeros_like(s)
    alpha[:, 0] = start + s[:, 0]
    for t in range(1, n):
        nxt = _logsumexp(alpha[:, t - 1, :, None] + trans[None], axis=1) + s[:, t]
        live = (t < lengths)[:, None]
        alpha[:, t] = np.where(live, nxt, alpha[:, t - 1])
    return alpha


def _backward_betas(s, trans, stop, lengths):
    """beta[b, t, i] = log-sum of all suffixes after label i at t (including stop)."""
    b, n, k = s.shape
    beta = np.zeros_like(s)
    last = (lengths - 1)[:, None]
    for t in range(n - 1, -1, -1):
        if t + 1 < n:
            rec = _logsumexp(trans[None] + (s[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        else:
            rec = np.zeros((b, k), dtype=s.dtype)
        beta[:, t] = np.where(t == last, stop[None], np.where(t < last, rec, 0.0))
    return beta


def log_partition(emissions, trans, start, stop, lengths=None) -> np.ndarray:
    """logZ per sequence, by the forward algorithm in log space."""
    s = np.asarray(emissions)
    _check(s, trans, start, stop)
    lengths = _lengths(s, lengths)
    alpha = _forward_alphas(s, trans, start, lengths)
    final = alpha[np.arange(s.shape[0]), lengths - 1]
    return _logsumexp(final + stop, axis=-1)


def path_score(emissions, tags, trans, start, stop, lengths=None) -> np.ndarray:
    """Unnormalised score of each tag path."""
    s = np.asarray(emissions)
    tags = np.asarray(tags)
    lengths = _lengths(s, lengths)
    b, n, _ = s.shape
    mask = np.arange(n)[None, :] < lengths[:, None]
    safe = np.where(mask, tags, 0)
    emit = np.take_along_axis(s, safe[..., None], axis=-1)[..., 0]
    total = np.where(mask, emit, 0.0).sum(axis=1)
    total = total + start[safe[:, 0]]
    if n > 1:
        pair = trans[safe[:, :-1], safe[:, 1:]]
        total = total + np.where(mask[:, 1:], pair, 0.0).sum(axis=1)
    total = total + stop[safe[np.arange(b), lengths - 1]]
    return total


def _lengths(s: np.ndarray, lengths) -> np.ndarray:
    b, n, _ = s.shape
    if lengths is None:
        return np.full(b, n, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (b,) or (lengths < 1).any() or (lengths > n).any():
        raise ShapeError(f"crf: lengths {lengths.tolist()} invalid for emissions {s.shape}")
    return lengths


def crf_nll(
    emissions: Tensor,
    tags,
    trans: Tensor,
    start: Tensor,
    stop: Tensor,
    lengths=None,
) -> Tensor:
    """Per-sequence negative log-likelihood, shape ``(batch,)``.

    Differentiable in emissions and all three transition parameters; the
    gradient is (expected counts under the model) minus (gold counts), with
    the expectations taken from forward-backward marginals.
    """
    s = emissions.data
    if s.ndim == 3 and s.shape[1] == 0:
        raise ShapeError("crf_nll: sequences must have at least one position")
    k = _check(s, trans.data, start.data, stop.data)
    tags = np.asarray(tags)
    if tags.shape != s.shape[:2]:
        raise ShapeError(f"crf_nll: tags shape {tags.shape} does not match emissions {s.shape}")
    lengths = _lengths(s, lengths)
    T, st, sp = trans.data, start.data, stop.data
    b, n, _ = s.shape

    alpha = _forward_alphas(s, T, st, lengths)
    rows = np.arange(b)
    logz = _logsumexp(alpha[rows, lengths - 1] + sp, axis=-1)
    gold = path_score(s, tags, T, st, sp, lengths)
    nll = (logz - gold).astype(s.dtype)

    def vjp(g):
        beta = _backward_betas(s, T, sp, lengths)
        mask = np.arange(n)[None, :] < lengths[:, None]
        safe = np.where(mask, tags, 0)
        unary = np.exp(alpha + beta - logz[:, None, None]) * mask[..., None]
        g_s = unary.copy()
        onehot = np.zeros_like(s)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        g_s -= onehot * mask[..., None]

        g_start = unary[:, 0] - onehot[:, 0]
        last_oh = onehot[rows, lengths - 1]
        g_stop = unary[rows, lengths - 1] - last_oh

        g_T = np.zeros((b, k, k), dtype=s.dtype)
        if n > 1:
            pair = (
                alpha[:, :-1, :, None]
                + T[None, None]
                + (s[:, 1:] + beta[:, 1:])[:, :, None, :]
                - logz[:, None, None, None]
            )
            pm = np.exp(pair) * mask[:, 1:, None, None]
            g_T += pm.sum(axis=1)
            gold_pairs = np.zeros((b, k, k), dtype=s.dtype)
            bi, ti = np.nonzero(mask[:, 1:])
            np.add.at(gold_pairs, (bi, safe[bi, ti], safe[bi, ti + 1]), 1.0)
            g_T -= gold_pairs

        gb = g.reshape(b, 1)
        return (
            (g_s * gb[:, :, None]).astype(s.dtype, copy=False),
            (g_T * gb[:, :, None]).sum(axis=0).astype(s.dtype, copy=False),
            (g_start * gb).sum(axis=0).astype(s.dtype, copy=False),
            (g_stop * gb).sum(axis=0).astype(s.dtype, copy=False),
        )

    return _emit("crf_nll", (emissions, trans, start, stop), nll, vjp)


def viterbi(
    emissions: np.ndarray,
    trans: np.ndarray,
    start: np.ndarray,
    stop: np.ndarray,
) -> Tuple[List[int], float]:
    """Best path for one ``(n, labels)`` emission matrix.

    Among equal-scoring paths the one with the lowest label at the latest
    position where they differ wins: ``argmax`` returns the first maximum,
    and backtracking starts from the end.
    """
    s = np.asarray(emissions)
    if s.ndim != 2 or s.shape[0] < 1:
        raise ShapeError(f"viterbi: emissions must be (n >= 1, labels), got {s.shape}")
    _check(s[None], trans, start, stop)
    n, k = s.shape
    delta = start + s[0]
    back = np.zeros((n, k), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + trans
        back[t] = cand.argmax(axis=0)
        delta = cand[back[t], np.arange(k)] + s[t]
    final = delta + stop
    best = int(final.argmax())
    path = [best]
    for t in range(n - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path, float(final.max())


def viterbi_batch(emissions: np.ndarray, lengths: Sequence[int], trans, start, stop) -> List[List[int]]:
    return [viterbi(emissions[i, : int(L)], trans, start, stop)[0] for i, L in enumerate(lengths)]
