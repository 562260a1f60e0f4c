"""Exact MAP supports for unitary dictionaries.

With a unitary dictionary the posterior over supports is again a Boltzmann
machine with the prior's ``W`` and a data-dependent bias ``q``.  For
``W = 0`` the MAP decouples into per-atom decisions; for an ``L``-banded
``W`` the cliques ``{i, ..., i+L}`` form a chain and max-product message
passing in the log domain gives the exact maximizer in ``O(2^L m)``.

Clique tables are indexed so that bit ``j`` of the table index holds the
spin of the ``j``-th site of the window (1 for +1, 0 for -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import PreconditionError, SupportPattern, _posterior_bias_batch


class DegenerateChainError(ValueError):
    """Raised when ``m <= L + 1``: the whole model is a single clique."""


def is_banded(W, L):
    W = np.asarray(W)
    i, j = np.indices(W.shape)
    return bool(np.all(W[np.abs(i - j) > L] == 0))


def _window_spins(width):
    r = np.arange(2 ** width)[:, None]
    return np.where((r >> np.arange(width)) & 1, 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class CliqueChain:
    """Chain of cliques ``C_i = {i, ..., i+L}`` with log-potential tables.

    ``log_potentials`` has shape ``(P, 2^(L+1))`` for one bias vector or
    ``(N, P, 2^(L+1))`` when built for a batch of bias vectors.  ``pivot``
    is the 0-based position of the clique where the inward messages meet.
    """

    m: int
    L: int
    cliques: tuple
    log_potentials: np.ndarray
    pivot: int

    @property
    def n_cliques(self):
        return len(self.cliques)


def _assignment(m, L):
    """Which biases and edges each clique owns.

    Returns per-clique (bias mask of length L+1, (L+1)x(L+1) upper edge
    selector).  Left cliques own their first site, right cliques their last,
    and the pivot owns everything inside its window.
    """
    P = m - L
    k = math.ceil((m - L - 1) / 2) - 1  # 0-based pivot
    masks, edges = [], []
    for c in range(P):
        bias = np.zeros(L + 1)
        sel = np.zeros((L + 1, L + 1))
        if c < k:
            bias[0] = 1.0
            sel[0, 1:] = 1.0
        elif c == k:
            bias[:] = 1.0
            sel[np.triu_indices(L + 1, 1)] = 1.0
        else:
            bias[L] = 1.0
            sel[:L, L] = 1.0
        masks.append(bias)
        edges.append(sel)
    return k, masks, edges


def build_clique_chain(prior_q, W, L):
    """Log-potentials of the posterior ``q'S + 0.5 S'WS`` split over the chain."""
    W = np.asarray(W, dtype=float)
    q = np.asarray(prior_q, dtype=float)
    batched = q.ndim == 2
    Q = q if batched else q[None, :]
    m = W.shape[0]
    if L < 1:
        raise ValueError("band order must be at least 1")
    if not is_banded(W, L):
        raise PreconditionError(f"W is not {L}-banded")
    if m <= L + 1:
        raise DegenerateChainError(f"m={m} <= L+1={L + 1}: single clique")
    k, masks, edges = _assignment(m, L)
    X = _window_spins(L + 1)
    tables = np.empty((Q.shape[0], m - L, 2 ** (L + 1)))
    for c in range(m - L):
        win = slice(c, c + L + 1)
        E = W[win, win] * edges[c]
        pair = np.einsum("ta,ab,tb->t", X, E, X)
        tables[:, c, :] = (Q[:, win] * masks[c]) @ X.T + pair
    cliques = tuple(tuple(range(c, c + L + 1)) for c in range(m - L))
    return CliqueChain(m, L, cliques, tables if batched else tables[0], k)


def _bits(index, width):
    return np.where((int(index) >> np.arange(width)) & 1, 1, -1)


def _pivot_argmax(total):
    """Row-wise argmax preferring fewer +1 spins, then the lower index."""
    width = int(math.log2(total.shape[-1]))
    pop = np.array([bin(r).count("1") for r in range(total.shape[-1])])
    order = np.lexsort((np.arange(pop.size), pop))
    best = np.max(total, axis=-1, keepdims=True)
    hit = total[:, order] == best
    return order[np.argmax(hit, axis=1)], width


def _chain_map(chain):
    """Inward max-sum messages and backtracking; returns ``(N, m)`` spins and optima."""
    T = chain.log_potentials
    if T.ndim == 2:
        T = T[None]
    N, P, C = T.shape
    L, m, k = chain.L, chain.m, chain.pivot
    half = 2 ** L
    T = T.copy()
    fwd_arg = {}
    for c in range(k):
        tab = T[:, c, :].reshape(N, half, 2)  # axis 2 is the window's first site
        fwd_arg[c] = np.argmax(tab, axis=2)  # ties -> spin -1
        msg = np.max(tab, axis=2)
        T[:, c + 1, :] = (T[:, c + 1, :].reshape(N, 2, half) + msg[:, None, :]).reshape(N, C)
    bwd_arg = {}
    for c in range(P - 1, k, -1):
        tab = T[:, c, :].reshape(N, 2, half)  # axis 1 is the window's last site
        bwd_arg[c] = np.argmax(tab, axis=1)
        msg = np.max(tab, axis=1)
        T[:, c - 1, :] = (T[:, c - 1, :].reshape(N, half, 2) + msg[:, :, None]).reshape(N, C)
    best_idx, _ = _pivot_argmax(T[:, k, :])
    optimum = T[np.arange(N), k, best_idx]
    bits = np.zeros((N, m), dtype=np.int64)
    bits[:, k:k + L + 1] = (best_idx[:, None] >> np.arange(L + 1)) & 1
    rows = np.arange(N)
    for c in range(k - 1, -1, -1):
        sep = (bits[:, c + 1:c + L + 1] << np.arange(L)).sum(axis=1)
        bits[:, c] = fwd_arg[c][rows, sep]
    for c in range(k + 1, P):
        sep = (bits[:, c:c + L] << np.arange(L)).sum(axis=1)
        bits[:, c + L] = bwd_arg[c][rows, sep]
    return np.where(bits == 1, 1, -1).astype(np.int8), optimum


def _enumerate_map(q, W):
    """Direct maximization over all 2^m patterns for the single-clique case."""
    m = W.shape[0]
    X = _window_spins(m)
    vals = np.atleast_2d(q) @ X.T + 0.5 * np.einsum("ta,ab,tb->t", X, W, X)
    best, _ = _pivot_argmax(vals)
    return X[best].astype(np.int8), vals[np.arange(vals.shape[0]), best]


def boolean_qp_map(q, W, L):
    """Maximize ``q'S + 0.5 S'WS`` over spins for an ``L``-banded ``W``.

    ``q`` may be a single vector or an ``(N, m)`` batch.  Returns spins of the
    same leading shape and the attained maxima.
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    Q = q[None, :] if single else q
    try:
        chain = build_clique_chain(Q, W, L)
        spins, opt = _chain_map(chain)
    except DegenerateChainError:
        spins, opt = _enumerate_map(Q, np.asarray(W, dtype=float))
    return (spins[0], opt[0]) if single else (spins, opt)


def _check_unitary(model):
    if not model.unitary_flag:
        raise PreconditionError("exact MAP requires a unitary dictionary")


def map_zero_w(model, y):
    """MAP support for ``W = 0``: atom ``i`` is active iff ``q_i > 0``."""
    _check_unitary(model)
    if np.any(model.prior.W != 0):
        raise PreconditionError("map_zero_w requires W = 0")
    q = _posterior_bias_batch(model, np.asarray(y, dtype=float)[None, :])[0]
    return SupportPattern(np.where(q > 0, 1, -1))


def zero_w_threshold(model):
    """Per-atom threshold on ``|y'a_i|`` of the W = 0 MAP rule.

    Entries are NaN where the log argument is below one; those atoms are
    active for every signal.
    """
    var, ne = model.coef_vars, model.noise_var
    c = np.sqrt(var / (var + ne))
    p = 1.0 / (1.0 + np.exp(-2.0 * model.prior.b))
    arg = np.log((1.0 - p) / (np.sqrt(1.0 - c ** 2) * p))
    with np.errstate(invalid="ignore"):
        return np.where(arg >= 0, math.sqrt(2.0) * model.noise_std / c * np.sqrt(arg), np.nan)


def map_message_passing(model, y, L):
    """Exact MAP support for a unitary dictionary and an ``L``-banded ``W``."""
    return map_message_passing_batch(model, np.asarray(y, dtype=float)[None, :], L)[0]


def map_message_passing_batch(model, signals, L):
    _check_unitary(model)
    if not is_banded(model.prior.W, L):
        raise PreconditionError(f"W is not {L}-banded")
    q = _posterior_bias_batch(model, np.atleast_2d(signals))
    spins, _ = boolean_qp_map(q, model.prior.W, L)
    return [SupportPattern(row) for row in spins]
