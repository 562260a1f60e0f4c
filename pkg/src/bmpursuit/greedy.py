"""Greedy MAP/MMSE pursuits under a Boltzmann support prior, plus baselines.

The OMP-like, thresholding-like and randomized pursuits grow a support one
atom at a time.  Candidate scores for every inactive atom are computed in a
single vectorized step from a Cholesky factor of ``Q_s`` that is extended by
one row per accepted atom.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .model import (
    SparseRepresentation,
    SupportPattern,
    _cholesky,
    _posterior_bias_batch,
    _q_matrix,
    _stable_sigmoid,
    log_posterior_support_score,
    oracle_coefficients,
    prior_support_term,
)
from .rng import item_seed, make_rng


@dataclass
class GreedyTrace:
    chosen_indices: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    rejected_index: int | None = None
    n_val_evaluations: int = 0
    val_tables: list | None = None


class _GrowingSupport:
    """Support built by appending atoms, with ``Q_s`` kept in Cholesky form."""

    def __init__(self, model, y):
        self.model = model
        self.aty = model.dictionary.T @ np.asarray(y, dtype=float)
        self.qdiag = np.diag(model.gram) + model.noise_var / model.coef_vars
        self.idx = []
        self.L = np.zeros((0, 0))
        self.w = np.zeros(0)
        self.data = 0.0
        self.logdet = 0.0
        self.spins = -np.ones(model.m)
        self.score = prior_support_term(model, self.spins)

    def inactive(self):
        mask = self.spins < 0
        return np.flatnonzero(mask)

    def expand(self, cand):
        """Data and log-det terms of ``s + {i}`` for each candidate ``i``."""
        if self.idx:
            G = self.model.gram[np.ix_(self.idx, cand)]
            U = solve_triangular(self.L, G, lower=True, check_finite=False)
            delta = self.qdiag[cand] - np.einsum("kc,kc->c", U, U)
            t = self.aty[cand] - U.T @ self.w
        else:
            U = np.zeros((0, cand.size))
            delta = self.qdiag[cand].copy()
            t = self.aty[cand].copy()
        return U, delta, t

    def evaluate(self, cand):
        """Return (Val, score gain, factor pieces) for every candidate."""
        model = self.model
        U, delta, t = self.expand(cand)
        data_new = self.data + t * t / delta
        logdet_new = self.logdet + np.log(delta)
        prior = model.prior
        inter = 2.0 * (prior.W[cand] @ self.spins)
        val = (data_new / (2.0 * model.noise_var) - 0.5 * logdet_new + inter
               + 2.0 * prior.b[cand] - 0.5 * np.log(model.coef_vars[cand]))
        gain = ((t * t / delta) / (2.0 * model.noise_var) - 0.5 * np.log(delta) + inter
                + 2.0 * prior.b[cand] - 0.5 * model.log_var_ratio[cand])
        return val, gain, (U, delta, t)

    def append(self, i, u, delta, t, gain):
        k = len(self.idx)
        L = np.zeros((k + 1, k + 1))
        L[:k, :k] = self.L
        L[k, :k] = u
        L[k, k] = math.sqrt(delta)
        self.L = L
        self.w = np.append(self.w, t / math.sqrt(delta))
        self.data += t * t / delta
        self.logdet += math.log(delta)
        self.idx.append(int(i))
        self.spins[i] = 1.0
        self.score += gain

    def pattern(self):
        return SupportPattern(self.spins.astype(np.int8))


def val_score(model, y, S_prev, i):
    """Val(i): posterior score of ``S_prev + {i}`` up to an i-independent constant."""
    if S_prev.spins[i] == 1:
        raise ValueError(f"atom {i} is already active")
    S = S_prev.with_atom(i)
    idx = S.indices
    L = _cholesky(_q_matrix(model, idx))
    w = np.linalg.solve(L, model.dictionary[:, idx].T @ np.asarray(y, dtype=float))
    p = model.prior
    return (float(w @ w) / (2.0 * model.noise_var) - float(np.sum(np.log(np.diag(L))))
            + 2.0 * float(p.W[i] @ S.spins) + 2.0 * p.b[i] - 0.5 * math.log(model.coef_vars[i]))


def _argmax_first(v):
    # np.argmax returns the first maximum, i.e. the lowest candidate position
    return int(np.argmax(v))


def omp_like_map(model, y, return_trace=False, keep_val_tables=False):
    """Greedy MAP support: add the atom with the largest Val until the score drops."""
    state = _GrowingSupport(model, y)
    trace = GreedyTrace(scores=[state.score], val_tables=[] if keep_val_tables else None)
    cap = min(model.n, model.m)
    while len(state.idx) < cap:
        cand = state.inactive()
        val, gain, (U, delta, t) = state.evaluate(cand)
        trace.n_val_evaluations += cand.size
        if keep_val_tables:
            table = np.full(model.m, np.nan)
            table[cand] = val
            trace.val_tables.append(table)
        j = _argmax_first(val)
        if not gain[j] > 0:
            trace.rejected_index = int(cand[j])
            trace.scores.append(state.score + gain[j])
            break
        state.append(cand[j], U[:, j], delta[j], t[j], gain[j])
        trace.chosen_indices.append(int(cand[j]))
        trace.scores.append(state.score)
    result = state.pattern()
    return (result, trace) if return_trace else result


def thresholding_like_map(model, y):
    """Rank atoms once by Val from the empty support and keep the best prefix."""
    state = _GrowingSupport(model, y)
    cand = np.arange(model.m)
    val, _, _ = state.evaluate(cand)
    order = np.argsort(-val, kind="stable")
    best_score, best_k = state.score, 0
    for k, i in enumerate(order, start=1):
        single = np.array([i])
        _, gain, (U, delta, t) = state.evaluate(single)
        state.append(i, U[:, 0], delta[0], t[0], gain[0])
        if state.score > best_score:
            best_score, best_k = state.score, k
    return SupportPattern.from_indices(order[:best_k], model.m)


def _softmax_choice(val, rng):
    p = np.exp(val - val.max())
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), val.size - 1))


def random_omp_support(model, y, rng):
    """One randomized greedy run: atoms drawn with probability ~ exp(Val)."""
    state = _GrowingSupport(model, y)
    cap = min(model.n, model.m)
    while len(state.idx) < cap:
        cand = state.inactive()
        val, gain, (U, delta, t) = state.evaluate(cand)
        j = _softmax_choice(val, rng)
        if not gain[j] > 0:
            break
        state.append(cand[j], U[:, j], delta[j], t[j], gain[j])
    return state.pattern()


def random_omp_mmse(model, y, J0=10, seed=0, return_runs=False):
    """Approximate MMSE estimate: average of ``J0`` randomized greedy oracle estimates."""
    if J0 < 1:
        raise ValueError("J0 must be at least 1")
    rng = make_rng(seed)
    runs = []
    for _ in range(J0):
        S = random_omp_support(model, y, rng)
        runs.append(oracle_coefficients(model, y, S).coeffs)
    est = SparseRepresentation.dense(np.mean(runs, axis=0))
    return (est, np.array(runs)) if return_runs else est


def least_squares_coefficients(A, y, S):
    x = np.zeros(A.shape[1])
    idx = S.indices
    if idx.size:
        x[idx] = np.linalg.lstsq(A[:, idx], y, rcond=None)[0]
    return x


def omp_baseline(model, y, eta=1.0, return_residuals=False):
    """Plain OMP; stops once ``||y - A_s x_s|| < eta sqrt(n) sigma_e``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    A = model.dictionary
    y = np.asarray(y, dtype=float)
    norms = np.linalg.norm(A, axis=0)
    tol = eta * math.sqrt(model.n) * model.noise_std
    cap = min(model.n, model.m)
    idx = []
    r = y.copy()
    residuals = [float(np.linalg.norm(r))]
    while residuals[-1] >= tol and len(idx) < cap:
        corr = np.abs(A.T @ r) / norms
        corr[idx] = -1.0
        idx.append(int(np.argmax(corr)))
        coef = np.linalg.lstsq(A[:, idx], y, rcond=None)[0]
        r = y - A[:, idx] @ coef
        residuals.append(float(np.linalg.norm(r)))
    S = SupportPattern.from_indices(idx, model.m)
    return (S, residuals) if return_residuals else S


@dataclass(frozen=True)
class AnnealingSchedule:
    """Geometric cooling ``T_{k+1} = beta T_k`` from ``t_initial`` down to ``t_final``."""

    t_initial: float = 600.0
    t_final: float = 1.0
    beta: float = 0.9
    sweeps_per_temperature: int = 1

    def __post_init__(self):
        if not (self.t_initial > 0 and self.t_final > 0 and self.t_final <= self.t_initial):
            raise ValueError("need 0 < t_final <= t_initial")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.sweeps_per_temperature < 0:
            raise ValueError("sweeps_per_temperature must be non-negative")

    @classmethod
    def for_budget(cls, n_updates, m, t_initial=600.0, t_final=1.0):
        """Schedule with about ``n_updates`` single-site updates, one sweep per temperature."""
        n_temps = max(1, int(round(n_updates / m)))
        if n_updates <= 0:
            return cls(t_initial, t_final, 0.5, 0)
        if n_temps == 1:
            beta = 0.5 * t_final / t_initial
        else:
            beta = (t_final / t_initial) ** (1.0 / (n_temps - 1))
        return cls(t_initial, t_final, beta, 1)

    def temperatures(self):
        temps = []
        T = self.t_initial
        floor = self.t_final * (1.0 - 1e-9)
        while T >= floor:
            temps.append(T)
            T *= self.beta
        return temps


def gibbs_annealing_map(model, y, schedule=None, seed=0):
    """Simulated annealing over supports with heat-bath single-site updates.

    Starts from the empty support and returns the best-scoring pattern
    visited.  With ``schedule=None`` the update budget matches the number of
    Val evaluations that :func:`omp_like_map` spends on the same signal.
    """
    if schedule is None:
        _, trace = omp_like_map(model, y, return_trace=True)
        schedule = AnnealingSchedule.for_budget(trace.n_val_evaluations, model.m)
    rng = make_rng(seed)
    m = model.m
    spins = -np.ones(m)
    best = spins.copy()
    if schedule.sweeps_per_temperature == 0:
        return SupportPattern(best.astype(np.int8))
    if model.unitary_flag:
        q = _posterior_bias_batch(model, np.asarray(y, dtype=float)[None, :])[0]
        W = model.prior.W
        field_ = q + W @ spins
        score = float(q @ spins + 0.5 * spins @ W @ spins)
        best_score = score
        for T in schedule.temperatures():
            for _ in range(schedule.sweeps_per_temperature):
                u = rng.random(m)
                for i in range(m):
                    new = 1.0 if u[i] < _stable_sigmoid(2.0 * field_[i] / T) else -1.0
                    if new != spins[i]:
                        diff = new - spins[i]
                        score += diff * field_[i]
                        field_ += W[:, i] * diff
                        spins[i] = new
                        if score > best_score:
                            best_score = score
                            best = spins.copy()
        return SupportPattern(best.astype(np.int8))

    def score_of(s):
        return log_posterior_support_score(model, y, SupportPattern(s.astype(np.int8)))

    score = score_of(spins)
    best_score = score
    for T in schedule.temperatures():
        for _ in range(schedule.sweeps_per_temperature):
            u = rng.random(m)
            for i in range(m):
                flipped = spins.copy()
                flipped[i] = -spins[i]
                other = score_of(flipped)
                on_minus_off = (other - score) if spins[i] < 0 else (score - other)
                new = 1.0 if u[i] < _stable_sigmoid(on_minus_off / T) else -1.0
                if new != spins[i]:
                    spins, score = flipped, other
                    if score > best_score:
                        best_score = score
                        best = spins.copy()
    return SupportPattern(best.astype(np.int8))


def pursue_batch(pursuit, model, signals, threads=1, seed=None, **kwargs):
    """Apply ``pursuit(model, y, ...)`` to every row of ``signals``.

    Randomized pursuits get ``seed=item_seed(seed, l)`` for signal ``l`` so
    results do not depend on the number of worker threads.
    """
    Y = np.atleast_2d(np.asarray(signals, dtype=float))

    def run(l):
        if seed is None:
            return pursuit(model, Y[l], **kwargs)
        return pursuit(model, Y[l], seed=item_seed(seed, l), **kwargs)

    if threads <= 1:
        return [run(l) for l in range(Y.shape[0])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(Y.shape[0])))
