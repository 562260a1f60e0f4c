"""Boltzmann-machine generative model for sparse representations.

Supports are spin vectors ``S`` in {-1, +1}^m drawn from

    Pr(S) ~ exp(b'S + 0.5 S'WS),

active coefficients are zero-mean Gaussians with per-atom variances, and
signals are ``y = A x + e`` with white Gaussian noise.  All scores here are
natural-log values defined up to an additive constant, so they may only be
compared across supports for one fixed signal ``y``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .rng import make_rng

UNITARY_TOL = 1e-10
EXHAUSTIVE_MAX_M = 20


class NumericalError(RuntimeError):
    """A factorization that should never fail did fail."""


class PreconditionError(ValueError):
    """Operation called on a model it does not support."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BoltzmannParams:
    """Interaction matrix ``W`` (symmetric, zero diagonal) and bias ``b``."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W must be square, got shape {W.shape}")
        if W.shape[0] != b.shape[0]:
            raise ValueError(f"W is {W.shape[0]}x{W.shape[0]} but b has {b.shape[0]} entries")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("Boltzmann parameters must be finite")
        if not np.array_equal(W, W.T):
            raise ValueError("W must be exactly symmetric")
        if np.any(np.diag(W) != 0):
            raise ValueError("W must have a zero diagonal")
        object.__setattr__(self, "W", _frozen(W))
        object.__setattr__(self, "b", _frozen(b))

    @property
    def m(self):
        return self.b.shape[0]

    @classmethod
    def independent(cls, b):
        b = np.asarray(b, dtype=float).ravel()
        return cls(np.zeros((b.size, b.size)), b)

    @classmethod
    def iid(cls, m, p):
        """Independent prior with ``Pr(S_i = 1) = p`` for every atom."""
        return cls.independent(np.full(m, 0.5 * math.log(p / (1.0 - p))))

    def permuted(self, perm):
        perm = np.asarray(perm)
        return BoltzmannParams(self.W[np.ix_(perm, perm)], self.b[perm])

    def __eq__(self, other):
        if not isinstance(other, BoltzmannParams):
            return NotImplemented
        return np.array_equal(self.W, other.W) and np.array_equal(self.b, other.b)

    __hash__ = None


class SupportPattern:
    """Spin vector ``S`` together with its sorted index view ``s``."""

    __slots__ = ("_spins", "_indices")

    def __init__(self, spins):
        spins = np.asarray(spins)
        if spins.ndim != 1:
            raise ValueError("spins must be one-dimensional")
        if not np.all((spins == 1) | (spins == -1)):
            raise ValueError("spins must be +1 or -1")
        self._spins = _frozen(spins, dtype=np.int8)
        self._indices = _frozen(np.flatnonzero(self._spins == 1), dtype=np.intp)

    @classmethod
    def from_indices(cls, indices, m):
        spins = -np.ones(m, dtype=np.int8)
        idx = np.asarray(list(indices), dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= m):
            raise ValueError(f"support index out of range [0, {m})")
        spins[idx] = 1
        return cls(spins)

    @classmethod
    def empty(cls, m):
        return cls(-np.ones(m, dtype=np.int8))

    @property
    def spins(self):
        return self._spins

    @property
    def indices(self):
        return self._indices

    @property
    def m(self):
        return self._spins.shape[0]

    @property
    def k(self):
        return self._indices.shape[0]

    def with_atom(self, i):
        spins = self._spins.copy()
        spins[i] = 1
        return SupportPattern(spins)

    def __len__(self):
        return self.k

    def __eq__(self, other):
        if not isinstance(other, SupportPattern):
            return NotImplemented
        return np.array_equal(self._spins, other._spins)

    def __hash__(self):
        return hash(self._spins.tobytes())

    def __repr__(self):
        return f"SupportPattern(m={self.m}, indices={self._indices.tolist()})"


def as_spin_matrix(supports):
    """Stack supports (patterns or raw spin rows) into an ``(N, m)`` float array."""
    if isinstance(supports, np.ndarray):
        S = np.asarray(supports, dtype=float)
        if S.ndim == 1:
            S = S[None, :]
        return S
    rows = [s.spins if isinstance(s, SupportPattern) else np.asarray(s) for s in supports]
    if not rows:
        return np.zeros((0, 0))
    return np.asarray(rows, dtype=float)


@dataclass(frozen=True, eq=False)
class SparseRepresentation:
    coeffs: np.ndarray
    support: SupportPattern

    def __post_init__(self):
        x = np.asarray(self.coeffs, dtype=float).ravel()
        if x.shape[0] != self.support.m:
            raise ValueError("coefficient length does not match support size")
        off = self.support.spins != 1
        if np.any(x[off] != 0):
            raise ValueError("nonzero coefficient outside the support")
        object.__setattr__(self, "coeffs", _frozen(x))

    @classmethod
    def dense(cls, coeffs):
        """Wrap a dense estimate (e.g. an MMSE average) with the full support."""
        x = np.asarray(coeffs, dtype=float).ravel()
        return cls(x, SupportPattern(np.ones(x.size, dtype=np.int8)))

    @property
    def active(self):
        return self.coeffs[self.support.indices]


@dataclass(frozen=True, eq=False)
class LabeledSample:
    signal: np.ndarray
    representation: SparseRepresentation
    clean_signal: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SignalModel:
    """Dictionary, coefficient variances, noise level and support prior."""

    dictionary: np.ndarray
    coef_vars: np.ndarray
    noise_std: float
    prior: BoltzmannParams

    def __post_init__(self):
        A = np.asarray(self.dictionary, dtype=float)
        v = np.asarray(self.coef_vars, dtype=float).ravel()
        if A.ndim != 2:
            raise ValueError("dictionary must be a matrix")
        if not np.all(np.isfinite(A)):
            raise ValueError("dictionary must be finite")
        if A.shape[1] != v.shape[0] or v.shape[0] != self.prior.m:
            raise ValueError(
                f"dictionary has {A.shape[1]} atoms, variances {v.shape[0]}, prior {self.prior.m}")
        if not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise ValueError("coefficient variances must be positive and finite")
        if not (self.noise_std > 0 and math.isfinite(self.noise_std)):
            raise ValueError("noise_std must be positive")
        object.__setattr__(self, "dictionary", _frozen(A))
        object.__setattr__(self, "coef_vars", _frozen(v))
        object.__setattr__(self, "noise_std", float(self.noise_std))

    @property
    def n(self):
        return self.dictionary.shape[0]

    @property
    def m(self):
        return self.dictionary.shape[1]

    @cached_property
    def gram(self):
        g = self.dictionary.T @ self.dictionary
        g.setflags(write=False)
        return g

    @cached_property
    def unitary_flag(self):
        if self.n != self.m:
            return False
        return bool(np.max(np.abs(self.gram - np.eye(self.m))) <= UNITARY_TOL)

    @property
    def noise_var(self):
        return self.noise_std ** 2

    @cached_property
    def log_var_ratio(self):
        """v_i = ln(sigma_x,i^2 / sigma_e^2)."""
        return np.log(self.coef_vars / self.noise_var)

    def replace(self, **changes):
        fields = dict(dictionary=self.dictionary, coef_vars=self.coef_vars,
                      noise_std=self.noise_std, prior=self.prior)
        fields.update(changes)
        return SignalModel(**fields)


def bm_log_score(prior, S):
    """b'S + 0.5 S'WS (log-density of the Boltzmann prior up to -ln Z)."""
    spins = S.spins if isinstance(S, SupportPattern) else np.asarray(S)
    if spins.shape != (prior.m,):
        raise ValueError(f"pattern has length {spins.shape}, prior has m={prior.m}")
    s = spins.astype(float)
    return float(prior.b @ s + 0.5 * s @ prior.W @ s)


def _stable_sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def gibbs_chain(prior, count, burn_in=100, thin=5, seed=0):
    """Single-site Gibbs sampler; returns an ``(count, m)`` int8 spin array.

    Sites are updated in ascending order.  A sample is kept after the
    ``burn_in`` sweeps and then every ``thin`` sweeps.
    """
    if count < 1 or burn_in < 0 or thin < 1:
        raise ValueError("need count >= 1, burn_in >= 0, thin >= 1")
    rng = make_rng(seed)
    m = prior.m
    W = prior.W
    S = -np.ones(m)
    field = prior.b + W @ S
    out = np.empty((count, m), dtype=np.int8)
    kept = 0
    for sweep in range(burn_in + count * thin):
        u = rng.random(m)
        for i in range(m):
            new = 1.0 if u[i] < _stable_sigmoid(2.0 * field[i]) else -1.0
            if new != S[i]:
                field += W[:, i] * (new - S[i])
                S[i] = new
        if sweep >= burn_in and (sweep - burn_in + 1) % thin == 0:
            out[kept] = S
            kept += 1
    return out


def gibbs_sample_supports(prior, count, burn_in=100, thin=5, seed=0):
    return [SupportPattern(row) for row in gibbs_chain(prior, count, burn_in, thin, seed)]


def sample_coefficients(model, S, rng):
    x = np.zeros(model.m)
    idx = S.indices
    x[idx] = rng.standard_normal(idx.size) * np.sqrt(model.coef_vars[idx])
    return x


def sample_signal(model, S, seed=0):
    """Draw x_s ~ N(0, Sigma_s) and y = A x + e with e ~ N(0, sigma_e^2 I)."""
    if S.m != model.m:
        raise ValueError("support size does not match model")
    rng = make_rng(seed)
    x = sample_coefficients(model, S, rng)
    clean = model.dictionary @ x
    y = clean + model.noise_std * rng.standard_normal(model.n)
    return LabeledSample(y, SparseRepresentation(x, S), clean)


def _q_matrix(model, idx):
    return model.gram[np.ix_(idx, idx)] + np.diag(model.noise_var / model.coef_vars[idx])


def _cholesky(Q):
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Q_s is not numerically positive definite") from exc


def prior_support_term(model, spins):
    """0.5 S'WS + (b - v/4)'S, vectorized over rows of ``spins``."""
    s = np.asarray(spins, dtype=float)
    p = model.prior
    shift = p.b - 0.25 * model.log_var_ratio
    if s.ndim == 1:
        return float(0.5 * s @ p.W @ s + shift @ s)
    return 0.5 * np.einsum("ij,jk,ik->i", s, p.W, s) + s @ shift


def log_posterior_support_score(model, y, S):
    """Log Pr(s | y) up to a y-dependent constant.

    The data part is ``y'A_s Q_s^-1 A_s'y / (2 sigma_e^2) - 0.5 ln det Q_s`` with
    ``Q_s = A_s'A_s + sigma_e^2 Sigma_s^-1``; it vanishes for the empty support.
    """
    score = prior_support_term(model, S.spins)
    idx = S.indices
    if idx.size == 0:
        return score
    L = _cholesky(_q_matrix(model, idx))
    z = model.dictionary[:, idx].T @ np.asarray(y, dtype=float)
    w = np.linalg.solve(L, z)
    return score + float(w @ w) / (2.0 * model.noise_var) - float(np.sum(np.log(np.diag(L))))


def oracle_coefficients(model, y, S):
    """x_s = Q_s^-1 A_s'y on the support, zero elsewhere."""
    x = np.zeros(model.m)
    idx = S.indices
    if idx.size:
        L = _cholesky(_q_matrix(model, idx))
        z = model.dictionary[:, idx].T @ np.asarray(y, dtype=float)
        x[idx] = np.linalg.solve(L.T, np.linalg.solve(L, z))
    return SparseRepresentation(x, S)


def oracle_coefficients_batch(model, Y, spins):
    """Oracle coefficients for the rows of ``Y`` given ``(N, m)`` spins."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    spins = np.atleast_2d(spins)
    if model.unitary_flag:
        shrink = 1.0 / (1.0 + model.noise_var / model.coef_vars)
        return np.where(spins > 0, (Y @ model.dictionary) * shrink, 0.0)
    X = np.zeros((Y.shape[0], model.m))
    for l, (y, s) in enumerate(zip(Y, spins)):
        X[l] = oracle_coefficients(model, y, SupportPattern(s)).coeffs
    return X


def log_posterior_scores_batch(model, Y, spins):
    """:func:`log_posterior_support_score` for many (signal, support) pairs."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    spins = np.atleast_2d(spins)
    if model.unitary_flag:
        Qd = 1.0 + model.noise_var / model.coef_vars
        on = spins > 0
        data = np.where(on, (Y @ model.dictionary) ** 2 / Qd, 0.0).sum(axis=1)
        logdet = np.where(on, np.log(Qd), 0.0).sum(axis=1)
        return data / (2.0 * model.noise_var) - 0.5 * logdet + prior_support_term(model, spins)
    return np.array([log_posterior_support_score(model, y, SupportPattern(s))
                     for y, s in zip(Y, spins)])


def posterior_bias(model, y):
    """Bias q of the posterior Boltzmann machine for a unitary dictionary."""
    if not model.unitary_flag:
        raise PreconditionError("posterior_bias requires a unitary dictionary")
    return _posterior_bias_batch(model, np.asarray(y, dtype=float)[None, :])[0]


def _posterior_bias_batch(model, Y):
    corr = np.asarray(Y, dtype=float) @ model.dictionary
    var, ne = model.coef_vars, model.noise_var
    gain = var / (ne * (ne + var))
    return model.prior.b + 0.25 * (gain * corr ** 2 - np.log1p(var / ne))


def all_spin_patterns(m):
    """All 2^m spin vectors; row ``r`` has spin +1 at bit positions of ``r``."""
    r = np.arange(2 ** m)[:, None]
    return np.where((r >> np.arange(m)) & 1, 1, -1).astype(np.int8)


def _enumerate_posterior(model, y, with_coefficients=False):
    if model.m > EXHAUSTIVE_MAX_M:
        raise ValueError(f"exhaustive enumeration refused for m={model.m} > {EXHAUSTIVE_MAX_M}")
    m = model.m
    y = np.asarray(y, dtype=float)
    spins = all_spin_patterns(m)
    scores = prior_support_term(model, spins)
    coeffs = np.zeros((2 ** m, m)) if with_coefficients else None
    aty = model.dictionary.T @ y
    weights = 1 << np.arange(m)
    for k in range(1, m + 1):
        combos = np.array(list(itertools.combinations(range(m), k)), dtype=np.intp)
        rows = (weights[combos]).sum(axis=1)
        Q = model.gram[combos[:, :, None], combos[:, None, :]]
        Q = Q + np.einsum("ck,kj->ckj", model.noise_var / model.coef_vars[combos], np.eye(k))
        try:
            L = np.linalg.cholesky(Q)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("Q_s is not numerically positive definite") from exc
        z = aty[combos]
        sol = np.linalg.solve(Q, z[:, :, None])[:, :, 0]
        logdet_half = np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        scores[rows] += np.einsum("ck,ck->c", z, sol) / (2.0 * model.noise_var) - logdet_half
        if with_coefficients:
            coeffs[rows[:, None], combos] = sol
    return spins, scores, coeffs


def exhaustive_scores(model, y):
    """Scores of every support, indexed as in :func:`all_spin_patterns`."""
    return _enumerate_posterior(model, y)[1]


def exhaustive_map(model, y):
    """Brute-force MAP support over all 2^m patterns (test oracle, m <= 20).

    Exact ties go to the smallest cardinality, then the lexicographically
    smallest spin vector.
    """
    spins, scores, _ = _enumerate_posterior(model, y)
    best = np.flatnonzero(scores == scores.max())
    if best.size > 1:
        best = sorted(best, key=lambda r: (int((spins[r] == 1).sum()), tuple(spins[r])))
    return SupportPattern(spins[best[0]])


def exhaustive_mmse(model, y):
    """E[x | y] by summing over all 2^m supports."""
    _, scores, coeffs = _enumerate_posterior(model, y, with_coefficients=True)
    w = np.exp(scores - scores.max())
    w /= w.sum()
    return w @ coeffs
