"""Model estimation from labeled supports and coefficients.

Boltzmann parameters are packed into one vector ``u``: the strict upper
triangle of ``W`` in row-major order followed by ``b``.  The log
pseudo-likelihood is concave in ``u``; it is maximized either by plain
gradient ascent or by SESOP-M, which searches the span of the current
gradient and the ``M`` previous steps with a small Newton solve.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import BoltzmannParams, as_spin_matrix

DEFAULT_VARIANCE = 50.0 ** 2
ATANH_CLAMP = 1.0 - 1e-6


def n_packed(m):
    return (m * m + m) // 2


def pack_params(W, b=None):
    """Pack ``(W, b)`` (or a :class:`BoltzmannParams`) into ``u``."""
    if isinstance(W, BoltzmannParams):
        W, b = W.W, W.b
    W = np.asarray(W, dtype=float)
    iu = np.triu_indices(W.shape[0], 1)
    return np.concatenate([W[iu], np.asarray(b, dtype=float)])


def unpack_params(u, m):
    u = np.asarray(u, dtype=float)
    if u.shape != (n_packed(m),):
        raise ValueError(f"packed vector has length {u.shape}, expected {n_packed(m)}")
    W = np.zeros((m, m))
    iu = np.triu_indices(m, 1)
    W[iu] = u[: iu[0].size]
    W = W + W.T
    return W, u[iu[0].size:].copy()


def _as_params(params, m=None):
    if isinstance(params, BoltzmannParams):
        return params.W, params.b
    return unpack_params(params, m)


def log_cosh(z):
    """ln cosh z without overflow."""
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _fields(W, b, S):
    return S @ W + b


def log_pl(params, supports):
    """Sum over samples and sites of ln Pr(S_i | rest)."""
    S = as_spin_matrix(supports)
    if S.size == 0:
        return 0.0
    W, b = _as_params(params, S.shape[1])
    if W.shape[0] != S.shape[1]:
        raise ValueError("parameter size does not match supports")
    Z = _fields(W, b, S)
    N, m = S.shape
    return float(np.sum(S * Z) - np.sum(log_cosh(Z)) - m * N * math.log(2.0))


def _upper(M):
    return M[np.triu_indices(M.shape[0], 1)]


def log_pl_gradient(params, supports, reduction="fast"):
    """Gradient of :func:`log_pl` with respect to the packed vector.

    ``reduction="ordered"`` accumulates over samples with fixed-order
    einsum loops (bit-stable); ``"fast"`` uses BLAS products.
    """
    S = as_spin_matrix(supports)
    m = S.shape[1]
    W, b = _as_params(params, m)
    T = np.tanh(_fields(W, b, S))
    R = S - T  # d/dz of S*z - ln cosh z
    if reduction == "ordered":
        G = np.einsum("li,lj->ij", R, S)
        gb = np.einsum("li->i", R)
    elif reduction == "fast":
        G = R.T @ S
        gb = R.sum(axis=0)
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    # W_ij enters the fields of sites i and j
    return np.concatenate([_upper(G + G.T), gb])


def _hess_times(W, b, S, V):
    """Hessian of the log-PL times the columns of ``V`` (shape ``(p, r)``)."""
    m = S.shape[1]
    curv = 1.0 - np.tanh(_fields(W, b, S)) ** 2
    out = np.empty_like(V)
    for c in range(V.shape[1]):
        DW, db = unpack_params(V[:, c], m)
        R = curv * (S @ DW + db)
        G = R.T @ S
        out[:, c] = -np.concatenate([_upper(G + G.T), R.sum(axis=0)])
    return out


def log_pl_hessian(params, supports):
    """Full ``p x p`` Hessian (small problems only)."""
    S = as_spin_matrix(supports)
    if isinstance(params, BoltzmannParams):
        m = params.m
    else:
        m = int(round((math.sqrt(8 * len(params) + 1) - 1) / 2))
    p = n_packed(m)
    if S.size == 0:
        return np.zeros((p, p))
    W, b = _as_params(params, m)
    return _hess_times(W, b, S, np.eye(p))


def estimate_variances(samples, fallback=DEFAULT_VARIANCE):
    """Mean squared active coefficient per atom; ``fallback`` for unused atoms.

    ``samples`` may be labeled samples, sparse representations, or an
    ``(N, m)`` coefficient array (zeros read as inactive).
    """
    if isinstance(samples, np.ndarray):
        X = np.atleast_2d(samples)
        active = X != 0
    else:
        reps = [getattr(s, "representation", s) for s in samples]
        X = np.array([r.coeffs for r in reps])
        active = np.array([r.support.spins == 1 for r in reps])
    counts = active.sum(axis=0)
    sums = np.where(active, X ** 2, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where(counts > 0, sums / np.maximum(counts, 1), fallback)
    # an always-zero active coefficient would give a zero variance
    return np.where(est > 0, est, fallback)


def initial_params(supports):
    """``W = 0`` and the separate MPL bias ``atanh(mean spin)``, clamped."""
    S = as_spin_matrix(supports)
    mean = np.clip(S.mean(axis=0), -ATANH_CLAMP, ATANH_CLAMP)
    m = S.shape[1]
    return pack_params(np.zeros((m, m)), np.arctanh(mean))


@dataclass
class SesopConfig:
    M: int = 2
    max_iters: int = 50
    grad_tol: float | None = None  # None -> 1e-5 * N
    inner_newton_iters: int = 10
    inner_newton_damping: float = 1.0

    def __post_init__(self):
        if self.M < 0 or self.max_iters < 0 or self.inner_newton_iters < 1:
            raise ValueError("invalid SESOP configuration")
        if not self.inner_newton_damping > 0:
            raise ValueError("inner_newton_damping must be positive")


@dataclass
class MPLFit:
    params: BoltzmannParams
    log_pl_trace: list = field(default_factory=list)
    grad_norm_trace: list = field(default_factory=list)
    iterations: int = 0


def _newton_subspace(u, H, S, m, f0, iters, damping):
    """Maximize ``f(u + H a)`` over ``a`` by damped Newton steps from ``a = 0``."""
    alpha = np.zeros(H.shape[1])
    f_cur = f0
    for _ in range(iters):
        x = u + H @ alpha
        W, b = unpack_params(x, m)
        g = H.T @ log_pl_gradient(x, S)
        Hs = H.T @ _hess_times(W, b, S, H)
        Hs = 0.5 * (Hs + Hs.T)
        try:
            d = -np.linalg.solve(Hs, g)
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(Hs, g, rcond=None)[0]
        if not np.all(np.isfinite(d)) or g @ d <= 0:
            d = g / max(np.abs(Hs).max(), 1e-12)
        t = damping
        improved = False
        for _ in range(40):
            trial = alpha + t * d
            f_trial = log_pl(u + H @ trial, S)
            if f_trial > f_cur:
                alpha, improved = trial, True
                gain, f_cur = f_trial - f_cur, f_trial
                break
            t *= 0.5
        if not improved or gain <= 1e-12 * max(1.0, abs(f_cur)):
            break
    return alpha, f_cur


def mpl_sesop(supports, config=None, init=None):
    """Maximum pseudo-likelihood estimate of ``(W, b)`` via SESOP-M."""
    config = config or SesopConfig()
    S = as_spin_matrix(supports)
    N, m = S.shape
    if N < 1:
        raise ValueError("need at least one support")
    eps = 1e-5 * N if config.grad_tol is None else config.grad_tol
    u = initial_params(S) if init is None else pack_params(init)
    f = log_pl(u, S)
    steps = deque(maxlen=config.M if config.M > 0 else None)
    fit = MPLFit(params=None, log_pl_trace=[f])
    j = 0
    while True:
        g = log_pl_gradient(u, S)
        gnorm = float(np.linalg.norm(g))
        fit.grad_norm_trace.append(gnorm)
        if gnorm < eps or j >= config.max_iters:
            break
        dirs = [g] + (list(steps) if config.M > 0 else [])
        H = np.column_stack([d / np.linalg.norm(d) for d in dirs if np.linalg.norm(d) > 0])
        alpha, f_new = _newton_subspace(u, H, S, m, f, config.inner_newton_iters,
                                        config.inner_newton_damping)
        step = H @ alpha
        if f_new <= f:
            break
        u, f = u + step, f_new
        if config.M > 0:
            steps.appendleft(step)
        fit.log_pl_trace.append(f)
        j += 1
    fit.iterations = j
    fit.params = BoltzmannParams(*unpack_params(u, m))
    return fit


def mpl_gradient_ascent(supports, steps=50, learning_rate=None, init=None):
    """Gradient ascent on the log-PL.

    A fixed ``learning_rate`` gives plain ascent; ``None`` uses a
    backtracking (Armijo) step that starts from twice the last accepted one.
    """
    S = as_spin_matrix(supports)
    N, m = S.shape
    u = initial_params(S) if init is None else pack_params(init)
    f = log_pl(u, S)
    fit = MPLFit(params=None, log_pl_trace=[f])
    t = 1.0 / (N * m)
    for _ in range(steps):
        g = log_pl_gradient(u, S)
        gg = float(g @ g)
        fit.grad_norm_trace.append(math.sqrt(gg))
        if gg == 0:
            break
        if learning_rate is not None:
            u = u + learning_rate * g
            f = log_pl(u, S)
        else:
            t *= 2.0
            for _ in range(60):
                f_trial = log_pl(u + t * g, S)
                if f_trial >= f + 1e-4 * t * gg:
                    break
                t *= 0.5
            else:
                break
            u, f = u + t * g, f_trial
        fit.log_pl_trace.append(f)
        fit.iterations += 1
    fit.params = BoltzmannParams(*unpack_params(u, m))
    return fit


def band_energy(W, L):
    W = np.asarray(W)
    i, j = np.indices(W.shape)
    band = (np.abs(i - j) <= L) & (i < j)
    return float(np.abs(W)[band].sum())


def _swap_gains(absW, mask):
    F = absW @ mask
    d = np.diag(F)
    gains = F + F.T - d[:, None] - d[None, :] + 2.0 * absW * mask
    np.fill_diagonal(gains, 0.0)
    return gains


def band_projection(params, variances, L, tol=1e-12):
    """Relabel atoms to concentrate ``|W|`` inside the band, then cut the rest.

    Each round takes the single pairwise swap with the largest gain in
    in-band l1 energy; rounds repeat until no swap helps.  Returns the
    projected parameters, the matching variances and the permutation
    ``perm`` with ``new[i] = old[perm[i]]``.
    """
    if L < 1:
        raise ValueError("band order must be at least 1")
    m = params.m
    i, j = np.indices((m, m))
    mask = ((np.abs(i - j) <= L) & (i != j)).astype(float)
    perm = np.arange(m)
    W = params.W.copy()
    absW = np.abs(W)
    while True:
        gains = _swap_gains(absW, mask)
        a, c = np.unravel_index(np.argmax(np.triu(gains, 1)), gains.shape)
        if gains[a, c] <= tol * max(1.0, absW.sum()):
            break
        swap = np.arange(m)
        swap[a], swap[c] = c, a
        perm = perm[swap]
        W = W[np.ix_(swap, swap)]
        absW = np.abs(W)
    W = np.where(mask > 0, W, 0.0)
    projected = BoltzmannParams(W, params.b[perm])
    return projected, np.asarray(variances, dtype=float)[perm], perm
