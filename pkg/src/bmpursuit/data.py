"""Dictionaries, image patches, noise, support statistics and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .model import SupportPattern, as_spin_matrix
from .rng import make_rng


def _side(n, what):
    s = math.isqrt(n)
    if s * s != n:
        raise ValueError(f"{what}={n} is not a perfect square")
    return s


def dct_unitary(n):
    """Separable orthonormal 2D DCT-II basis for sqrt(n) x sqrt(n) patches."""
    s = _side(n, "n")
    D = dct(np.eye(s), norm="ortho", axis=0).T  # columns are 1D atoms
    return np.kron(D, D)


def dct_overcomplete(n, m):
    """Kronecker product of two oversampled 1D DCT frames, unit-norm columns.

    The 1D frame has ``sqrt(m)`` atoms ``cos(pi (2t+1) k / (2 sqrt(m)))`` of
    length ``sqrt(n)``; no mean removal is applied.
    """
    s, K = _side(n, "n"), _side(m, "m")
    if K < s:
        raise ValueError("overcomplete dictionary needs m >= n")
    t = np.arange(s)[:, None]
    k = np.arange(K)[None, :]
    D = np.cos(np.pi * (2 * t + 1) * k / (2 * K))
    D /= np.linalg.norm(D, axis=0)
    A = np.kron(D, D)
    return A / np.linalg.norm(A, axis=0)


@dataclass
class PatchSet:
    patches: np.ndarray  # (N, n), DC removed
    dc_values: np.ndarray
    size: int = 8
    source: dict = field(default_factory=dict)

    def __len__(self):
        return self.patches.shape[0]

    def with_dc(self, patches=None):
        P = self.patches if patches is None else np.asarray(patches)
        return P + self.dc_values[:, None]


def extract_patches(image, size=8, stride=8):
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("expected a grayscale image")
    if size < 1 or stride < 1:
        raise ValueError("size and stride must be positive")
    H, Wd = img.shape
    rows = range(0, H - size + 1, stride)
    cols = range(0, Wd - size + 1, stride)
    P = np.array([img[r:r + size, c:c + size].ravel() for r in rows for c in cols])
    if P.size == 0:
        P = np.zeros((0, size * size))
    dc = P.mean(axis=1)
    P = P - dc[:, None]
    return PatchSet(P, dc, size, {"shape": img.shape, "stride": stride})


def add_noise(patches, sigma_e, seed=0):
    """Add white Gaussian noise to the full patches, then remove the (noisy) DC again."""
    if sigma_e < 0:
        raise ValueError("sigma_e must be nonnegative")
    meta = dict(patches.source, sigma_e=sigma_e, seed=seed)
    if sigma_e == 0:
        return PatchSet(patches.patches.copy(), patches.dc_values.copy(), patches.size, meta)
    full = patches.with_dc()
    full = full + sigma_e * make_rng(seed).standard_normal(full.shape)
    dc = full.mean(axis=1)
    return PatchSet(full - dc[:, None], dc, patches.size, meta)


@dataclass
class ValidityStats:
    R: np.ndarray
    U: np.ndarray
    V: np.ndarray
    p_bar: float
    delta: float = 0.1
    inactive: np.ndarray = None  # atoms never active (their U/V columns are sentinels)


def validity_stats(supports, delta=0.1):
    """Marginal and pairwise co-activation statistics of a support corpus.

    ``U[i, j]`` and ``V[i, j]`` condition atom ``i`` on atom ``j`` being
    active.  A never-active atom ``j`` gets ``|log10 delta|`` in column ``j``
    and is flagged in ``inactive``; a never-active atom ``i`` has ``R_i = inf``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    X = (as_spin_matrix(supports) > 0).astype(float)
    N = X.shape[0]
    if N == 0:
        raise ValueError("need at least one support")
    p = X.mean(axis=0)
    p_bar = float(p.mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.abs(np.log10(p / p_bar)) if p_bar > 0 else np.zeros_like(p)
        joint = (X.T @ X) / N
        cond = joint / p[None, :]  # Pr(i | j)
        ratio = np.where(p[:, None] > 0, cond / p[:, None], 0.0)
    R = np.where(p > 0, R, np.inf) if p_bar > 0 else R
    inactive = p == 0
    sentinel = abs(math.log10(delta))
    U = np.where(inactive[None, :], sentinel, np.abs(np.log10(np.nan_to_num(ratio) + delta)))
    V = np.where(inactive[None, :], sentinel, np.abs(np.log10(np.nan_to_num(cond) + delta)))
    return ValidityStats(R, U, V, p_bar, delta, inactive)


def _index_sets(supports):
    if isinstance(supports, np.ndarray) and supports.ndim == 2:
        return [set(np.flatnonzero(row > 0).tolist()) for row in supports]
    out = []
    for s in supports:
        if isinstance(s, SupportPattern):
            out.append(set(s.indices.tolist()))
        else:
            out.append(set(int(i) for i in s))
    return out


def support_overlap(truth, estimates):
    """Per-sample ``|s & s_hat| / max(|s|, |s_hat|)``; two empty sets give 1."""
    T, E = _index_sets(truth), _index_sets(estimates)
    if len(T) != len(E):
        raise ValueError("truth and estimates differ in length")
    out = np.empty(len(T))
    for l, (s, e) in enumerate(zip(T, E)):
        denom = max(len(s), len(e))
        out[l] = 1.0 if denom == 0 else len(s & e) / denom
    return out


def support_error(truth, estimates):
    """``1 - mean(support_overlap)``."""
    ov = support_overlap(truth, estimates)
    return float(1.0 - ov.mean()) if ov.size else 0.0


def _coeff_matrix(xs):
    return np.array([getattr(x, "coeffs", x) for x in xs], dtype=float)


def coef_error(truth, estimates):
    """``sqrt(sum ||x_hat - x||^2 / sum ||x||^2)`` over the whole set."""
    X, Xh = _coeff_matrix(truth), _coeff_matrix(estimates)
    if X.shape != Xh.shape:
        raise ValueError("truth and estimates differ in shape")
    energy = float(np.sum(X ** 2))
    err = float(np.sum((Xh - X) ** 2))
    if energy == 0:
        return 0.0 if err == 0 else math.inf
    return math.sqrt(err / energy)


def signal_error(A, truth, estimates):
    """Relative error of ``A x_hat`` against the noise-free ``A x``."""
    A = np.asarray(A, dtype=float)
    X, Xh = _coeff_matrix(truth), _coeff_matrix(estimates)
    return coef_error(X @ A.T, Xh @ A.T)


def rand_omp_support(xhat, k):
    """Indices of the ``k`` largest ``|xhat|`` entries (ties to the lower index)."""
    x = np.abs(np.asarray(getattr(xhat, "coeffs", xhat), dtype=float))
    if k < 0 or k > x.size:
        raise ValueError("k out of range")
    order = np.argsort(-x, kind="stable")
    return SupportPattern.from_indices(order[:k], x.size)


def rmse_per_pixel(clean, denoised):
    C, D = np.asarray(clean, dtype=float), np.asarray(denoised, dtype=float)
    if C.shape != D.shape:
        raise ValueError("shape mismatch")
    return float(np.sqrt(np.mean((C - D) ** 2))) if C.size else 0.0
