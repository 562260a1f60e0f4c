"""Synthetic experiments: data generation, pursuit comparison and denoising.

Every routine here is a deterministic function of its seed.  Signals for
different noise levels share the same supports and coefficients (only the
noise differs), so method comparisons at one noise level are paired.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adaptive import AdaptiveConfig, adaptive_recover
from .data import (
    coef_error,
    dct_overcomplete,
    dct_unitary,
    rand_omp_support,
    rmse_per_pixel,
    signal_error,
    support_overlap,
)
from .exact import map_message_passing_batch
from .greedy import (
    gibbs_annealing_map,
    least_squares_coefficients,
    omp_baseline,
    omp_like_map,
    pursue_batch,
    random_omp_mmse,
    thresholding_like_map,
)
from .model import BoltzmannParams, SignalModel, gibbs_chain, oracle_coefficients_batch
from .rng import child_seeds, make_rng

UNITARY_METHODS = ("oracle", "exact_map", "omp_like", "rand_omp", "gibbs", "omp")
OVERCOMPLETE_METHODS = ("oracle", "omp_like", "thresholding", "rand_omp", "gibbs", "omp")
ALL_METHODS = ("oracle", "exact_map", "omp_like", "thresholding", "rand_omp", "gibbs", "omp")
DEFAULT_SIGMAS = (2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
DENOISE_SIGMAS = (2.0, 5.0, 10.0, 15.0, 20.0, 25.0)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator parameters for a synthetic Boltzmann-machine data set."""

    n: int = 64
    m: int = 64
    band_order: int | None = 9
    w_range: tuple = (-1.0, 1.0)
    b_range: tuple = (-3.0, -2.0)
    std_range: tuple = (15.0, 60.0)
    target_cardinality: float | None = 9.8
    cardinality_tol: float = 0.3
    calibration_draws: int = 40
    pilot_samples: int = 500
    burn_in: int = 100
    thin: int = 5

    @property
    def unitary(self):
        return self.n == self.m


UNITARY_SPEC = SyntheticSpec()
OVERCOMPLETE_SPEC = SyntheticSpec(m=256, band_order=None, w_range=(-0.1, 0.1),
                                  target_cardinality=10.3)


def dictionary_for(spec):
    return dct_unitary(spec.n) if spec.unitary else dct_overcomplete(spec.n, spec.m)


def draw_parameters(spec, seed):
    """One draw of ``(W, b, coefficient variances)`` from the ranges in ``spec``.

    Standard deviations are drawn uniformly from ``std_range``; the variances
    are their squares.
    """
    rng = make_rng(seed)
    m = spec.m
    lo, hi = spec.w_range
    U = np.triu(rng.uniform(lo, hi, (m, m)), 1)
    if spec.band_order is not None:
        i, j = np.indices((m, m))
        U = np.where(j - i <= spec.band_order, U, 0.0)
    W = U + U.T
    b = rng.uniform(*spec.b_range, m)
    var = rng.uniform(*spec.std_range, m) ** 2
    return BoltzmannParams(W, b), var


def calibrated_parameters(spec, seed):
    """Parameters whose mean support size is close to ``spec.target_cardinality``.

    Candidate draws use child seeds of ``seed``; each is scored by a short
    pilot Gibbs chain.  The first draw within ``cardinality_tol`` is taken,
    otherwise the closest one.  Returns ``(prior, variances, pilot_mean)``.
    """
    seeds = child_seeds(seed, spec.calibration_draws)
    best = None
    for s in seeds:
        prior, var = draw_parameters(spec, s)
        if spec.target_cardinality is None:
            return prior, var, float("nan")
        pilot = gibbs_chain(prior, spec.pilot_samples, spec.burn_in, spec.thin, seed=s)
        card = float((pilot > 0).sum(axis=1).mean())
        gap = abs(card - spec.target_cardinality)
        if best is None or gap < best[0]:
            best = (gap, prior, var, card)
        if gap <= spec.cardinality_tol:
            break
    return best[1], best[2], best[3]


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    dictionary: np.ndarray
    prior: BoltzmannParams
    variances: np.ndarray
    spins: np.ndarray  # (N, m) int8
    coeffs: np.ndarray  # (N, m)
    seed: int

    @property
    def clean(self):
        return self.coeffs @ self.dictionary.T

    @property
    def mean_cardinality(self):
        return float((self.spins > 0).sum(axis=1).mean())

    def model(self, sigma):
        return SignalModel(self.dictionary, self.variances, sigma, self.prior)

    def noisy(self, sigma):
        """Clean signals plus white noise; the noise stream depends on ``sigma``."""
        rng = make_rng([self.seed, 7, int(round(sigma * 1000))])
        return self.clean + sigma * rng.standard_normal(self.clean.shape)


def generate_synthetic(spec, N, seed=0):
    s_params, s_supports, s_coeffs = child_seeds(seed, 3)
    prior, var, _ = calibrated_parameters(spec, s_params)
    spins = gibbs_chain(prior, N, spec.burn_in, spec.thin, seed=s_supports)
    rng = make_rng(s_coeffs)
    X = np.where(spins > 0, rng.standard_normal(spins.shape) * np.sqrt(var), 0.0)
    return SyntheticData(spec, dictionary_for(spec), prior, var, spins, X, seed)


@dataclass
class MethodResult:
    sigma: float
    method: str
    spins: np.ndarray
    coeffs: np.ndarray
    overlap: np.ndarray  # per-sample support overlap
    support_error: float
    coef_error: float
    signal_error: float
    mean_cardinality: float


def _spins_of(supports, m):
    return np.array([s.spins for s in supports], dtype=np.int8).reshape(len(supports), m)


def run_method(method, data, sigma, Y, seed=0, threads=1, j0=10, eta=1.0):
    """Supports and coefficient estimates of one method on signals ``Y``."""
    model = data.model(sigma)
    m = model.m
    if method == "oracle":
        spins = data.spins.copy()
    elif method == "exact_map":
        spins = _spins_of(map_message_passing_batch(model, Y, data.spec.band_order), m)
    elif method == "omp_like":
        spins = _spins_of(pursue_batch(omp_like_map, model, Y, threads=threads), m)
    elif method == "thresholding":
        spins = _spins_of(pursue_batch(thresholding_like_map, model, Y, threads=threads), m)
    elif method == "gibbs":
        spins = _spins_of(pursue_batch(gibbs_annealing_map, model, Y, threads=threads,
                                       seed=seed), m)
    elif method == "omp":
        spins = _spins_of(pursue_batch(omp_baseline, model, Y, threads=threads, eta=eta), m)
    elif method == "rand_omp":
        ests = pursue_batch(random_omp_mmse, model, Y, threads=threads, seed=seed, J0=j0)
        X = np.array([e.coeffs for e in ests]).reshape(len(ests), m)
        # support for scoring: the k largest entries, k the true cardinality
        k_true = (data.spins > 0).sum(axis=1)
        spins = _spins_of([rand_omp_support(x, int(k)) for x, k in zip(X, k_true)], m)
        return spins, X
    else:
        raise ValueError(f"unknown method {method!r}")
    return spins, oracle_coefficients_batch(model, Y, spins)


def run_synthetic(data, sigmas, methods, seed=0, threads=1, j0=10, eta=1.0):
    """Evaluate ``methods`` at every noise level; returns a list of :class:`MethodResult`."""
    results = []
    for sigma in sigmas:
        Y = data.noisy(sigma)
        for k, method in enumerate(methods):
            spins, X = run_method(method, data, sigma, Y, seed=[seed, k, int(round(sigma * 1000))],
                                  threads=threads, j0=j0, eta=eta)
            overlap = support_overlap(data.spins, spins)
            results.append(MethodResult(
                sigma=float(sigma), method=method, spins=spins, coeffs=X, overlap=overlap,
                support_error=float(1.0 - overlap.mean()),
                coef_error=coef_error(data.coeffs, X),
                signal_error=signal_error(data.dictionary, data.coeffs, X),
                mean_cardinality=float((spins > 0).sum(axis=1).mean())))
    return results


BENCH_HEADER = ("sigma", "method", "support_error", "coef_error", "signal_error",
                "mean_cardinality")


def bench_rows(results):
    return [(r.sigma, r.method, r.support_error, r.coef_error, r.signal_error,
             r.mean_cardinality) for r in results]


def paired_leq(a, b, z=2.0):
    """``mean(a) <= mean(b)`` up to ``z`` paired standard errors."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    se = d.std(ddof=1) / np.sqrt(d.size) if d.size > 1 else 0.0
    return bool(d.mean() <= z * se)


def paired_less(a, b, z=2.0):
    """``mean(a) < mean(b)`` by more than ``z`` paired standard errors."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    se = d.std(ddof=1) / np.sqrt(d.size) if d.size > 1 else 0.0
    return bool(d.mean() > z * se)


# denoising -----------------------------------------------------------------

@dataclass
class DenoiseConfig:
    sigmas: tuple = DENOISE_SIGMAS
    band_order: int = 9
    iterations: int = 2
    eta: float = 1.0
    overcomplete: bool = True
    adaptive: AdaptiveConfig = field(default_factory=lambda: AdaptiveConfig(
        pursuit_kind="message_passing", band_order=9))


def omp_denoise(patches, A, sigma, eta=1.0, threads=1):
    """Plain OMP per patch with least-squares coefficients; returns reconstructions."""
    m = A.shape[1]
    model = SignalModel(A, np.ones(m), sigma, BoltzmannParams.independent(np.zeros(m)))
    supports = pursue_batch(omp_baseline, model, patches, threads=threads, eta=eta)
    X = np.array([least_squares_coefficients(A, y, s) for y, s in zip(patches, supports)])
    return X.reshape(len(supports), m) @ A.T


def bm_denoise(patches, A, sigma, config):
    result = adaptive_recover(patches, A, sigma, config)
    return result.coefficients @ A.T, result


def denoise_grid(clean, noisy_by_sigma, config=None, threads=1):
    """Denoising grid: RMSE per pixel for every (noise level, method).

    ``clean`` holds the clean patches with DC; ``noisy_by_sigma`` maps each
    noise level to a :class:`PatchSet` of the noisy patches.  Returns rows
    ``(sigma, method, rmse)`` in a fixed order.
    """
    config = config or DenoiseConfig()
    n = clean.shape[1]
    Au = dct_unitary(n)
    methods = [("unitary_omp", Au, None),
               ("unitary_bm", Au, replace(config.adaptive, band_order=config.band_order,
                                          iterations=config.iterations, threads=threads))]
    if config.overcomplete:
        Ao = dct_overcomplete(n, 4 * n)
        methods += [("overcomplete_omp", Ao, None),
                    ("overcomplete_bm", Ao, AdaptiveConfig(
                        pursuit_kind="omp_like", band_order=None, iterations=config.iterations,
                        seed=config.adaptive.seed, threads=threads))]
    rows = []
    for sigma in config.sigmas:
        noisy = noisy_by_sigma[sigma]
        for name, A, acfg in methods:
            if acfg is None:
                rec = omp_denoise(noisy.patches, A, sigma, config.eta, threads)
            else:
                rec, _ = bm_denoise(noisy.patches, A, sigma, acfg)
            rows.append((float(sigma), name, rmse_per_pixel(clean, noisy.with_dc(rec))))
    return rows
