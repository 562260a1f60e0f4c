"""Joint estimation of representations and model parameters from signals only.

The scheme alternates sparse coding under the current parameters with a
model update (variances in closed form, ``(W, b)`` by MPL).  When a band
order is set, the MPL estimate is band-projected after every update; the
atom relabeling this implies is tracked in a cumulative permutation, and all
internal work happens in the relabeled frame.  Returned representations,
parameters and variances are in the original atom order unless stated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exact import map_message_passing_batch
from .greedy import omp_like_map, pursue_batch, random_omp_mmse, thresholding_like_map
from .learning import SesopConfig, band_projection, estimate_variances, mpl_sesop
from .model import (
    BoltzmannParams,
    PreconditionError,
    SignalModel,
    SparseRepresentation,
    SupportPattern,
    log_posterior_scores_batch,
    oracle_coefficients_batch,
)

PURSUITS = ("message_passing", "omp_like", "thresholding", "random_mmse")


@dataclass
class AdaptiveConfig:
    iterations: int = 2
    pursuit_kind: str = "omp_like"
    band_order: int | None = None
    init_variance: float = 50.0 ** 2
    init_cardinality: float = 10.0
    learner: SesopConfig = field(default_factory=SesopConfig)
    j0: int = 10
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.pursuit_kind not in PURSUITS:
            raise PreconditionError(f"unknown pursuit {self.pursuit_kind!r}")
        if self.iterations < 0:
            raise PreconditionError("iterations must be non-negative")
        if self.pursuit_kind == "message_passing" and self.band_order is None:
            raise PreconditionError("message passing needs a band order")
        if self.band_order is not None and self.band_order < 1:
            raise PreconditionError("band order must be at least 1")
        if not self.init_variance > 0:
            raise PreconditionError("init_variance must be positive")
        if self.j0 < 1:
            raise PreconditionError("j0 must be at least 1")


@dataclass
class AdaptiveResult:
    representations: list
    prior: BoltzmannParams
    variances: np.ndarray
    permutation: np.ndarray  # working atom i is original atom permutation[i]
    trace: list
    snapshots: list = field(default_factory=list)

    @property
    def coefficients(self):
        return np.array([r.coeffs for r in self.representations])


def initial_prior(m, k):
    """I.i.d. prior with ``Pr(S_i = 1) = k / m``."""
    p = k / m
    if not 0 < p < 1:
        raise PreconditionError(f"expected cardinality {k} must lie strictly between 0 and m={m}")
    return BoltzmannParams.iid(m, p)


def _pursue(model, Y, config, seed):
    """Supports (as an ``(N, m)`` spin array) and coefficients for every signal."""
    kind = config.pursuit_kind
    if kind == "message_passing":
        supports = map_message_passing_batch(model, Y, config.band_order)
    elif kind in ("omp_like", "thresholding"):
        fn = omp_like_map if kind == "omp_like" else thresholding_like_map
        supports = pursue_batch(fn, model, Y, threads=config.threads)
    else:
        ests = pursue_batch(random_omp_mmse, model, Y, threads=config.threads, seed=seed,
                            J0=config.j0, return_runs=True)
        # spin estimate: atoms active in more than half of the randomized runs
        spins = np.array([np.where((runs != 0).mean(axis=0) > 0.5, 1, -1) for _, runs in ests],
                         dtype=np.int8).reshape(len(ests), model.m)
        coeffs = np.array([est.coeffs for est, _ in ests]).reshape(len(ests), model.m)
        return spins, coeffs
    spins = np.array([s.spins for s in supports], dtype=np.int8).reshape(len(supports), model.m)
    return spins, oracle_coefficients_batch(model, Y, spins)


def adaptive_recover(signals, dictionary, noise_std, config=None):
    """Alternate pursuit and model update for ``config.iterations`` rounds.

    Each round pursues all signals under the current parameters and then
    re-estimates variances and ``(W, b)``.  A final pursuit under the last
    parameters produces the returned representations.  ``trace`` holds one
    record per pursuit stage with the summed posterior score.
    """
    config = config or AdaptiveConfig()
    Y = np.atleast_2d(np.asarray(signals, dtype=float))
    A = np.asarray(dictionary, dtype=float)
    m = A.shape[1]
    if Y.shape[1] != A.shape[0]:
        raise PreconditionError("signal length does not match the dictionary")
    perm = np.arange(m)
    prior = initial_prior(m, config.init_cardinality)
    variances = np.full(m, float(config.init_variance))
    model = SignalModel(A, variances, noise_std, prior)
    if config.pursuit_kind == "message_passing" and not model.unitary_flag:
        raise PreconditionError("message passing needs a unitary dictionary")
    trace, snapshots = [], []
    warm = None
    stage = 0
    while True:
        spins, coeffs = _pursue(model, Y, config, seed=(config.seed, stage))
        scores = log_posterior_scores_batch(model, Y, spins)
        trace.append({"iteration": stage, "total_score": float(scores.sum()),
                      "mean_cardinality": float((spins > 0).sum(axis=1).mean())})
        if stage >= config.iterations:
            break
        # model update, all in the working frame
        active_coeffs = np.where(spins > 0, coeffs, 0.0)
        variances = estimate_variances(active_coeffs, fallback=config.init_variance)
        fit = mpl_sesop(spins, config.learner, init=warm)
        prior = fit.params
        if config.band_order is not None:
            prior, variances, step = band_projection(prior, variances, config.band_order)
            perm = perm[step]
            A = A[:, step]
        warm = prior
        model = SignalModel(A, variances, noise_std, prior)
        snapshots.append({"iteration": stage + 1, "prior": prior, "variances": variances.copy(),
                          "permutation": perm.copy(), "log_pl": fit.log_pl_trace[-1]})
        stage += 1
    inv = np.argsort(perm)
    reps = []
    for s, x in zip(spins, coeffs):
        s_orig, x_orig = s[inv], x[inv]
        if config.pursuit_kind == "random_mmse":
            reps.append(SparseRepresentation.dense(x_orig))
        else:
            reps.append(SparseRepresentation(x_orig, SupportPattern(s_orig)))
    return AdaptiveResult(reps, prior.permuted(inv), variances[inv], perm, trace, snapshots)
