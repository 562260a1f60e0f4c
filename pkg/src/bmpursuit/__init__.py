"""Sparse recovery with Boltzmann-machine support priors."""

from .adaptive import AdaptiveConfig, AdaptiveResult, adaptive_recover
from .data import (
    PatchSet,
    ValidityStats,
    add_noise,
    coef_error,
    dct_overcomplete,
    dct_unitary,
    extract_patches,
    rand_omp_support,
    rmse_per_pixel,
    signal_error,
    support_error,
    validity_stats,
)
from .exact import (
    CliqueChain,
    DegenerateChainError,
    boolean_qp_map,
    build_clique_chain,
    is_banded,
    map_message_passing,
    map_zero_w,
)
from .greedy import (
    AnnealingSchedule,
    GreedyTrace,
    gibbs_annealing_map,
    omp_baseline,
    omp_like_map,
    random_omp_mmse,
    thresholding_like_map,
    val_score,
)
from .learning import (
    MPLFit,
    SesopConfig,
    band_projection,
    estimate_variances,
    log_pl,
    log_pl_gradient,
    log_pl_hessian,
    mpl_gradient_ascent,
    mpl_sesop,
    pack_params,
    unpack_params,
)
from .model import (
    BoltzmannParams,
    LabeledSample,
    NumericalError,
    PreconditionError,
    SignalModel,
    SparseRepresentation,
    SupportPattern,
    bm_log_score,
    exhaustive_map,
    exhaustive_mmse,
    gibbs_sample_supports,
    log_posterior_support_score,
    oracle_coefficients,
    posterior_bias,
    sample_signal,
)

__version__ = "0.1.0"
