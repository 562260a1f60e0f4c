"""Command-line front end.

Every subcommand reads an optional JSON config (``--config``), applies flag
overrides, validates the merged settings, writes ``manifest.json`` with the
resolved values into the output directory, and then runs.  Exit codes: 0 on
success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import bench, io
from .adaptive import AdaptiveConfig
from .data import (
    PatchSet,
    add_noise,
    coef_error,
    extract_patches,
    rand_omp_support,
    signal_error,
    support_error,
    validity_stats,
)
from .exact import DegenerateChainError, map_message_passing_batch
from .greedy import (
    gibbs_annealing_map,
    omp_baseline,
    omp_like_map,
    pursue_batch,
    random_omp_mmse,
    thresholding_like_map,
)
from .learning import SesopConfig, band_projection, estimate_variances, mpl_gradient_ascent, mpl_sesop
from .model import (
    NumericalError,
    PreconditionError,
    SignalModel,
    gibbs_chain,
    oracle_coefficients_batch,
)
from .rng import child_seeds, make_rng

log = logging.getLogger("bmpursuit")


class ConfigError(ValueError):
    pass


PURSUE_ALGOS = ("exact_map", "omp_like", "thresholding", "rand_omp", "gibbs", "omp")

DEFAULTS = {
    "sample": {"out": "out", "seed": 0, "threads": 1, "kind": "unitary", "N": 1000,
               "sigma": 10.0, "band_order": 9, "params": None, "dictionary": None,
               "burn_in": 100, "thin": 5},
    "pursue": {"out": "out", "seed": 0, "threads": 1, "algo": "omp_like", "signals": None,
               "params": None, "dictionary": None, "sigma": None, "band_order": None,
               "eta": 1.0, "j0": 10, "truth": None},
    "bench-synthetic": {"out": "out", "seed": 0, "threads": 1, "kind": "unitary", "N": 1000,
                        "sigma_list": list(bench.DEFAULT_SIGMAS), "algo": None,
                        "eta": 1.0, "j0": 10, "band_order": 9},
    "learn": {"out": "out", "seed": 0, "threads": 1, "supports": None, "coefficients": None,
              "sesop_m": 2, "iters": 50, "band_order": None, "compare_ga": False},
    "denoise": {"out": "out", "seed": 0, "threads": 1, "images": [], "N": 2000,
                "sigma_list": list(bench.DENOISE_SIGMAS), "band_order": 9, "iters": 2,
                "eta": 1.0, "patch_size": 8, "stride": 4, "overcomplete": True},
    "validity": {"out": "out", "seed": 0, "threads": 1, "supports": None, "delta": 0.1},
}
DEFAULTS["adaptive"] = DEFAULTS["denoise"]


# config handling --------------------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _parse_sigmas(text):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --sigma-list {text!r}") from exc
    return vals


def resolve(command, config_path, overrides):
    """Merge defaults, config file and flag overrides; reject unknown keys."""
    defaults = DEFAULTS[command]
    cfg = _load_config(config_path)
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    merged = dict(defaults)
    merged.update(cfg)
    for key, value in overrides.items():
        if value is not None and key in defaults:
            merged[key] = value
    return _validate(command, merged)


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate(command, c):
    _need(isinstance(c["seed"], int) and c["seed"] >= 0, "seed must be a non-negative integer")
    _need(isinstance(c["threads"], int) and c["threads"] >= 1, "threads must be >= 1")
    if "sigma_list" in c:
        if isinstance(c["sigma_list"], str):
            c["sigma_list"] = _parse_sigmas(c["sigma_list"])
        _need(len(c["sigma_list"]) > 0 and all(s > 0 for s in c["sigma_list"]),
              "sigma_list must hold positive values")
        c["sigma_list"] = sorted(float(s) for s in c["sigma_list"])
    if "N" in c:
        _need(isinstance(c["N"], int) and c["N"] >= 1, "N must be a positive integer")
    if c.get("band_order") is not None:
        _need(isinstance(c["band_order"], int) and c["band_order"] >= 1, "band_order must be >= 1")
    if "kind" in c:
        _need(c["kind"] in ("unitary", "overcomplete"), "kind must be unitary or overcomplete")
    if "eta" in c:
        _need(c["eta"] > 0, "eta must be positive")
    if "j0" in c:
        _need(isinstance(c["j0"], int) and c["j0"] >= 1, "j0 must be >= 1")
    if command == "pursue":
        _need(c["algo"] in PURSUE_ALGOS, f"algo must be one of {', '.join(PURSUE_ALGOS)}")
        _need(c["signals"] and c["params"], "pursue needs signals and params")
        if c["algo"] == "exact_map":
            _need(c["band_order"] is not None, "exact_map needs band_order")
    if command == "bench-synthetic":
        if c["algo"] is None:
            c["algo"] = list(bench.UNITARY_METHODS if c["kind"] == "unitary"
                             else bench.OVERCOMPLETE_METHODS)
        elif isinstance(c["algo"], str):
            c["algo"] = [a for a in c["algo"].split(",") if a]
        bad = [a for a in c["algo"] if a not in bench.ALL_METHODS]
        _need(not bad, f"unknown methods: {', '.join(bad)}")
        _need(not ("exact_map" in c["algo"] and c["kind"] != "unitary"),
              "exact_map needs the unitary configuration")
    if command == "learn":
        _need(c["supports"], "learn needs a supports file")
        _need(isinstance(c["sesop_m"], int) and c["sesop_m"] >= 0, "sesop_m must be >= 0")
        _need(isinstance(c["iters"], int) and c["iters"] >= 0, "iters must be >= 0")
    if command in ("denoise", "adaptive"):
        _need(isinstance(c["iters"], int) and c["iters"] >= 0, "iters must be >= 0")
        if isinstance(c["images"], str):
            c["images"] = [c["images"]]
    if command == "validity":
        _need(c["supports"], "validity needs a supports file")
        _need(c["delta"] > 0, "delta must be positive")
    return c


def _prepare_out(c, command):
    os.makedirs(c["out"], exist_ok=True)
    with open(os.path.join(c["out"], "manifest.json"), "w") as fh:
        json.dump({"command": command, "config": c}, fh, indent=2, sort_keys=True)
    return c["out"]


# commands ---------------------------------------------------------------------

def _dictionary(kind, path):
    if path:
        return io.read_matrix(path)
    return bench.dictionary_for(bench.UNITARY_SPEC if kind == "unitary" else bench.OVERCOMPLETE_SPEC)


def cmd_sample(c):
    out = _prepare_out(c, "sample")
    s_params, s_supports, s_coeffs, s_noise = child_seeds(c["seed"], 4)
    if c["params"]:
        prior, variances, _ = io.load_params(c["params"])
        if variances is None:
            raise ConfigError("params directory has no variances.txt")
        A = _dictionary(c["kind"], c["dictionary"])
    else:
        spec = bench.UNITARY_SPEC if c["kind"] == "unitary" else bench.OVERCOMPLETE_SPEC
        if c["kind"] == "unitary":
            spec = replace(spec, band_order=c["band_order"])
        prior, variances, _ = bench.calibrated_parameters(spec, s_params)
        A = _dictionary(c["kind"], c["dictionary"])
    if A.shape[1] != prior.m:
        raise ConfigError("dictionary and parameters disagree on m")
    spins = gibbs_chain(prior, c["N"], c["burn_in"], c["thin"], seed=s_supports)
    X = np.where(spins > 0, make_rng(s_coeffs).standard_normal(spins.shape) * np.sqrt(variances), 0.0)
    clean = X @ A.T
    Y = clean + c["sigma"] * make_rng(s_noise).standard_normal(clean.shape)
    io.save_params(os.path.join(out, "params"), prior, variances, c.get("band_order"))
    io.write_matrix(os.path.join(out, "dictionary.txt"), A)
    io.write_supports(os.path.join(out, "supports.txt"), spins)
    io.write_matrix(os.path.join(out, "coefficients.txt"), X)
    io.write_matrix(os.path.join(out, "clean.txt"), clean)
    io.write_matrix(os.path.join(out, "signals.txt"), Y)
    log.info("wrote %d samples to %s", c["N"], out)
    return 0


def run_pursuit(algo, model, Y, band_order=None, seed=0, threads=1, eta=1.0, j0=10):
    """Supports ``(N, m)`` and coefficients for one pursuit over signals ``Y``."""
    m = model.m
    spins_of = lambda sup: np.array([s.spins for s in sup], dtype=np.int8).reshape(len(sup), m)
    if algo == "exact_map":
        spins = spins_of(map_message_passing_batch(model, Y, band_order))
    elif algo == "rand_omp":
        ests = pursue_batch(random_omp_mmse, model, Y, threads=threads, seed=seed, J0=j0)
        X = np.array([e.coeffs for e in ests]).reshape(len(ests), m)
        return (X != 0).astype(np.int8) * 2 - 1, X
    else:
        fn = {"omp_like": omp_like_map, "thresholding": thresholding_like_map,
              "gibbs": gibbs_annealing_map, "omp": omp_baseline}[algo]
        kwargs = {"eta": eta} if algo == "omp" else {}
        spins = spins_of(pursue_batch(fn, model, Y, threads=threads,
                                      seed=seed if algo == "gibbs" else None, **kwargs))
    return spins, oracle_coefficients_batch(model, Y, spins)


def cmd_pursue(c):
    out = _prepare_out(c, "pursue")
    prior, variances, meta = io.load_params(c["params"])
    if variances is None:
        raise ConfigError("params directory has no variances.txt")
    A = io.read_matrix(c["dictionary"]) if c["dictionary"] else bench.dictionary_for(
        bench.UNITARY_SPEC if prior.m == 64 else bench.OVERCOMPLETE_SPEC)
    if c["sigma"] is None:
        raise ConfigError("pursue needs sigma")
    Y = io.read_matrix(c["signals"])
    model = SignalModel(A, variances, c["sigma"], prior)
    if Y.shape[0] == 0 or Y.size == 0:
        log.warning("no signals in %s; writing empty outputs", c["signals"])
        spins, X = np.zeros((0, model.m), dtype=np.int8), np.zeros((0, model.m))
    else:
        if Y.shape[1] != model.n:
            raise ConfigError("signal length does not match the dictionary")
        spins, X = run_pursuit(c["algo"], model, Y, c["band_order"], c["seed"], c["threads"],
                               c["eta"], c["j0"])
    io.write_supports(os.path.join(out, "supports.txt"), spins)
    io.write_matrix(os.path.join(out, "coefficients.txt"), X)
    rows = []
    if c["truth"] and spins.shape[0]:
        truth_spins = np.array([s.spins for s in io.read_supports(
            os.path.join(c["truth"], "supports.txt"))])
        truth_X = io.read_matrix(os.path.join(c["truth"], "coefficients.txt"))
        est = spins
        if c["algo"] == "rand_omp":
            est = np.array([rand_omp_support(x, int((t > 0).sum())).spins
                            for x, t in zip(X, truth_spins)])
        rows.append((c["algo"], float(c["sigma"]), support_error(truth_spins, est),
                     coef_error(truth_X, X), signal_error(A, truth_X, X),
                     float((spins > 0).sum(axis=1).mean())))
    io.write_csv(os.path.join(out, "metrics.csv"),
                 ("method", "sigma", "support_error", "coef_error", "signal_error",
                  "mean_cardinality"), rows)
    return 0


def cmd_bench_synthetic(c):
    out = _prepare_out(c, "bench-synthetic")
    spec = bench.UNITARY_SPEC if c["kind"] == "unitary" else bench.OVERCOMPLETE_SPEC
    if c["kind"] == "unitary":
        spec = replace(spec, band_order=c["band_order"])
    data = bench.generate_synthetic(spec, c["N"], seed=c["seed"])
    log.info("generated %d signals, mean cardinality %.2f", c["N"], data.mean_cardinality)
    results = bench.run_synthetic(data, c["sigma_list"], c["algo"], seed=c["seed"],
                                  threads=c["threads"], j0=c["j0"], eta=c["eta"])
    io.write_csv(os.path.join(out, "results.csv"), bench.BENCH_HEADER, bench.bench_rows(results))
    io.write_csv(os.path.join(out, "dataset.csv"), ("N", "m", "mean_cardinality"),
                 [(c["N"], spec.m, data.mean_cardinality)])
    return 0


def cmd_learn(c):
    out = _prepare_out(c, "learn")
    supports = io.read_supports(c["supports"])
    if not supports:
        raise ConfigError("support file is empty")
    S = np.array([s.spins for s in supports])
    fit = mpl_sesop(S, SesopConfig(M=c["sesop_m"], max_iters=c["iters"]))
    m = S.shape[1]
    if c["coefficients"]:
        X = io.read_matrix(c["coefficients"])
        variances = estimate_variances(np.where(S > 0, X, 0.0))
    else:
        variances = np.full(m, 50.0 ** 2)
    prior, perm = fit.params, np.arange(m)
    if c["band_order"] is not None:
        prior, variances, perm = band_projection(prior, variances, c["band_order"])
    io.save_params(os.path.join(out, "params"), prior, variances, c["band_order"], perm)
    header = ["iteration", "sesop_log_pl", "sesop_grad_norm"]
    cols = [fit.log_pl_trace, fit.grad_norm_trace]
    if c["compare_ga"]:
        ga = mpl_gradient_ascent(S, steps=c["iters"])
        header += ["ga_log_pl", "ga_grad_norm"]
        cols += [ga.log_pl_trace, ga.grad_norm_trace]
    length = max(len(col) for col in cols)
    rows = [[j] + [col[j] if j < len(col) else "" for col in cols] for j in range(length)]
    io.write_csv(os.path.join(out, "trace.csv"), header, rows)
    return 0


def _synthetic_patches(c):
    data = bench.generate_synthetic(bench.UNITARY_SPEC, c["N"], seed=c["seed"])
    clean = data.clean
    return clean, np.zeros(clean.shape[0])


def cmd_denoise(c):
    out = _prepare_out(c, "denoise")
    if c["images"]:
        sets = [extract_patches(io.read_pgm(p), c["patch_size"], c["stride"]) for p in c["images"]]
        patches = np.vstack([s.patches for s in sets])
        dc = np.concatenate([s.dc_values for s in sets])
    else:
        patches, dc = _synthetic_patches(c)
    base = PatchSet(patches, dc, c["patch_size"])
    clean = base.with_dc()
    noise_seeds = child_seeds(c["seed"], len(c["sigma_list"]))
    noisy = {s: add_noise(base, s, seed=ns) for s, ns in zip(c["sigma_list"], noise_seeds)}
    cfg = bench.DenoiseConfig(
        sigmas=tuple(c["sigma_list"]), band_order=c["band_order"], iterations=c["iters"],
        eta=c["eta"], overcomplete=c["overcomplete"],
        adaptive=AdaptiveConfig(pursuit_kind="message_passing", band_order=c["band_order"],
                                seed=c["seed"]))
    rows = bench.denoise_grid(clean, noisy, cfg, threads=c["threads"])
    io.write_csv(os.path.join(out, "rmse.csv"), ("sigma", "method", "rmse"), rows)
    return 0


def cmd_validity(c):
    out = _prepare_out(c, "validity")
    supports = io.read_supports(c["supports"])
    if not supports:
        raise ConfigError("support file is empty")
    st = validity_stats(supports, c["delta"])
    io.write_vector(os.path.join(out, "R.txt"), np.where(np.isfinite(st.R), st.R, -1.0))
    io.write_matrix(os.path.join(out, "U.txt"), st.U)
    io.write_matrix(os.path.join(out, "V.txt"), st.V)
    io.write_csv(os.path.join(out, "summary.csv"),
                 ("p_bar", "delta", "inactive_atoms", "median_R", "median_U", "median_V"),
                 [(st.p_bar, st.delta, int(st.inactive.sum()),
                   float(np.median(st.R[np.isfinite(st.R)])) if np.isfinite(st.R).any() else "",
                   float(np.median(st.U)), float(np.median(st.V)))])
    return 0


COMMANDS = {"sample": cmd_sample, "pursue": cmd_pursue, "bench-synthetic": cmd_bench_synthetic,
            "learn": cmd_learn, "denoise": cmd_denoise, "adaptive": cmd_denoise,
            "validity": cmd_validity}


def build_parser():
    p = argparse.ArgumentParser(prog="bmpursuit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out")
        sp.add_argument("--algo")
        sp.add_argument("--sigma-list", dest="sigma_list")
        sp.add_argument("--band-order", dest="band_order", type=int)
        sp.add_argument("--eta", type=float)
        sp.add_argument("--j0", type=int)
        sp.add_argument("--sesop-m", dest="sesop_m", type=int)
        sp.add_argument("--iters", type=int)
        sp.add_argument("--N", "-n", dest="N", type=int)
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--kind")
        sp.add_argument("--params")
        sp.add_argument("--dictionary")
        sp.add_argument("--signals")
        sp.add_argument("--supports")
        sp.add_argument("--coefficients")
        sp.add_argument("--truth")
        sp.add_argument("--delta", type=float)
        sp.add_argument("--images", nargs="*")
        sp.add_argument("--compare-ga", dest="compare_ga", action="store_true", default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        c = resolve(args.command, args.config, overrides)
        return COMMANDS[args.command](c)
    except (ConfigError, PreconditionError, DegenerateChainError, io.FormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
