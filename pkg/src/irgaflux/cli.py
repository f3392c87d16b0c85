"""Command-line front end.

Every run writes one JSON output document with the per-variable results, the
estimated sigma2, step timings and the fully resolved `RunConfig`, so that
`--replay` can repeat it. Failures exit with the error's code and write a
JSON error record.
"""

import argparse
import math
import os
import sys
import time
from typing import Any, Dict, List, Literal, Optional, Sequence

import msgspec
import numpy as np

from irgaflux._private.executor import Executor
from irgaflux.diagnostics import (
    Theorem1Config,
    Theorem2Config,
    consistency_study,
    theorem1_check,
    theorem2_check,
)
from irgaflux.envs import envs
from irgaflux.estimators import BaseEstimator, NuisanceEstimator
from irgaflux.exact_posterior import selection_posterior
from irgaflux.exceptions import ConfigError, IrgaError, ParseError
from irgaflux.gp_nuisance import GpConfig
from irgaflux.io import LoadedData, read_dataset_csv
from irgaflux.irga import SelectionProblem, irga_fit, select_blocks
from irgaflux.logger import logger
from irgaflux.oracle_mcmc import McmcConfig, gibbs_spike_slab, mh_gp
from irgaflux.priors import BetaPrior, GaussianPrior, GPrior, SpikeSlabPrior
from irgaflux.replication import LogOddsComparison, clipped_logit, log_odds_comparison
from irgaflux.reporting import render_comparison, render_diagnostics, render_run_summary
from irgaflux.utils.msgspec import load, msgspec_dumps, save
from irgaflux.vamp import VampConfig
from irgaflux.version import __version__

Mode = Literal["fit", "select", "gp", "oracle", "diagnose"]
EstimatorName = Literal["vamp", "exact", "gp", "zero"]

DEFAULT_BLOCK_SIZE = 4


class RunConfig(msgspec.Struct, kw_only=True):
    """Resolved configuration of one CLI run."""

    mode: Mode
    input: Optional[str] = None
    lam: float = 0.5
    psi: float = 1.0
    g_n: Optional[float] = None
    beta_prior: Literal["spike_slab", "gprior", "gaussian"] = "spike_slab"
    estimator: EstimatorName = "vamp"
    nuisance_covariance: Literal["diagonal", "scalar"] = "diagonal"
    block_size: Optional[int] = None
    sigma2: Optional[float] = None
    seed: int = 0
    workers: int = 1
    standardize: bool = False
    output: Optional[str] = None
    oracle_method: Literal["enumerate", "gibbs"] = "enumerate"
    check: Literal["theorem1", "theorem2", "consistency"] = "theorem1"
    compare: bool = False
    burnin: int = 10_000
    recorded: int = 90_000
    replicates: Optional[int] = None

    def __post_init__(self):
        if self.mode != "diagnose":
            if self.input is None:
                raise ConfigError(f"Mode `{self.mode}` needs --input")
            if not os.path.exists(self.input):
                raise ConfigError(f"Input file `{self.input}` does not exist")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"--lambda must lie in (0, 1), got {self.lam}")
        if not self.psi > 0:
            raise ConfigError(f"--psi must be positive, got {self.psi}")
        if self.g_n is not None and not self.g_n > 0:
            raise ConfigError(f"--g-n must be positive, got {self.g_n}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ConfigError(f"--sigma2 must be positive, got {self.sigma2}")
        if self.block_size is not None and self.block_size < 1:
            raise ConfigError(f"--block-size must be positive, got {self.block_size}")
        if self.workers < 1:
            raise ConfigError(f"--workers must be positive, got {self.workers}")
        if self.burnin < 0 or self.recorded < 1:
            raise ConfigError("Need --burnin >= 0 and --recorded >= 1")
        if self.replicates is not None and self.replicates < 1:
            raise ConfigError(f"--replicates must be positive, got {self.replicates}")


class OutputDocument(msgspec.Struct, kw_only=True, omit_defaults=True):
    """Self-describing result of a run.

    Infinite log-odds (Gaussian priors include every variable) are written as
    null.
    """

    mode: str
    seed: int
    config: RunConfig
    version: str = __version__
    variables: List[str] = []
    inclusion_probs: Optional[List[float]] = None
    log_odds: Optional[List[Optional[float]]] = None
    posterior_mean: Optional[List[float]] = None
    posterior_sd: Optional[List[Optional[float]]] = None
    sigma2: Optional[float] = None
    sigma2_by_variable: Optional[List[float]] = None
    timings: Dict[str, float] = {}
    estimator: Optional[Dict[str, Any]] = None
    comparison: Optional[LogOddsComparison] = None
    reference: Optional[Dict[str, Any]] = None
    diagnostics: Optional[Dict[str, Any]] = None


def _floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _log_odds(values) -> List[Optional[float]]:
    return [None if math.isinf(v) else v for v in _floats(values)]


def _elapsed(step: str, clock: float) -> Dict[str, float]:
    """Wall time of `step` since `clock`, empty when timings are switched off."""
    if not envs.record_timings:
        return {}
    return {step: time.perf_counter() - clock}


def _load(config: RunConfig) -> LoadedData:
    return read_dataset_csv(
        config.input, sigma2=config.sigma2, standardize=config.standardize
    )


def _mcmc_config(config: RunConfig) -> McmcConfig:
    return McmcConfig(burnin=config.burnin, recorded=config.recorded, seed=config.seed)


def build_beta_prior(config: RunConfig, n: int, p: int) -> BetaPrior:
    if config.beta_prior == "gprior":
        return GPrior(g_n=config.g_n if config.g_n is not None else float(n), lam=config.lam)
    if config.beta_prior == "gaussian":
        return GaussianPrior.isotropic(p, config.psi)
    return SpikeSlabPrior(lam=config.lam, psi=config.psi)


def build_estimator(
    config: RunConfig, nuisance_prior: Optional[SpikeSlabPrior] = None
) -> BaseEstimator:
    if config.estimator == "vamp":
        vamp_config = VampConfig(
            seed=config.seed, nuisance_covariance=config.nuisance_covariance
        )
        return NuisanceEstimator.vamp(vamp_config, prior=nuisance_prior)
    if config.estimator == "exact":
        return NuisanceEstimator.exact(prior=nuisance_prior)
    if config.estimator == "gp":
        return NuisanceEstimator.gp_laplace(GpConfig(seed=config.seed))
    return NuisanceEstimator.zero()


def _run_fit(config: RunConfig) -> OutputDocument:
    loaded = _load(config)
    data = loaded.data
    beta_prior = build_beta_prior(config, data.n, data.p)
    if data.Z is None and config.estimator != "zero":
        logger.warning("No `z_` columns in `%s`; the nuisance is set to zero", config.input)
        estimator = NuisanceEstimator.zero()
    else:
        estimator = build_estimator(config, SpikeSlabPrior(lam=config.lam, psi=config.psi))
    result = irga_fit(data, beta_prior, estimator)
    return OutputDocument(
        mode=config.mode,
        seed=config.seed,
        config=config,
        variables=loaded.x_names,
        inclusion_probs=_floats(result.inclusion_probs()),
        log_odds=_log_odds(result.inclusion_log_odds()),
        posterior_mean=_floats(result.posterior_mean()),
        posterior_sd=_floats(result.posterior_sd()),
        sigma2=float(result.sigma2_used),
        timings=dict(result.timings),
        estimator=estimator.serialize(),
    )


def _run_select(config: RunConfig) -> OutputDocument:
    loaded = _load(config)
    data = loaded.data
    if data.Z is not None:
        raise ConfigError("Mode `select` reads the candidate variables from `x_` columns only")
    if config.estimator == "gp":
        raise ConfigError("Mode `select` supports the vamp, exact and zero estimators")
    prior = SpikeSlabPrior(lam=config.lam, psi=config.psi)
    block_size = config.block_size or min(DEFAULT_BLOCK_SIZE, data.p)
    problem = SelectionProblem(
        y=data.y,
        A=data.X,
        prior=prior,
        block_size=block_size,
        parallelism=config.workers,
        sigma2=config.sigma2,
        seed=config.seed,
    )
    estimator = build_estimator(config)
    with Executor(num_threads=config.workers) as pool:
        selection = select_blocks(problem, estimator, executor=pool)
    document = OutputDocument(
        mode=config.mode,
        seed=config.seed,
        config=config,
        variables=loaded.x_names,
        inclusion_probs=_floats(selection.inclusion_probs),
        log_odds=_log_odds(selection.log_odds),
        posterior_mean=_floats(selection.posterior_mean),
        posterior_sd=_floats(selection.posterior_sd),
        sigma2=float(np.mean(selection.sigma2)),
        sigma2_by_variable=_floats(selection.sigma2),
        timings=dict(selection.timings),
        estimator=estimator.serialize(),
    )
    if config.compare:
        clock = time.perf_counter()
        gibbs = gibbs_spike_slab(data.y, data.X, prior, _mcmc_config(config), config.sigma2)
        comparison = log_odds_comparison(gibbs.inclusion_probs, selection.inclusion_probs)
        logger.info(
            "%s",
            render_comparison(comparison, data.p, "Gibbs", average_se=gibbs.average_se),
        )
        timings = {**document.timings, **_elapsed("gibbs", clock)}
        document = msgspec.structs.replace(
            document,
            comparison=comparison,
            reference={
                "method": "gibbs",
                "inclusion_probs": _floats(gibbs.inclusion_probs),
                "inclusion_se": _floats(gibbs.inclusion_se),
                "average_se": gibbs.average_se,
            },
            timings=timings,
        )
    return document


def _run_gp(config: RunConfig) -> OutputDocument:
    loaded = _load(config)
    data = loaded.data
    if data.Z is None or data.Z.shape[1] != 1:
        raise ConfigError("Mode `gp` needs exactly one `z_` column of GP inputs")
    if config.sigma2 is None:
        raise ConfigError("Mode `gp` needs a known --sigma2")
    beta_prior = GaussianPrior.isotropic(data.p, config.psi)
    gp_config = GpConfig(seed=config.seed)
    estimator = NuisanceEstimator.gp_laplace(gp_config)
    result = irga_fit(data, beta_prior, estimator)
    document = OutputDocument(
        mode=config.mode,
        seed=config.seed,
        config=config,
        variables=loaded.x_names,
        inclusion_probs=_floats(result.inclusion_probs()),
        log_odds=_log_odds(result.inclusion_log_odds()),
        posterior_mean=_floats(result.posterior_mean()),
        posterior_sd=_floats(result.posterior_sd()),
        sigma2=float(result.sigma2_used),
        timings=dict(result.timings),
        estimator=estimator.serialize(),
    )
    if config.compare:
        clock = time.perf_counter()
        oracle = mh_gp(
            data.y, data.X, data.Z, gp_config, _mcmc_config(config), beta_prior, config.sigma2
        )
        timings = {**document.timings, **_elapsed("mh", clock)}
        document = msgspec.structs.replace(
            document,
            reference={
                "method": "mh",
                "beta_mean": _floats(oracle.beta_mean),
                "beta_sd": _floats(oracle.beta_sd),
                "beta_mean_se": _floats(oracle.beta_mean_se),
                "acceptance_rate": float(oracle.acceptance_rate),
                "grid": oracle.grid.tolist(),
                "density": oracle.density.tolist(),
            },
            timings=timings,
        )
    return document


def _run_oracle(config: RunConfig) -> OutputDocument:
    loaded = _load(config)
    data = loaded.data
    prior = SpikeSlabPrior(lam=config.lam, psi=config.psi)
    A = data.X if data.Z is None else np.hstack([data.X, data.Z])
    variables = loaded.x_names + loaded.z_names
    clock = time.perf_counter()
    if config.oracle_method == "enumerate":
        if config.sigma2 is None:
            raise ConfigError("The enumeration oracle needs a known --sigma2")
        posterior = selection_posterior(data.y, A, prior, config.sigma2)
        probs = posterior.inclusion_probs()
        log_odds = posterior.inclusion_log_odds()
        mean, sd = posterior.mean(), posterior.marginal_sd()
        reference = None
    else:
        gibbs = gibbs_spike_slab(data.y, A, prior, _mcmc_config(config), config.sigma2)
        probs = gibbs.inclusion_probs
        log_odds = clipped_logit(probs)
        mean, sd = gibbs.theta_mean, np.full(A.shape[1], np.nan)
        reference = {
            "inclusion_se": _floats(gibbs.inclusion_se),
            "average_se": gibbs.average_se,
            "batch_length": gibbs.batch_length,
        }
    timings = _elapsed("oracle", clock)
    return OutputDocument(
        mode=config.mode,
        seed=config.seed,
        config=config,
        variables=variables,
        inclusion_probs=_floats(probs),
        log_odds=_log_odds(log_odds),
        posterior_mean=_floats(mean),
        posterior_sd=[None if math.isnan(v) else v for v in _floats(sd)],
        sigma2=config.sigma2,
        timings=timings,
        reference=reference,
    )


def _run_diagnose(config: RunConfig) -> OutputDocument:
    clock = time.perf_counter()
    if config.check == "theorem1":
        check_config = Theorem1Config(lam=config.lam, psi=config.psi, seed=config.seed)
        estimator = build_estimator(config)
        report = theorem1_check(check_config, estimator, config.replicates)
        fields = {
            "estimator": report.estimator,
            "n_holds": report.n_holds,
            "fraction_holds": report.fraction_holds,
            "replicates": msgspec.to_builtins(report.replicates),
        }
    elif config.check == "theorem2":
        check_config = Theorem2Config(lam=config.lam, psi=config.psi, seed=config.seed)
        diag = theorem2_check(check_config)
        fields = {
            "m1": diag.m1,
            "m1_se": diag.m1_se,
            "m2": diag.m2,
            "delta1": diag.delta1,
            "delta2": diag.delta2,
            "bound": diag.bound,
            "kl_estimate": diag.kl_estimate,
            "kl_se": diag.kl_se,
            "bound_holds": diag.bound_holds,
            "notes": list(diag.notes),
        }
    else:
        report = consistency_study(n_seeds=config.replicates or 20, seed=config.seed)
        fields = {
            "ns": list(report.ns),
            "median_prob": _floats(report.median_prob),
            "monotone": report.monotone,
            "gamma0": list(report.gamma0),
        }
    logger.info("%s", render_diagnostics(config.check, fields))
    fields["check"] = config.check
    return OutputDocument(
        mode=config.mode,
        seed=config.seed,
        config=config,
        diagnostics=fields,
        timings=_elapsed("diagnose", clock),
    )


_DISPATCH = {
    "fit": _run_fit,
    "select": _run_select,
    "gp": _run_gp,
    "oracle": _run_oracle,
    "diagnose": _run_diagnose,
}


def run(config: RunConfig) -> OutputDocument:
    """Dispatch a run and write its document to `config.output` when set."""
    logger.info("irgaflux %s: mode `%s`, seed %d", __version__, config.mode, config.seed)
    document = _DISPATCH[config.mode](config)
    if document.inclusion_probs is not None:
        logger.info("%s", render_run_summary(document))
    if config.output is not None:
        save(document, config.output)
        logger.info("Wrote `%s`", config.output)
    return document


def load_replay(path: str, output: Optional[str] = None) -> RunConfig:
    """Resolved configuration of a previous output document."""
    try:
        previous = load(path, type=OutputDocument)
    except FileNotFoundError as e:
        raise ParseError(str(e), path=path) from e
    except (msgspec.DecodeError, ValueError) as e:
        raise ParseError(f"`{path}` is not an output document: {e}", path=path) from e
    config = previous.config
    if output is not None:
        config = msgspec.structs.replace(config, output=output)
    return config


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="irgaflux",
        description="Posterior inference for low-dimensional parameters "
        "with high-dimensional nuisance.",
    )
    ap.add_argument("--mode", choices=list(_DISPATCH), help="Workflow to run.")
    ap.add_argument("--input", help="Headered CSV with `y`, `x_*` and `z_*` columns.")
    ap.add_argument("--lambda", dest="lam", type=float, default=0.5,
                    help="Prior inclusion probability.")
    ap.add_argument("--psi", type=float, default=1.0, help="Slab (or Gaussian prior) variance.")
    ap.add_argument("--g-n", dest="g_n", type=float, default=None,
                    help="g-prior scale; defaults to n.")
    ap.add_argument("--beta-prior", choices=["spike_slab", "gprior", "gaussian"],
                    default="spike_slab", help="Prior on beta in `fit` mode.")
    ap.add_argument("--estimator", choices=["vamp", "exact", "gp", "zero"], default="vamp",
                    help="Nuisance estimator.")
    ap.add_argument("--nuisance-covariance", choices=["diagonal", "scalar"],
                    default="diagonal", help="Covariance form of the VAMP nuisance summary.")
    ap.add_argument("--block-size", type=int, default=None,
                    help="Variables per block in `select` mode.")
    ap.add_argument("--sigma2", type=float, default=None,
                    help="Known error variance; estimated when omitted.")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--standardize", action="store_true",
                    help="Center y and scale columns to zero mean and unit norm.")
    ap.add_argument("--output", help="Path of the JSON output document.")
    ap.add_argument("--oracle-method", choices=["enumerate", "gibbs"], default="enumerate")
    ap.add_argument("--check", choices=["theorem1", "theorem2", "consistency"],
                    default="theorem1", help="Diagnostic to run in `diagnose` mode.")
    ap.add_argument("--compare", "--compare-gibbs", dest="compare", action="store_true",
                    help="Also run the MCMC reference (Gibbs for `select`, MH for `gp`).")
    ap.add_argument("--burnin", type=int, default=10_000)
    ap.add_argument("--recorded", type=int, default=90_000)
    ap.add_argument("--replicates", type=int, default=None)
    ap.add_argument("--replay", help="Re-run the configuration stored in an output document.")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.replay:
        return load_replay(args.replay, args.output)
    if args.mode is None:
        raise ConfigError("One of --mode or --replay is required")
    fields = {
        name: getattr(args, name)
        for name in RunConfig.__struct_fields__
        if hasattr(args, name)
    }
    return RunConfig(**fields)


def _error_record(e: BaseException) -> Dict[str, Any]:
    if isinstance(e, IrgaError):
        return e.to_record()
    return {"error": type(e).__name__, "message": str(e), "exit_code": 1}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    output = getattr(args, "output", None)
    try:
        config = config_from_args(args)
        output = config.output
        run(config)
    except Exception as e:  # noqa: BLE001
        record = _error_record(e)
        logger.error("%s: %s", record["error"], record["message"])
        sys.stderr.write(msgspec_dumps(record).decode() + "\n")
        if output is not None:
            try:
                save(record, output)
            except (OSError, ValueError):
                logger.warning("Could not write the error record to `%s`", output)
        return int(record["exit_code"])
    return 0


__all__ = [
    "OutputDocument",
    "RunConfig",
    "build_beta_prior",
    "build_estimator",
    "build_parser",
    "load_replay",
    "main",
    "run",
]
