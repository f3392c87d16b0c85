"""Integrated rotated Gaussian approximation and the block-wise selection driver.

`irga_fit` rotates the model with the QR split of X, summarizes the projected
nuisance `R^T eta | S^T y` by a Gaussian (Step 2, any registered estimator)
and solves the remaining p-dimensional model exactly (Step 3).
`select_blocks` repeats this for consecutive blocks of a wide design, treating
the other columns as the nuisance, and runs the blocks on a worker pool.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from msgtrace.sdk import Spans

from irgaflux._private.executor import Executor
from irgaflux.envs import envs
from irgaflux.estimators import BaseEstimator, NuisanceEstimate, NuisanceEstimator
from irgaflux.exact_posterior import (
    AnyBetaPosterior,
    NuisanceSummary,
    beta_posterior,
    gaussian_beta_posterior,
    gprior_beta_posterior,
)
from irgaflux.exceptions import ConfigError, DimensionMismatch
from irgaflux.functional import map_gather
from irgaflux.logger import log_progress, logger
from irgaflux.priors import BetaPrior, GaussianPrior, GPrior, SpikeSlabPrior
from irgaflux.rotation import Dataset, compute_rotation, rotate
from irgaflux.utils.logging import fmt_vector

MAX_BLOCK_SIZE = 25


@dataclass(frozen=True)
class IrgaResult:
    """Approximate posterior of beta with the Step-2 summary that produced it."""

    posterior: AnyBetaPosterior
    summary: NuisanceSummary
    sigma2_used: float
    timings: Dict[str, float] = field(default_factory=dict)
    nuisance: Optional[NuisanceEstimate] = None

    def __post_init__(self):
        if self.posterior.p != self.summary.p:
            raise DimensionMismatch(
                f"Posterior of dimension {self.posterior.p} with a nuisance summary "
                f"of dimension {self.summary.p}"
            )

    @property
    def p(self) -> int:
        return self.summary.p

    def inclusion_probs(self) -> np.ndarray:
        return self.posterior.inclusion_probs()

    def inclusion_log_odds(self) -> np.ndarray:
        if hasattr(self.posterior, "inclusion_log_odds"):
            return self.posterior.inclusion_log_odds()
        return np.full(self.p, np.inf)

    def posterior_mean(self) -> np.ndarray:
        return self.posterior.mean()

    def posterior_sd(self) -> np.ndarray:
        return self.posterior.marginal_sd()


def _step3(rotated, summary, sigma2, beta_prior: BetaPrior) -> AnyBetaPosterior:
    if isinstance(beta_prior, SpikeSlabPrior):
        return beta_posterior(rotated.Ry, rotated.RX, summary, sigma2, beta_prior)
    if isinstance(beta_prior, GPrior):
        return gprior_beta_posterior(rotated.Ry, rotated.RX, summary, sigma2, beta_prior)
    if isinstance(beta_prior, GaussianPrior):
        return gaussian_beta_posterior(
            rotated.Ry, rotated.RX, summary, sigma2, beta_prior
        )
    raise ConfigError(f"Unsupported prior on beta: {type(beta_prior).__name__}")


@Spans.instrument()
def irga_fit(
    data: Dataset, beta_prior: BetaPrior, estimator: BaseEstimator
) -> IrgaResult:
    """Approximate `beta | y` for `y ~ N(X beta + eta, sigma2 I)`.

    Args:
        data:
            Observations; `data.sigma2` is used when given, otherwise the
            estimator supplies sigma2.
        beta_prior:
            Spike-and-slab, g-prior or Gaussian prior on beta. A spike-and-slab
            prior is also passed to estimators that model alpha and have no
            prior of their own.
        estimator:
            Step-2 strategy, see `NuisanceEstimator`.

    Raises:
        RankDeficient: X does not have full column rank.
        IncompatibleEstimator: the estimator cannot handle `data`.
    """
    timings: Dict[str, float] = {}
    clock = time.perf_counter()

    split = compute_rotation(data.X)
    rotated = rotate(data, split)
    now = time.perf_counter()
    timings["rotation"] = now - clock
    clock = now
    logger.info("Rotated data: n=%d, p=%d, q=%d", data.n, data.p, data.q)

    nuisance_prior = beta_prior if isinstance(beta_prior, SpikeSlabPrior) else None
    nuisance = estimator(data, split, rotated, data.sigma2, nuisance_prior)
    sigma2 = data.sigma2 if data.sigma2 is not None else nuisance.sigma2
    now = time.perf_counter()
    timings["nuisance"] = now - clock
    clock = now
    logger.info("Nuisance summarized with `%s`, sigma2=%.6g", estimator.name, sigma2)

    posterior = _step3(rotated, nuisance.summary, sigma2, beta_prior)
    timings["posterior"] = time.perf_counter() - clock
    logger.info(
        "Posterior inclusion probabilities %s", fmt_vector(posterior.inclusion_probs())
    )

    return IrgaResult(
        posterior=posterior,
        summary=nuisance.summary,
        sigma2_used=sigma2,
        timings=timings if envs.record_timings else {},
        nuisance=nuisance,
    )


@dataclass(frozen=True)
class SelectionProblem:
    """Variable selection for `y ~ N(A theta, sigma2 I)` with a spike-and-slab
    prior on every theta_j, solved in consecutive blocks of `block_size`.
    """

    y: np.ndarray
    A: np.ndarray
    prior: SpikeSlabPrior
    block_size: int
    parallelism: int = 1
    sigma2: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != y.size:
            raise DimensionMismatch(f"A of shape {A.shape} for {y.size} observations")
        r = A.shape[1]
        if r < 2:
            raise ConfigError(f"Selection needs r >= 2 variables, got {r}")
        if not 1 <= self.block_size <= min(r, MAX_BLOCK_SIZE):
            raise ConfigError(
                f"block_size must lie in [1, {min(r, MAX_BLOCK_SIZE)}], "
                f"got {self.block_size}"
            )
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be positive, got {self.parallelism}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "A", A)

    @property
    def r(self) -> int:
        return self.A.shape[1]

    def blocks(self) -> List[Tuple[int, int]]:
        return [
            (start, min(start + self.block_size, self.r))
            for start in range(0, self.r, self.block_size)
        ]


@dataclass(frozen=True)
class SelectionResult:
    inclusion_probs: np.ndarray
    log_odds: np.ndarray
    posterior_mean: np.ndarray
    posterior_sd: np.ndarray
    sigma2: np.ndarray
    timings: Dict[str, float] = field(default_factory=dict)


def _fit_block(
    problem: SelectionProblem, estimator: BaseEstimator, start: int, stop: int
) -> IrgaResult:
    columns = np.zeros(problem.r, dtype=bool)
    columns[start:stop] = True
    Z = problem.A[:, ~columns] if (~columns).any() else None
    if Z is None:
        # The block covers every variable, so there is no nuisance left
        estimator = NuisanceEstimator.zero()
    data = Dataset(y=problem.y, X=problem.A[:, columns], Z=Z, sigma2=problem.sigma2)
    result = irga_fit(data, problem.prior, estimator)
    log_progress("Block [%d, %d) done", start, stop)
    return result


@Spans.instrument()
def select_blocks(
    problem: SelectionProblem,
    estimator: BaseEstimator,
    executor: Optional[Executor] = None,
) -> SelectionResult:
    """Run IRGA on every block and assemble the per-variable results.

    Block b receives the seed spawned at index b from `problem.seed`, so the
    output does not depend on the worker count.
    """
    blocks = problem.blocks()
    seeds = np.random.SeedSequence(problem.seed).spawn(len(blocks))
    args_list = [
        (problem, estimator.with_seed(int(seq.generate_state(1)[0])), start, stop)
        for seq, (start, stop) in zip(seeds, blocks)
    ]
    logger.info(
        "Selection over r=%d variables in %d blocks on %d workers",
        problem.r,
        len(blocks),
        problem.parallelism,
    )
    clock = time.perf_counter()
    if executor is None:
        with Executor(num_threads=problem.parallelism) as pool:
            results = map_gather(_fit_block, args_list=args_list, executor=pool)
    else:
        results = map_gather(_fit_block, args_list=args_list, executor=executor)

    probs = np.empty(problem.r)
    log_odds = np.empty(problem.r)
    mean = np.empty(problem.r)
    sd = np.empty(problem.r)
    sigma2 = np.empty(problem.r)
    for (start, stop), result in zip(blocks, results):
        probs[start:stop] = result.inclusion_probs()
        log_odds[start:stop] = result.inclusion_log_odds()
        mean[start:stop] = result.posterior_mean()
        sd[start:stop] = result.posterior_sd()
        sigma2[start:stop] = result.sigma2_used
    timings = {"selection": time.perf_counter() - clock} if envs.record_timings else {}
    return SelectionResult(
        inclusion_probs=probs,
        log_odds=log_odds,
        posterior_mean=mean,
        posterior_sd=sd,
        sigma2=sigma2,
        timings=timings,
    )


def select_all(
    problem: SelectionProblem,
    estimator: BaseEstimator,
    executor: Optional[Executor] = None,
) -> np.ndarray:
    """Marginal inclusion probabilities of all r variables."""
    return select_blocks(problem, estimator, executor).inclusion_probs


__all__ = [
    "IrgaResult",
    "SelectionProblem",
    "SelectionResult",
    "irga_fit",
    "select_all",
    "select_blocks",
]
