"""Vector approximate message passing for `Sy ~ N(SZ alpha, sigma2 I)` under a
spike-and-slab prior on alpha.

The SVD-form iteration alternates the separable denoiser of `irgaflux.priors`
with a linear-MMSE step that reuses one SVD of the design, so K iterations cost
O((m + K) q min(m, q)) for an m x q design. Precisions are scalar (isotropic).
"""

from dataclasses import dataclass
from typing import Literal, Optional

import msgspec
import numpy as np
import scipy.linalg
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from irgaflux.envs import envs
from irgaflux.exceptions import ConfigError, DimensionMismatch, NumericalDivergence
from irgaflux.logger import log_progress, logger
from irgaflux.priors import SpikeSlabPrior, spike_slab_denoise
from irgaflux.utils.logging import fmt_vector

PRECISION_FLOOR = 1e-11


class VampConfig(msgspec.Struct, kw_only=True):
    """Controls of a VAMP fit.

    `nuisance_covariance` selects how the IRGA estimator turns the per-coordinate
    variances into a covariance of R^T Z alpha: the diagonal embedding, or the
    scalar form `tr(Lambda Psi) I_p`.
    """

    max_iters: int = 500
    tol: float = 1e-8
    damping: float = 1.0
    estimate_sigma2: bool = True
    sigma2_prior_shape: float = 1.0
    sigma2_prior_rate: float = 1.0
    seed: int = 0
    nuisance_covariance: Literal["diagonal", "scalar"] = "diagonal"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be positive, got {self.max_iters}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if not 0 < self.damping <= 1:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if not (self.sigma2_prior_shape > 0 and self.sigma2_prior_rate > 0):
            raise ConfigError("The inverse-gamma prior on sigma2 needs positive parameters")


@dataclass(frozen=True)
class VampState:
    r1: np.ndarray
    r2: np.ndarray
    gamma1: float
    gamma2: float
    x1hat: np.ndarray
    x2hat: np.ndarray
    eta1: float
    eta2: float
    sigma2: float
    iteration: int = 0


@dataclass(frozen=True)
class AlphaPosteriorSummary:
    """Product-form summary of `alpha | S^T y`.

    `extrinsic_mean` and `extrinsic_precision` are the denoiser inputs at the
    final iterate; together with the prior they define the per-coordinate
    spike-and-slab posterior whose moments are `mean` and `variances`.
    """

    mean: np.ndarray
    variances: np.ndarray
    inclusion_probs: np.ndarray
    sigma2_hat: float
    converged: bool
    iters_used: int
    extrinsic_mean: Optional[np.ndarray] = None
    extrinsic_precision: Optional[float] = None
    state: Optional[VampState] = None


class _NonPositivePrecision(Exception):
    pass


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    delta = np.linalg.norm(new - old)
    if delta == 0.0:
        return 0.0
    return float(delta / max(np.linalg.norm(old), 1e-300))


class VampSolver:
    """One VAMP problem with its SVD precomputed.

    Args:
        Sy:
            Observations of the nuisance submodel, length m.
        SZ:
            m x q design of the nuisance submodel.
        prior:
            Spike-and-slab prior on alpha.
        config:
            Iteration controls.
    """

    def __init__(
        self, Sy: np.ndarray, SZ: np.ndarray, prior: SpikeSlabPrior, config: VampConfig
    ):
        Sy = np.asarray(Sy, dtype=float).ravel()
        SZ = np.asarray(SZ, dtype=float)
        if SZ.ndim != 2 or SZ.shape[0] != Sy.shape[0]:
            raise DimensionMismatch(
                f"SZ of shape {SZ.shape} does not match Sy of length {Sy.shape[0]}"
            )
        if SZ.shape[0] < 1 or SZ.shape[1] < 1:
            raise ConfigError("VAMP needs at least one observation and one coefficient")
        self.y = Sy
        self.A = SZ
        self.prior = prior
        self.config = config
        self.m, self.q = SZ.shape
        U, s, Vt = scipy.linalg.svd(SZ, full_matrices=False)
        self.U = U
        self.s = s
        self.Vt = Vt
        self.s2 = s * s
        self.Uty = U.T @ Sy
        self.Aty = Vt.T @ (s * self.Uty)
        self.rank_gap = self.q - s.size

    def init_state(self, sigma2: float) -> VampState:
        zeros = np.zeros(self.q)
        return VampState(
            r1=zeros,
            r2=zeros,
            gamma1=1.0,
            gamma2=1.0 / self.prior.psi,
            x1hat=zeros,
            x2hat=zeros,
            eta1=1.0 / self.prior.psi,
            eta2=1.0 / self.prior.psi,
            sigma2=float(sigma2),
            iteration=0,
        )

    def _lmmse(self, r2: np.ndarray, gamma2: float, sigma2: float):
        gamma_w = 1.0 / sigma2
        d = 1.0 / (gamma_w * self.s2 + gamma2)
        b = gamma_w * self.Aty + gamma2 * r2
        Vtb = self.Vt @ b
        x2 = self.Vt.T @ (d * Vtb) + (b - self.Vt.T @ Vtb) / gamma2
        trace_cov = d.sum() + self.rank_gap / gamma2
        return x2, d, trace_cov

    def _sigma2_update(self, x2: np.ndarray, d: np.ndarray, sigma2: float) -> float:
        # MAP-EM step under 1/sigma2 ~ Ga(shape, rate), the LMMSE posterior held fixed
        fitted = self.U @ (self.s * (self.Vt @ x2))
        resid = self.y - fitted
        expected_sq = resid @ resid + np.sum(self.s2 * d)
        shape = self.config.sigma2_prior_shape + 0.5 * self.m + 1.0
        return float((self.config.sigma2_prior_rate + 0.5 * expected_sq) / shape)

    @staticmethod
    def _extrinsic(eta: float, gamma_in: float, x: np.ndarray, r_in: np.ndarray,
                   allow_clip: bool):
        gamma_out = eta - gamma_in
        if not np.isfinite(gamma_out) or not np.isfinite(eta):
            raise _NonPositivePrecision(f"non-finite precision {gamma_out}")
        if gamma_out <= 0.0:
            if not allow_clip:
                raise _NonPositivePrecision(f"extrinsic precision {gamma_out}")
            logger.warning(
                "Extrinsic precision %.3e clipped to %.0e", gamma_out, PRECISION_FLOOR
            )
            gamma_out = PRECISION_FLOOR
            r_out = x
        else:
            r_out = (eta * x - gamma_in * r_in) / gamma_out
        return gamma_out, r_out

    @staticmethod
    def _damp(new_r, new_gamma, old_r, old_gamma, damping: float, first: bool):
        if first or damping >= 1.0:
            return new_r, new_gamma
        r = damping * new_r + (1.0 - damping) * old_r
        gamma = new_gamma**damping * old_gamma ** (1.0 - damping)
        return r, gamma

    def step(
        self, state: VampState, damping: float, allow_clip: bool = False
    ) -> VampState:
        """One LMMSE half-step followed by one denoising half-step."""
        first = state.iteration == 0
        sigma2 = state.sigma2

        x2, d, trace_cov = self._lmmse(state.r2, state.gamma2, sigma2)
        alpha2 = state.gamma2 * trace_cov / self.q
        eta2 = state.gamma2 / alpha2
        gamma1, r1 = self._extrinsic(eta2, state.gamma2, x2, state.r2, allow_clip)
        r1, gamma1 = self._damp(r1, gamma1, state.r1, state.gamma1, damping, first)

        if self.config.estimate_sigma2:
            sigma2 = self._sigma2_update(x2, d, sigma2)

        x1, v1, _ = spike_slab_denoise(r1, 1.0 / gamma1, self.prior)
        mean_var = float(np.mean(v1))
        if not mean_var > 0.0:
            raise _NonPositivePrecision("denoiser returned zero posterior variance")
        eta1 = 1.0 / mean_var
        gamma2, r2 = self._extrinsic(eta1, gamma1, x1, r1, allow_clip)
        r2, gamma2 = self._damp(r2, gamma2, state.r2, state.gamma2, damping, first)

        return VampState(
            r1=r1,
            r2=r2,
            gamma1=float(gamma1),
            gamma2=float(gamma2),
            x1hat=x1,
            x2hat=x2,
            eta1=eta1,
            eta2=float(eta2),
            sigma2=sigma2,
            iteration=state.iteration + 1,
        )

    def guarded_step(self, state: VampState) -> VampState:
        """`step` with the clipping policy: a nonpositive extrinsic precision
        makes the iteration restart from `state` with half the damping and
        clipping enabled; failure after the last attempt raises.
        """
        try:
            for attempt in Retrying(
                stop=stop_after_attempt(max(1, envs.vamp_stop_after_attempt)),
                retry=retry_if_exception_type(_NonPositivePrecision),
                reraise=True,
            ):
                with attempt:
                    number = attempt.retry_state.attempt_number
                    damping = self.config.damping * 0.5 ** (number - 1)
                    return self.step(state, damping, allow_clip=number > 1)
        except _NonPositivePrecision as e:
            raise NumericalDivergence(
                f"VAMP diverged at iteration {state.iteration + 1}: {e}; "
                "lower the damping factor",
                iteration=state.iteration + 1,
            ) from e
        raise NumericalDivergence("VAMP step made no attempt")  # pragma: no cover

    def summarize(self, state: VampState, converged: bool) -> AlphaPosteriorSummary:
        tau = 1.0 / state.gamma1
        mean, variances, probs = spike_slab_denoise(state.r1, tau, self.prior)
        return AlphaPosteriorSummary(
            mean=np.asarray(mean),
            variances=np.asarray(variances),
            inclusion_probs=np.asarray(probs),
            sigma2_hat=state.sigma2,
            converged=converged,
            iters_used=state.iteration,
            extrinsic_mean=state.r1,
            extrinsic_precision=state.gamma1,
            state=state,
        )

    def run(self, sigma2_init: float) -> AlphaPosteriorSummary:
        state = self.init_state(sigma2_init)
        converged = False
        for _ in range(self.config.max_iters):
            new_state = self.guarded_step(state)
            change = _relative_change(new_state.x1hat, state.x1hat)
            log_progress(
                "VAMP iteration %d: relative change %.3e, sigma2 %.4g",
                new_state.iteration,
                change,
                new_state.sigma2,
            )
            state = new_state
            if change < self.config.tol and state.iteration > 1:
                converged = True
                break
        if not converged:
            logger.warning(
                "VAMP stopped after %d iterations without reaching tol=%.1e",
                state.iteration,
                self.config.tol,
            )
        summary = self.summarize(state, converged)
        logger.debug("VAMP inclusion probabilities %s", fmt_vector(summary.inclusion_probs))
        return summary


def vamp_fit(
    Sy: np.ndarray,
    SZ: np.ndarray,
    prior: SpikeSlabPrior,
    sigma2_init: float,
    config: Optional[VampConfig] = None,
) -> AlphaPosteriorSummary:
    """Approximate `alpha | Sy` for `Sy ~ N(SZ alpha, sigma2 I)`.

    Args:
        Sy:
            Observations, length m = n - p.
        SZ:
            m x q design.
        prior:
            Spike-and-slab prior on each alpha_j.
        sigma2_init:
            Error variance; the starting value when `config.estimate_sigma2`.
        config:
            Iteration controls; defaults to `VampConfig()`.

    Raises:
        NumericalDivergence: a precision stayed nonpositive after the retries.
    """
    if not sigma2_init > 0:
        raise ConfigError(f"sigma2_init must be positive, got {sigma2_init}")
    config = config or VampConfig()
    solver = VampSolver(Sy, SZ, prior, config)
    return solver.run(sigma2_init)


def with_sigma2(config: VampConfig, estimate: bool) -> VampConfig:
    """Copy of `config` with `estimate_sigma2` set."""
    return msgspec.structs.replace(config, estimate_sigma2=estimate)


__all__ = [
    "AlphaPosteriorSummary",
    "VampConfig",
    "VampSolver",
    "VampState",
    "vamp_fit",
    "with_sigma2",
]
