from .diagnostics import (
    TheoremDiagnostics,
    compute_delta_bound,
    compute_m1_m2,
    consistency_study,
    kl_mixture_mc,
    theorem1_check,
    theorem2_check,
)
from .envs import set_envs
from .estimators import BaseEstimator, NuisanceEstimate, NuisanceEstimator
from .exact_posterior import (
    BetaPosterior,
    NuisanceSummary,
    beta_posterior,
    exact_selection_oracle,
    gprior_log_marginal,
    inclusion_probs,
)
from .io import read_dataset_csv, write_dataset_csv
from .irga import IrgaResult, SelectionProblem, irga_fit, select_all, select_blocks
from .oracle_mcmc import McmcConfig, batch_means_se, gibbs_spike_slab, mh_gp
from .priors import GaussianPrior, GPrior, SpikeSlabPrior, spike_slab_denoise
from .rotation import Dataset, compute_rotation, rotate
from .synthetic import ScenarioSpec, generate
from .utils.msgspec import load, msgspec_dumps, save
from .vamp import VampConfig, vamp_fit
from .version import __version__

__all__ = [
    "BaseEstimator",
    "BetaPosterior",
    "Dataset",
    "GPrior",
    "GaussianPrior",
    "IrgaResult",
    "McmcConfig",
    "NuisanceEstimate",
    "NuisanceEstimator",
    "NuisanceSummary",
    "ScenarioSpec",
    "SelectionProblem",
    "SpikeSlabPrior",
    "TheoremDiagnostics",
    "VampConfig",
    "__version__",
    "batch_means_se",
    "beta_posterior",
    "compute_delta_bound",
    "compute_m1_m2",
    "compute_rotation",
    "consistency_study",
    "exact_selection_oracle",
    "generate",
    "gibbs_spike_slab",
    "gprior_log_marginal",
    "inclusion_probs",
    "irga_fit",
    "kl_mixture_mc",
    "load",
    "mh_gp",
    "msgspec_dumps",
    "read_dataset_csv",
    "rotate",
    "save",
    "select_all",
    "select_blocks",
    "set_envs",
    "spike_slab_denoise",
    "theorem1_check",
    "theorem2_check",
    "vamp_fit",
    "write_dataset_csv",
]
