"""Bayesian variable selection with power-expected-posterior priors.

The main entry points are re-exported here; see the submodules for the
full interface.
"""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .bma import CvConfig, bma_lps, bma_predict_closed, bma_predict_mcmc, bma_r2, bma_rmse
from .data import INTERCEPT_ONLY, Dataset, ModelId, Reference, centre, load_csv, ols_stats
from .evidence import log_bayes_factor, log_evidence
from .modelspace import ModelPrior, PosteriorTable, enumerate_models, map_model
from .posterior import posterior_g_moments, posterior_w_moments
from .priors import PriorSpec
from .samplers import SamplerConfig, run_chain, run_chains
from .simgen import ScenarioConfig, generate, run_study

__all__ = [
    "__version__", "CvConfig", "bma_lps", "bma_predict_closed", "bma_predict_mcmc", "bma_r2",
    "bma_rmse", "INTERCEPT_ONLY", "Dataset", "ModelId", "Reference", "centre", "load_csv",
    "ols_stats", "log_bayes_factor", "log_evidence", "ModelPrior", "PosteriorTable",
    "enumerate_models", "map_model", "posterior_g_moments", "posterior_w_moments", "PriorSpec",
    "SamplerConfig", "run_chain", "run_chains", "ScenarioConfig", "generate", "run_study",
]
