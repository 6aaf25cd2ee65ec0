"""Exponential screening for sparse linear regression."""

from .linalg import DesignProblem, SparsityPattern, restricted_least_squares, rank_of_design, rss_of
from .priors import PriorKind, PriorSpec, log_prior
from .sampler import EsEstimate, exact_es, mh_es, estimate_sigma2
from .baselines import lasso, lasso_cv, lasso_gauss, bic, soft_threshold
from .simgen import DesignKind, DesignSpec, generate_design, generate_signal, generate_response
from .harness import ExperimentConfig, EstimatorSpec, run_experiment, emit_results, ingest_csv

__version__ = "0.1.0"
