"""Bayesian variable selection with determinantal point process priors.

Enumerates every submodel of a Gaussian linear model under Zellner's
g-prior, with a prior over submodels that discourages selecting
correlated predictors together. Hyperparameters are set by maximizing
the marginal likelihood.
"""

from .data import Dataset, load_csv, write_csv
from .errors import (AllZeroDifferences, ConfigError, ConstantColumn, DataError, DegenerateStep,
                     DimensionMismatch, DPPSelectError, MissingColumn, NonNumericCell,
                     OptimizationFailed, ParseError, RankDeficient, SingularCovariance, TooLarge)
from .linalg import (correlation_kernel, fractional_power, log_det_plus_identity,
                     log_det_principal_submatrix, mahalanobis_distances, projection_ss, standardize)
from .priors import (Family, PriorSpec, log_normalizer, log_prior_unnormalized, pair_suppression_check,
                     prior_table)
from .selection import (FitOptions, Hyperparams, SelectionResult, estimate_coefficients, fit_and_select,
                        fit_type_ii, log_marginal_given_model, log_type_ii_likelihood, posterior_table,
                        select_best_model)
from .baselines import fit_ridge, ols, oracle, ridge_evidence
from .preselect import lars_path, select_support
from .evaluation import (SplitSpec, SyntheticSpec, abs_loss, generate_synthetic, mahalanobis_split,
                         max_loss, quad_loss, run_predictive_study, run_risk_study)
from .wilcoxon import wilcoxon_signed_rank

__version__ = "0.1.0"
