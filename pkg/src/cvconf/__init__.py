"""Joint uncertainty quantification for cross-validated model comparison.

Tools to compare many fitted models on equal footing: V-fold
cross-validated risks, plug-in covariance estimates across models,
Gaussian max-statistic quantiles, simultaneous confidence bands, and
two flavours of model confidence sets.  A stability laboratory probes
replace-one-sample sensitivity of learners, and a small experiment
harness drives seeded synthetic campaigns from config files.
"""

__version__ = "0.1.0"

from .datamodel import (
    Dataset,
    FoldPlan,
    LossMatrix,
    LearnerSpec,
    FittedModel,
    make_folds,
    validate_dataset,
    load_dataset_csv,
    save_dataset_csv,
)
from .cv_engine import FoldFits, RiskVector, fit_all_folds, loss_matrix, cv_risk
from .covariance import CovEstimate, aggregate_covariance, standardized_correlation
from .gaussian_mc import QuantileRequest, QuantileResult, max_quantile
from .inference import (
    BandSet,
    ModelConfidenceSet,
    simultaneous_band,
    pointwise_band,
    naive_set,
    cvc_set,
    check_coverage,
)
from .simgen import SparseLinearGen, SeriesGen, gen_sparse_linear, gen_series, derive_substream
from .det_variance import (
    HoldoutSet,
    PhiEstimate,
    phi_pair,
    phi_perturb,
    default_holdout_size,
)
from .stability_lab import (
    StabilityReport,
    param_first_diff,
    param_second_diff,
    loss_first_diff,
    scaling_fit,
    sgd_first_diff_campaign,
    sgd_second_diff_campaign,
    diff_loss_stability_probe,
)
from .cli_harness import ExperimentConfig, load_config

__all__ = [
    "Dataset",
    "FoldPlan",
    "LossMatrix",
    "LearnerSpec",
    "FittedModel",
    "make_folds",
    "validate_dataset",
    "load_dataset_csv",
    "save_dataset_csv",
    "FoldFits",
    "RiskVector",
    "fit_all_folds",
    "loss_matrix",
    "cv_risk",
    "CovEstimate",
    "aggregate_covariance",
    "standardized_correlation",
    "QuantileRequest",
    "QuantileResult",
    "max_quantile",
    "BandSet",
    "ModelConfidenceSet",
    "simultaneous_band",
    "pointwise_band",
    "naive_set",
    "cvc_set",
    "check_coverage",
    "SparseLinearGen",
    "SeriesGen",
    "gen_sparse_linear",
    "gen_series",
    "derive_substream",
    "HoldoutSet",
    "PhiEstimate",
    "phi_pair",
    "phi_perturb",
    "default_holdout_size",
    "StabilityReport",
    "param_first_diff",
    "param_second_diff",
    "loss_first_diff",
    "scaling_fit",
    "sgd_first_diff_campaign",
    "sgd_second_diff_campaign",
    "diff_loss_stability_probe",
    "ExperimentConfig",
    "load_config",
]
