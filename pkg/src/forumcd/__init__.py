"""Community detection on content-labelled forum data.

A toolkit for factorising symmetric count-similarity matrices under a
Poisson likelihood with column-wise shrinkage priors, assigning learners to
the communities that emerge, and benchmarking held-out predictions against
naive baselines.
"""

__version__ = "0.1.0"

from .communities import (AttributeSummary, CommunityReport, CrosstabReport,
                          MembershipProfile, best_of_restarts, group_crosstab,
                          kruskal_wallis, load_attribute_table,
                          report_from_fit, soft_membership)
from .data import (LearnerCategoryMatrix, SimilarityMatrix,
                   load_learner_category_matrix, load_similarity_matrix,
                   one_mode_projection, write_similarity_matrix)
from .errors import DataValidationError, NumericalError
from .evaluation import (EvalReport, HoldoutSplit, ModelScore, benchmark,
                         evaluate_heldout, holdout_split, masked_fit,
                         pred_avg, pred_zero, subsample)
from .model import (FactorModel, FitResult, Hyperparameters, derive_seed,
                    energy, fit, neg_log_hyperprior, neg_log_prior,
                    poisson_nll, prune, update_beta, update_h, update_w)
from .synthetic import PlantedSpec, sample_generative, sample_planted

__all__ = [
    "AttributeSummary", "CommunityReport", "CrosstabReport",
    "DataValidationError", "EvalReport", "FactorModel", "FitResult",
    "HoldoutSplit", "Hyperparameters", "LearnerCategoryMatrix",
    "MembershipProfile", "ModelScore", "NumericalError", "PlantedSpec",
    "SimilarityMatrix", "benchmark", "best_of_restarts", "derive_seed",
    "energy", "evaluate_heldout", "fit", "group_crosstab", "holdout_split",
    "kruskal_wallis", "load_attribute_table", "load_learner_category_matrix",
    "load_similarity_matrix", "masked_fit", "neg_log_hyperprior",
    "neg_log_prior", "one_mode_projection", "poisson_nll", "pred_avg",
    "pred_zero", "prune", "report_from_fit", "sample_generative",
    "sample_planted",
    "soft_membership", "subsample", "update_beta", "update_h", "update_w",
    "write_similarity_matrix",
]
