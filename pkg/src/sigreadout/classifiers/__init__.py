"""Supervised classifiers: Gaussian class models, random forest and LDA."""

from .forest import ForestHyperparams, ForestModel, rf_fit, rf_predict, rf_predict_proba
from .gmm import GmmModel, gmm_fit, gmm_log_joint, gmm_predict
from .lda import LdaModel, lda_decision, lda_fit, lda_predict, lda_project

__all__ = [
    "ForestHyperparams",
    "ForestModel",
    "GmmModel",
    "LdaModel",
    "gmm_fit",
    "gmm_log_joint",
    "gmm_predict",
    "lda_decision",
    "lda_fit",
    "lda_predict",
    "lda_project",
    "rf_fit",
    "rf_predict",
    "rf_predict_proba",
]
