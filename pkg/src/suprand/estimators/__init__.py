"""Treatment-effect estimators: ATE (naive, IPW, DR) and uplift learners."""

from .ate import (AteEstimate, ate_dr, ate_ipw, ate_naive, fit_outcome_models,
                  ipw_leaf_effect)
from .forest import CausalForest, CausalTree, ForestParams, fit_causal_forest
from .logistic import LogisticModel, NumericalError, fit_logistic
from .two_model import TwoModel, fit_two_model

__all__ = [
    "AteEstimate", "ate_dr", "ate_ipw", "ate_naive", "fit_outcome_models", "ipw_leaf_effect",
    "CausalForest", "CausalTree", "ForestParams", "fit_causal_forest",
    "LogisticModel", "NumericalError", "fit_logistic", "TwoModel", "fit_two_model",
]
