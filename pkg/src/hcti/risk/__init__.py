"""Scenario risk scoring: features, tree ensembles, assessment, evaluation."""

from .engine import (ImpactModel, RiskAssessment, ScenarioEntry, assess,
                     classify_impact, train_impact_model, what_if)
from .features import (FEATURE_NAMES, FallbackModel, build_features,
                       load_default_fallback, predict_probability)
from .forest import Hyperparams, TreeEnsemble, self_train, train_ensemble
from .metrics import MetricsReport, mae, mape, mse, rmse
from .evaluate import time_split_evaluate
from .windows import LabeledWindow

__all__ = [
    "FEATURE_NAMES", "FallbackModel", "Hyperparams", "ImpactModel",
    "LabeledWindow", "MetricsReport", "RiskAssessment", "ScenarioEntry",
    "TreeEnsemble", "assess", "build_features", "classify_impact",
    "load_default_fallback", "mae", "mape", "mse", "predict_probability",
    "rmse", "self_train", "time_split_evaluate", "train_ensemble",
    "train_impact_model", "what_if",
]
