"""Time-split training and evaluation: past predicts present, never itself."""

from __future__ import annotations

from datetime import datetime
from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..util import format_ts
from . import metrics as m
from .features import load_default_fallback, FallbackModel
from .forest import Hyperparams, train_ensemble
from .windows import LabeledWindow


def time_split_evaluate(dataset: list[LabeledWindow],
                        t_train_end: datetime,
                        t_test_end: datetime,
                        hyperparams: Optional[Hyperparams] = None,
                        stores=None,
                        fallback: Optional[FallbackModel] = None,
                        ) -> m.MetricsReport:
    """Train on windows ending by t_train_end, score the following stretch.

    Feature materialization for training windows happens inside this call,
    so every store read the training phase performs carries a cutoff at or
    before t_train_end.  A single-class training partition falls back to the
    shipped heuristic predictor (reported as predictor="fallback").
    """
    if t_train_end >= t_test_end:
        raise ValidationError("t_train_end", "must precede t_test_end")
    train = [w for w in dataset if w.window_end <= t_train_end]
    test = [w for w in dataset
            if t_train_end < w.window_end <= t_test_end]
    if not train:
        raise ValidationError("train_partition", "empty")
    if not test:
        raise ValidationError("test_partition", "empty")

    predictor_name = "ensemble"
    try:
        model = train_ensemble(train, hyperparams, stores=stores)
    except ValidationError:
        model = fallback or load_default_fallback()
        predictor_name = "fallback"

    X_test = np.stack([w.materialize(stores) for w in test])
    predicted = [float(p) for p in model.predict(X_test)]
    observed = [1.0 if w.outcome else 0.0 for w in test]

    mape_pct, mape_excluded = m.mape(predicted, observed)
    return m.MetricsReport(
        train_count=len(train),
        test_count=len(test),
        predictor=predictor_name,
        mae=m.mae(predicted, observed),
        mse=m.mse(predicted, observed),
        rmse=m.rmse(predicted, observed),
        mape_pct=mape_pct,
        mape_excluded=mape_excluded,
        accuracy=m.accuracy(predicted, observed),
        train_end=format_ts(t_train_end),
        test_end=format_ts(t_test_end),
    )
