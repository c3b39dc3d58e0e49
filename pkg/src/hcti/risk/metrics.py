"""Calibration metrics between forecast probabilities and observed outcomes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import ValidationError


def _check(predicted: Sequence[float], observed: Sequence[float]):
    if len(predicted) != len(observed):
        raise ValidationError("predictions", "length mismatch with outcomes")
    if not predicted:
        raise ValidationError("predictions", "empty")


def mae(predicted: Sequence[float], observed: Sequence[float]) -> float:
    _check(predicted, observed)
    return sum(abs(p - o) for p, o in zip(predicted, observed)) / len(predicted)


def mse(predicted: Sequence[float], observed: Sequence[float]) -> float:
    _check(predicted, observed)
    return sum((p - o) ** 2 for p, o in zip(predicted, observed)) / len(predicted)


def rmse(predicted: Sequence[float], observed: Sequence[float]) -> float:
    return math.sqrt(mse(predicted, observed))


def mape(predicted: Sequence[float],
         observed: Sequence[float]) -> tuple[Optional[float], int]:
    """Mean absolute percentage error, excluding zero-valued outcomes.

    Division by a zero outcome is undefined, so those samples are excluded
    and their count reported alongside the percentage.  Returns (None, n)
    when every sample was excluded.
    """
    _check(predicted, observed)
    ratios = []
    excluded = 0
    for p, o in zip(predicted, observed):
        if o == 0:
            excluded += 1
            continue
        ratios.append(abs(p - o) / abs(o))
    if not ratios:
        return None, excluded
    return 100.0 * sum(ratios) / len(ratios), excluded


def accuracy(predicted: Sequence[float], observed: Sequence[float],
             threshold: float = 0.5) -> float:
    _check(predicted, observed)
    hits = sum(1 for p, o in zip(predicted, observed)
               if (p >= threshold) == bool(o))
    return hits / len(predicted)


@dataclass
class MetricsReport:
    train_count: int
    test_count: int
    predictor: str
    mae: float
    mse: float
    rmse: float
    mape_pct: Optional[float]
    mape_excluded: int
    accuracy: float
    train_end: str
    test_end: str

    def to_dict(self) -> dict:
        return {
            "train_count": self.train_count,
            "test_count": self.test_count,
            "predictor": self.predictor,
            "mae": self.mae,
            "mse": self.mse,
            "rmse": self.rmse,
            "mape_pct": self.mape_pct,
            "mape_excluded": self.mape_excluded,
            "accuracy": self.accuracy,
            "train_end": self.train_end,
            "test_end": self.test_end,
        }

    def to_text(self) -> str:
        """Flat key=value block, one metric per line."""
        lines = []
        for key, value in self.to_dict().items():
            lines.append(f"{key}={'NA' if value is None else value}")
        return "\n".join(lines)
