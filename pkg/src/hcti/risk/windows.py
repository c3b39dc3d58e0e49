"""Time-stamped training windows with strict temporal discipline."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Optional

import numpy as np

from ..scenarios import ImpactCategory, ScenarioClass


@dataclass
class LabeledWindow:
    """(features, outcome) at a cutoff: features see only data before it.

    `features` may be left unset and built lazily through the stores facade,
    which is what lets tests certify that training never reads past its
    cutoff.  `outcome` is whether an incident of the window's scenario class
    occurred within the 90 days after window_end.
    """

    org_id: str
    scenario: ScenarioClass
    window_end: datetime
    outcome: bool
    features: Optional[np.ndarray] = None
    impact_label: Optional[ImpactCategory] = None

    OUTCOME_HORIZON_DAYS = 90

    def materialize(self, stores) -> np.ndarray:
        if self.features is None:
            from .features import build_features
            self.features = build_features(stores, self.org_id, self.scenario,
                                           self.window_end)
        return self.features
