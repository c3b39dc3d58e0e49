"""Per-(org, scenario) feature vectors and the cold-start fallback predictor.

The 15 features are fixed in order and unit-documented below.  Features are
computed strictly from data timestamped before the cutoff, through a narrow
stores facade, which is what the temporal-discipline tests hook to certify
that training never peeks past its cutoff.

Cold-start platforms have no outcome labels, so probability scoring falls
back to a logistic link over min-max-normalized features with shipped
weights (0.4 on the severity-type features) until an ensemble is trained.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from typing import Optional

import numpy as np

from ..eamodel import CRITICALITY_VALUE, affected_processes
from ..errors import NotFoundError, ValidationError
from ..outside import Finding, FindingCategory, derive_findings
from ..scenarios import ScenarioClass, scenario_weights
from .forest import N_FEATURES, TreeEnsemble

# Fixed feature order; units in parentheses.
FEATURE_NAMES = (
    "count_open_findings",        # findings (count)
    "sum_finding_severity",       # summed severity (0..1 each)
    "count_known_cves",           # open known_cve findings (count)
    "max_cvss",                   # highest known base score (0..10)
    "mean_cvss",                  # mean known base score (0..10)
    "count_exposed_services",     # open exposed_service findings (count)
    "has_sslv3",                  # 0/1
    "has_sha1_cert",              # 0/1
    "incident_rate_sector",       # sector incidents/month, trailing 12 months
    "mention_volume",             # org/sector mentions, trailing 30 days
    "compliance_violation_count", # open compliance findings (count)
    "days_since_last_scan",       # days; 9999 when never scanned
    "count_affected_processes",   # processes touched by this scenario's findings
    "max_process_criticality",    # 0 / 0.5 / 1
    "safety_relevant_touched",    # 0/1, any node on a witness path
)

NEVER_SCANNED_SENTINEL = 9999.0

assert len(FEATURE_NAMES) == N_FEATURES


def build_features(stores, org_id: str, scenario: ScenarioClass,
                   as_of: datetime,
                   findings: Optional[list[Finding]] = None) -> np.ndarray:
    """Assemble the 15-feature vector from data strictly before `as_of`.

    `findings` overrides the derived finding set (used by what-if); when
    omitted the set is derived from the observation history at `as_of`.
    """
    if not stores.known_org(org_id):
        raise NotFoundError("org", org_id)
    observations = stores.observations_before(org_id, as_of)
    if findings is None:
        findings = derive_findings(
            org_id, observations, stores.policy_for(org_id),
            lambda cve: stores.cvss_score(cve, as_of), as_of)
    open_findings = [f for f in findings if f.open]

    def count(category: FindingCategory) -> int:
        return sum(1 for f in open_findings if f.category == category)

    cve_scores = [f.evidence.get("base_score") for f in open_findings
                  if f.category == FindingCategory.KNOWN_CVE]
    known_scores = [s for s in cve_scores if s is not None]

    sector = stores.org_sector(org_id)
    newest = max((o.observed_at for o in observations), default=None)
    days_since = (NEVER_SCANNED_SENTINEL if newest is None
                  else (as_of - newest).total_seconds() / 86400.0)

    graph = stores.ea_graph(org_id)
    touched_processes: set[str] = set()
    max_criticality = 0.0
    safety_touched = 0.0
    if graph is not None:
        vector_of = lambda cve: stores.cvss_vector(cve, as_of)
        for finding in open_findings:
            vec = (vector_of(finding.evidence.get("cve_id", ""))
                   if finding.category == FindingCategory.KNOWN_CVE else None)
            weights = scenario_weights(finding.category.value, vec,
                                       stores.scenario_overrides())
            if weights.get(scenario, 0.0) <= 0.0:
                continue
            for proc, path in affected_processes(graph, finding):
                touched_processes.add(proc)
                max_criticality = max(
                    max_criticality,
                    CRITICALITY_VALUE[graph.nodes[proc].criticality])
                for node_id in path:
                    if graph.nodes[node_id].safety_relevant:
                        safety_touched = 1.0

    vector = np.array([
        float(len(open_findings)),
        float(sum(f.severity for f in open_findings)),
        float(count(FindingCategory.KNOWN_CVE)),
        float(max(known_scores)) if known_scores else 0.0,
        float(sum(known_scores) / len(known_scores)) if known_scores else 0.0,
        float(count(FindingCategory.EXPOSED_SERVICE)),
        1.0 if count(FindingCategory.WEAK_TLS_PROTOCOL) else 0.0,
        1.0 if count(FindingCategory.WEAK_CERT_SIGNATURE) else 0.0,
        float(stores.incident_rate(sector, as_of)),
        float(stores.mention_count(org_id, sector, as_of)),
        float(count(FindingCategory.COMPLIANCE_VIOLATION)),
        days_since,
        float(len(touched_processes)),
        max_criticality,
        safety_touched,
    ], dtype=np.float64)
    return vector


# -- fallback predictor ------------------------------------------------------

@dataclass(frozen=True)
class FallbackModel:
    bias: float
    weights: tuple[float, ...]          # aligned with FEATURE_NAMES
    norm_min: tuple[float, ...]
    norm_max: tuple[float, ...]

    @staticmethod
    def from_config(config: dict) -> "FallbackModel":
        weights = tuple(float(config.get("weights", {}).get(name, 0.0))
                        for name in FEATURE_NAMES)
        norm = config.get("normalization", {})
        lows, highs = [], []
        for name in FEATURE_NAMES:
            low, high = norm.get(name, [0.0, 1.0])
            if high <= low:
                raise ValidationError("normalization",
                                      f"{name}: max must exceed min")
            lows.append(float(low))
            highs.append(float(high))
        return FallbackModel(float(config.get("bias", 0.0)), weights,
                             tuple(lows), tuple(highs))

    def predict_one(self, x: np.ndarray) -> float:
        z = self.bias
        for i in range(N_FEATURES):
            span = self.norm_max[i] - self.norm_min[i]
            scaled = (x[i] - self.norm_min[i]) / span
            scaled = min(1.0, max(0.0, scaled))
            z += self.weights[i] * scaled
        return 1.0 / (1.0 + math.exp(-z))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.array([self.predict_one(row) for row in X])


def load_default_fallback() -> FallbackModel:
    raw = resources.files("hcti.data").joinpath("fallback_weights.json").read_text()
    return FallbackModel.from_config(json.loads(raw))


def predict_probability(model, x: np.ndarray) -> float:
    """Probability for one feature vector from an ensemble or the fallback."""
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != N_FEATURES:
        raise ValidationError("features",
                              f"expected {N_FEATURES} values, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValidationError("features", "non-finite feature value")
    if isinstance(model, TreeEnsemble):
        return float(model.predict(arr.reshape(1, -1))[0])
    if isinstance(model, FallbackModel):
        return float(model.predict_one(arr))
    raise ValidationError("model", f"unsupported predictor {type(model).__name__}")
