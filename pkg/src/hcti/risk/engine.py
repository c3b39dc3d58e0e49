"""Scenario risk assessment: probability, impact, countermeasures, net risk.

Per feasible scenario i the engine computes the probability p_i, the impact
class m_i, and the countermeasure credit c_i, combining them as

    net_i = p_i * w(m_i) * (1 - c_i)

with impact weights w(low)=0.25, w(medium)=0.5, w(high)=1.0 by default.  The
organization aggregate is 100 * (1 - prod_i(1 - net_i)) over feasible
scenarios in enum order.  Full countermeasure credit (c=1) or zero
probability nullifies a scenario exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

from ..eamodel import CRITICALITY_VALUE, EAGraph, affected_processes
from ..errors import NotFoundError, ValidationError
from ..outside import (Finding, FindingCategory, countermeasure_score,
                       derive_findings)
from ..scenarios import (COUNTERMEASURE_CAP, IMPACT_WEIGHTS, SCENARIO_ORDER,
                         ImpactCategory, ScenarioClass, scenario_weights)
from ..util import format_ts
from .features import build_features, load_default_fallback, predict_probability
from .forest import Hyperparams, TreeEnsemble, train_ensemble
from .windows import LabeledWindow

_IMPACT_ORDER = (ImpactCategory.LOW, ImpactCategory.MEDIUM, ImpactCategory.HIGH)

# Hypothetical findings opened by what-if default to the rule-table severity.
_DEFAULT_SEVERITY = {
    FindingCategory.EXPOSED_SERVICE: 0.4,
    FindingCategory.WEAK_TLS_PROTOCOL: 0.9,
    FindingCategory.WEAK_CERT_SIGNATURE: 0.6,
    FindingCategory.KNOWN_CVE: 0.5,
    FindingCategory.COMPLIANCE_VIOLATION: 0.7,
    FindingCategory.STALE_OBSERVATION: 0.2,
}


@dataclass(frozen=True)
class ScenarioEntry:
    scenario: ScenarioClass
    p: float
    m: ImpactCategory
    c: float
    net: float

    def to_dict(self) -> dict:
        return {"s": self.scenario.value, "p": self.p, "m": self.m.value,
                "c": self.c, "net": self.net}


@dataclass
class RiskAssessment:
    org_id: str
    assessed_at: datetime
    entries: list[ScenarioEntry]
    n: int
    aggregate: float
    hypothetical: bool = False

    def to_dict(self) -> dict:
        return {
            "org_id": self.org_id,
            "assessed_at": format_ts(self.assessed_at),
            "entries": [e.to_dict() for e in self.entries],
            "n": self.n,
            "aggregate": self.aggregate,
            "hypothetical": self.hypothetical,
        }

    @staticmethod
    def from_dict(data: dict) -> "RiskAssessment":
        from ..util import parse_ts
        return RiskAssessment(
            org_id=data["org_id"],
            assessed_at=parse_ts(data["assessed_at"]),
            entries=[ScenarioEntry(ScenarioClass(e["s"]), e["p"],
                                   ImpactCategory(e["m"]), e["c"], e["net"])
                     for e in data["entries"]],
            n=data["n"],
            aggregate=data["aggregate"],
            hypothetical=data.get("hypothetical", False),
        )


def net_risk(p: float, impact: ImpactCategory, c: float,
             impact_weights: Optional[dict] = None) -> float:
    weights = impact_weights or IMPACT_WEIGHTS
    return p * weights[impact] * (1.0 - c)


def aggregate_score(nets: list[float]) -> float:
    survival = 1.0
    for net in nets:
        survival *= (1.0 - net)
    return 100.0 * (1.0 - survival)


def classify_impact(graph: Optional[EAGraph], findings: list[Finding],
                    scenario: ScenarioClass,
                    vector_of=lambda cve: None,
                    overrides: Optional[dict] = None,
                    impact_model=None,
                    features=None) -> ImpactCategory:
    """Impact class for one scenario: trained classifier when present,
    otherwise the committed rule table."""
    if impact_model is not None and features is not None:
        return impact_model.classify(features)

    touched: set[str] = set()
    safety = False
    sensitive = False
    max_crit = 0.0
    compliance = 0
    for finding in findings:
        if not finding.open:
            continue
        if finding.category == FindingCategory.COMPLIANCE_VIOLATION:
            compliance += 1
        vec = (vector_of(finding.evidence.get("cve_id", ""))
               if finding.category == FindingCategory.KNOWN_CVE else None)
        weights = scenario_weights(finding.category.value, vec, overrides)
        if weights.get(scenario, 0.0) <= 0.0 or graph is None:
            continue
        for proc, path in affected_processes(graph, finding):
            touched.add(proc)
            node = graph.nodes[proc]
            max_crit = max(max_crit, CRITICALITY_VALUE[node.criticality])
            for node_id in path:
                if graph.nodes[node_id].safety_relevant:
                    safety = True
                if graph.nodes[node_id].data_sensitivity:
                    sensitive = True

    if safety:
        return ImpactCategory.HIGH
    if max_crit >= 1.0:
        base = ImpactCategory.HIGH
    elif max_crit >= 0.5:
        base = ImpactCategory.MEDIUM
    else:
        base = ImpactCategory.LOW
    if (sensitive or compliance > 0) and base == ImpactCategory.LOW:
        base = ImpactCategory.MEDIUM
    return base


@dataclass
class ImpactModel:
    """One-vs-rest ensembles per impact class; ties resolve upward."""

    models: dict[ImpactCategory, TreeEnsemble]

    def classify(self, features) -> ImpactCategory:
        best = ImpactCategory.LOW
        best_score = -1.0
        for category in _IMPACT_ORDER:  # later = higher wins ties
            model = self.models.get(category)
            if model is None:
                continue
            score = float(model.predict(features.reshape(1, -1))[0])
            if score >= best_score:
                best_score = score
                best = category
        return best


def train_impact_model(windows: list[LabeledWindow],
                       hyperparams: Optional[Hyperparams] = None,
                       stores=None) -> ImpactModel:
    """Fit the 3-class impact classifier, one-vs-rest over impact labels.

    A class absent from the labels simply gets no model (classification
    falls through to the remaining classes); labels covering a single class
    are rejected in favor of the rule fallback.
    """
    labeled = [w for w in windows if w.impact_label is not None]
    if len(labeled) < 20:
        raise ValidationError("windows",
                              "need at least 20 impact-labeled windows")
    models: dict[ImpactCategory, TreeEnsemble] = {}
    for category in _IMPACT_ORDER:
        relabeled = [LabeledWindow(w.org_id, w.scenario, w.window_end,
                                   outcome=(w.impact_label == category),
                                   features=w.features)
                     for w in labeled]
        try:
            models[category] = train_ensemble(relabeled, hyperparams,
                                              stores=stores)
        except ValidationError:
            continue  # class absent from the labels
    if not models:
        raise ValidationError(
            "windows", "impact labels cover a single class; "
            "use the rule fallback instead")
    return ImpactModel(models)


def _assessment(stores, org_id: str, as_of: datetime,
                findings: list[Finding],
                model=None,
                impact_model: Optional[ImpactModel] = None,
                force_c: Optional[dict[ScenarioClass, float]] = None,
                hypothetical: bool = False) -> RiskAssessment:
    graph = stores.ea_graph(org_id)
    if graph is None:
        raise NotFoundError("ea_model", org_id)
    overrides = stores.scenario_overrides()
    cap = stores.countermeasure_cap()
    impact_weights = stores.impact_weights()
    vector_of = lambda cve: stores.cvss_vector(cve, as_of)
    predictor = model or load_default_fallback()
    open_findings = [f for f in findings if f.open]
    force_c = force_c or {}

    entries = []
    for scenario in SCENARIO_ORDER:
        feasible = False
        for finding in open_findings:
            vec = (vector_of(finding.evidence.get("cve_id", ""))
                   if finding.category == FindingCategory.KNOWN_CVE else None)
            weights = scenario_weights(finding.category.value, vec, overrides)
            if weights.get(scenario, 0.0) > 0.0 and affected_processes(
                    graph, finding):
                feasible = True
                break
        if not feasible:
            continue
        features = build_features(stores, org_id, scenario, as_of,
                                  findings=findings)
        p = predict_probability(predictor, features)
        impact = classify_impact(graph, findings, scenario, vector_of,
                                 overrides, impact_model, features)
        if scenario in force_c:
            c = force_c[scenario]
        else:
            c = countermeasure_score(open_findings, scenario, vector_of,
                                     cap=cap, overrides=overrides)
        entries.append(ScenarioEntry(
            scenario=scenario, p=p, m=impact, c=c,
            net=net_risk(p, impact, c, impact_weights)))

    return RiskAssessment(
        org_id=org_id,
        assessed_at=as_of,
        entries=entries,
        n=len(entries),
        aggregate=aggregate_score([e.net for e in entries]),
        hypothetical=hypothetical,
    )


def assess(stores, org_id: str, as_of: datetime, model=None,
           impact_model: Optional[ImpactModel] = None) -> RiskAssessment:
    """Assess every feasible scenario for an organization at a point in time."""
    if not stores.known_org(org_id):
        raise NotFoundError("org", org_id)
    findings = derive_findings(
        org_id, stores.observations_before(org_id, as_of),
        stores.policy_for(org_id),
        lambda cve: stores.cvss_score(cve, as_of), as_of)
    return _assessment(stores, org_id, as_of, findings, model, impact_model)


def what_if(stores, org_id: str, as_of: datetime, overrides: list[dict],
            model=None,
            impact_model: Optional[ImpactModel] = None) -> RiskAssessment:
    """Recompute an assessment under hypothetical finding overrides.

    Override actions: {"action": "close_finding", "finding_id": ...},
    {"action": "open_finding", "category": ..., "evidence": {...},
     "severity"?}, and {"action": "force_c", "scenario": ..., "value": v}.
    Nothing is persisted; the result is flagged hypothetical.
    """
    if not stores.known_org(org_id):
        raise NotFoundError("org", org_id)
    findings = derive_findings(
        org_id, stores.observations_before(org_id, as_of),
        stores.policy_for(org_id),
        lambda cve: stores.cvss_score(cve, as_of), as_of)
    by_id = {f.finding_id: f for f in findings}
    force_c: dict[ScenarioClass, float] = {}

    for override in overrides:
        action = override.get("action")
        if action == "close_finding":
            fid = override.get("finding_id", "")
            if fid not in by_id:
                raise NotFoundError("finding", fid)
            findings = [f if f.finding_id != fid else Finding(
                f.finding_id, f.org_id, f.category, f.severity, f.evidence,
                open=False, rule=f.rule) for f in findings]
        elif action == "open_finding":
            try:
                category = FindingCategory(override.get("category", ""))
            except ValueError:
                raise ValidationError("category",
                                      f"unknown {override.get('category')!r}")
            evidence = override.get("evidence", {})
            severity = float(override.get("severity",
                                          _DEFAULT_SEVERITY[category]))
            if not 0.0 <= severity <= 1.0:
                raise ValidationError("severity", "outside [0,1]")
            from ..util import sha16
            fid = sha16(f"{org_id}|hypothetical|{category.value}|"
                        f"{sorted(evidence.items())}")
            findings = findings + [Finding(fid, org_id, category, severity,
                                           evidence, open=True,
                                           rule="hypothetical")]
        elif action == "force_c":
            try:
                scenario = ScenarioClass(override.get("scenario", ""))
            except ValueError:
                raise ValidationError("scenario",
                                      f"unknown {override.get('scenario')!r}")
            value = float(override.get("value", -1))
            if not 0.0 <= value <= 1.0:
                raise ValidationError("value", "countermeasure outside [0,1]")
            force_c[scenario] = value
        else:
            raise ValidationError("action", f"unknown {action!r}")

    return _assessment(stores, org_id, as_of, findings, model, impact_model,
                       force_c=force_c, hypothetical=True)
