"""Scenario classes, impact categories, and the finding-to-scenario mapping.

Risk is enumerated over a closed set of seven attacker-outcome classes.
Findings feed scenarios through a weighted mapping: TLS and certificate
weaknesses open the disclosure/tampering classes, exposed services the
spoofing/privilege/denial classes, and known CVEs contribute to disclosure,
tampering and denial weighted by their C/I/A impact metrics.  Compliance
violations and stale observations carry no scenario weight; they enter on
the impact side and the feature vector instead.  The mapping is the
platform default and can be overridden per finding category via config.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Optional

from .cvss import CvssVector


class ScenarioClass(str, Enum):
    LOSS_OF_CONTROL_OR_VIEW = "loss_of_control_or_view"
    DENIAL = "denial"
    TAMPERING = "tampering"
    SPOOFING = "spoofing"
    REPUDIATION = "repudiation"
    INFORMATION_DISCLOSURE = "information_disclosure"
    ELEVATION_OF_PRIVILEGES = "elevation_of_privileges"


SCENARIO_ORDER = tuple(ScenarioClass)


class ImpactCategory(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


IMPACT_WEIGHTS = {
    ImpactCategory.LOW: 0.25,
    ImpactCategory.MEDIUM: 0.5,
    ImpactCategory.HIGH: 1.0,
}

# Three max-severity gaps zero out the countermeasure credit.
COUNTERMEASURE_CAP = 3.0

_IMPACT_METRIC_WEIGHT = {"H": 1.0, "L": 0.5, "N": 0.0}

_STATIC_MAP = {
    "weak_tls_protocol": (ScenarioClass.INFORMATION_DISCLOSURE,
                          ScenarioClass.TAMPERING),
    "weak_cert_signature": (ScenarioClass.INFORMATION_DISCLOSURE,
                            ScenarioClass.TAMPERING),
    "exposed_service": (ScenarioClass.SPOOFING,
                        ScenarioClass.ELEVATION_OF_PRIVILEGES,
                        ScenarioClass.DENIAL),
    "compliance_violation": (),
    "stale_observation": (),
}


def scenario_weights(category: str,
                     cvss_vector: Optional[CvssVector] = None,
                     overrides: Optional[dict[str, list[str]]] = None,
                     ) -> dict[ScenarioClass, float]:
    """Weight of one finding category toward each scenario class.

    `cvss_vector` is consulted for known_cve findings only; a CVE without a
    known vector counts fully toward all three impact-mapped classes.
    """
    if overrides and category in overrides:
        return {ScenarioClass(name): 1.0 for name in overrides[category]}
    if category == "known_cve":
        if cvss_vector is None:
            return {ScenarioClass.INFORMATION_DISCLOSURE: 1.0,
                    ScenarioClass.TAMPERING: 1.0,
                    ScenarioClass.DENIAL: 1.0}
        weights = {
            ScenarioClass.INFORMATION_DISCLOSURE:
                _IMPACT_METRIC_WEIGHT[cvss_vector.c],
            ScenarioClass.TAMPERING: _IMPACT_METRIC_WEIGHT[cvss_vector.i],
            ScenarioClass.DENIAL: _IMPACT_METRIC_WEIGHT[cvss_vector.a],
        }
        return {s: w for s, w in weights.items() if w > 0.0}
    return {s: 1.0 for s in _STATIC_MAP.get(category, ())}
