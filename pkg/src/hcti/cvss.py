"""CVSS v3.1 base vectors: parsing, rendering and base-score computation.

v3.0 vector strings are accepted and scored with the same equations; the
base metrics are identical between the two revisions.  Temporal and
environmental metrics are parsed over and ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

_METRIC_VALUES = {
    "AV": "NALP",
    "AC": "LH",
    "PR": "NLH",
    "UI": "NR",
    "S": "UC",
    "C": "NLH",
    "I": "NLH",
    "A": "NLH",
}
_METRIC_ORDER = ("AV", "AC", "PR", "UI", "S", "C", "I", "A")

# Non-base metrics that may legally appear in a vector string.
_IGNORED_METRICS = frozenset(
    ["E", "RL", "RC", "CR", "IR", "AR",
     "MAV", "MAC", "MPR", "MUI", "MS", "MC", "MI", "MA"]
)

_AV_WEIGHT = {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2}
_AC_WEIGHT = {"L": 0.77, "H": 0.44}
_PR_WEIGHT = {
    "U": {"N": 0.85, "L": 0.62, "H": 0.27},
    "C": {"N": 0.85, "L": 0.68, "H": 0.5},
}
_UI_WEIGHT = {"N": 0.85, "R": 0.62}
_CIA_WEIGHT = {"N": 0.0, "L": 0.22, "H": 0.56}


@dataclass(frozen=True)
class CvssVector:
    """The eight v3.1 base metrics, one letter each."""

    av: str
    ac: str
    pr: str
    ui: str
    s: str
    c: str
    i: str
    a: str

    def __post_init__(self):
        for name in _METRIC_ORDER:
            value = getattr(self, name.lower())
            if value not in _METRIC_VALUES[name]:
                raise ValidationError(name, f"illegal value {value!r}")


def parse_cvss_vector(text: str) -> CvssVector:
    """Parse a CVSS:3.x vector string, order-insensitively.

    Missing, duplicate or illegal base metrics are rejected with the metric
    named; metrics outside the base group are ignored.
    """
    if not (text.startswith("CVSS:3.1/") or text.startswith("CVSS:3.0/")):
        raise ValidationError("vector", f"missing CVSS:3.x prefix in {text!r}")
    seen: dict[str, str] = {}
    for part in text.split("/")[1:]:
        if ":" not in part:
            raise ValidationError("vector", f"malformed segment {part!r}")
        name, _, value = part.partition(":")
        if name in _IGNORED_METRICS:
            continue
        if name not in _METRIC_VALUES:
            raise ValidationError(name, "unknown metric")
        if name in seen:
            raise ValidationError(name, "duplicate metric")
        if value not in _METRIC_VALUES[name]:
            raise ValidationError(name, f"illegal value {value!r}")
        seen[name] = value
    for name in _METRIC_ORDER:
        if name not in seen:
            raise ValidationError(name, "missing metric")
    return CvssVector(*(seen[name] for name in _METRIC_ORDER))


def render_cvss_vector(vector: CvssVector) -> str:
    """Canonical textual form; parse(render(v)) == v."""
    parts = [f"{name}:{getattr(vector, name.lower())}" for name in _METRIC_ORDER]
    return "CVSS:3.1/" + "/".join(parts)


def _roundup(value: float) -> float:
    # Integer trick from the v3.1 errata; plain ceil(x*10)/10 misrounds
    # values like 8.6 that sit just below a binary representation boundary.
    scaled = int(math.floor(value * 100000 + 0.5))
    if scaled % 10000 == 0:
        return scaled / 100000.0
    return (scaled // 10000 + 1) / 10.0


def compute_cvss_base(vector: CvssVector) -> float:
    """Base score in [0.0, 10.0], rounded up to one decimal place."""
    iss = 1.0 - (
        (1.0 - _CIA_WEIGHT[vector.c])
        * (1.0 - _CIA_WEIGHT[vector.i])
        * (1.0 - _CIA_WEIGHT[vector.a])
    )
    changed = vector.s == "C"
    if changed:
        impact = 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15
    else:
        impact = 6.42 * iss
    exploitability = (
        8.22
        * _AV_WEIGHT[vector.av]
        * _AC_WEIGHT[vector.ac]
        * _PR_WEIGHT[vector.s][vector.pr]
        * _UI_WEIGHT[vector.ui]
    )
    if impact <= 0:
        return 0.0
    if changed:
        return _roundup(min(1.08 * (impact + exploitability), 10.0))
    return _roundup(min(impact + exploitability, 10.0))
