"""Outside analysis: scan-export ingestion, finding derivation, source rating.

No live scanning happens here.  The module ingests scan-result documents
(JSON-lines exports from internet-scan databases, or consented interactive
scan reports), attributes hosts to organizations through a static mapping
file, and applies a fixed rule table to derive security findings.  Findings
are a pure function of the observation history at a point in time, so
re-derivation is idempotent and findings whose evidence disappeared are
reported closed rather than deleted.
"""

from __future__ import annotations

import ipaddress
import json
import math
import re
import threading
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from . import kernels
from .errors import ValidationError
from .eventlog import EventLog
from .model import CVE_PATTERN, SourceClass, SourceDescriptor
from .scenarios import COUNTERMEASURE_CAP, ScenarioClass, scenario_weights
from .util import canonical_json, format_ts, parse_ts, sha16, utcnow

OBSERVATION_SKEW = timedelta(hours=24)
STALE_AFTER = timedelta(days=30)


class TlsProtocol(str, Enum):
    SSLV3 = "SSLv3"
    TLS1_0 = "TLS1_0"
    TLS1_1 = "TLS1_1"
    TLS1_2 = "TLS1_2"
    TLS1_3 = "TLS1_3"


@dataclass(frozen=True)
class PortInfo:
    port: int
    protocol_name: str
    service_banner: Optional[str] = None


@dataclass(frozen=True)
class TlsInfo:
    min_protocol: TlsProtocol
    cert_sig_alg: str
    cert_expiry: datetime


@dataclass(frozen=True)
class HostObservation:
    org_id: str
    ip: str
    observed_at: datetime
    open_ports: tuple[PortInfo, ...] = ()
    tls: Optional[TlsInfo] = None
    detected_cves: tuple[str, ...] = ()
    hostname: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "org_id": self.org_id,
            "ip": self.ip,
            "observed_at": format_ts(self.observed_at),
            "ports": [{"port": p.port, "protocol": p.protocol_name,
                       "banner": p.service_banner} for p in self.open_ports],
            "tls": {
                "min_protocol": self.tls.min_protocol.value,
                "cert_sig_alg": self.tls.cert_sig_alg,
                "cert_expiry": format_ts(self.tls.cert_expiry),
            } if self.tls else None,
            "cves": list(self.detected_cves),
            "hostname": self.hostname,
        }

    @staticmethod
    def from_dict(data: dict) -> "HostObservation":
        tls = data.get("tls")
        return HostObservation(
            org_id=data["org_id"],
            ip=data["ip"],
            observed_at=parse_ts(data["observed_at"]),
            open_ports=tuple(
                PortInfo(p["port"], p.get("protocol", ""), p.get("banner"))
                for p in data.get("ports", [])),
            tls=TlsInfo(TlsProtocol(tls["min_protocol"]),
                        tls.get("cert_sig_alg", ""),
                        parse_ts(tls["cert_expiry"])) if tls else None,
            detected_cves=tuple(data.get("cves", [])),
            hostname=data.get("hostname"),
        )


@dataclass(frozen=True)
class IncidentStat:
    period: tuple[int, int]
    sector: str
    incident_count: int
    source: SourceDescriptor

    def __post_init__(self):
        if self.incident_count < 0:
            raise ValidationError("incident_count", "must be non-negative")


class FindingCategory(str, Enum):
    EXPOSED_SERVICE = "exposed_service"
    WEAK_TLS_PROTOCOL = "weak_tls_protocol"
    WEAK_CERT_SIGNATURE = "weak_cert_signature"
    KNOWN_CVE = "known_cve"
    COMPLIANCE_VIOLATION = "compliance_violation"
    STALE_OBSERVATION = "stale_observation"


@dataclass(frozen=True)
class Finding:
    finding_id: str
    org_id: str
    category: FindingCategory
    severity: float
    evidence: dict
    open: bool
    rule: str

    def to_dict(self) -> dict:
        return {
            "finding_id": self.finding_id,
            "org_id": self.org_id,
            "category": self.category.value,
            "severity": self.severity,
            "evidence": self.evidence,
            "open": self.open,
            "rule": self.rule,
        }


def _finding_id(org_id: str, rule: str, evidence_key: str) -> str:
    return sha16(f"{org_id}|{rule}|{evidence_key}")


# -- organization attribution ---------------------------------------------

class OrgResolver:
    """Static CIDR / domain-suffix to org_id mapping, one rule per line."""

    def __init__(self, rules: list[tuple[str, str]]):
        self._networks: list[tuple[ipaddress._BaseNetwork, str]] = []
        self._suffixes: list[tuple[str, str]] = []
        for matcher, org_id in rules:
            try:
                self._networks.append((ipaddress.ip_network(matcher, strict=False),
                                       org_id))
                continue
            except ValueError:
                pass
            suffix = matcher.lower().lstrip(".")
            self._suffixes.append((suffix, org_id))

    @staticmethod
    def load(path: Path) -> "OrgResolver":
        rules = []
        for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ValidationError("org_mapping",
                                      f"line {line_no}: expected 2 fields")
            rules.append((parts[0], parts[1]))
        return OrgResolver(rules)

    def resolve(self, ip: str, hostname: Optional[str] = None) -> str:
        try:
            addr = ipaddress.ip_address(ip)
            for network, org_id in self._networks:
                if addr in network:
                    return org_id
        except ValueError:
            pass
        if hostname:
            host = hostname.lower().rstrip(".")
            for suffix, org_id in self._suffixes:
                if host == suffix or host.endswith("." + suffix):
                    return org_id
        return "unattributed"


@dataclass
class CompliancePolicy:
    """Per-org port policy: allow-list of expected ports, deny-list of banned."""

    org_id: str
    allowed_ports: frozenset[int] = frozenset()
    denied_ports: frozenset[int] = frozenset()

    @staticmethod
    def load(path: Path, org_id: str) -> "CompliancePolicy":
        allowed, denied = set(), set()
        for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2 or parts[0] not in ("allow", "deny"):
                raise ValidationError(
                    "policy", f"{path}:{line_no}: expected 'allow|deny <port>'")
            port = int(parts[1])
            (allowed if parts[0] == "allow" else denied).add(port)
        return CompliancePolicy(org_id, frozenset(allowed), frozenset(denied))


def load_policies(policy_dir: Optional[Path]) -> dict[str, CompliancePolicy]:
    policies = {}
    if policy_dir and Path(policy_dir).is_dir():
        for path in sorted(Path(policy_dir).glob("*.policy")):
            org_id = path.stem
            policies[org_id] = CompliancePolicy.load(path, org_id)
    return policies


# -- scan-export ingestion -------------------------------------------------

@dataclass
class IngestReport:
    observations: list[HostObservation] = field(default_factory=list)
    skips: list[tuple[int, str]] = field(default_factory=list)


def _observation_from_line(data: dict, resolver: Optional[OrgResolver],
                           interactive: bool, now: datetime) -> HostObservation:
    ip = data.get("ip")
    if not ip:
        raise ValidationError("ip", "missing")
    addr = ipaddress.ip_address(ip)
    if addr.version == 6 and not interactive:
        raise ValidationError("ip", "IPv6 only accepted from interactive scans")
    observed_at = parse_ts(data["observed_at"])
    if observed_at > now + OBSERVATION_SKEW:
        raise ValidationError("observed_at", "in the future")
    ports = []
    seen_ports = set()
    for entry in data.get("ports", []):
        port = int(entry["port"])
        if not 1 <= port <= 65535:
            raise ValidationError("port", f"{port} outside 1..65535")
        if port in seen_ports:
            raise ValidationError("port", f"duplicate port {port}")
        seen_ports.add(port)
        ports.append(PortInfo(port, entry.get("protocol", ""),
                              entry.get("banner")))
    tls_data = data.get("tls")
    tls = None
    if tls_data:
        tls = TlsInfo(TlsProtocol(tls_data["min_protocol"]),
                      tls_data.get("cert_sig_alg", ""),
                      parse_ts(tls_data["cert_expiry"]))
    cves = tuple(data.get("cves", []))
    for cve in cves:
        if not CVE_PATTERN.fullmatch(cve):
            raise ValidationError("cves", f"malformed CVE id {cve!r}")
    hostname = data.get("hostname")
    org_id = resolver.resolve(ip, hostname) if resolver else "unattributed"
    return HostObservation(org_id=org_id, ip=ip, observed_at=observed_at,
                           open_ports=tuple(ports), tls=tls,
                           detected_cves=cves, hostname=hostname)


def ingest_scan_export(text: str, resolver: Optional[OrgResolver] = None,
                       interactive: bool = False,
                       now: Optional[datetime] = None) -> IngestReport:
    """Parse a JSON-lines scan export; malformed lines are skipped by number."""
    now = now or utcnow()
    report = IngestReport()
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            data = json.loads(stripped)
            if not isinstance(data, dict):
                raise ValidationError("line", "not a JSON object")
            report.observations.append(
                _observation_from_line(data, resolver, interactive, now))
        except (ValidationError, ValueError, KeyError, TypeError) as exc:
            report.skips.append((line_no, str(exc)))
    return report


def parse_incident_stats(text: str,
                         source: Optional[SourceDescriptor] = None
                         ) -> tuple[list[IncidentStat], list[tuple[int, str]]]:
    """Parse incident statistics (JSON lines of year/month/sector/count)."""
    source = source or SourceDescriptor("incident-stats",
                                    SourceClass.PUBLIC_BODY)
    stats, skips = [], []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            data = json.loads(stripped)
            stats.append(IncidentStat(
                (int(data["year"]), int(data["month"])),
                data["sector"], int(data["count"]), source))
        except (ValidationError, ValueError, KeyError, TypeError) as exc:
            skips.append((line_no, str(exc)))
    return stats, skips


class ObservationStore:
    """Per-organization host observations and incident stats, log-backed."""

    def __init__(self, log_path: Optional[Path] = None):
        self._by_org: dict[str, list[HostObservation]] = {}
        self._incidents: list[IncidentStat] = []
        self._seen: set[str] = set()
        self._lock = threading.Lock()
        self._log = EventLog(log_path) if log_path else None

    def add_observation(self, obs: HostObservation) -> bool:
        """Idempotent on content: replaying an export changes nothing."""
        key = canonical_json(obs.to_dict())
        with self._lock:
            if key in self._seen:
                return False
            if self._log is not None:
                self._log.append({"t": "obs", **obs.to_dict()})
            self._seen.add(key)
            self._by_org.setdefault(obs.org_id, []).append(obs)
            return True

    def add_incident_stat(self, stat: IncidentStat) -> None:
        with self._lock:
            if self._log is not None:
                self._log.append({
                    "t": "incident",
                    "year": stat.period[0], "month": stat.period[1],
                    "sector": stat.sector, "count": stat.incident_count,
                    "source": stat.source.to_dict(),
                })
            self._incidents.append(stat)

    def org_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._by_org)

    def observations_before(self, org_id: str,
                            as_of: datetime) -> list[HostObservation]:
        with self._lock:
            rows = list(self._by_org.get(org_id, ()))
        rows = [obs for obs in rows if obs.observed_at < as_of]
        rows.sort(key=lambda o: (o.observed_at, o.ip))
        return rows

    def incident_rate(self, sector: str, as_of: datetime,
                      months: int = 12) -> float:
        """Incidents per month for a sector over the trailing window."""
        anchor = (as_of.year, as_of.month)
        with self._lock:
            stats = list(self._incidents)
        total = 0
        for stat in stats:
            if stat.sector != sector:
                continue
            offset = (anchor[0] - stat.period[0]) * 12 + (anchor[1] - stat.period[1])
            if 1 <= offset <= months:
                total += stat.incident_count
        return total / months

    def replay(self) -> int:
        if self._log is None:
            return 0
        count = 0
        for event in self._log.replay():
            if event.get("t") == "obs":
                obs = HostObservation.from_dict(event)
                self._seen.add(canonical_json(obs.to_dict()))
                self._by_org.setdefault(obs.org_id, []).append(obs)
            elif event.get("t") == "incident":
                self._incidents.append(IncidentStat(
                    (event["year"], event["month"]), event["sector"],
                    event["count"], SourceDescriptor.from_dict(event["source"])))
            count += 1
        return count


# -- finding derivation ----------------------------------------------------

def _cve_severity(score: Optional[float]) -> float:
    if score is not None and score >= 9.0:
        return 1.0
    if score is not None and score >= 7.0:
        return 0.8
    return 0.5


def _findings_for_observation(obs: HostObservation,
                              policy: Optional[CompliancePolicy],
                              score_of: Callable[[str], Optional[float]],
                              ) -> dict[str, tuple[FindingCategory, float, str, dict]]:
    """Candidate findings keyed by finding_id for one host snapshot."""
    out = {}
    base_evidence = {"ip": obs.ip, "observed_at": format_ts(obs.observed_at)}

    if obs.tls and obs.tls.min_protocol == TlsProtocol.SSLV3:
        rule = "tls_min_protocol_sslv3"
        fid = _finding_id(obs.org_id, rule, obs.ip)
        out[fid] = (FindingCategory.WEAK_TLS_PROTOCOL, 0.9, rule,
                    {**base_evidence, "min_protocol": "SSLv3"})
    if obs.tls and "sha1" in obs.tls.cert_sig_alg.lower():
        rule = "cert_signature_sha1"
        fid = _finding_id(obs.org_id, rule, obs.ip)
        out[fid] = (FindingCategory.WEAK_CERT_SIGNATURE, 0.6, rule,
                    {**base_evidence, "cert_sig_alg": obs.tls.cert_sig_alg})
    for cve in obs.detected_cves:
        rule = "detected_cve"
        fid = _finding_id(obs.org_id, rule, f"{obs.ip}|{cve}")
        score = score_of(cve)
        out[fid] = (FindingCategory.KNOWN_CVE, _cve_severity(score), rule,
                    {**base_evidence, "cve_id": cve, "base_score": score})
    for port in obs.open_ports:
        if policy and port.port in policy.denied_ports:
            rule = "denied_port_open"
            fid = _finding_id(obs.org_id, rule, f"{obs.ip}|{port.port}")
            out[fid] = (FindingCategory.COMPLIANCE_VIOLATION, 0.7, rule,
                        {**base_evidence, "port": port.port})
        if (policy and policy.allowed_ports
                and port.port not in policy.allowed_ports):
            rule = "port_not_allow_listed"
            fid = _finding_id(obs.org_id, rule, f"{obs.ip}|{port.port}")
            out[fid] = (FindingCategory.EXPOSED_SERVICE, 0.4, rule,
                        {**base_evidence, "port": port.port})
    return out


def derive_findings(org_id: str, observations: Iterable[HostObservation],
                    policy: Optional[CompliancePolicy],
                    score_of: Callable[[str], Optional[float]],
                    as_of: Optional[datetime] = None) -> list[Finding]:
    """Apply the rule table to an organization's observation history.

    Open findings derive from the latest observation per host; findings
    derivable only from superseded observations are returned closed.
    """
    as_of = as_of or utcnow()
    rows = sorted((o for o in observations if o.observed_at < as_of),
                  key=lambda o: (o.observed_at, o.ip))
    for obs in rows:
        if obs.org_id != org_id:
            raise ValidationError("org_id",
                                  f"observation for {obs.org_id}, not {org_id}")
    if not rows:
        return []
    latest: dict[str, HostObservation] = {}
    for obs in rows:
        latest[obs.ip] = obs

    open_candidates: dict[str, tuple] = {}
    for obs in latest.values():
        open_candidates.update(_findings_for_observation(obs, policy, score_of))
    closed_candidates: dict[str, tuple] = {}
    for obs in rows:
        if latest[obs.ip] is obs:
            continue
        for fid, payload in _findings_for_observation(
                obs, policy, score_of).items():
            if fid not in open_candidates:
                closed_candidates[fid] = payload

    newest = max(obs.observed_at for obs in rows)
    stale_rule = "no_recent_scan"
    stale_fid = _finding_id(org_id, stale_rule, "org")
    stale_evidence = {"newest_observation": format_ts(newest)}
    if as_of - newest > STALE_AFTER:
        open_candidates[stale_fid] = (FindingCategory.STALE_OBSERVATION, 0.2,
                                      stale_rule, stale_evidence)
    else:
        times = sorted(obs.observed_at for obs in rows)
        had_gap = any(b - a > STALE_AFTER for a, b in zip(times, times[1:]))
        if had_gap:
            closed_candidates[stale_fid] = (
                FindingCategory.STALE_OBSERVATION, 0.2, stale_rule,
                stale_evidence)

    findings = []
    for fid, (category, severity, rule, evidence) in open_candidates.items():
        findings.append(Finding(fid, org_id, category, severity, evidence,
                                open=True, rule=rule))
    for fid, (category, severity, rule, evidence) in closed_candidates.items():
        findings.append(Finding(fid, org_id, category, severity, evidence,
                                open=False, rule=rule))
    findings.sort(key=lambda f: (f.category.value, f.finding_id))
    return findings


# -- countermeasure score ---------------------------------------------------

def countermeasure_score(findings: Iterable[Finding],
                         scenario: ScenarioClass,
                         vector_of: Callable[[str], object] = lambda cve: None,
                         cap: float = COUNTERMEASURE_CAP,
                         overrides: Optional[dict] = None) -> float:
    """Credit in [0, 1], reduced by open findings mapped to the scenario."""
    weighted = 0.0
    for finding in findings:
        if not finding.open:
            continue
        vector = None
        if finding.category == FindingCategory.KNOWN_CVE:
            vector = vector_of(finding.evidence.get("cve_id", ""))
        weights = scenario_weights(finding.category.value, vector, overrides)
        weight = weights.get(scenario, 0.0)
        if weight > 0.0:
            weighted += finding.severity * weight
    return max(0.0, 1.0 - weighted / cap)


# -- source rating -----------------------------------------------------------

def rate_source(history: list[tuple[int, int]], window: int = 10) -> float:
    """Laplace-smoothed corroboration ratio over the trailing periods."""
    if not history:
        raise ValidationError("history", "must be non-empty")
    recent = history[-window:]
    delivered = sum(d for d, _ in recent)
    corroborated = sum(c for _, c in recent)
    if corroborated > delivered:
        raise ValidationError("history", "corroborated exceeds delivered")
    return (corroborated + 1) / (delivered + 2)


# -- duplicate-candidate clustering ------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_HASH_BUCKETS = 16


def _record_embedding(title: str, value: str, published_at: datetime,
                      month_origin: int) -> np.ndarray:
    vec = np.zeros(_HASH_BUCKETS + 1, dtype=np.float64)
    for token in _TOKEN_RE.findall(f"{title} {value}".lower()):
        bucket = zlib.crc32(token.encode("utf-8")) % _HASH_BUCKETS
        vec[bucket] += 1.0
    months = published_at.year * 12 + (published_at.month - 1)
    vec[_HASH_BUCKETS] = float(months - month_origin)
    return vec


@dataclass
class DedupeCluster:
    indices: list[int]
    record_ids: list[str]
    intra_distance: float
    duplicate_candidate: bool


def dedupe_candidates(records: list, seed: int = 1337, max_iter: int = 25,
                      distance_threshold: float = 0.5) -> list[DedupeCluster]:
    """k-means duplicate-candidate clustering; flags, never deletes.

    k = ceil(sqrt(n/2)) with a fixed seed, so identical input yields the
    identical clustering.  Tight clusters (mean distance to centroid below
    the threshold) are flagged for human review.
    """
    n = len(records)
    if n == 0:
        return []
    titles = [getattr(r, "title", "") for r in records]
    values = [_identity_value(r) for r in records]
    stamps = [getattr(r, "published_at", utcnow()) for r in records]
    ids = [getattr(r, "record_id", str(i)) for i, r in enumerate(records)]
    if n == 1:
        return [DedupeCluster([0], [ids[0]], 0.0, False)]

    month_origin = min(s.year * 12 + (s.month - 1) for s in stamps)
    X = np.stack([_record_embedding(t, v, s, month_origin)
                  for t, v, s in zip(titles, values, stamps)])
    k = max(1, math.ceil(math.sqrt(n / 2)))
    rng = np.random.default_rng(seed)
    centers0 = X[rng.choice(n, size=k, replace=False)].copy()
    labels, centers = kernels.kmeans_run(X, centers0, max_iter)

    clusters = []
    for j in range(k):
        members = [int(i) for i in np.nonzero(labels == j)[0]]
        if not members:
            continue
        dists = [float(np.sqrt(((X[i] - centers[j]) ** 2).sum()))
                 for i in members]
        mean_dist = sum(dists) / len(dists)
        clusters.append(DedupeCluster(
            indices=members,
            record_ids=[ids[i] for i in members],
            intra_distance=mean_dist,
            duplicate_candidate=mean_dist < distance_threshold and len(members) > 1,
        ))
    return clusters


def _identity_value(record) -> str:
    payload = getattr(record, "payload", None)
    if payload is None:
        return ""
    identity = payload.identity()
    return " ".join(str(v) for v in identity.values())
