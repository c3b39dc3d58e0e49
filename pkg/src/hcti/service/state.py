"""Platform state: store wiring, replay, and the stores facade the risk
engine queries.

All mutations funnel through the per-store single writers; reads serve from
immutable values.  Restart replays every event log before traffic is
accepted, and replaying from empty reproduces the state exactly.
"""

from __future__ import annotations

import threading
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

from ..eamodel import EAGraph, affected_processes, load_ea_model
from ..errors import NotFoundError, ValidationError
from ..eventlog import EventLog
from ..ingest import RawDocument, parse_document
from ..model import (AdvisoryDetail, RecordKind, SourceClass, SourceDescriptor,
                     UnifiedThreatRecord, VulnerabilityDetail)
from ..outside import (CompliancePolicy, Finding, OrgResolver,
                       derive_findings, ingest_scan_export, load_policies,
                       parse_incident_stats)
from ..risk.engine import RiskAssessment, assess, what_if
from ..risk.forest import TreeEnsemble
from ..scenarios import ScenarioClass
from ..store import ThreatStore, UpsertResult
from ..textintel import (KnowledgeGraph, Relation, extract_iocs, link_mentions,
                         strip_html)
from ..util import parse_ts, sha16, utcnow
from .config import PlatformConfig

MENTION_WINDOW = timedelta(days=30)

# Static remediation stub per finding category; rule-mapped text, not AI.
REMEDIATIONS = {
    "exposed_service": "Close the port or move the service behind the VPN; "
                       "add it to the allow-list if intentional.",
    "weak_tls_protocol": "Disable SSLv3 on the endpoint and require TLS 1.2 "
                         "or newer.",
    "weak_cert_signature": "Reissue the certificate with a SHA-256 family "
                           "signature.",
    "known_cve": "Apply the vendor patch or isolate the host until patched.",
    "compliance_violation": "Shut down the denied service; document an "
                            "exception if it must stay.",
    "stale_observation": "Schedule a fresh outside scan; evidence is older "
                         "than 30 days.",
}

# Ports/banners that indicate medical-device infrastructure rather than IT.
_MEDICAL_PORTS = {104, 2575, 11112}
_MEDICAL_BANNER_TOKENS = ("dicom", "hl7", "pacs")


def finding_department(finding: Finding) -> str:
    port = finding.evidence.get("port")
    if port in _MEDICAL_PORTS:
        return "medical_device"
    banner = str(finding.evidence.get("banner", "")).lower()
    if any(token in banner for token in _MEDICAL_BANNER_TOKENS):
        return "medical_device"
    return "it"


class PlatformState:
    """Everything the API and CLI operate on; also the risk stores facade."""

    def __init__(self, config: PlatformConfig):
        self.config = config
        data = config.data_dir
        self.threats = ThreatStore(data / "cti.log")
        self.kg = KnowledgeGraph(data / "kg.log")
        from ..outside import ObservationStore
        self.observations = ObservationStore(data / "observations.log")
        self._assessment_log = EventLog(data / "assessments.log")
        self._verdict_log = EventLog(data / "verdicts.log")
        self._metrics_log = EventLog(data / "metrics.log")
        self._latest_assessment: dict[str, dict] = {}
        self._verdicts: dict[str, list[dict]] = {}
        self._latest_metrics: Optional[dict] = None
        self._write_lock = threading.Lock()

        self.resolver = (OrgResolver.load(config.org_mapping)
                         if config.org_mapping else None)
        self.policies = load_policies(config.policy_dir)
        self.ea_graphs: dict[str, EAGraph] = {}
        if config.ea_dir:
            for path in sorted(Path(config.ea_dir).glob("*.ea")):
                graph = load_ea_model(path)
                self.ea_graphs[graph.org_id] = graph
        self.models: dict[ScenarioClass, TreeEnsemble] = {}
        self._load_models(data / "models")

    def _load_models(self, model_dir: Path):
        import json
        if not model_dir.is_dir():
            return
        for path in sorted(model_dir.glob("*.json")):
            try:
                scenario = ScenarioClass(path.stem)
            except ValueError:
                continue
            self.models[scenario] = TreeEnsemble.from_dict(
                json.loads(path.read_text()))

    def replay(self) -> dict:
        """Restore all state from the event logs; called before serving."""
        counts = {
            "threat_records": self.threats.replay(),
            "kg_events": self.kg.replay(),
            "observation_events": self.observations.replay(),
        }
        n = 0
        for event in self._assessment_log.replay():
            self._latest_assessment[event["org_id"]] = event
            n += 1
        counts["assessments"] = n
        n = 0
        for event in self._verdict_log.replay():
            self._verdicts.setdefault(event["org_id"], []).append(
                event["verdict"])
            n += 1
        counts["verdicts"] = n
        n = 0
        for event in self._metrics_log.replay():
            self._latest_metrics = event
            n += 1
        counts["metrics"] = n
        return counts

    # -- stores facade (consumed by hcti.risk) ------------------------------

    def known_org(self, org_id: str) -> bool:
        return org_id in self.ea_graphs or org_id in self.observations.org_ids()

    def org_ids(self) -> list[str]:
        return sorted(set(self.ea_graphs) | set(self.observations.org_ids()))

    def observations_before(self, org_id: str, as_of: datetime):
        return self.observations.observations_before(org_id, as_of)

    def policy_for(self, org_id: str) -> Optional[CompliancePolicy]:
        return self.policies.get(org_id)

    def _vulnerability_records(self, cve_id: str, as_of: datetime):
        records = []
        for rec in self.threats.all_records():
            if (rec.kind == RecordKind.VULNERABILITY
                    and isinstance(rec.payload, VulnerabilityDetail)
                    and rec.payload.cve_id == cve_id
                    and rec.published_at < as_of):
                records.append(rec)
        records.sort(key=lambda r: (-(r.payload.base_score or -1.0),
                                    r.record_id))
        return records

    def cvss_score(self, cve_id: str, as_of: datetime) -> Optional[float]:
        for rec in self._vulnerability_records(cve_id, as_of):
            if rec.payload.base_score is not None:
                return rec.payload.base_score
        return None

    def cvss_vector(self, cve_id: str, as_of: datetime):
        for rec in self._vulnerability_records(cve_id, as_of):
            if rec.payload.cvss_vector is not None:
                return rec.payload.cvss_vector
        return None

    def incident_rate(self, sector: str, as_of: datetime,
                      months: int = 12) -> float:
        return self.observations.incident_rate(sector, as_of, months)

    def mention_count(self, org_id: str, sector: str, as_of: datetime,
                      days: int = 30) -> int:
        """Mention edges from documents tagged for the sector (or naming the
        org) whose records fall in the trailing window."""
        window_start = as_of - timedelta(days=days)
        count = 0
        for edge in self.kg.edges():
            if edge.relation != Relation.MENTIONS:
                continue
            rec = self.threats.get(edge.provenance)
            if rec is None:
                continue
            if not (window_start <= rec.published_at < as_of):
                continue
            if sector in rec.sector_tags or org_id in rec.title:
                count += 1
        return count

    def ea_graph(self, org_id: str) -> Optional[EAGraph]:
        return self.ea_graphs.get(org_id)

    def org_sector(self, org_id: str) -> str:
        return self.config.sector

    def scenario_overrides(self) -> dict:
        return self.config.scenario_map_overrides or {}

    def countermeasure_cap(self) -> float:
        return self.config.countermeasure_cap

    def impact_weights(self) -> dict:
        return self.config.impact_weights

    # -- operations ----------------------------------------------------------

    def findings_for(self, org_id: str,
                     as_of: Optional[datetime] = None) -> list[Finding]:
        if not self.known_org(org_id):
            raise NotFoundError("org", org_id)
        as_of = as_of or utcnow()
        return derive_findings(
            org_id, self.observations_before(org_id, as_of),
            self.policy_for(org_id),
            lambda cve: self.cvss_score(cve, as_of), as_of)

    def ingest_cti(self, doc: RawDocument) -> dict:
        result = parse_document(doc)
        inserted = merged = duplicate = 0
        with self._write_lock:
            for rec in sorted(result.records, key=lambda r: r.record_id):
                outcome = self.threats.upsert_record(rec)
                if outcome == UpsertResult.INSERTED:
                    inserted += 1
                elif outcome == UpsertResult.MERGED:
                    merged += 1
                else:
                    duplicate += 1
        return {
            "records": len(result.records),
            "skips": len(result.skips),
            "findings": 0,
            "detail": {"inserted": inserted, "merged": merged,
                       "duplicate": duplicate,
                       "skip_reasons": [s.reason for s in result.skips]},
        }

    def ingest_scan(self, text: str, interactive: bool = False) -> dict:
        report = ingest_scan_export(text, self.resolver, interactive)
        with self._write_lock:
            for obs in report.observations:
                self.observations.add_observation(obs)
        orgs = sorted({obs.org_id for obs in report.observations})
        open_findings = 0
        for org_id in orgs:
            open_findings += sum(1 for f in self.findings_for(org_id) if f.open)
        return {
            "records": len(report.observations),
            "skips": len(report.skips),
            "findings": open_findings,
            "detail": {"orgs": orgs,
                       "skip_lines": [line for line, _ in report.skips]},
        }

    def ingest_incidents(self, text: str) -> dict:
        """Load sector incident statistics (JSON lines)."""
        stats, skips = parse_incident_stats(text)
        with self._write_lock:
            for stat in stats:
                self.observations.add_incident_stat(stat)
        return {"records": len(stats), "skips": len(skips), "findings": 0,
                "detail": {"skip_lines": [line for line, _ in skips]}}

    def ingest_brief(self, text: str, source_id: str, link: bool = False,
                     html: bool = False,
                     published_at: Optional[datetime] = None) -> dict:
        """Store a natural-language brief and its extracted mentions."""
        body = strip_html(text) if html else text
        mentions = extract_iocs(body)
        published = published_at or utcnow()
        title = body.strip().splitlines()[0][:120] if body.strip() else "brief"
        record = UnifiedThreatRecord(
            kind=RecordKind.THREAT_BRIEF,
            source=SourceDescriptor(source_id, SourceClass.NEWS_BLOG),
            published_at=published,
            title=title,
            sector_tags=frozenset([self.config.sector]),
            payload=AdvisoryDetail(publisher=source_id,
                                   tracking_id=sha16(body),
                                   summary=body[:280]),
        )
        with self._write_lock:
            self.threats.upsert_record(record)
            link_stats = (link_mentions(self.kg, mentions, record.record_id,
                                        store=self.threats)
                          if link else {"nodes_added": 0, "edges_added": 0})
        return {
            "record_id": record.record_id,
            "mentions": [m.to_dict() for m in mentions],
            **link_stats,
        }

    def run_assessment(self, org_id: str,
                       as_of: Optional[datetime] = None) -> RiskAssessment:
        as_of = as_of or utcnow()
        model = self._model_for_org()
        result = assess(self, org_id, as_of, model=model)
        payload = result.to_dict()
        with self._write_lock:
            self._assessment_log.append(payload)
            self._latest_assessment[org_id] = payload
        return result

    def _model_for_org(self):
        # One model per scenario is supported at the engine level; the
        # service passes a single shared model only when every scenario has
        # the same artifact, else the fallback predictor applies.
        if not self.models:
            return None
        unique = {id(m) for m in self.models.values()}
        if len(unique) == 1 and len(self.models) == len(ScenarioClass):
            return next(iter(self.models.values()))
        return None

    def run_what_if(self, org_id: str, overrides: list[dict],
                    as_of: Optional[datetime] = None) -> RiskAssessment:
        if as_of is None:
            latest = self._latest_assessment.get(org_id)
            as_of = parse_ts(latest["assessed_at"]) if latest else utcnow()
        return what_if(self, org_id, as_of, overrides,
                       model=self._model_for_org())

    def latest_assessment(self, org_id: str) -> Optional[dict]:
        return self._latest_assessment.get(org_id)

    def add_verdict(self, org_id: str, verdict: dict) -> None:
        if not self.known_org(org_id):
            raise NotFoundError("org", org_id)
        with self._write_lock:
            self._verdict_log.append({"org_id": org_id, "verdict": verdict})
            self._verdicts.setdefault(org_id, []).append(verdict)

    def verdicts(self, org_id: str) -> list[dict]:
        if not self.known_org(org_id):
            raise NotFoundError("org", org_id)
        return list(self._verdicts.get(org_id, ()))

    def record_metrics(self, report: dict) -> None:
        with self._write_lock:
            self._metrics_log.append(report)
            self._latest_metrics = report

    def latest_metrics(self) -> Optional[dict]:
        return self._latest_metrics

    def ea_view(self, org_id: str) -> dict:
        """EA graph plus the per-finding affected-process map for the UI."""
        graph = self.ea_graphs.get(org_id)
        if graph is None:
            raise NotFoundError("ea_model", org_id)
        findings = [f for f in self.findings_for(org_id) if f.open]
        finding_processes = {}
        finding_techs = {}
        for finding in findings:
            hits = affected_processes(graph, finding)
            finding_processes[finding.finding_id] = sorted(
                {proc for proc, _ in hits})
            finding_techs[finding.finding_id] = sorted(
                {path[-1] for _, path in hits})
        return {
            **graph.to_dict(),
            "finding_processes": finding_processes,
            "finding_technology": finding_techs,
        }
