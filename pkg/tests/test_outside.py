import itertools
import random
from datetime import timedelta

import numpy as np
import pytest

from hcti.errors import ValidationError
from hcti.model import (IndicatorDetail, IocType, RecordKind,
                        UnifiedThreatRecord)
from hcti.outside import (CompliancePolicy, FindingCategory, HostObservation,
                          IncidentStat, OrgResolver, PortInfo, TlsInfo,
                          TlsProtocol, countermeasure_score, dedupe_candidates,
                          derive_findings, ingest_scan_export, load_policies,
                          rate_source)
from hcti.scenarios import ScenarioClass
from hcti.util import parse_ts

from conftest import FIXTURES, make_source

AS_OF = parse_ts("2026-03-11T00:00:00Z")
OBSERVED = parse_ts("2026-03-01T00:00:00Z")
NO_SCORES = lambda cve: None


def resolver():
    return OrgResolver.load(FIXTURES / "orgs.map")


def policy():
    return CompliancePolicy.load(FIXTURES / "policies" / "st-vincent.policy",
                                 "st-vincent")


def obs(ip="198.51.100.5", org="st-vincent", tls=None, ports=(), cves=(),
        observed_at=OBSERVED):
    return HostObservation(org_id=org, ip=ip, observed_at=observed_at,
                           open_ports=tuple(ports), tls=tls,
                           detected_cves=tuple(cves))


def test_empty_export():
    report = ingest_scan_export("", resolver(), now=AS_OF)
    assert report.observations == [] and report.skips == []


def test_single_mapped_host():
    line = ('{"ip": "198.51.100.9", "observed_at": "2026-03-01T00:00:00Z", '
            '"ports": [], "tls": null, "cves": []}')
    report = ingest_scan_export(line, resolver(), now=AS_OF)
    assert report.observations[0].org_id == "st-vincent"


def test_fixture_export_attribution(manifest):
    info = manifest["scan_export"]
    text = (FIXTURES / info["file"]).read_text()
    report = ingest_scan_export(text, resolver(), now=AS_OF)
    assert len(report.observations) == info["hosts"]
    assert not report.skips
    by_org = {}
    for o in report.observations:
        by_org[o.org_id] = by_org.get(o.org_id, 0) + 1
    assert by_org == info["orgs"]


def test_hostname_suffix_attribution():
    line = ('{"ip": "233.252.0.9", "hostname": "pacs.stvincent.example", '
            '"observed_at": "2026-03-01T00:00:00Z", "ports": []}')
    report = ingest_scan_export(line, resolver(), now=AS_OF)
    assert report.observations[0].org_id == "st-vincent"


def test_malformed_line_skipped_with_number():
    text = '{"ip": "198.51.100.9", "observed_at": "2026-03-01T00:00:00Z"}\nnot json\n'
    report = ingest_scan_export(text, resolver(), now=AS_OF)
    assert len(report.observations) == 1
    assert report.skips[0][0] == 2


def test_duplicate_port_rejected():
    line = ('{"ip": "198.51.100.9", "observed_at": "2026-03-01T00:00:00Z", '
            '"ports": [{"port": 443}, {"port": 443}]}')
    report = ingest_scan_export(line, resolver(), now=AS_OF)
    assert report.skips and "duplicate port" in report.skips[0][1]


def test_future_observation_rejected():
    line = ('{"ip": "198.51.100.9", "observed_at": "2026-03-20T00:00:00Z", '
            '"ports": []}')
    report = ingest_scan_export(line, resolver(), now=AS_OF)
    assert report.skips and "future" in report.skips[0][1]


def test_ipv6_only_from_interactive_scans():
    line = ('{"ip": "2001:db8::7", "observed_at": "2026-03-01T00:00:00Z", '
            '"ports": []}')
    assert ingest_scan_export(line, resolver(), now=AS_OF).skips
    report = ingest_scan_export(line, resolver(), interactive=True, now=AS_OF)
    assert report.observations and not report.skips


# -- finding rules -----------------------------------------------------------

def test_clean_observation_yields_no_open_findings():
    clean = obs(tls=TlsInfo(TlsProtocol.TLS1_3, "sha256RSA",
                            parse_ts("2027-01-01T00:00:00Z")),
                ports=[PortInfo(443, "https")])
    findings = derive_findings("st-vincent", [clean], policy(), NO_SCORES,
                               AS_OF)
    assert [f for f in findings if f.open] == []


def test_sslv3_rule():
    sslv3 = obs(tls=TlsInfo(TlsProtocol.SSLV3, "sha256RSA",
                            parse_ts("2027-01-01T00:00:00Z")))
    findings = [f for f in derive_findings("st-vincent", [sslv3], policy(),
                                           NO_SCORES, AS_OF) if f.open]
    assert len(findings) == 1
    assert findings[0].category == FindingCategory.WEAK_TLS_PROTOCOL
    assert findings[0].severity == 0.9


def test_sha1_cert_rule():
    sha1 = obs(tls=TlsInfo(TlsProtocol.TLS1_2, "sha1WithRSAEncryption",
                           parse_ts("2027-01-01T00:00:00Z")))
    findings = [f for f in derive_findings("st-vincent", [sha1], policy(),
                                           NO_SCORES, AS_OF) if f.open]
    assert [f.category for f in findings] == [FindingCategory.WEAK_CERT_SIGNATURE]
    assert findings[0].severity == 0.6


@pytest.mark.parametrize("score,severity", [
    (9.8, 1.0), (9.0, 1.0), (8.0, 0.8), (7.0, 0.8), (5.0, 0.5), (None, 0.5),
])
def test_cve_severity_tiers(score, severity):
    host = obs(cves=["CVE-2024-30100"])
    findings = [f for f in derive_findings(
        "st-vincent", [host], policy(), lambda cve: score, AS_OF) if f.open]
    assert findings[0].severity == severity


def test_stale_observation_rule():
    old = obs(observed_at=AS_OF - timedelta(days=45))
    findings = [f for f in derive_findings("st-vincent", [old], policy(),
                                           NO_SCORES, AS_OF) if f.open]
    assert [f.category for f in findings] == [FindingCategory.STALE_OBSERVATION]
    assert findings[0].severity == 0.2


def test_fixture_org_findings(manifest):
    text = (FIXTURES / "scan_export.jsonl").read_text()
    report = ingest_scan_export(text, resolver(), now=AS_OF)
    mine = [o for o in report.observations if o.org_id == "st-vincent"]
    findings = [f for f in derive_findings(
        "st-vincent", mine, policy(),
        lambda cve: 9.8 if cve == "CVE-2024-30100" else None, AS_OF) if f.open]
    severities = sorted(f.severity for f in findings)
    assert severities == [0.7, 0.9, 1.0]
    categories = {f.category for f in findings}
    assert categories == {FindingCategory.WEAK_TLS_PROTOCOL,
                          FindingCategory.KNOWN_CVE,
                          FindingCategory.COMPLIANCE_VIOLATION}


def test_derivation_is_deterministic_and_idempotent():
    text = (FIXTURES / "scan_export.jsonl").read_text()
    report = ingest_scan_export(text, resolver(), now=AS_OF)
    mine = [o for o in report.observations if o.org_id == "st-vincent"]
    first = derive_findings("st-vincent", mine, policy(), NO_SCORES, AS_OF)
    second = derive_findings("st-vincent", mine, policy(), NO_SCORES, AS_OF)
    assert [f.to_dict() for f in first] == [f.to_dict() for f in second]


def test_superseded_evidence_closes_finding():
    early = obs(tls=TlsInfo(TlsProtocol.SSLV3, "sha256RSA",
                            parse_ts("2027-01-01T00:00:00Z")),
                observed_at=OBSERVED)
    fixed = obs(tls=TlsInfo(TlsProtocol.TLS1_2, "sha256RSA",
                            parse_ts("2027-01-01T00:00:00Z")),
                observed_at=OBSERVED + timedelta(days=2))
    findings = derive_findings("st-vincent", [early, fixed], policy(),
                               NO_SCORES, AS_OF)
    weak = [f for f in findings
            if f.category == FindingCategory.WEAK_TLS_PROTOCOL]
    assert len(weak) == 1 and weak[0].open is False


def test_mixed_org_observations_rejected():
    with pytest.raises(ValidationError):
        derive_findings("st-vincent", [obs(), obs(org="mercy-clinic")],
                        policy(), NO_SCORES, AS_OF)


# -- countermeasure score ------------------------------------------------------

def _finding(category, severity, cve=None):
    from hcti.outside import Finding
    evidence = {"ip": "198.51.100.5"}
    if cve:
        evidence["cve_id"] = cve
    return Finding("f" + category.value, "org", category, severity, evidence,
                   open=True, rule="r")


def test_countermeasure_no_findings():
    assert countermeasure_score([], ScenarioClass.TAMPERING) == 1.0


def test_countermeasure_clamps_at_zero():
    findings = [_finding(FindingCategory.WEAK_TLS_PROTOCOL, 0.9)
                for _ in range(4)]
    assert countermeasure_score(findings, ScenarioClass.TAMPERING) == 0.0


def test_countermeasure_committed_formula():
    findings = [_finding(FindingCategory.WEAK_TLS_PROTOCOL, 0.9),
                _finding(FindingCategory.WEAK_CERT_SIGNATURE, 0.6)]
    c = countermeasure_score(findings, ScenarioClass.INFORMATION_DISCLOSURE)
    assert c == 1 - 1.5 / 3.0 == 0.5


def test_countermeasure_monotone_in_findings():
    pool = [_finding(FindingCategory.WEAK_TLS_PROTOCOL, 0.9),
            _finding(FindingCategory.WEAK_CERT_SIGNATURE, 0.6),
            _finding(FindingCategory.KNOWN_CVE, 1.0, cve="CVE-2024-1")]
    for size in range(len(pool)):
        for subset in itertools.combinations(pool, size):
            for extra in pool:
                if extra in subset:
                    continue
                for scenario in ScenarioClass:
                    assert countermeasure_score(list(subset) + [extra],
                                                scenario) <= \
                        countermeasure_score(list(subset), scenario)


def test_compliance_violations_do_not_map_to_scenarios():
    findings = [_finding(FindingCategory.COMPLIANCE_VIOLATION, 0.7)]
    for scenario in ScenarioClass:
        assert countermeasure_score(findings, scenario) == 1.0


# -- source rating -------------------------------------------------------------

def test_rate_source_default_when_nothing_delivered():
    assert rate_source([(0, 0), (0, 0)]) == 0.5


def test_rate_source_laplace():
    assert rate_source([(10, 10)]) == 11 / 12


def test_rate_source_empty_history_rejected():
    with pytest.raises(ValidationError):
        rate_source([])


def test_rate_source_non_decreasing_when_ratio_exceeds_score():
    history = [(5, 2)]
    score = rate_source(history)
    rng = random.Random(3)
    while len(history) < 10:
        d = rng.randrange(1, 8)
        c = min(d, int(score * d) + 1)  # ratio >= current score
        if c / d < score:
            c = d
        history.append((d, c))
        new_score = rate_source(history)
        assert new_score >= score
        score = new_score


# -- duplicate clustering -------------------------------------------------------

def _indicator(value, title, day):
    return UnifiedThreatRecord(
        kind=RecordKind.INDICATOR, source=make_source(),
        published_at=parse_ts(f"2026-01-{day:02d}T00:00:00Z"),
        title=title,
        payload=IndicatorDetail(IocType.IPV4, value, 0.7,
                                parse_ts("2026-01-01T00:00:00Z"),
                                parse_ts("2026-01-01T00:00:00Z")))


def test_identical_records_one_cluster():
    records = [_indicator("203.0.113.7", "same title", 5) for _ in range(5)]
    clusters = dedupe_candidates(records)
    assert len(clusters) == 1
    assert sorted(clusters[0].indices) == [0, 1, 2, 3, 4]
    assert clusters[0].duplicate_candidate is True


def test_two_distinct_groups_split():
    group_a = [_indicator("203.0.113.7", "ransomware callback endpoint", 3)
               for _ in range(4)]
    group_b = [_indicator("198.51.100.200", "phishing landing host", 20)
               for _ in range(4)]
    clusters = dedupe_candidates(group_a + group_b)
    assert len(clusters) == 2
    memberships = sorted(tuple(sorted(c.indices)) for c in clusters)
    assert memberships == [(0, 1, 2, 3), (4, 5, 6, 7)]


def test_single_record_single_cluster():
    clusters = dedupe_candidates([_indicator("203.0.113.7", "t", 1)])
    assert len(clusters) == 1
    assert clusters[0].indices == [0]
    assert clusters[0].duplicate_candidate is False


def test_clustering_deterministic():
    records = ([_indicator("203.0.113.7", "alpha beta", 3) for _ in range(3)]
               + [_indicator("198.51.100.1", "gamma delta", 25)
                  for _ in range(3)])
    a = dedupe_candidates(records)
    b = dedupe_candidates(records)
    assert [c.indices for c in a] == [c.indices for c in b]
    assert [c.intra_distance for c in a] == [c.intra_distance for c in b]


def test_incident_stat_validation():
    with pytest.raises(ValidationError):
        IncidentStat((2026, 1), "healthcare", -1, make_source())


def test_parse_incident_stats_lines():
    from hcti.outside import parse_incident_stats
    text = ('{"year": 2026, "month": 1, "sector": "healthcare", "count": 4}\n'
            '{"year": 2026, "month": 2, "sector": "healthcare", "count": 2}\n'
            'garbage\n')
    stats, skips = parse_incident_stats(text)
    assert [s.incident_count for s in stats] == [4, 2]
    assert skips[0][0] == 3


def test_incident_rate_trailing_window():
    from hcti.outside import ObservationStore, parse_incident_stats
    store = ObservationStore()
    lines = []
    for month in range(1, 13):  # 2025: 1 incident each month
        lines.append(f'{{"year": 2025, "month": {month}, '
                     f'"sector": "healthcare", "count": 1}}')
    lines.append('{"year": 2024, "month": 12, "sector": "healthcare", "count": 50}')
    lines.append('{"year": 2025, "month": 6, "sector": "finance", "count": 9}')
    stats, _ = parse_incident_stats("\n".join(lines))
    for stat in stats:
        store.add_incident_stat(stat)
    as_of = parse_ts("2026-01-15T00:00:00Z")
    # trailing 12 full months = 2025-01 .. 2025-12: twelve 1s, other rows out
    assert store.incident_rate("healthcare", as_of) == 1.0
    assert store.incident_rate("finance", as_of) == 9 / 12
    assert store.incident_rate("healthcare",
                               parse_ts("2027-06-01T00:00:00Z")) == 0.0


def test_policy_loader():
    p = policy()
    assert p.allowed_ports == frozenset({443, 3389})
    assert p.denied_ports == frozenset({3389})
    assert load_policies(FIXTURES / "policies")["st-vincent"].org_id == "st-vincent"
