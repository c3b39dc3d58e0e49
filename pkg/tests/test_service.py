import json
from pathlib import Path

import jsonschema
import pytest
from fastapi.testclient import TestClient

from hcti.errors import EventLogCorruption
from hcti.service.app import create_app
from hcti.service.config import PlatformConfig, load_config
from hcti.service.state import PlatformState
from hcti.util import canonical_json

from conftest import FIXTURES, make_platform

GOLDEN = Path(__file__).parent / "golden"
SCHEMA = json.loads(
    (Path(__file__).parent.parent / "docs" / "api_schema.json").read_text())

AS_OF = "2026-03-11T00:00:00Z"


def _validate(name: str, instance):
    schema = {"$ref": f"#/$defs/{name}", "$defs": SCHEMA["$defs"]}
    jsonschema.validate(instance=instance, schema=schema)


@pytest.fixture
def client(tmp_path):
    state = make_platform(tmp_path)
    return TestClient(create_app(state), raise_server_exceptions=False), state


def _ingest_fixture_corpus(client, manifest):
    for name, info in manifest["documents"].items():
        if info["format"] == "unknown":
            continue
        response = client.post("/api/ingest/cti", json={
            "content": json.loads((FIXTURES / name).read_text()),
            "format_hint": info["format"],
            "source_id": info["source_id"],
            "fetched_at": "2026-03-02T00:00:00Z",
        })
        assert response.status_code == 200, response.text
    scan = client.post("/api/ingest/scan", json={
        "content": (FIXTURES / "scan_export.jsonl").read_text()})
    assert scan.status_code == 200


def test_csaf_ingest_summary(client):
    api, _ = client
    response = api.post("/api/ingest/cti", json={
        "content": json.loads((FIXTURES / "csaf_advisory.json").read_text()),
        "format_hint": "csaf",
        "source_id": "healthsec-cert",
    })
    body = response.json()
    assert response.status_code == 200
    assert body["records"] == 3 and body["skips"] == 0
    _validate("ingest_summary", body)


def test_garbage_ingest_is_422_and_stateless(client):
    api, state = client
    before = len(state.threats)
    response = api.post("/api/ingest/cti", json={"content": "complete garbage"})
    assert response.status_code == 422
    body = response.json()
    _validate("error", body)
    assert len(state.threats) == before


def test_missing_token_is_401(tmp_path):
    state = make_platform(tmp_path, auth_token="sekrit")
    api = TestClient(create_app(state), raise_server_exceptions=False)
    response = api.post("/api/ingest/cti", json={"content": {}})
    assert response.status_code == 401
    _validate("error", response.json())
    ok = api.post("/api/ingest/cti",
                  headers={"Authorization": "Bearer sekrit"},
                  json={"content": json.loads(
                      (FIXTURES / "stix_minimal.json").read_text()),
                      "format_hint": "stix"})
    assert ok.status_code == 200


def test_orgs_and_findings_flow(client, manifest):
    api, state = client
    _ingest_fixture_corpus(api, manifest)
    orgs = api.get("/api/orgs").json()
    _validate("orgs", orgs)
    assert "st-vincent" in orgs["orgs"]
    assert "unattributed" in orgs["orgs"]

    response = api.get("/api/orgs/st-vincent/findings")
    body = response.json()
    _validate("findings_response", body)
    open_findings = [f for f in body["findings"] if f["open"]]
    # the three rule hits, plus staleness relative to the current clock
    assert {f["category"] for f in open_findings} == {
        "weak_tls_protocol", "known_cve", "compliance_violation",
        "stale_observation"}
    assert len(open_findings) == 4
    assert all(f["remediation"] for f in body["findings"])
    assert {f["department"] for f in open_findings} == {"it"}

    missing = api.get("/api/orgs/ghost-hospital/findings")
    assert missing.status_code == 404
    _validate("error", missing.json())


def test_assessment_flow_and_what_if_identity(client, manifest):
    api, state = client
    _ingest_fixture_corpus(api, manifest)

    none_yet = api.get("/api/orgs/st-vincent/assessment")
    assert none_yet.status_code == 404
    assert none_yet.json()["code"] == "no_assessment"

    from hcti.util import parse_ts
    state.run_assessment("st-vincent", parse_ts(AS_OF))

    got = api.get("/api/orgs/st-vincent/assessment")
    assert got.status_code == 200
    assessment = got.json()
    _validate("assessment", assessment)
    assert assessment["n"] == 3
    assert assessment["hypothetical"] is False

    hypo = api.post("/api/orgs/st-vincent/what-if",
                    json={"overrides": []}).json()
    _validate("assessment", hypo)
    assert hypo["hypothetical"] is True
    base = dict(assessment)
    base.pop("hypothetical")
    trial = dict(hypo)
    trial.pop("hypothetical")
    assert base == trial


def test_what_if_never_persists(client, manifest):
    api, state = client
    _ingest_fixture_corpus(api, manifest)
    from hcti.util import parse_ts
    state.run_assessment("st-vincent", parse_ts(AS_OF))
    baseline = api.get("/api/orgs/st-vincent/assessment").json()

    findings = api.get("/api/orgs/st-vincent/findings").json()["findings"]
    tls = next(f for f in findings if f["category"] == "weak_tls_protocol")
    hypo = api.post("/api/orgs/st-vincent/what-if", json={
        "overrides": [{"action": "close_finding",
                       "finding_id": tls["finding_id"]}]}).json()
    assert hypo["aggregate"] < baseline["aggregate"]
    # the persisted assessment is untouched
    again = api.get("/api/orgs/st-vincent/assessment").json()
    assert again == baseline


def test_what_if_unknown_finding_404(client, manifest):
    api, state = client
    _ingest_fixture_corpus(api, manifest)
    from hcti.util import parse_ts
    state.run_assessment("st-vincent", parse_ts(AS_OF))
    response = api.post("/api/orgs/st-vincent/what-if", json={
        "overrides": [{"action": "close_finding", "finding_id": "zzz"}]})
    assert response.status_code == 404


def test_verdict_round_trip(client, manifest):
    api, state = client
    _ingest_fixture_corpus(api, manifest)
    verdict = {"reviewer": "j.doe", "verdict": "accurate forecast",
               "incident_ref": "INC-443", "score_was_justified": True}
    posted = api.post("/api/orgs/st-vincent/verdict", json=verdict)
    assert posted.status_code == 201
    _validate("verdict_stored", posted.json())
    fetched = api.get("/api/orgs/st-vincent/verdicts").json()
    _validate("verdicts_response", fetched)
    assert fetched["verdicts"] == [verdict]


def test_kg_neighbors_endpoint(client, manifest):
    api, state = client
    brief = api.post("/api/ingest/brief", json={
        "text": (FIXTURES / "brief1.txt").read_text(),
        "source_id": "hc-briefs",
        "published_at": "2026-03-05T00:00:00Z",
        "link": True,
    })
    assert brief.status_code == 200
    record_id = brief.json()["record_id"]
    response = api.get(f"/api/kg/nodes/document:{record_id}/neighbors")
    body = response.json()
    _validate("neighbors_response", body)
    assert "indicator:203.0.113.7" in body["neighbors"]
    assert "vulnerability:CVE-2023-4966" in body["neighbors"]

    missing = api.get("/api/kg/nodes/document:nope/neighbors")
    assert missing.status_code == 404


def test_metrics_endpoint(client):
    api, state = client
    assert api.get("/api/metrics/evaluation").status_code == 404
    report = {"train_count": 10, "test_count": 5, "predictor": "fallback",
              "mae": 0.2, "mse": 0.05, "rmse": 0.223, "mape_pct": None,
              "mape_excluded": 3, "accuracy": 0.8,
              "train_end": AS_OF, "test_end": AS_OF}
    state.record_metrics(report)
    body = api.get("/api/metrics/evaluation").json()
    _validate("metrics_report", body)
    assert body == report


def test_ea_view_endpoint(client, manifest):
    api, state = client
    _ingest_fixture_corpus(api, manifest)
    body = api.get("/api/orgs/st-vincent/ea").json()
    _validate("ea_view", body)
    layers = {}
    for node in body["nodes"]:
        layers[node["layer"]] = layers.get(node["layer"], 0) + 1
    assert layers == {"organizational": 6, "application": 5, "technology": 9}
    open_findings = [f for f in api.get(
        "/api/orgs/st-vincent/findings").json()["findings"] if f["open"]]
    cve = next(f for f in open_findings if f["category"] == "known_cve")
    assert body["finding_processes"][cve["finding_id"]] == [
        "p-admission", "p-pharmacy", "p-treatment"]


def test_restart_replay_identical_responses(tmp_path, manifest):
    state = make_platform(tmp_path)
    api = TestClient(create_app(state), raise_server_exceptions=False)
    _ingest_fixture_corpus(api, manifest)
    from hcti.util import parse_ts
    state.run_assessment("st-vincent", parse_ts(AS_OF))
    before_assessment = api.get("/api/orgs/st-vincent/assessment").content
    before_findings = api.get("/api/orgs/st-vincent/findings").content

    reborn = make_platform(tmp_path)
    api2 = TestClient(create_app(reborn), raise_server_exceptions=False)
    assert api2.get("/api/orgs/st-vincent/assessment").content == before_assessment
    assert api2.get("/api/orgs/st-vincent/findings").content == before_findings


def test_corrupt_event_log_refuses_startup(tmp_path, manifest):
    state = make_platform(tmp_path)
    api = TestClient(create_app(state), raise_server_exceptions=False)
    _ingest_fixture_corpus(api, manifest)
    log = tmp_path / "data" / "cti.log"
    with open(log, "a") as fh:
        fh.write("{broken\n")
    with pytest.raises(EventLogCorruption) as err:
        make_platform(tmp_path)
    assert err.value.line_no == sum(1 for _ in open(log))


def test_append_is_the_commit_point(tmp_path, manifest):
    """A record appended to the log but absent from the index (crash between
    the two) is restored by replay: the append is the durable commit."""
    state = make_platform(tmp_path)
    api = TestClient(create_app(state), raise_server_exceptions=False)
    _ingest_fixture_corpus(api, manifest)
    from hcti.model import IndicatorDetail, IocType, RecordKind, \
        UnifiedThreatRecord
    from hcti.model import SourceDescriptor, SourceClass
    from hcti.util import parse_ts
    t = parse_ts("2026-03-03T00:00:00Z")
    rec = UnifiedThreatRecord(
        kind=RecordKind.INDICATOR,
        source=SourceDescriptor("crash-src", SourceClass.PRESTRUCTURED_FEED),
        published_at=t, title="crash window record",
        payload=IndicatorDetail(IocType.IPV4, "203.0.113.200", 0.7, t, t))
    state.threats._log.append(rec.to_dict())  # crash before index update

    reborn = make_platform(tmp_path)
    assert reborn.threats.get(rec.record_id) is not None


def test_golden_response_bodies(tmp_path, manifest):
    state = make_platform(tmp_path)
    api = TestClient(create_app(state), raise_server_exceptions=False)
    _ingest_fixture_corpus(api, manifest)
    from hcti.util import parse_ts
    state.run_assessment("st-vincent", parse_ts(AS_OF))
    for name, path in (
            ("assessment", "assessment_st_vincent.json"),
            ("findings", "findings_st_vincent.json")):
        got = api.get(f"/api/orgs/st-vincent/{name}").content.decode()
        expected = (GOLDEN / path).read_text()
        assert got == expected, f"golden mismatch for {name}"


def test_incident_ingest_feeds_rate(tmp_path):
    state = make_platform(tmp_path)
    summary = state.ingest_incidents(
        '{"year": 2026, "month": 1, "sector": "healthcare", "count": 6}\n'
        '{"year": 2026, "month": 2, "sector": "healthcare", "count": 6}\n'
        'broken line\n')
    assert summary["records"] == 2 and summary["skips"] == 1
    from hcti.util import parse_ts
    rate = state.incident_rate("healthcare", parse_ts("2026-03-15T00:00:00Z"))
    assert rate == 12 / 12
    # replay restores incident stats
    reborn = make_platform(tmp_path)
    assert reborn.incident_rate("healthcare",
                                parse_ts("2026-03-15T00:00:00Z")) == rate


@pytest.mark.skipif(
    not (Path(__file__).parent.parent / "frontend" / "dist").is_dir(),
    reason="dashboard not built (cd frontend && npm run build)")
def test_dashboard_served_under_ui(tmp_path):
    state = make_platform(tmp_path)
    api = TestClient(create_app(state), raise_server_exceptions=False)
    response = api.get("/ui/")
    assert response.status_code == 200
    assert "hcti dashboard" in response.text
    assert api.get("/ui/assets/main.js").status_code == 200


def test_config_env_overrides(tmp_path, monkeypatch):
    config_file = tmp_path / "platform.json"
    config_file.write_text(json.dumps({
        "data_dir": str(tmp_path / "data"), "listen_port": 8400}))
    monkeypatch.setenv("HCTI_LISTEN_PORT", "9999")
    monkeypatch.setenv("HCTI_AUTH_TOKEN", "from-env")
    config = load_config(config_file)
    assert config.listen_port == 9999
    assert config.auth_token == "from-env"


def test_config_rejects_bad_values(tmp_path):
    config_file = tmp_path / "platform.json"
    config_file.write_text(json.dumps({
        "data_dir": str(tmp_path / "data"), "listen_port": 99999}))
    from hcti.errors import ValidationError
    with pytest.raises(ValidationError):
        load_config(config_file)
    config_file.write_text(json.dumps({
        "data_dir": str(tmp_path / "data"),
        "org_mapping": str(tmp_path / "missing.map")}))
    with pytest.raises(ValidationError):
        load_config(config_file)
