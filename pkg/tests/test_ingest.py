import json

import pytest

from hcti.errors import ParseError, ValidationError
from hcti.ingest import (FormatHint, RawDocument, detect_format,
                         ingest_documents, load_feed_manifest, parse_csaf,
                         parse_document, parse_misp_event, parse_nvd_cve,
                         parse_stix_bundle)
from hcti.model import IocType, RecordKind
from hcti.store import ThreatStore
from hcti.util import parse_ts

from conftest import FIXTURES, make_doc, make_source


def test_detect_format_trusts_hint():
    doc = make_doc("unknown/notes.txt", hint=FormatHint.MISP)
    assert detect_format(doc) == FormatHint.MISP


def test_detect_format_corpus_matches_hand_labels(manifest):
    for name, info in manifest["documents"].items():
        doc = make_doc(name)
        assert detect_format(doc) == FormatHint(info["format"]), name


def test_empty_object_detects_unknown():
    assert detect_format(make_doc("unknown/empty_object.json")) == FormatHint.UNKNOWN


def test_stix_minimal_indicator():
    result = parse_stix_bundle(make_doc("stix_minimal.json"))
    assert len(result.records) == 1 and not result.skips
    rec = result.records[0]
    assert rec.kind == RecordKind.INDICATOR
    assert rec.payload.ioc_type == IocType.IPV4
    assert rec.payload.value == "203.0.113.7"


def test_stix_empty_bundle():
    result = parse_stix_bundle(make_doc("stix_empty.json"))
    assert result.records == [] and result.skips == []


def test_stix_bundle_counts(manifest):
    info = manifest["documents"]["stix_bundle.json"]
    result = parse_stix_bundle(make_doc("stix_bundle.json"))
    assert len(result.records) == info["records"]
    assert len(result.skips) == info["skips"]
    assert result.objects_present == info["objects"]
    kinds = sorted(r.kind.value for r in result.records)
    assert kinds == ["indicator", "indicator", "indicator", "vulnerability"]
    assert "malware" in result.skips[0].reason


def test_stix_confidence_scaling():
    result = parse_stix_bundle(make_doc("stix_bundle.json"))
    by_value = {r.payload.value: r for r in result.records
                if r.kind == RecordKind.INDICATOR}
    assert by_value["203.0.113.7"].payload.confidence == 0.8
    assert by_value["bad-clinic.example"].payload.confidence == 0.5


def test_stix_object_missing_type_is_skipped(fetched_at):
    doc = RawDocument(FormatHint.STIX, json.dumps({
        "type": "bundle", "id": "bundle--x",
        "objects": [{"id": "indicator--1"}],
    }).encode(), make_source(), fetched_at)
    result = parse_stix_bundle(doc)
    assert not result.records and len(result.skips) == 1


def test_stix_invalid_json_reports_offset(fetched_at):
    doc = RawDocument(FormatHint.STIX, b'{"type": "bundle", "objects": [',
                      make_source(), fetched_at)
    with pytest.raises(ParseError) as err:
        parse_stix_bundle(doc)
    assert err.value.offset is not None


def test_misp_event_counts(manifest):
    info = manifest["documents"]["misp_event.json"]
    result = parse_misp_event(make_doc("misp_event.json"))
    assert len(result.records) == info["records"]
    assert len(result.skips) == info["skips"]
    assert all(r.sector_tags == frozenset(["healthcare"])
               for r in result.records)


def test_misp_to_ids_controls_confidence():
    result = parse_misp_event(make_doc("misp_event.json"))
    by_value = {r.payload.value: r.payload.confidence for r in result.records}
    assert by_value["203.0.113.99"] == 0.7
    assert by_value["http://evil-labs.example/payload.bin"] == 0.3


def test_misp_single_domain():
    result = parse_misp_event(make_doc("misp_domain.json"))
    assert len(result.records) == 1
    rec = result.records[0]
    assert rec.payload.ioc_type == IocType.DOMAIN
    assert rec.payload.value == "evil.example"
    assert rec.payload.confidence == 0.7
    assert rec.sector_tags == frozenset()


def test_misp_zero_attributes(fetched_at):
    doc = RawDocument(FormatHint.MISP, json.dumps(
        {"Event": {"info": "empty", "date": "2026-01-01"}}).encode(),
        make_source(), fetched_at)
    assert parse_misp_event(doc).records == []


def test_misp_ip_syntax_discriminates_v6(fetched_at):
    doc = RawDocument(FormatHint.MISP, json.dumps({"Event": {
        "info": "v6", "date": "2026-01-01",
        "Attribute": [{"type": "ip-dst", "value": "2001:db8::7",
                       "to_ids": True}],
    }}).encode(), make_source(), fetched_at)
    result = parse_misp_event(doc)
    assert result.records[0].payload.ioc_type == IocType.IPV6


def test_csaf_advisory_counts(manifest):
    info = manifest["documents"]["csaf_advisory.json"]
    result = parse_csaf(make_doc("csaf_advisory.json"))
    assert len(result.records) == info["records"]
    kinds = [r.kind for r in result.records]
    assert kinds.count(RecordKind.ADVISORY) == 1
    assert kinds.count(RecordKind.VULNERABILITY) == 2


def test_csaf_vector_scored():
    result = parse_csaf(make_doc("csaf_advisory.json"))
    vulns = {r.payload.cve_id: r.payload for r in result.records
             if r.kind == RecordKind.VULNERABILITY}
    assert vulns["CVE-2024-30100"].base_score == 9.8
    assert vulns["CVE-2024-30101"].base_score is None


def test_csaf_without_vulnerabilities():
    result = parse_csaf(make_doc("csaf_no_vulns.json"))
    assert len(result.records) == 1
    assert result.records[0].kind == RecordKind.ADVISORY


def test_nvd_record(manifest):
    result = parse_nvd_cve(make_doc("nvd_cve.json"))
    rec = result.records[0]
    assert rec.payload.cve_id == "CVE-2021-44228"
    assert rec.payload.base_score == 10.0
    assert len(rec.payload.affected_products) == 3


def test_nvd_api_shape_without_vector(fetched_at):
    doc = RawDocument(FormatHint.NVD_CVE, json.dumps({
        "cve": {"id": "CVE-2020-12345", "published": "2020-05-01T00:00:00Z"},
    }).encode(), make_source(), fetched_at)
    rec = parse_nvd_cve(doc).records[0]
    assert rec.payload.cve_id == "CVE-2020-12345"
    assert rec.payload.base_score is None


def test_nvd_missing_cve_id_is_fatal(fetched_at):
    doc = RawDocument(FormatHint.NVD_CVE, json.dumps(
        {"cveMetadata": {}}).encode(), make_source(), fetched_at)
    with pytest.raises(ParseError):
        parse_nvd_cve(doc)


def test_unknown_format_rejected(fetched_at):
    doc = RawDocument(FormatHint.UNKNOWN, b"garbage bytes", make_source(),
                      fetched_at)
    with pytest.raises(ValidationError) as err:
        parse_document(doc)
    assert err.value.field == "format"


def test_reserved_format_rejected(fetched_at):
    doc = make_doc("unknown/iodef_like.xml", hint=FormatHint.IODEF)
    with pytest.raises(ValidationError):
        parse_document(doc)


def test_parsers_total_over_fuzzed_truncations(manifest):
    """No parser may abort on truncated fixture bytes; errors stay structured."""
    parse_able = [name for name, info in manifest["documents"].items()
                  if info["format"] != "unknown"]
    for name in parse_able:
        data = (FIXTURES / name).read_bytes()
        for cut in range(0, len(data), max(1, len(data) // 23)):
            doc = RawDocument(FormatHint(manifest["documents"][name]["format"]),
                              data[:cut] or b" ", make_source(),
                              parse_ts("2026-03-02T00:00:00Z"))
            try:
                parse_document(doc)
            except (ParseError, ValidationError):
                pass


def test_normalization_preserves_count(manifest):
    for name, info in manifest["documents"].items():
        if info["format"] == "unknown":
            continue
        result = parse_document(make_doc(name, hint=FormatHint(info["format"])))
        assert result.objects_present == info["objects"], name


def test_ingest_documents_is_deterministic_and_idempotent(manifest):
    docs = [make_doc(name, source_id=info["source_id"],
                     hint=FormatHint(info["format"]))
            for name, info in manifest["documents"].items()
            if info["format"] != "unknown"]
    store = ThreatStore()
    ingest_documents(store, docs)
    snapshot = {r.record_id: r.to_dict() for r in store.all_records()}
    ingest_documents(store, docs)
    assert {r.record_id: r.to_dict() for r in store.all_records()} == snapshot


def test_feed_manifest_loader():
    entries = load_feed_manifest(FIXTURES / "feeds.manifest")
    assert len(entries) == 8
    assert entries[0].format_hint == FormatHint.STIX
    assert entries[-1].source_id == "nvd"
