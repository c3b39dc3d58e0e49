"""Parsers normalizing pre-structured CTI documents into unified records.

Four formats are parsed: STIX 2.x JSON bundles (pragmatic subset: indicator
objects with simple comparison patterns plus vulnerability objects with CVE
references), MISP event exports, CSAF advisories, and NVD-style CVE records.
IODEF/X-ARF/VERIS/OpenIoC exist only as reserved format hints.

Every parser is total over well-formed-enough input: unsupported or broken
objects are skipped with a reason and counted, so that records emitted plus
objects skipped always equals objects present.  Only a structurally invalid
document (or an NVD record without a CVE id) is a hard parse error.
"""

from __future__ import annotations

import ipaddress
import json
import re
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional

from .cvss import compute_cvss_base, parse_cvss_vector
from .errors import ParseError, ValidationError
from .model import (AdvisoryDetail, IndicatorDetail, IocType, ProductDescriptor,
                    RecordKind, SourceClass, SourceDescriptor,
                    UnifiedThreatRecord, VulnerabilityDetail, CVE_PATTERN)
from .util import parse_ts, utcnow


class FormatHint(str, Enum):
    STIX = "stix"
    MISP = "misp"
    CSAF = "csaf"
    NVD_CVE = "nvd_cve"
    UNKNOWN = "unknown"
    # Reserved: recognized names, not parsed in v1.
    IODEF = "iodef"
    XARF = "xarf"
    VERIS = "veris"
    OPENIOC = "openioc"


_PARSED_FORMATS = (FormatHint.STIX, FormatHint.MISP, FormatHint.CSAF,
                   FormatHint.NVD_CVE)


@dataclass(frozen=True)
class RawDocument:
    format_hint: FormatHint
    data: bytes
    fetched_from: SourceDescriptor
    fetched_at: datetime

    def __post_init__(self):
        if not self.data:
            raise ValidationError("data", "document bytes must be non-empty")


@dataclass
class Skip:
    ref: str
    reason: str


@dataclass
class ParseResult:
    records: list[UnifiedThreatRecord] = field(default_factory=list)
    skips: list[Skip] = field(default_factory=list)

    @property
    def objects_present(self) -> int:
        return len(self.records) + len(self.skips)


def _load_json(doc: RawDocument) -> dict:
    try:
        data = json.loads(doc.data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from None
    if not isinstance(data, dict):
        raise ParseError("top-level JSON value is not an object")
    return data


def detect_format(doc: RawDocument) -> FormatHint:
    """Trust a non-unknown hint, else sniff top-level structure markers."""
    if doc.format_hint != FormatHint.UNKNOWN:
        return doc.format_hint
    try:
        data = json.loads(doc.data)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return FormatHint.UNKNOWN
    if not isinstance(data, dict):
        return FormatHint.UNKNOWN
    if data.get("type") == "bundle":
        return FormatHint.STIX
    if "Event" in data:
        return FormatHint.MISP
    if isinstance(data.get("document"), dict) and "csaf_version" in data["document"]:
        return FormatHint.CSAF
    if "cveMetadata" in data or "cve" in data:
        return FormatHint.NVD_CVE
    return FormatHint.UNKNOWN


# -- STIX ----------------------------------------------------------------

# Simple comparison patterns only: [<object-path> = '<value>']
_STIX_PATTERN = re.compile(r"^\s*\[\s*([\w.:'-]+?)\s*=\s*'([^']*)'\s*\]\s*$")

_STIX_PATH_TYPES = {
    "ipv4-addr:value": IocType.IPV4,
    "ipv6-addr:value": IocType.IPV6,
    "domain-name:value": IocType.DOMAIN,
    "url:value": IocType.URL,
    "file:hashes.'MD5'": IocType.MD5,
    "file:hashes.MD5": IocType.MD5,
    "file:hashes.'SHA-1'": IocType.SHA1,
    "file:hashes.SHA1": IocType.SHA1,
    "file:hashes.'SHA-256'": IocType.SHA256,
    "file:hashes.SHA256": IocType.SHA256,
}

_LOWERCASE_TYPES = (IocType.DOMAIN, IocType.MD5, IocType.SHA1, IocType.SHA256)


def _canonical_ioc(ioc_type: IocType, value: str) -> str:
    if ioc_type in _LOWERCASE_TYPES:
        return value.lower()
    return value


def _opt_ts(value: Optional[str], fallback: datetime) -> datetime:
    if not value:
        return fallback
    try:
        return parse_ts(value)
    except ValueError:
        return fallback


def parse_stix_bundle(doc: RawDocument) -> ParseResult:
    data = _load_json(doc)
    result = ParseResult()
    for index, obj in enumerate(data.get("objects", [])):
        ref = obj.get("id", f"objects[{index}]") if isinstance(obj, dict) else f"objects[{index}]"
        if not isinstance(obj, dict) or not obj.get("id") or not obj.get("type"):
            result.skips.append(Skip(ref, "missing required id/type"))
            continue
        obj_type = obj["type"]
        if obj_type == "indicator":
            match = _STIX_PATTERN.match(obj.get("pattern", ""))
            if not match:
                result.skips.append(Skip(ref, "unsupported pattern"))
                continue
            path, value = match.groups()
            ioc_type = _STIX_PATH_TYPES.get(path)
            if ioc_type is None:
                result.skips.append(Skip(ref, f"unsupported pattern path {path}"))
                continue
            first_seen = _opt_ts(obj.get("valid_from") or obj.get("created"),
                                 doc.fetched_at)
            last_seen = max(first_seen,
                            _opt_ts(obj.get("valid_until"), first_seen))
            confidence = obj.get("confidence")
            detail = IndicatorDetail(
                ioc_type=ioc_type,
                value=_canonical_ioc(ioc_type, value),
                confidence=confidence / 100.0 if isinstance(
                    confidence, (int, float)) else 0.5,
                first_seen=first_seen,
                last_seen=last_seen,
            )
            result.records.append(UnifiedThreatRecord(
                kind=RecordKind.INDICATOR,
                source=doc.fetched_from,
                published_at=_opt_ts(obj.get("created"), doc.fetched_at),
                title=obj.get("name") or f"{ioc_type.value} indicator",
                payload=detail,
            ))
        elif obj_type == "vulnerability":
            cve_id = None
            for ext in obj.get("external_references", []):
                if ext.get("source_name") == "cve" and ext.get("external_id"):
                    cve_id = ext["external_id"]
                    break
            if cve_id is None and CVE_PATTERN.fullmatch(obj.get("name", "")):
                cve_id = obj["name"]
            if cve_id is None:
                result.skips.append(Skip(ref, "vulnerability without CVE reference"))
                continue
            result.records.append(UnifiedThreatRecord(
                kind=RecordKind.VULNERABILITY,
                source=doc.fetched_from,
                published_at=_opt_ts(obj.get("created"), doc.fetched_at),
                title=obj.get("name") or cve_id,
                payload=VulnerabilityDetail(cve_id=cve_id),
            ))
        else:
            result.skips.append(Skip(ref, f"unsupported object type {obj_type}"))
    return result


# -- MISP ----------------------------------------------------------------

_MISP_HASH_TYPES = {"md5": IocType.MD5, "sha1": IocType.SHA1,
                    "sha256": IocType.SHA256}


def _misp_ioc_type(attr_type: str, value: str) -> Optional[IocType]:
    if attr_type in ("ip-dst", "ip-src"):
        try:
            addr = ipaddress.ip_address(value)
        except ValueError:
            return None
        return IocType.IPV4 if addr.version == 4 else IocType.IPV6
    if attr_type == "domain":
        return IocType.DOMAIN
    if attr_type == "url":
        return IocType.URL
    if attr_type == "email-src":
        return IocType.EMAIL
    return _MISP_HASH_TYPES.get(attr_type)


def parse_misp_event(doc: RawDocument) -> ParseResult:
    data = _load_json(doc)
    event = data.get("Event")
    if not isinstance(event, dict):
        raise ParseError("missing top-level Event object")
    result = ParseResult()
    sector_tags = frozenset(
        ["healthcare"] if any(
            "health" in (tag.get("name") or "").lower()
            for tag in event.get("Tag", [])) else [])
    event_ts = _opt_ts(event.get("date"), doc.fetched_at)
    title = event.get("info") or "MISP event"
    for index, attr in enumerate(event.get("Attribute", [])):
        ref = attr.get("uuid", f"Attribute[{index}]") if isinstance(attr, dict) else f"Attribute[{index}]"
        if not isinstance(attr, dict) or "type" not in attr or "value" not in attr:
            result.skips.append(Skip(ref, "missing required type/value"))
            continue
        ioc_type = _misp_ioc_type(attr["type"], str(attr["value"]))
        if ioc_type is None:
            result.skips.append(Skip(ref, f"unmapped attribute type {attr['type']}"))
            continue
        stamp = attr.get("timestamp")
        seen = (datetime.fromtimestamp(int(stamp), tz=timezone.utc)
                if stamp else event_ts)
        detail = IndicatorDetail(
            ioc_type=ioc_type,
            value=_canonical_ioc(ioc_type, str(attr["value"])),
            confidence=0.7 if attr.get("to_ids", True) else 0.3,
            first_seen=seen,
            last_seen=seen,
        )
        result.records.append(UnifiedThreatRecord(
            kind=RecordKind.INDICATOR,
            source=doc.fetched_from,
            published_at=event_ts,
            title=title,
            sector_tags=sector_tags,
            payload=detail,
        ))
    return result


# -- CSAF ----------------------------------------------------------------

def _csaf_vector(entry: dict) -> Optional[str]:
    for score in entry.get("scores", []):
        for key in ("cvss_v3", "cvss_v3_1", "cvss_v3_0"):
            block = score.get(key)
            if isinstance(block, dict) and block.get("vectorString"):
                return block["vectorString"]
    return None


def parse_csaf(doc: RawDocument) -> ParseResult:
    data = _load_json(doc)
    document = data.get("document")
    if not isinstance(document, dict):
        raise ParseError("missing top-level document object")
    tracking = document.get("tracking", {})
    published = _opt_ts(
        tracking.get("current_release_date")
        or tracking.get("initial_release_date"), doc.fetched_at)
    title = document.get("title") or "CSAF advisory"
    publisher = (document.get("publisher") or {}).get("name", "unknown")
    references = tuple(
        ref["url"] for ref in document.get("references", []) if ref.get("url"))
    result = ParseResult()
    result.records.append(UnifiedThreatRecord(
        kind=RecordKind.ADVISORY,
        source=doc.fetched_from,
        published_at=published,
        title=title,
        references=references,
        payload=AdvisoryDetail(
            publisher=publisher,
            tracking_id=tracking.get("id", ""),
            summary=next((n.get("text", "") for n in document.get("notes", [])
                          if n.get("category") == "summary"), ""),
        ),
    ))
    for index, entry in enumerate(data.get("vulnerabilities", [])):
        ref = f"vulnerabilities[{index}]"
        cve_id = entry.get("cve") if isinstance(entry, dict) else None
        if not cve_id:
            result.skips.append(Skip(ref, "vulnerability entry without CVE id"))
            continue
        vector_text = _csaf_vector(entry)
        vector = None
        base_score = None
        if vector_text:
            vector = parse_cvss_vector(vector_text)
            base_score = compute_cvss_base(vector)
        result.records.append(UnifiedThreatRecord(
            kind=RecordKind.VULNERABILITY,
            source=doc.fetched_from,
            published_at=published,
            title=entry.get("title") or cve_id,
            payload=VulnerabilityDetail(
                cve_id=cve_id, cvss_vector=vector, base_score=base_score),
        ))
    return result


# -- NVD-style CVE records -----------------------------------------------

def _products_from_cpe(criteria: str) -> Optional[ProductDescriptor]:
    parts = criteria.split(":")
    if len(parts) < 6 or parts[0] != "cpe":
        return None
    version = parts[5] if parts[5] not in ("*", "-") else "*"
    return ProductDescriptor(vendor=parts[3], product=parts[4],
                             version_range=version)


def parse_nvd_cve(doc: RawDocument) -> ParseResult:
    data = _load_json(doc)
    if "cveMetadata" in data:
        meta = data["cveMetadata"]
        cve_id = meta.get("cveId")
        published = _opt_ts(meta.get("datePublished"), doc.fetched_at)
        cna = (data.get("containers") or {}).get("cna", {})
        vector_text = None
        for metric in cna.get("metrics", []):
            for key in ("cvssV3_1", "cvssV3_0"):
                block = metric.get(key)
                if isinstance(block, dict) and block.get("vectorString"):
                    vector_text = block["vectorString"]
                    break
        products = []
        for aff in cna.get("affected", []):
            vendor, product = aff.get("vendor"), aff.get("product")
            if not vendor or not product:
                continue
            versions = ", ".join(
                v.get("version", "*") for v in aff.get("versions", [])) or "*"
            products.append(ProductDescriptor(vendor, product, versions))
    elif "cve" in data:
        cve = data["cve"]
        cve_id = cve.get("id") or (cve.get("CVE_data_meta") or {}).get("ID")
        published = _opt_ts(cve.get("published"), doc.fetched_at)
        vector_text = None
        metrics = cve.get("metrics", {})
        for key in ("cvssMetricV31", "cvssMetricV30"):
            for metric in metrics.get(key, []):
                block = metric.get("cvssData", {})
                if block.get("vectorString"):
                    vector_text = block["vectorString"]
                    break
            if vector_text:
                break
        products = []
        for config in cve.get("configurations", []):
            for node in config.get("nodes", []):
                for match in node.get("cpeMatch", []):
                    desc = _products_from_cpe(match.get("criteria", ""))
                    if desc:
                        products.append(desc)
    else:
        raise ParseError("neither cveMetadata nor cve present")
    if not cve_id:
        raise ParseError("missing CVE id")
    vector = parse_cvss_vector(vector_text) if vector_text else None
    result = ParseResult()
    result.records.append(UnifiedThreatRecord(
        kind=RecordKind.VULNERABILITY,
        source=doc.fetched_from,
        published_at=published,
        title=cve_id,
        payload=VulnerabilityDetail(
            cve_id=cve_id,
            cvss_vector=vector,
            base_score=compute_cvss_base(vector) if vector else None,
            affected_products=tuple(products),
        ),
    ))
    return result


# -- dispatch and feed manifest ------------------------------------------

_PARSERS = {
    FormatHint.STIX: parse_stix_bundle,
    FormatHint.MISP: parse_misp_event,
    FormatHint.CSAF: parse_csaf,
    FormatHint.NVD_CVE: parse_nvd_cve,
}


def parse_document(doc: RawDocument) -> ParseResult:
    """Route a document to its parser; unknown/reserved formats are rejected."""
    detected = detect_format(doc)
    parser = _PARSERS.get(detected)
    if parser is None:
        raise ValidationError("format", f"unsupported format {detected.value}")
    return parser(doc)


def ingest_documents(store, docs: list[RawDocument]):
    """Parse and upsert a batch, serialized by (fetched_at, record_id).

    Returns (upsert results, skips) so callers can report counts.
    """
    parsed: list[tuple[RawDocument, ParseResult]] = []
    for doc in docs:
        parsed.append((doc, parse_document(doc)))
    parsed.sort(key=lambda pair: pair[0].fetched_at)
    results, skips = [], []
    for doc, outcome in parsed:
        for rec in sorted(outcome.records, key=lambda r: r.record_id):
            results.append(store.upsert_record(rec))
        skips.extend(outcome.skips)
    return results, skips


@dataclass(frozen=True)
class FeedEntry:
    location: str
    format_hint: FormatHint
    source_id: str
    poll_seconds: int


def load_feed_manifest(path: Path) -> list[FeedEntry]:
    """Manifest lines: <url-or-path> <format> <source-id> <poll-seconds>."""
    entries = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 4:
            raise ValidationError("manifest", f"line {line_no}: expected 4 fields")
        location, hint, source_id, poll = parts
        try:
            poll_seconds = int(poll)
        except ValueError:
            raise ValidationError(
                "manifest", f"line {line_no}: poll interval not an integer") from None
        entries.append(FeedEntry(location, FormatHint(hint), source_id, poll_seconds))
    return entries


def fetch_feed_entry(entry: FeedEntry,
                     base_dir: Optional[Path] = None) -> RawDocument:
    """Materialize one manifest entry as a RawDocument (file path or URL)."""
    if entry.location.startswith(("http://", "https://")):
        with urllib.request.urlopen(entry.location, timeout=30) as resp:
            data = resp.read()
    else:
        path = Path(entry.location)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        data = path.read_bytes()
    return RawDocument(
        format_hint=entry.format_hint,
        data=data,
        fetched_from=SourceDescriptor(entry.source_id,
                                      SourceClass.PRESTRUCTURED_FEED),
        fetched_at=utcnow(),
    )
