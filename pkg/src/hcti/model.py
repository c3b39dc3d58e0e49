"""Unified threat-record model: every ingestion path normalizes into these types.

Record identity is a content hash over a canonical serialization of the
fields that define the record (kind, source, title, payload identity), so
identical content from the same source always maps to the same record_id,
across restarts and ingestion order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import Optional, Union

from .cvss import CvssVector, compute_cvss_base, parse_cvss_vector, render_cvss_vector
from .errors import ValidationError
from .util import canonical_json, format_ts, parse_ts, sha16

CVE_PATTERN = re.compile(r"CVE-\d{4}-\d{4,}")
CLOCK_SKEW = timedelta(hours=24)

_DEFANG_MARKERS = ("[.]", "hxxp", "(at)")


class RecordKind(str, Enum):
    ADVISORY = "advisory"
    INDICATOR = "indicator"
    VULNERABILITY = "vulnerability"
    INCIDENT_REPORT = "incident_report"
    THREAT_BRIEF = "threat_brief"


class IocType(str, Enum):
    IPV4 = "ipv4"
    IPV6 = "ipv6"
    DOMAIN = "domain"
    URL = "url"
    MD5 = "md5"
    SHA1 = "sha1"
    SHA256 = "sha256"
    EMAIL = "email"


class SourceClass(str, Enum):
    PUBLIC_BODY = "public_body"
    MISP_INSTANCE = "misp_instance"
    PRESTRUCTURED_FEED = "prestructured_feed"
    CTI_PROVIDER = "cti_provider"
    CERT_NETWORK = "cert_network"
    NEWS_BLOG = "news_blog"
    SECTOR_ASSOCIATION = "sector_association"
    MANUFACTURER = "manufacturer"
    SCAN = "scan"


@dataclass(frozen=True)
class SourceDescriptor:
    source_id: str
    source_class: SourceClass
    # 0.5 until rated from corroboration history (outside.rate_source).
    quality_score: float = 0.5

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "source_class": self.source_class.value,
            "quality_score": self.quality_score,
        }

    @staticmethod
    def from_dict(data: dict) -> "SourceDescriptor":
        return SourceDescriptor(
            source_id=data["source_id"],
            source_class=SourceClass(data["source_class"]),
            quality_score=float(data.get("quality_score", 0.5)),
        )


@dataclass(frozen=True)
class ProductDescriptor:
    vendor: str
    product: str
    version_range: str = "*"

    def to_dict(self) -> dict:
        return {"vendor": self.vendor, "product": self.product,
                "version_range": self.version_range}

    @staticmethod
    def from_dict(data: dict) -> "ProductDescriptor":
        return ProductDescriptor(data["vendor"], data["product"],
                                 data.get("version_range", "*"))


@dataclass(frozen=True)
class AdvisoryDetail:
    publisher: str
    tracking_id: str = ""
    summary: str = ""

    kind_tag = "advisory"

    def identity(self) -> dict:
        return {"publisher": self.publisher, "tracking_id": self.tracking_id}

    def validate(self):
        if not self.publisher:
            raise ValidationError("publisher", "must be non-empty")

    def to_dict(self) -> dict:
        return {"publisher": self.publisher, "tracking_id": self.tracking_id,
                "summary": self.summary}

    @staticmethod
    def from_dict(data: dict) -> "AdvisoryDetail":
        return AdvisoryDetail(data["publisher"], data.get("tracking_id", ""),
                              data.get("summary", ""))


@dataclass(frozen=True)
class IndicatorDetail:
    ioc_type: IocType
    value: str
    confidence: float
    first_seen: datetime
    last_seen: datetime

    kind_tag = "indicator"

    def identity(self) -> dict:
        return {"ioc_type": self.ioc_type.value, "value": self.value}

    def validate(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence", f"{self.confidence} outside [0,1]")
        if self.first_seen > self.last_seen:
            raise ValidationError("first_seen", "after last_seen")
        if any(marker in self.value.lower() for marker in _DEFANG_MARKERS):
            raise ValidationError("value", f"not refanged: {self.value!r}")
        if self.ioc_type in (IocType.DOMAIN, IocType.MD5, IocType.SHA1,
                             IocType.SHA256) and self.value != self.value.lower():
            raise ValidationError("value", f"not lowercase: {self.value!r}")

    def to_dict(self) -> dict:
        return {
            "ioc_type": self.ioc_type.value,
            "value": self.value,
            "confidence": self.confidence,
            "first_seen": format_ts(self.first_seen),
            "last_seen": format_ts(self.last_seen),
        }

    @staticmethod
    def from_dict(data: dict) -> "IndicatorDetail":
        return IndicatorDetail(
            ioc_type=IocType(data["ioc_type"]),
            value=data["value"],
            confidence=float(data["confidence"]),
            first_seen=parse_ts(data["first_seen"]),
            last_seen=parse_ts(data["last_seen"]),
        )


@dataclass(frozen=True)
class VulnerabilityDetail:
    cve_id: str
    cvss_vector: Optional[CvssVector] = None
    base_score: Optional[float] = None
    affected_products: tuple[ProductDescriptor, ...] = ()

    kind_tag = "vulnerability"

    def identity(self) -> dict:
        return {"cve_id": self.cve_id}

    def validate(self):
        if not CVE_PATTERN.fullmatch(self.cve_id):
            raise ValidationError("cve_id", f"malformed: {self.cve_id!r}")
        if self.base_score is not None and not 0.0 <= self.base_score <= 10.0:
            raise ValidationError("base_score", f"{self.base_score} outside [0,10]")
        if self.cvss_vector is not None:
            expected = compute_cvss_base(self.cvss_vector)
            if self.base_score != expected:
                raise ValidationError(
                    "base_score",
                    f"{self.base_score} does not match vector score {expected}")

    def to_dict(self) -> dict:
        return {
            "cve_id": self.cve_id,
            "cvss_vector": render_cvss_vector(self.cvss_vector)
            if self.cvss_vector else None,
            "base_score": self.base_score,
            "affected_products": [p.to_dict() for p in self.affected_products],
        }

    @staticmethod
    def from_dict(data: dict) -> "VulnerabilityDetail":
        vector = data.get("cvss_vector")
        return VulnerabilityDetail(
            cve_id=data["cve_id"],
            cvss_vector=parse_cvss_vector(vector) if vector else None,
            base_score=data.get("base_score"),
            affected_products=tuple(
                ProductDescriptor.from_dict(p)
                for p in data.get("affected_products", [])),
        )


@dataclass(frozen=True)
class IncidentDetail:
    sector: str
    occurred_at: datetime
    description: str = ""
    confirmed: bool = False

    kind_tag = "incident"

    def identity(self) -> dict:
        return {"sector": self.sector, "occurred_at": format_ts(self.occurred_at)}

    def validate(self):
        if not self.sector:
            raise ValidationError("sector", "must be non-empty")

    def to_dict(self) -> dict:
        return {
            "sector": self.sector,
            "occurred_at": format_ts(self.occurred_at),
            "description": self.description,
            "confirmed": self.confirmed,
        }

    @staticmethod
    def from_dict(data: dict) -> "IncidentDetail":
        return IncidentDetail(data["sector"], parse_ts(data["occurred_at"]),
                              data.get("description", ""),
                              bool(data.get("confirmed", False)))


Payload = Union[AdvisoryDetail, IndicatorDetail, VulnerabilityDetail, IncidentDetail]

_PAYLOAD_TYPES = {
    "advisory": AdvisoryDetail,
    "indicator": IndicatorDetail,
    "vulnerability": VulnerabilityDetail,
    "incident": IncidentDetail,
}


@dataclass(frozen=True)
class UnifiedThreatRecord:
    """One normalized CTI item; immutable once constructed."""

    kind: RecordKind
    source: SourceDescriptor
    published_at: datetime
    title: str
    payload: Payload
    sector_tags: frozenset[str] = frozenset()
    references: tuple[str, ...] = ()
    record_id: str = ""

    def __post_init__(self):
        if not self.record_id:
            object.__setattr__(self, "record_id", self.compute_record_id())

    def compute_record_id(self) -> str:
        identity = {
            "kind": self.kind.value,
            "source": self.source.source_id,
            "title": self.title,
            "payload": self.payload.identity(),
        }
        return sha16(canonical_json(identity))

    def validate(self, now: datetime):
        if self.published_at > now + CLOCK_SKEW:
            raise ValidationError(
                "published_at",
                f"{format_ts(self.published_at)} is in the future")
        self.payload.validate()
        if self.record_id != self.compute_record_id():
            raise ValidationError("record_id", "does not match content hash")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "kind": self.kind.value,
            "source": self.source.to_dict(),
            "published_at": format_ts(self.published_at),
            "title": self.title,
            "sector_tags": sorted(self.sector_tags),
            "references": list(self.references),
            "payload_type": self.payload.kind_tag,
            "payload": self.payload.to_dict(),
        }

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    @staticmethod
    def from_dict(data: dict) -> "UnifiedThreatRecord":
        payload_cls = _PAYLOAD_TYPES[data["payload_type"]]
        return UnifiedThreatRecord(
            kind=RecordKind(data["kind"]),
            source=SourceDescriptor.from_dict(data["source"]),
            published_at=parse_ts(data["published_at"]),
            title=data["title"],
            payload=payload_cls.from_dict(data["payload"]),
            sector_tags=frozenset(data.get("sector_tags", [])),
            references=tuple(data.get("references", [])),
            record_id=data.get("record_id", ""),
        )


def merge_records(existing: UnifiedThreatRecord,
                  incoming: UnifiedThreatRecord) -> UnifiedThreatRecord:
    """Union references and sector tags, widen seen-windows, keep max confidence.

    Both records must share a record_id; scalar fields of the existing record
    win except where widening applies.
    """
    references = existing.references + tuple(
        r for r in incoming.references if r not in existing.references)
    payload = existing.payload
    if isinstance(payload, IndicatorDetail) and isinstance(
            incoming.payload, IndicatorDetail):
        payload = replace(
            payload,
            confidence=max(payload.confidence, incoming.payload.confidence),
            first_seen=min(payload.first_seen, incoming.payload.first_seen),
            last_seen=max(payload.last_seen, incoming.payload.last_seen),
        )
    return replace(
        existing,
        published_at=min(existing.published_at, incoming.published_at),
        sector_tags=existing.sector_tags | incoming.sector_tags,
        references=references,
        payload=payload,
    )
