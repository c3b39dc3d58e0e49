"""Deduplicating threat-record store with event-log persistence.

Concurrency: one writer at a time, any number of readers.  Records are
immutable values, and queries read a consistent snapshot taken under the
lock, so a reader never observes a half-applied upsert.
"""

from __future__ import annotations

import threading
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Optional

from .errors import ValidationError
from .eventlog import EventLog, read_snapshot, write_snapshot
from .model import (IndicatorDetail, IocType, RecordKind, UnifiedThreatRecord,
                    merge_records)
from .util import utcnow


class UpsertResult(str, Enum):
    INSERTED = "inserted"
    MERGED = "merged"
    DUPLICATE = "duplicate"


class ThreatStore:
    def __init__(self, log_path: Optional[Path] = None):
        self._records: dict[str, UnifiedThreatRecord] = {}
        self._lock = threading.Lock()
        self._log = EventLog(log_path) if log_path else None

    def __len__(self) -> int:
        return len(self._records)

    def get(self, record_id: str) -> Optional[UnifiedThreatRecord]:
        return self._records.get(record_id)

    def upsert_record(self, rec: UnifiedThreatRecord,
                      now: Optional[datetime] = None) -> UpsertResult:
        """Insert or merge one record; idempotent for identical content."""
        rec.validate(now or utcnow())
        with self._lock:
            existing = self._records.get(rec.record_id)
            if existing is not None:
                merged = merge_records(existing, rec)
                if merged == existing:
                    return UpsertResult.DUPLICATE
                result, final = UpsertResult.MERGED, merged
            else:
                result, final = UpsertResult.INSERTED, rec
            # Log append is the commit point; the index update follows it so a
            # crash in between is repaired by replay, never lost.
            if self._log is not None:
                self._log.append(final.to_dict())
            self._records[rec.record_id] = final
            return result

    def query_records(self,
                      kind: Optional[RecordKind] = None,
                      sector_tag: Optional[str] = None,
                      time_range: Optional[tuple[datetime, datetime]] = None,
                      ioc_type: Optional[IocType] = None,
                      ) -> list[UnifiedThreatRecord]:
        """Conjunctive filter; newest first, ties broken by record_id."""
        if time_range is not None:
            start, end = time_range
            if start > end:
                raise ValidationError("time_range", "start after end")
        with self._lock:
            snapshot = list(self._records.values())
        results = []
        for rec in snapshot:
            if kind is not None and rec.kind != kind:
                continue
            if sector_tag is not None and sector_tag not in rec.sector_tags:
                continue
            if time_range is not None and not (
                    time_range[0] <= rec.published_at <= time_range[1]):
                continue
            if ioc_type is not None and not (
                    isinstance(rec.payload, IndicatorDetail)
                    and rec.payload.ioc_type == ioc_type):
                continue
            results.append(rec)
        results.sort(key=lambda r: r.record_id)
        results.sort(key=lambda r: r.published_at, reverse=True)
        return results

    def all_records(self) -> list[UnifiedThreatRecord]:
        with self._lock:
            return list(self._records.values())

    # -- persistence -------------------------------------------------------

    def replay(self) -> int:
        """Rebuild state from the event log; returns events applied."""
        if self._log is None:
            return 0
        count = 0
        for event in self._log.replay():
            rec = UnifiedThreatRecord.from_dict(event)
            with self._lock:
                existing = self._records.get(rec.record_id)
                final = merge_records(existing, rec) if existing else rec
                self._records[rec.record_id] = final
            count += 1
        return count

    def save_snapshot(self, path: Path) -> None:
        with self._lock:
            payload = {"records": [r.to_dict() for r in self._records.values()]}
        write_snapshot(path, payload)

    def load_snapshot(self, path: Path) -> bool:
        payload = read_snapshot(path)
        if payload is None:
            return False
        with self._lock:
            self._records = {
                rec["record_id"]: UnifiedThreatRecord.from_dict(rec)
                for rec in payload["records"]
            }
        return True
