"""Shared helpers: UTC timestamps, canonical JSON, short content hashes."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone


def utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def parse_ts(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; 'Z' suffix and naive values map to UTC."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"not an ISO-8601 timestamp: {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_ts(dt: datetime) -> str:
    """Canonical timestamp form: UTC, second precision, Z suffix."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def canonical_json(obj) -> str:
    """Field-name-sorted, whitespace-free serialization used for hashing and logs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha16(text: str) -> str:
    """First 16 hex chars of SHA-256; the platform's deterministic id form."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
