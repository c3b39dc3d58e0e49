"""Exception types shared across the platform."""

from __future__ import annotations

from typing import Optional


class HctiError(Exception):
    """Base class for all platform errors."""

    code = "internal_error"


class ValidationError(HctiError):
    """A value violated a documented invariant; names the offending field."""

    code = "invalid_value"

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(HctiError):
    """A document could not be parsed; carries a byte offset when known."""

    code = "parse_error"

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class NotFoundError(HctiError):
    """A referenced entity (org, node, finding, assessment) does not exist."""

    code = "not_found"

    def __init__(self, kind: str, key: str):
        super().__init__(f"unknown {kind}: {key}")
        self.kind = kind
        self.key = key


class EventLogCorruption(HctiError):
    """An event log line failed to decode; replay refuses to continue."""

    code = "corrupt_event_log"

    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
