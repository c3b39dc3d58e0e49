"""Append-only JSON-lines event log with strict replay.

All persistent state on the platform (threat records, graph triples, host
observations, assessments, verdicts) lives in logs of this shape.  Appending
a line is the commit point for every mutation; replaying a log from empty
reproduces the owning store exactly.  A line that fails to decode stops
replay with its line number so a damaged data dir is refused, not silently
truncated.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Iterator, Optional

from .errors import EventLogCorruption
from .util import canonical_json


class EventLog:
    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = None

    def append(self, event: dict) -> None:
        """Serialize canonically and append one line; flushed before returning."""
        line = canonical_json(event)
        with self._lock:
            if self._fh is None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._fh = open(self.path, "a", encoding="utf-8")
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def replay(self) -> Iterator[dict]:
        """Yield every event in append order; raise on the first corrupt line."""
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped:
                    raise EventLogCorruption(str(self.path), line_no, "blank line")
                try:
                    event = json.loads(stripped)
                except json.JSONDecodeError as exc:
                    raise EventLogCorruption(str(self.path), line_no,
                                             str(exc)) from None
                if not isinstance(event, dict):
                    raise EventLogCorruption(str(self.path), line_no,
                                             "event is not an object")
                yield event

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def write_snapshot(path: Path, payload: dict) -> None:
    """Atomic snapshot write (rename over temp file)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(canonical_json(payload) + "\n", encoding="utf-8")
    tmp.replace(path)


def read_snapshot(path: Path) -> Optional[dict]:
    path = Path(path)
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))
