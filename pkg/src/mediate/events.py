"""Event wire format shared by the orchestrator, the agility loop and the API.

Events come from exactly two sources: workflow monitoring and the field.
Timestamps are logical by default (a per-emitter monotone counter) so replays
and re-runs are byte-stable; externally supplied events carry their own
timestamps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import AgilityError

SOURCE_FIELD = "field"
SOURCE_MONITORING = "monitoring"
SOURCES = frozenset({SOURCE_FIELD, SOURCE_MONITORING})


@dataclass(frozen=True)
class Event:
    id: str
    source: str
    type: str
    subject: str
    attributes: dict[str, Any] = field(default_factory=dict)
    timestamp: float = 0.0

    def to_raw(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source,
            "type": self.type,
            "subject": self.subject,
            "attributes": dict(self.attributes),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "Event":
        source = str(raw.get("source", ""))
        if source not in SOURCES:
            raise AgilityError(f"event source must be one of {sorted(SOURCES)}, got {source!r}")
        return cls(
            id=str(raw.get("id", "")),
            source=source,
            type=str(raw.get("type", "")),
            subject=str(raw.get("subject", "")),
            attributes=dict(raw.get("attributes", {})),
            timestamp=float(raw.get("timestamp", 0.0)),
        )


class LogicalClock:
    """Monotone per-emitter counter used for deterministic event timestamps."""

    def __init__(self):
        self._counters: dict[str, int] = {}

    def tick(self, emitter: str) -> float:
        n = self._counters.get(emitter, 0) + 1
        self._counters[emitter] = n
        return float(n)


def load_event_log(path) -> list[Event]:
    """Read a replayable event log (YAML list of event records)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh.read())
    if isinstance(raw, dict):
        raw = raw.get("events", [])
    if not isinstance(raw, list):
        raise AgilityError(f"event log {path} must be a list of events")
    return [Event.from_raw(e) for e in raw]
