"""Simulation event records and their newline-delimited JSON export.

Every observable change in a session is an Event with a monotonically
increasing sequence number, a simulated-minute timestamp, and a
kind-specific payload. The NDJSON form (one object per line, stable field
names, canonical key order) is the wire and archive format shared by the
engine, the metrics module, the service stream, and the dashboard.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .core import Severity, canonical_json


class EventKind(str, Enum):
    PATIENT_REVEALED = "PatientRevealed"
    AMBULANCE_AVAILABLE = "AmbulanceAvailable"
    CAPACITY_CHANGED = "CapacityChanged"
    ASSIGNED = "Assigned"
    DEPARTED = "Departed"
    ARRIVED = "Arrived"
    DIED = "Died"
    ASSIGNMENT_CANCELLED = "AssignmentCancelled"
    SUGGESTION_ISSUED = "SuggestionIssued"
    SUGGESTION_ACCEPTED = "SuggestionAccepted"
    SUGGESTION_DECLINED = "SuggestionDeclined"
    SESSION_ENDED = "SessionEnded"
    WARNING = "Warning"


#: Display palette: patients by severity, everything else informational.
SEVERITY_COLORS = {
    Severity.CRITICAL: "red",
    Severity.SEVERE: "yellow",
    Severity.MINOR: "green",
    Severity.DECEASED: "gray",
}


def severity_color(severity: Severity | None, kind: EventKind) -> str:
    if kind is EventKind.DIED:
        return SEVERITY_COLORS[Severity.DECEASED]
    if severity is not None:
        return SEVERITY_COLORS[severity]
    return "info"


@dataclass
class Event:
    seq: int
    time: float
    kind: EventKind
    patient_id: int | None = None
    hospital_id: int | None = None
    payload: dict = field(default_factory=dict)
    color: str = "info"

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "t": self.time,
            "kind": self.kind.value,
            "patient_id": self.patient_id,
            "hospital_id": self.hospital_id,
            "payload": self.payload,
            "color": self.color,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Event":
        return cls(
            seq=int(rec["seq"]),
            time=float(rec["t"]),
            kind=EventKind(rec["kind"]),
            patient_id=rec.get("patient_id"),
            hospital_id=rec.get("hospital_id"),
            payload=rec.get("payload", {}),
            color=rec.get("color", "info"),
        )


def events_to_ndjson(events) -> str:
    return "".join(canonical_json(e.to_record()) for e in events)


def events_from_ndjson(text: str) -> list[Event]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            out.append(Event.from_record(json.loads(line)))
    return out


def save_events(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(events_to_ndjson(events))


def load_events(path) -> list[Event]:
    with open(path, "r", encoding="utf-8") as fh:
        return events_from_ndjson(fh.read())
