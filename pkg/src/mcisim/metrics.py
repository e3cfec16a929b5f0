"""Outcome measures computed from an event log.

Three headline numbers: completion time (first event to final assignment
decision), mortality rate (deaths over patients known to the log), and
match rate (mean fraction of required resource kinds supplied, over
admitted patients only; a patient requiring nothing counts as fully
matched). Logs are the sole input so live sessions, replays, and archives
all score identically.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .core import Severity
from .events import Event, EventKind


class MalformedLog(ValueError):
    pass


def _assigned_by_patient(events: list[Event]) -> dict[int, Event]:
    """Latest Assigned event per patient (cancellations overwrite earlier ones)."""
    latest: dict[int, Event] = {}
    for ev in events:
        if ev.kind is EventKind.ASSIGNED:
            latest[ev.patient_id] = ev
    return latest


def completion_time(events: list[Event]) -> float:
    """Minutes from session start to the final assignment decision.

    Falls back to the session-end marker when no assignment was ever made.
    """
    if not events:
        raise MalformedLog("empty event log: no session start marker")
    t_start = events[0].time
    t_end = None
    for ev in events:
        if ev.kind is EventKind.ASSIGNED:
            t_end = ev.time
    if t_end is None:
        for ev in events:
            if ev.kind is EventKind.SESSION_ENDED:
                t_end = ev.time
    if t_end is None:
        raise MalformedLog("log has neither assignments nor a session-end marker")
    return t_end - t_start


def mortality_rate(events: list[Event]) -> float:
    """Percent of known patients who died during the session."""
    revealed = {ev.patient_id for ev in events if ev.kind is EventKind.PATIENT_REVEALED}
    if not revealed:
        raise MalformedLog("log contains no revealed patients")
    deaths = sum(1 for ev in events if ev.kind is EventKind.DIED)
    return deaths / len(revealed) * 100.0


def match_rate(events: list[Event]) -> float:
    """Mean per-patient resource match percentage over admitted patients."""
    assigned = _assigned_by_patient(events)
    ratios = []
    for ev in events:
        if ev.kind is not EventKind.ARRIVED:
            continue
        record = assigned.get(ev.patient_id)
        if record is None:
            raise MalformedLog(f"admitted patient {ev.patient_id} has no Assigned event")
        total = record.payload["Q"]
        ratios.append(1.0 if total == 0 else record.payload["q"] / total)
    if not ratios:
        return 0.0
    return sum(ratios) / len(ratios) * 100.0


@dataclass(frozen=True)
class PatientOutcome:
    patient_id: int
    severity: int
    outcome: str  # admitted | deceased | unresolved
    hospital_id: int | None
    q: int
    Q: int
    match_ratio: float | None
    entry_min: float | None
    arrival_min: float | None


@dataclass(frozen=True)
class OutcomeReport:
    completion_time: float
    completion_unit: str  # "seconds" for interactive sessions, "minutes" headless
    mortality_rate: float
    match_rate: float
    patients: tuple[PatientOutcome, ...]

    def to_dict(self) -> dict:
        return {
            "completion_time": self.completion_time,
            "completion_unit": self.completion_unit,
            "mortality_rate_pct": self.mortality_rate,
            "match_rate_pct": self.match_rate,
            "patients": [
                {
                    "patient_id": p.patient_id,
                    "severity": p.severity,
                    "outcome": p.outcome,
                    "hospital_id": p.hospital_id,
                    "q": p.q,
                    "Q": p.Q,
                    "match_ratio": p.match_ratio,
                    "entry_min": p.entry_min,
                    "arrival_min": p.arrival_min,
                }
                for p in self.patients
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("patient_id,severity,outcome,hospital_id,q,Q,match_ratio,entry_min,arrival_min\n")
        for p in self.patients:
            buf.write(
                f"{p.patient_id},{p.severity},{p.outcome},"
                f"{'' if p.hospital_id is None else p.hospital_id},"
                f"{p.q},{p.Q},"
                f"{'' if p.match_ratio is None else p.match_ratio},"
                f"{'' if p.entry_min is None else p.entry_min},"
                f"{'' if p.arrival_min is None else p.arrival_min}\n"
            )
        return buf.getvalue()


def outcome_report(events: list[Event], wall_seconds: float | None = None) -> OutcomeReport:
    """Full report; pass wall_seconds for interactive sessions, otherwise
    completion time is in simulated minutes."""
    assigned = _assigned_by_patient(events)
    revealed: dict[int, dict] = {}
    arrived: dict[int, Event] = {}
    died: set[int] = set()
    for ev in events:
        if ev.kind is EventKind.PATIENT_REVEALED:
            revealed[ev.patient_id] = {"severity": ev.payload["severity"], "entry": ev.time}
        elif ev.kind is EventKind.ARRIVED:
            arrived[ev.patient_id] = ev
        elif ev.kind is EventKind.DIED:
            died.add(ev.patient_id)

    rows = []
    for pid, info in revealed.items():
        record = assigned.get(pid)
        q = record.payload["q"] if record else 0
        total = record.payload["Q"] if record else 0
        arrival = arrived.get(pid)
        if pid in died:
            outcome = "deceased"
        elif arrival is not None:
            outcome = "admitted"
        else:
            outcome = "unresolved"
        ratio = None
        if outcome == "admitted":
            ratio = 1.0 if total == 0 else q / total
        rows.append(
            PatientOutcome(
                patient_id=pid,
                severity=info["severity"],
                outcome=outcome,
                hospital_id=record.hospital_id if record else None,
                q=q,
                Q=total,
                match_ratio=ratio,
                entry_min=info["entry"],
                arrival_min=arrival.payload["arrival_min"] if arrival else None,
            )
        )

    if wall_seconds is not None:
        completion, unit = wall_seconds, "seconds"
    else:
        completion, unit = completion_time(events), "minutes"
    return OutcomeReport(
        completion_time=completion,
        completion_unit=unit,
        mortality_rate=mortality_rate(events),
        match_rate=match_rate(events),
        patients=tuple(rows),
    )
