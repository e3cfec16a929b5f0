"""Deterministic discrete-time simulation of one incident session.

The engine advances in 1-minute ticks. Each tick, in fixed order: newly
identified patients enter the system, the ambulance fleet and hospital
effective capacities grow along their logistic curves, in-transit patients
arrive, overdue severe/critical patients die (releasing their reserved
capacity), and dispatched ambulances return. Assignments reserve one
emergency slot (the hard admission constraint) plus every required
resource kind the hospital can still supply; the shortfall is scored by
the reward model rather than blocking the transfer.

All randomness lives in scenario generation, so identical (scenario,
action script) pairs reproduce identical event logs byte for byte.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    N_RESOURCE_KINDS,
    PatientStatus,
    ResourceKind,
    Scenario,
    Severity,
    resource_match_count,
    validate_scenario,
)
from .events import Event, EventKind, severity_color

EMERGENCY = int(ResourceKind.EMERGENCY)


class EngineError(Exception):
    pass


class ScenarioInvalid(EngineError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__(f"scenario failed validation: {[str(v) for v in violations]}")


class NotFoundError(EngineError):
    pass


class AssignmentRejected(EngineError):
    """Admission refused; .reason is a machine-readable code."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


# Rejection reason codes
NO_EMERGENCY_CAPACITY = "NoEmergencyCapacity"
NO_AMBULANCE = "NoAmbulance"
INVALID_STATUS = "InvalidStatus"
SESSION_TERMINAL = "SessionTerminal"
ALREADY_DEPARTED = "AlreadyDeparted"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class PatientTrack:
    """Mutable per-patient runtime record; roster facts stay on the Patient."""

    status: PatientStatus = PatientStatus.HIDDEN
    entry_time: float | None = None
    hospital_idx: int | None = None
    departure_time: float | None = None
    arrival_time: float | None = None
    reserved: tuple[int, ...] | None = None
    matched_q: int = 0


@dataclass
class SimState:
    scenario: Scenario
    clock: int = 0
    tracks: list[PatientTrack] = field(default_factory=list)
    reservations: np.ndarray | None = None  # (H, 8) int
    effective_capacity: np.ndarray | None = None  # (H, 8) int
    fleet_current: int = 0
    ambulances_available: int = 0
    ambulances_busy: list[tuple[float, int]] = field(default_factory=list)  # (return_time, patient_idx)
    event_log: list[Event] = field(default_factory=list)
    next_seq: int = 0
    terminal: bool = False
    end_reason: str | None = None
    rng_seed: int = 0

    # id <-> roster index maps, built at init
    patient_index: dict[int, int] = field(default_factory=dict)
    hospital_index: dict[int, int] = field(default_factory=dict)

    def unreserved(self, hospital_idx: int) -> np.ndarray:
        return self.effective_capacity[hospital_idx] - self.reservations[hospital_idx]

    def status_counts(self) -> dict[PatientStatus, int]:
        counts = {s: 0 for s in PatientStatus}
        for t in self.tracks:
            counts[t.status] += 1
        return counts

    def clone(self) -> "SimState":
        other = SimState(
            scenario=self.scenario,
            clock=self.clock,
            tracks=[copy.copy(t) for t in self.tracks],
            reservations=self.reservations.copy(),
            effective_capacity=self.effective_capacity.copy(),
            fleet_current=self.fleet_current,
            ambulances_available=self.ambulances_available,
            ambulances_busy=list(self.ambulances_busy),
            event_log=[copy.deepcopy(e) for e in self.event_log],
            next_seq=self.next_seq,
            terminal=self.terminal,
            end_reason=self.end_reason,
            rng_seed=self.rng_seed,
            patient_index=dict(self.patient_index),
            hospital_index=dict(self.hospital_index),
        )
        return other

    def snapshot(self) -> dict:
        """Semantic state (everything except the event log), for equality
        checks and determinism hashing."""
        return {
            "clock": self.clock,
            "terminal": self.terminal,
            "end_reason": self.end_reason,
            "fleet": self.fleet_current,
            "available": self.ambulances_available,
            "busy": sorted((float(rt), p) for rt, p in self.ambulances_busy),
            "reservations": self.reservations.tolist(),
            "effective_capacity": self.effective_capacity.tolist(),
            "patients": [
                {
                    "status": t.status.value,
                    "entry": t.entry_time,
                    "hospital": t.hospital_idx,
                    "departure": t.departure_time,
                    "arrival": t.arrival_time,
                    "reserved": list(t.reserved) if t.reserved else None,
                    "q": t.matched_q,
                }
                for t in self.tracks
            ],
        }


def _emit(state: SimState, kind: EventKind, *, time: float | None = None,
          patient_id: int | None = None, hospital_id: int | None = None,
          payload: dict | None = None, severity: Severity | None = None) -> Event:
    ev = Event(
        seq=state.next_seq,
        time=float(state.clock if time is None else time),
        kind=kind,
        patient_id=patient_id,
        hospital_id=hospital_id,
        payload=payload or {},
        color=severity_color(severity, kind),
    )
    state.next_seq += 1
    state.event_log.append(ev)
    return ev


def append_event(state: SimState, kind: EventKind, *, patient_id: int | None = None,
                 hospital_id: int | None = None, payload: dict | None = None,
                 severity: Severity | None = None) -> Event:
    """Append a service-level event (suggestions etc.) to the session log,
    sharing the engine's sequence numbering."""
    return _emit(state, kind, patient_id=patient_id, hospital_id=hospital_id,
                 payload=payload, severity=severity)


def _effective_vector(state: SimState, h_idx: int, t: float) -> np.ndarray:
    frac = state.scenario.reveal_params.capacity.at(t)
    nominal = state.scenario.hospitals[h_idx].capacities
    grown = np.array([_round_half_up(c * frac) for c in nominal], dtype=np.int64)
    # capacity never shrinks below what is already committed
    return np.maximum(grown, state.reservations[h_idx])


def _fleet_at(state: SimState, t: float) -> int:
    return _round_half_up(state.scenario.fleet_size_max * state.scenario.reveal_params.ambulances.at(t))


def init_session(scenario: Scenario) -> tuple[SimState, list[Event]]:
    """Build the t=0 state; rejects scenarios that fail validation."""
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioInvalid(violations)

    n_h = len(scenario.hospitals)
    state = SimState(
        scenario=scenario,
        rng_seed=scenario.seed,
        tracks=[PatientTrack() for _ in scenario.patients],
        reservations=np.zeros((n_h, N_RESOURCE_KINDS), dtype=np.int64),
        effective_capacity=np.zeros((n_h, N_RESOURCE_KINDS), dtype=np.int64),
        patient_index={p.id: i for i, p in enumerate(scenario.patients)},
        hospital_index={h.id: j for j, h in enumerate(scenario.hospitals)},
    )

    events: list[Event] = []
    for j in range(n_h):
        state.effective_capacity[j] = _effective_vector(state, j, 0.0)
        events.append(
            _emit(state, EventKind.CAPACITY_CHANGED,
                  hospital_id=scenario.hospitals[j].id,
                  payload={"effective": state.effective_capacity[j].tolist()})
        )

    state.fleet_current = _fleet_at(state, 0.0)
    state.ambulances_available = state.fleet_current
    events.append(
        _emit(state, EventKind.AMBULANCE_AVAILABLE,
              payload={"available": state.ambulances_available, "fleet": state.fleet_current})
    )

    events.extend(_reveal_due_patients(state))
    return state, events


def _reveal_due_patients(state: SimState) -> list[Event]:
    events = []
    for i, patient in enumerate(state.scenario.patients):
        track = state.tracks[i]
        if track.status is PatientStatus.HIDDEN and patient.reveal_time <= state.clock:
            track.status = PatientStatus.UNASSIGNED
            track.entry_time = float(state.clock)
            events.append(
                _emit(state, EventKind.PATIENT_REVEALED,
                      patient_id=patient.id,
                      severity=patient.severity,
                      payload={
                          "severity": int(patient.severity),
                          "requirements": list(patient.requirements),
                          "survival_window_min": None
                          if math.isinf(patient.survival_window) else patient.survival_window,
                      })
            )
    return events


def _all_resolved(state: SimState) -> bool:
    return all(
        t.status in (PatientStatus.ADMITTED, PatientStatus.DECEASED) for t in state.tracks
    )


def _finish(state: SimState, reason: str) -> Event:
    state.terminal = True
    state.end_reason = reason
    counts = state.status_counts()
    return _emit(state, EventKind.SESSION_ENDED, payload={
        "reason": reason,
        "total_patients": len(state.tracks),
        "admitted": counts[PatientStatus.ADMITTED],
        "deaths": counts[PatientStatus.DECEASED],
    })


def step(state: SimState, dt: int = 1) -> tuple[SimState, list[Event]]:
    """Advance the clock dt minutes (dt one-minute ticks).

    Stepping a terminal state is a no-op that emits a Warning event.
    Stops early if the session reaches a terminal condition mid-interval.
    """
    if dt <= 0:
        raise ValueError("dt must be a positive whole number of minutes")
    if state.terminal:
        return state, [_emit(state, EventKind.WARNING,
                             payload={"message": "step ignored: session already ended"})]

    events: list[Event] = []
    for _ in range(int(dt)):
        state.clock += 1
        events.extend(_reveal_due_patients(state))

        # fleet growth along its curve
        fleet_target = _fleet_at(state, state.clock)
        if fleet_target > state.fleet_current:
            state.ambulances_available += fleet_target - state.fleet_current
            state.fleet_current = fleet_target
            events.append(
                _emit(state, EventKind.AMBULANCE_AVAILABLE,
                      payload={"available": state.ambulances_available,
                               "fleet": state.fleet_current})
            )

        # capacity growth, per hospital
        for j, hospital in enumerate(state.scenario.hospitals):
            new_eff = _effective_vector(state, j, state.clock)
            if not np.array_equal(new_eff, state.effective_capacity[j]):
                state.effective_capacity[j] = new_eff
                events.append(
                    _emit(state, EventKind.CAPACITY_CHANGED,
                          hospital_id=hospital.id,
                          payload={"effective": new_eff.tolist()})
                )

        # arrivals admit before the death check: reaching the door stops the clock
        for i, track in enumerate(state.tracks):
            if track.status is PatientStatus.IN_TRANSIT and track.arrival_time <= state.clock:
                patient = state.scenario.patients[i]
                track.status = PatientStatus.ADMITTED
                events.append(
                    _emit(state, EventKind.ARRIVED,
                          patient_id=patient.id,
                          hospital_id=state.scenario.hospitals[track.hospital_idx].id,
                          severity=patient.severity,
                          payload={
                              "severity": int(patient.severity),
                              "hospital_level": state.scenario.hospitals[track.hospital_idx].level,
                              "entry_min": track.entry_time,
                              "arrival_min": track.arrival_time,
                              "q": track.matched_q,
                              "Q": patient.required_count,
                              "survival_window_min": None
                              if math.isinf(patient.survival_window) else patient.survival_window,
                          })
                )

        # survival-window expiry for severe/critical patients not yet admitted
        for i, track in enumerate(state.tracks):
            patient = state.scenario.patients[i]
            if (
                patient.severity in (Severity.SEVERE, Severity.CRITICAL)
                and track.status in (PatientStatus.UNASSIGNED, PatientStatus.ASSIGNED,
                                     PatientStatus.IN_TRANSIT)
                and track.entry_time is not None
                and state.clock - track.entry_time > patient.survival_window
            ):
                phase = "in_transit" if track.status is PatientStatus.IN_TRANSIT else "unassigned"
                payload = {"severity": int(patient.severity), "phase": phase}
                hospital_id = None
                if track.status in (PatientStatus.ASSIGNED, PatientStatus.IN_TRANSIT):
                    hospital = state.scenario.hospitals[track.hospital_idx]
                    hospital_id = hospital.id
                    payload["hospital_level"] = hospital.level
                    state.reservations[track.hospital_idx] -= np.array(track.reserved, dtype=np.int64)
                    track.reserved = None
                track.status = PatientStatus.DECEASED
                events.append(
                    _emit(state, EventKind.DIED, patient_id=patient.id,
                          hospital_id=hospital_id, severity=Severity.DECEASED,
                          payload=payload)
                )

        # ambulances come back after the round trip
        returned = [entry for entry in state.ambulances_busy if entry[0] <= state.clock]
        if returned:
            state.ambulances_busy = [e for e in state.ambulances_busy if e[0] > state.clock]
            state.ambulances_available += len(returned)
            events.append(
                _emit(state, EventKind.AMBULANCE_AVAILABLE,
                      payload={"available": state.ambulances_available,
                               "fleet": state.fleet_current})
            )

        if _all_resolved(state):
            events.append(_finish(state, "completed"))
            break
        if state.clock >= state.scenario.horizon:
            events.append(_finish(state, "horizon"))
            break

    return state, events


def can_assign(state: SimState, patient_idx: int, hospital_idx: int) -> str | None:
    """The engine's admissibility predicate; None means assignable.

    The action mask and assign_patient share this exact check.
    """
    if state.terminal:
        return SESSION_TERMINAL
    if state.tracks[patient_idx].status is not PatientStatus.UNASSIGNED:
        return INVALID_STATUS
    if state.ambulances_available < 1:
        return NO_AMBULANCE
    if state.unreserved(hospital_idx)[EMERGENCY] < 1:
        return NO_EMERGENCY_CAPACITY
    return None


def assign_patient(
    state: SimState, patient_id: int, hospital_id: int, source: str = "Manual"
) -> tuple[SimState, list[Event]]:
    """Dispatch one patient to one hospital.

    Reserves one emergency slot plus every required-and-available resource
    kind, takes an ambulance, and puts the patient in transit. Raises
    AssignmentRejected (with a reason code) when inadmissible.
    """
    if patient_id not in state.patient_index:
        raise NotFoundError(f"unknown patient id {patient_id}")
    if hospital_id not in state.hospital_index:
        raise NotFoundError(f"unknown hospital id {hospital_id}")
    p_idx = state.patient_index[patient_id]
    h_idx = state.hospital_index[hospital_id]

    reason = can_assign(state, p_idx, h_idx)
    if reason is not None:
        raise AssignmentRejected(reason, f"patient {patient_id} -> hospital {hospital_id}")

    patient = state.scenario.patients[p_idx]
    track = state.tracks[p_idx]
    unreserved = state.unreserved(h_idx)
    q, matched = resource_match_count(patient.requirements, unreserved)

    reserved = list(matched)
    reserved[EMERGENCY] = 1  # the admission slot itself, required or not
    state.reservations[h_idx] += np.array(reserved, dtype=np.int64)

    travel = state.scenario.travel_minutes(p_idx, h_idx)
    track.status = PatientStatus.IN_TRANSIT
    track.hospital_idx = h_idx
    track.departure_time = float(state.clock)
    track.arrival_time = state.clock + travel
    track.reserved = tuple(reserved)
    track.matched_q = q
    state.ambulances_available -= 1
    state.ambulances_busy.append((track.arrival_time + travel, p_idx))

    events = [
        _emit(state, EventKind.ASSIGNED, patient_id=patient_id, hospital_id=hospital_id,
              severity=patient.severity,
              payload={
                  "source": source,
                  "matched": list(matched),
                  "q": q,
                  "required": list(patient.requirements),
                  "Q": patient.required_count,
                  "travel_min": travel,
                  "departure_min": track.departure_time,
                  "arrival_min": track.arrival_time,
              }),
        _emit(state, EventKind.DEPARTED, patient_id=patient_id, hospital_id=hospital_id,
              severity=patient.severity,
              payload={"arrival_min": track.arrival_time}),
    ]
    return state, events


def cancel_assignment(state: SimState, patient_id: int) -> tuple[SimState, list[Event]]:
    """Undo an assignment made this tick, releasing resources and ambulance."""
    if patient_id not in state.patient_index:
        raise NotFoundError(f"unknown patient id {patient_id}")
    p_idx = state.patient_index[patient_id]
    track = state.tracks[p_idx]

    same_tick = (
        track.status in (PatientStatus.ASSIGNED, PatientStatus.IN_TRANSIT)
        and track.departure_time == state.clock
    )
    if not same_tick:
        raise AssignmentRejected(ALREADY_DEPARTED, f"patient {patient_id}")

    h_idx = track.hospital_idx
    state.reservations[h_idx] -= np.array(track.reserved, dtype=np.int64)
    # recall the just-dispatched ambulance
    travel = track.arrival_time - track.departure_time
    state.ambulances_busy.remove((track.arrival_time + travel, p_idx))
    state.ambulances_available += 1

    hospital_id = state.scenario.hospitals[h_idx].id
    track.status = PatientStatus.UNASSIGNED
    track.hospital_idx = None
    track.departure_time = None
    track.arrival_time = None
    track.reserved = None
    track.matched_q = 0

    events = [
        _emit(state, EventKind.ASSIGNMENT_CANCELLED, patient_id=patient_id,
              hospital_id=hospital_id,
              severity=state.scenario.patients[p_idx].severity,
              payload={})
    ]
    return state, events


def end_session(state: SimState) -> tuple[SimState, list[Event]]:
    """Commander ends the session; terminal states stay unchanged."""
    if state.terminal:
        return state, []
    return state, [_finish(state, "ended")]


# ---------------------------------------------------------------------------
# Action scripts and replay


def replay(scenario: Scenario, actions: list[dict], run_to_terminal: bool = True) -> SimState:
    """Reconstruct a session from its scenario and recorded action script.

    Each action is {"tick": int, "op": "assign"|"cancel"|"end"|"halt", ...};
    actions are applied in list order once the clock reaches their tick.
    With run_to_terminal, the replayed session then steps until it ends,
    reproducing the live event log exactly.
    """
    state, _ = init_session(scenario)
    for action in actions:
        tick = int(action["tick"])
        if tick > state.clock and not state.terminal:
            step(state, tick - state.clock)
        op = action["op"]
        if op == "assign":
            assign_patient(state, action["patient_id"], action["hospital_id"],
                           source=action.get("source", "Manual"))
        elif op == "cancel":
            cancel_assignment(state, action["patient_id"])
        elif op == "end":
            end_session(state)
        elif op == "halt":
            run_to_terminal = False
        else:
            raise ValueError(f"unknown action op {op!r}")
    while run_to_terminal and not state.terminal:
        step(state, 1)
    return state
