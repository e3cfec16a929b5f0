"""Multi-session HTTP service for live incident command.

Each session owns one engine state behind a lock; commands are applied in
arrival order, so the event sequence is a total order per session. The
event log doubles as the subscriber stream: clients follow
/sessions/{id}/events as server-sent events, resumable from any sequence
number. Sessions run in one of three modes: human-only (suggestions
rejected), human-plus-AI (suggestions on request, accept or decline), and
AI-only (the policy assigns autonomously; manual commands rejected).
A positive pacing runs a background ticker at that many simulated minutes
per real second; pacing zero leaves stepping to explicit commands.

Ended sessions are archived (scenario, action script, full event log,
outcome report) and can be reconstructed exactly by replay.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import engine
from .core import (
    PatientStatus,
    Scenario,
    canonical_json,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from .events import EventKind
from .generate import complex_scenario, standard_scenario
from .metrics import OutcomeReport, outcome_report
from .policy import GreedyPolicy, RandomPolicy, encode, greedy_suggest, suggestion_rationale

MODES = ("human_only", "human_plus_ai", "ai_only")

COMMANDS = (
    "start", "pause", "step", "assign", "cancel",
    "request_suggestion", "accept_suggestion", "decline_suggestion", "end",
)


class CommandError(Exception):
    def __init__(self, code: str, reason: str, status: int = 409):
        self.code = code
        self.reason = reason
        self.status = status
        super().__init__(f"{code}: {reason}")


@dataclass
class Suggestion:
    suggestion_id: str
    patient_id: int
    hospital_id: int
    status: str = "pending"  # pending | accepted | declined | stale


@dataclass
class Session:
    session_id: str
    scenario: Scenario
    mode: str
    pacing: float
    policy_name: str
    state: engine.SimState = None
    lock: threading.RLock = field(default_factory=threading.RLock)
    cond: threading.Condition = None
    running: bool = False
    wall_start: float | None = None
    wall_end: float | None = None
    action_log: list[dict] = field(default_factory=list)
    suggestions: dict[str, Suggestion] = field(default_factory=dict)
    next_suggestion: int = 1
    report: OutcomeReport | None = None
    archive_path: str | None = None
    runner: threading.Thread | None = None
    rng: np.random.Generator = None

    def __post_init__(self):
        self.cond = threading.Condition(self.lock)


class ServiceState:
    """Registries shared by all endpoints; guarded for concurrent access."""

    def __init__(self, storage_dir: str | None = None):
        self.lock = threading.Lock()
        self.scenarios: dict[str, Scenario] = {}
        self.sessions: dict[str, Session] = {}
        self.policies = {"greedy": GreedyPolicy(), "random": RandomPolicy()}
        self.storage_dir = Path(storage_dir) if storage_dir else None
        if self.storage_dir:
            self.storage_dir.mkdir(parents=True, exist_ok=True)

    def add_scenario(self, scenario: Scenario) -> str:
        with self.lock:
            self.scenarios[scenario.id] = scenario
        return scenario.id

    def get_scenario(self, scenario_id: str) -> Scenario:
        with self.lock:
            scenario = self.scenarios.get(scenario_id)
        if scenario is None:
            raise CommandError("not_found", f"unknown scenario {scenario_id!r}", status=404)
        return scenario

    def get_session(self, session_id: str) -> Session:
        with self.lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise CommandError("not_found", f"unknown session {session_id!r}", status=404)
        return session


def _notify(session: Session) -> None:
    session.cond.notify_all()


def _policy_tick(svc: ServiceState, session: Session) -> list:
    """One AI-only tick: let the policy assign (at most one patient), then step."""
    state = session.state
    events = []
    policy = svc.policies[session.policy_name]
    caps = getattr(policy, "caps", None) or (len(state.scenario.patients),
                                             len(state.scenario.hospitals))
    obs, mask = encode(state, caps)
    action, _, _ = policy.act(obs, mask, state=state, rng=session.rng)
    if action is not None:
        i, j = action
        patient_id = state.scenario.patients[i].id
        hospital_id = state.scenario.hospitals[j].id
        _, ev = engine.assign_patient(state, patient_id, hospital_id, source="Policy")
        session.action_log.append({"tick": state.clock, "op": "assign",
                                   "patient_id": patient_id, "hospital_id": hospital_id,
                                   "source": "Policy"})
        events.extend(ev)
    _, ev = engine.step(state, 1)
    events.extend(ev)
    return events


def _finalize_if_terminal(svc: ServiceState, session: Session) -> None:
    if not session.state.terminal or session.report is not None:
        return
    session.running = False
    session.wall_end = time.monotonic() if session.wall_start is not None else None
    wall_seconds = None
    if session.mode != "ai_only" and session.wall_start is not None and session.wall_end:
        wall_seconds = session.wall_end - session.wall_start
    session.report = outcome_report(session.state.event_log, wall_seconds=wall_seconds)
    if svc.storage_dir:
        session.archive_path = str(persist_session(svc.storage_dir, session))


def _runner_loop(svc: ServiceState, session: Session) -> None:
    interval = 1.0 / session.pacing
    while True:
        time.sleep(interval)
        with session.lock:
            if not session.running or session.state.terminal:
                _finalize_if_terminal(svc, session)
                _notify(session)
                return
            if session.mode == "ai_only":
                _policy_tick(svc, session)
            else:
                engine.step(session.state, 1)
            _finalize_if_terminal(svc, session)
            _notify(session)
            if session.state.terminal:
                return


def _handle_command(svc: ServiceState, session: Session, body: dict) -> list:
    """Apply one command under the session lock; returns the new events."""
    command = body.get("command")
    if command not in COMMANDS:
        raise CommandError("bad_command", f"unknown command {command!r}", status=400)
    state = session.state

    if command == "start":
        if session.state.terminal:
            raise CommandError("session_ended", "cannot start an ended session")
        session.running = True
        if session.wall_start is None:
            session.wall_start = time.monotonic()
        if session.pacing > 0 and (session.runner is None or not session.runner.is_alive()):
            session.runner = threading.Thread(
                target=_runner_loop, args=(svc, session), daemon=True
            )
            session.runner.start()
        return []

    if command == "pause":
        session.running = False
        return []

    if command == "step":
        if session.state.terminal:
            raise CommandError("session_ended", "session already ended")
        dt = int(body.get("dt", 1))
        if dt <= 0:
            raise CommandError("bad_command", "dt must be >= 1", status=400)
        events = []
        if session.mode == "ai_only":
            for _ in range(dt):
                if state.terminal:
                    break
                events.extend(_policy_tick(svc, session))
        else:
            _, events = engine.step(state, dt)
        _finalize_if_terminal(svc, session)
        return events

    if command == "assign":
        if session.mode == "ai_only":
            raise CommandError("mode_violation", "manual assignment not allowed in ai_only mode")
        events = _engine_call(
            engine.assign_patient, state, body.get("patient_id"), body.get("hospital_id"),
            source="Manual",
        )
        session.action_log.append({"tick": state.clock, "op": "assign",
                                   "patient_id": body.get("patient_id"),
                                   "hospital_id": body.get("hospital_id"),
                                   "source": "Manual"})
        return events

    if command == "cancel":
        if session.mode == "ai_only":
            raise CommandError("mode_violation", "cancel not allowed in ai_only mode")
        events = _engine_call(engine.cancel_assignment, state, body.get("patient_id"))
        session.action_log.append({"tick": state.clock, "op": "cancel",
                                   "patient_id": body.get("patient_id")})
        return events

    if command == "request_suggestion":
        if session.mode != "human_plus_ai":
            raise CommandError("mode_violation",
                               f"suggestions not available in {session.mode} mode")
        patient_id = body.get("patient_id")
        if patient_id not in state.patient_index:
            raise CommandError("not_found", f"unknown patient {patient_id}", status=404)
        hospital_id = greedy_suggest(state, patient_id)
        if hospital_id is None:
            raise CommandError("no_admissible_hospital",
                               f"no hospital can currently admit patient {patient_id}")
        sid = f"sugg-{session.next_suggestion}"
        session.next_suggestion += 1
        session.suggestions[sid] = Suggestion(sid, patient_id, hospital_id)
        rationale = suggestion_rationale(state, patient_id, hospital_id)
        ev = engine.append_event(
            state, EventKind.SUGGESTION_ISSUED,
            patient_id=patient_id, hospital_id=hospital_id,
            payload={"suggestion_id": sid, "rationale": rationale},
            severity=state.scenario.patients[state.patient_index[patient_id]].severity,
        )
        return [ev]

    if command in ("accept_suggestion", "decline_suggestion"):
        if session.mode != "human_plus_ai":
            raise CommandError("mode_violation",
                               f"suggestions not available in {session.mode} mode")
        sid = body.get("suggestion_id")
        suggestion = session.suggestions.get(sid)
        if suggestion is None:
            raise CommandError("not_found", f"unknown suggestion {sid!r}", status=404)
        if suggestion.status != "pending":
            raise CommandError("suggestion_closed",
                               f"suggestion {sid} already {suggestion.status}")
        if command == "decline_suggestion":
            suggestion.status = "declined"
            ev = engine.append_event(state, EventKind.SUGGESTION_DECLINED,
                                     patient_id=suggestion.patient_id,
                                     hospital_id=suggestion.hospital_id,
                                     payload={"suggestion_id": sid})
            return [ev]
        # accept: re-validate against current capacity before committing
        try:
            _, events = engine.assign_patient(state, suggestion.patient_id,
                                              suggestion.hospital_id,
                                              source="SuggestionAccepted")
        except engine.AssignmentRejected as exc:
            suggestion.status = "stale"
            raise CommandError(exc.reason, f"suggestion {sid} is stale: {exc}", status=409)
        suggestion.status = "accepted"
        session.action_log.append({"tick": state.clock, "op": "assign",
                                   "patient_id": suggestion.patient_id,
                                   "hospital_id": suggestion.hospital_id,
                                   "source": "SuggestionAccepted"})
        ack = engine.append_event(state, EventKind.SUGGESTION_ACCEPTED,
                                  patient_id=suggestion.patient_id,
                                  hospital_id=suggestion.hospital_id,
                                  payload={"suggestion_id": sid})
        return events + [ack]

    if command == "end":
        session.action_log.append({"tick": state.clock, "op": "end"})
        _, events = engine.end_session(state)
        session.running = False
        _finalize_if_terminal(svc, session)
        return events

    raise CommandError("bad_command", f"unhandled command {command!r}", status=400)


def _engine_call(fn, *args, **kwargs) -> list:
    try:
        _, events = fn(*args, **kwargs)
        return events
    except engine.NotFoundError as exc:
        raise CommandError("not_found", str(exc), status=404) from exc
    except engine.AssignmentRejected as exc:
        raise CommandError(exc.reason, str(exc), status=409) from exc


# ---------------------------------------------------------------------------
# Session archives


def persist_session(storage_dir: Path, session: Session) -> Path:
    doc = {
        "schema_version": 1,
        "session_id": session.session_id,
        "mode": session.mode,
        "pacing": session.pacing,
        "scenario": scenario_to_dict(session.scenario),
        "actions": session.action_log,
        "events": [e.to_record() for e in session.state.event_log],
        "outcome": session.report.to_dict() if session.report else None,
        "wall_seconds": (
            session.wall_end - session.wall_start
            if session.wall_start is not None and session.wall_end is not None
            else None
        ),
    }
    path = storage_dir / f"{session.session_id}.json"
    path.write_text(canonical_json(doc), encoding="utf-8")
    return path


def load_archive(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def replay_archive(doc: dict) -> engine.SimState:
    """Rebuild the archived session's final state from scenario + actions.

    Archives are written at terminal states, so replaying to terminal (an
    archived "end" action halts earlier runs at the right tick) reproduces
    the recorded log exactly.
    """
    scenario = scenario_from_dict(doc["scenario"])
    return engine.replay(scenario, doc["actions"], run_to_terminal=True)


# ---------------------------------------------------------------------------
# HTTP app


def _state_payload(session: Session) -> dict:
    state = session.state
    scenario = state.scenario
    patients = []
    for i, p in enumerate(scenario.patients):
        t = state.tracks[i]
        patients.append({
            "id": p.id,
            "severity": int(p.severity),
            "status": t.status.value,
            "requirements": list(p.requirements),
            "entry_min": t.entry_time,
            "hospital_id": None if t.hospital_idx is None else scenario.hospitals[t.hospital_idx].id,
            "arrival_min": t.arrival_time,
        })
    hospitals = []
    for j, h in enumerate(scenario.hospitals):
        hospitals.append({
            "id": h.id,
            "level": h.level,
            "location": list(h.location),
            "effective": state.effective_capacity[j].tolist(),
            "reserved": state.reservations[j].tolist(),
            "unreserved": state.unreserved(j).tolist(),
            "travel_min": scenario.travel[0][j] if scenario.patients else 0,
        })
    counts = state.status_counts()
    return {
        "session_id": session.session_id,
        "scenario_id": scenario.id,
        "mode": session.mode,
        "pacing": session.pacing,
        "running": session.running,
        "clock_min": state.clock,
        "horizon_min": scenario.horizon,
        "terminal": state.terminal,
        "end_reason": state.end_reason,
        "next_seq": state.next_seq,
        "incident_location": list(scenario.incident_location),
        "patients": patients,
        "hospitals": hospitals,
        "ambulances": {
            "available": state.ambulances_available,
            "fleet": state.fleet_current,
            "busy": len(state.ambulances_busy),
        },
        "deaths": counts[PatientStatus.DECEASED],
        "admitted": counts[PatientStatus.ADMITTED],
    }


def create_app(
    storage_dir: str | None = None,
    scenarios: list[Scenario] | None = None,
    seed_demo_scenarios: bool = True,
    extra_policies: dict | None = None,
) -> FastAPI:
    svc = ServiceState(storage_dir=storage_dir)
    if extra_policies:
        svc.policies.update(extra_policies)
    if scenarios:
        for s in scenarios:
            svc.add_scenario(s)
    elif seed_demo_scenarios:
        svc.add_scenario(standard_scenario(1))
        svc.add_scenario(complex_scenario(1))

    app = FastAPI(title="mcisim service")
    app.state.svc = svc

    @app.exception_handler(CommandError)
    async def _command_error(request: Request, exc: CommandError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "reason": exc.reason})

    @app.get("/scenarios")
    def list_scenarios():
        with svc.lock:
            items = list(svc.scenarios.values())
        return [
            {
                "scenario_id": s.id,
                "patients": len(s.patients),
                "hospitals": len(s.hospitals),
                "horizon_min": s.horizon,
                "seed": s.seed,
            }
            for s in items
        ]

    @app.post("/scenarios", status_code=201)
    def add_scenario(doc: dict):
        try:
            scenario = scenario_from_dict(doc)
        except (KeyError, ValueError, TypeError) as exc:
            raise CommandError("bad_scenario", f"malformed scenario document: {exc}", status=422)
        violations = validate_scenario(scenario)
        if violations:
            raise CommandError("invalid_scenario", "; ".join(str(v) for v in violations), status=422)
        svc.add_scenario(scenario)
        return {"scenario_id": scenario.id}

    @app.get("/scenarios/{scenario_id}")
    def get_scenario(scenario_id: str):
        return scenario_to_dict(svc.get_scenario(scenario_id))

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        mode = body.get("mode", "human_plus_ai")
        if mode not in MODES:
            raise CommandError("bad_mode", f"mode must be one of {MODES}", status=422)
        pacing = float(body.get("pacing", 0.0))
        if pacing < 0:
            raise CommandError("bad_pacing", "pacing must be >= 0", status=422)
        policy_name = body.get("policy", "greedy")
        if policy_name not in svc.policies:
            raise CommandError("not_found", f"unknown policy {policy_name!r}", status=404)
        if "scenario" in body:
            try:
                scenario = scenario_from_dict(body["scenario"])
            except (KeyError, ValueError, TypeError) as exc:
                raise CommandError("bad_scenario", f"malformed scenario: {exc}", status=422)
            svc.add_scenario(scenario)
        else:
            scenario = svc.get_scenario(body.get("scenario_id", ""))
        try:
            state, _ = engine.init_session(scenario)
        except engine.ScenarioInvalid as exc:
            raise CommandError("invalid_scenario", str(exc), status=422)
        session = Session(
            session_id=f"s-{uuid.uuid4().hex[:12]}",
            scenario=scenario,
            mode=mode,
            pacing=pacing,
            policy_name=policy_name,
            state=state,
            wall_start=time.monotonic(),
            rng=np.random.default_rng(np.random.PCG64(scenario.seed)),
        )
        with svc.lock:
            svc.sessions[session.session_id] = session
        return {"session_id": session.session_id, "mode": mode, "pacing": pacing}

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        session = svc.get_session(session_id)
        with session.lock:
            return _state_payload(session)

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str):
        session = svc.get_session(session_id)
        with session.lock:
            if session.report is None:
                raise CommandError("not_ready", "session has not ended", status=409)
            return {
                "report": session.report.to_dict(),
                "archive_path": session.archive_path,
            }

    @app.post("/sessions/{session_id}/commands")
    def post_command(session_id: str, body: dict):
        session = svc.get_session(session_id)
        with session.lock:
            events = _handle_command(svc, session, body)
            _notify(session)
            return {"ok": True, "events": [e.to_record() for e in events]}

    @app.get("/sessions/{session_id}/events")
    def stream_events(
        session_id: str,
        from_seq: int = Query(0, ge=0),
        follow: bool = Query(True),
        timeout_s: float = Query(30.0, gt=0),
    ):
        session = svc.get_session(session_id)

        def gen():
            cursor = from_seq
            deadline = time.monotonic() + timeout_s
            while True:
                with session.lock:
                    backlog = list(session.state.event_log[cursor:])
                    terminal = session.state.terminal
                for ev in backlog:
                    yield f"id: {ev.seq}\ndata: {canonical_json(ev.to_record()).strip()}\n\n"
                cursor += len(backlog)
                if not follow and not backlog:
                    return
                if terminal and not backlog:
                    yield "event: end\ndata: {}\n\n"
                    return
                if time.monotonic() > deadline:
                    yield "event: timeout\ndata: {}\n\n"
                    return
                with session.cond:
                    if session.state.next_seq <= cursor:
                        session.cond.wait(timeout=0.25)

        return StreamingResponse(gen(), media_type="text/event-stream")

    return app
