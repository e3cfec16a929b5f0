"""HTTP service: sessions, mode gating, suggestions, streaming, archives."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from mcisim.core import Severity, scenario_to_dict
from mcisim.service import create_app, load_archive, replay_archive

from helpers import generous_caps, make_hospital, make_patient, make_scenario


def small_scenario(n_patients=3, fleet=3, scenario_id="svc-test"):
    patients = [
        make_patient(i, Severity.SEVERE if i % 2 else Severity.CRITICAL,
                     req=(0, 1, 1, 0, 0, 0, 0, 0), reveal=0.0)
        for i in range(n_patients)
    ]
    hospitals = [
        make_hospital(0, 1, generous_caps()),
        make_hospital(1, 2, (2, 2, 2, 2, 2, 2, 2, 2)),
    ]
    return make_scenario(patients, hospitals, [12.0, 6.0], fleet=fleet,
                         horizon=150.0, scenario_id=scenario_id)


@pytest.fixture()
def client(tmp_path):
    app = create_app(storage_dir=str(tmp_path / "archives"),
                     scenarios=[small_scenario()], seed_demo_scenarios=False)
    with TestClient(app) as c:
        yield c


def _create(client, mode="human_plus_ai", pacing=0.0, **extra):
    body = {"scenario_id": "svc-test", "mode": mode, "pacing": pacing, **extra}
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()["session_id"]


def _cmd(client, sid, command, expect=200, **args):
    resp = client.post(f"/sessions/{sid}/commands", json={"command": command, **args})
    assert resp.status_code == expect, resp.text
    return resp.json()


def test_scenario_registry_roundtrip(client):
    listing = client.get("/scenarios").json()
    assert [s["scenario_id"] for s in listing] == ["svc-test"]
    doc = client.get("/scenarios/svc-test").json()
    assert doc["scenario_id"] == "svc-test"
    doc["scenario_id"] = "svc-copy"
    assert client.post("/scenarios", json=doc).status_code == 201
    assert len(client.get("/scenarios").json()) == 2


def test_post_invalid_scenario_rejected(client):
    doc = scenario_to_dict(small_scenario(scenario_id="bad"))
    doc["hospitals"][0]["level"] = 9
    resp = client.post("/scenarios", json=doc)
    assert resp.status_code == 422
    assert resp.json()["code"] == "invalid_scenario"


def test_create_session_and_state(client):
    sid = _create(client)
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["mode"] == "human_plus_ai"
    assert len(state["patients"]) == 3
    assert state["clock_min"] == 0 and not state["terminal"]
    assert state["ambulances"]["available"] == 3


def test_bad_mode_and_unknowns(client):
    assert client.post("/sessions", json={"scenario_id": "svc-test", "mode": "psychic"}).status_code == 422
    assert client.post("/sessions", json={"scenario_id": "nope"}).status_code == 404
    assert client.get("/sessions/nope/state").status_code == 404
    sid = _create(client)
    resp = _cmd(client, sid, "warp", expect=400)
    assert resp["code"] == "bad_command"


def test_manual_assign_and_step(client):
    sid = _create(client, mode="human_only")
    out = _cmd(client, sid, "assign", patient_id=0, hospital_id=1)
    kinds = [e["kind"] for e in out["events"]]
    assert kinds == ["Assigned", "Departed"]
    out = _cmd(client, sid, "step", dt=6)
    assert any(e["kind"] == "Arrived" for e in out["events"])


def test_engine_rejection_surfaced(client):
    sid = _create(client, mode="human_only")
    for pid, code in ((0, 200), (1, 200), (2, 200)):
        _cmd(client, sid, "assign", patient_id=pid, hospital_id=0, expect=code)
    resp = client.post(f"/sessions/{sid}/commands",
                       json={"command": "assign", "patient_id": 0, "hospital_id": 1})
    assert resp.status_code == 409
    assert resp.json()["code"] == "InvalidStatus"


def test_mode_gating(client):
    human = _create(client, mode="human_only")
    resp = client.post(f"/sessions/{human}/commands",
                       json={"command": "request_suggestion", "patient_id": 0})
    assert resp.status_code == 409 and resp.json()["code"] == "mode_violation"

    ai = _create(client, mode="ai_only")
    resp = client.post(f"/sessions/{ai}/commands",
                       json={"command": "assign", "patient_id": 0, "hospital_id": 0})
    assert resp.status_code == 409 and resp.json()["code"] == "mode_violation"


def test_suggestion_accept_flow(client):
    sid = _create(client)
    out = _cmd(client, sid, "request_suggestion", patient_id=0)
    issued = out["events"][0]
    assert issued["kind"] == "SuggestionIssued"
    assert issued["hospital_id"] == 0  # level 1 wins the projection for criticals
    rationale = issued["payload"]["rationale"]
    assert set(rationale) == {"projected_reward", "pt", "pq", "travel_min"}
    sugg_id = issued["payload"]["suggestion_id"]
    out = _cmd(client, sid, "accept_suggestion", suggestion_id=sugg_id)
    kinds = [e["kind"] for e in out["events"]]
    assert kinds == ["Assigned", "Departed", "SuggestionAccepted"]
    assigned = out["events"][0]
    assert assigned["payload"]["source"] == "SuggestionAccepted"


def test_suggestion_decline_no_state_change(client):
    sid = _create(client)
    before = client.get(f"/sessions/{sid}/state").json()
    out = _cmd(client, sid, "request_suggestion", patient_id=0)
    sugg_id = out["events"][0]["payload"]["suggestion_id"]
    out = _cmd(client, sid, "decline_suggestion", suggestion_id=sugg_id)
    assert out["events"][0]["kind"] == "SuggestionDeclined"
    after = client.get(f"/sessions/{sid}/state").json()
    assert after["patients"] == before["patients"]
    assert after["ambulances"] == before["ambulances"]
    resp = client.post(f"/sessions/{sid}/commands",
                       json={"command": "accept_suggestion", "suggestion_id": sugg_id})
    assert resp.status_code == 409 and resp.json()["code"] == "suggestion_closed"


def test_stale_suggestion_rejected_at_accept(client):
    # capacity vanishes between issue and accept: hospital 1 has 2 emergency
    sid = _create(client)
    out = _cmd(client, sid, "request_suggestion", patient_id=0)
    sugg = out["events"][0]["payload"]["suggestion_id"]
    # a concurrent manual flood exhausts every ambulance (fleet 3)
    _cmd(client, sid, "assign", patient_id=1, hospital_id=0)
    _cmd(client, sid, "assign", patient_id=2, hospital_id=0)
    _cmd(client, sid, "assign", patient_id=0, hospital_id=0)
    resp = client.post(f"/sessions/{sid}/commands",
                       json={"command": "accept_suggestion", "suggestion_id": sugg})
    assert resp.status_code == 409
    assert resp.json()["code"] in ("InvalidStatus", "NoAmbulance")


def test_event_stream_backlog_order_and_resume(client):
    sid = _create(client, mode="human_only")
    _cmd(client, sid, "assign", patient_id=0, hospital_id=1)
    _cmd(client, sid, "step", dt=8)

    def fetch(from_seq):
        resp = client.get(f"/sessions/{sid}/events",
                          params={"from_seq": from_seq, "follow": False})
        assert resp.status_code == 200
        events = []
        for block in resp.text.strip().split("\n\n"):
            lines = dict(line.split(": ", 1) for line in block.splitlines() if ": " in line)
            if "data" in lines and lines.get("data") != "{}":
                events.append(json.loads(lines["data"]))
        return events

    stream = fetch(0)
    seqs = [e["seq"] for e in stream]
    assert seqs == list(range(len(seqs))) and len(seqs) >= 5
    again = fetch(0)
    assert again == stream  # two subscribers see identical sequences
    resumed = fetch(3)
    assert [e["seq"] for e in resumed] == seqs[3:]
    assert stream[3:] == resumed  # no duplicates, no gaps


def test_end_persists_archive_and_replay_matches(client, tmp_path):
    sid = _create(client, mode="human_only")
    _cmd(client, sid, "assign", patient_id=0, hospital_id=0)
    _cmd(client, sid, "step", dt=15)
    _cmd(client, sid, "assign", patient_id=1, hospital_id=1)
    out = _cmd(client, sid, "end")
    assert any(e["kind"] == "SessionEnded" for e in out["events"])

    report = client.get(f"/sessions/{sid}/report").json()
    assert report["report"]["completion_unit"] == "seconds"
    archive_path = report["archive_path"]
    doc = load_archive(archive_path)
    assert doc["session_id"] == sid
    replayed = replay_archive(doc)
    assert [e.to_record() for e in replayed.event_log] == doc["events"]


def test_ai_only_step_until_terminal(client):
    sid = _create(client, mode="ai_only", pacing=0.0)
    _cmd(client, sid, "start")
    for _ in range(200):
        state = client.get(f"/sessions/{sid}/state").json()
        if state["terminal"]:
            break
        _cmd(client, sid, "step", dt=10)
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["terminal"]
    assert state["admitted"] == 3  # greedy policy rescues the tiny roster
    report = client.get(f"/sessions/{sid}/report").json()
    assert report["report"]["mortality_rate_pct"] == 0.0


def test_ai_only_liveness_with_pacing(client):
    sid = _create(client, mode="ai_only", pacing=500.0)
    _cmd(client, sid, "start")
    deadline = time.time() + 10.0
    terminal = False
    while time.time() < deadline:
        if client.get(f"/sessions/{sid}/state").json()["terminal"]:
            terminal = True
            break
        time.sleep(0.05)
    assert terminal, "paced ai_only session must finish without external input"


def test_pause_stops_paced_session(client):
    sid = _create(client, mode="human_only", pacing=200.0)
    _cmd(client, sid, "start")
    time.sleep(0.1)
    _cmd(client, sid, "pause")
    clock1 = client.get(f"/sessions/{sid}/state").json()["clock_min"]
    time.sleep(0.2)
    clock2 = client.get(f"/sessions/{sid}/state").json()["clock_min"]
    assert clock1 > 0 and clock2 <= clock1 + 1  # runner halts after pause
