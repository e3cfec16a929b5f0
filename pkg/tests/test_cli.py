"""Command-line interface: artifacts, manifests, exit codes."""

import json

import pytest

from mcisim.cli import main
from mcisim.core import load_scenario, validate_scenario


def test_gen_scenario_sixty_patients(tmp_path, capsys):
    out = tmp_path / "complex.json"
    code = main(["gen-scenario", "--patients", "60", "--seed", "7", "--out", str(out)])
    assert code == 0
    scenario = load_scenario(out)
    assert len(scenario.patients) == 60
    assert validate_scenario(scenario) == []
    manifest = json.loads(out.with_suffix(".json.manifest.json").read_text())
    assert manifest["command"] == "gen-scenario"
    assert manifest["config"]["seed"] == 7


def test_gen_scenario_family(tmp_path):
    out = tmp_path / "fam.json"
    assert main(["gen-scenario", "--family", "family-10x3", "--seed", "3", "--out", str(out)]) == 0
    assert len(load_scenario(out).patients) == 10


def test_scenario_file_roundtrip_byte_identical(tmp_path):
    out = tmp_path / "scn.json"
    main(["gen-scenario", "--patients", "12", "--seed", "5", "--out", str(out)])
    original = out.read_bytes()
    from mcisim.core import save_scenario

    save_scenario(load_scenario(out), out)
    assert out.read_bytes() == original


def test_run_then_replay_identical_report(tmp_path, capsys):
    scn = tmp_path / "scn.json"
    main(["gen-scenario", "--patients", "12", "--seed", "4", "--out", str(scn)])
    run_dir = tmp_path / "run"
    assert main(["run", "--scenario", str(scn), "--policy", "greedy",
                 "--seed", "4", "--out", str(run_dir)]) == 0
    report = json.loads((run_dir / "report.json").read_text())

    replay_out = tmp_path / "replayed.json"
    code = main(["replay", "--archive", str(run_dir / "archive.json"), "--out", str(replay_out)])
    assert code == 0
    replay_stdout = capsys.readouterr().out.splitlines()[-1]
    payload = json.loads(replay_stdout)
    assert payload["replay_matches_recorded_log"] is True
    assert json.loads(replay_out.read_text()) == report


def test_eval_table_orders_greedy_above_random(tmp_path, capsys):
    out = tmp_path / "eval.csv"
    code = main(["eval", "--policies", "random,greedy", "--family", "family-10x3",
                 "--seeds", "6", "--seed0", "900", "--seed", "1", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "policy" in printed and "greedy" in printed
    rows = out.read_text().strip().splitlines()
    header = rows[0].split(",")
    data = {r.split(",")[0]: dict(zip(header, r.split(","))) for r in rows[1:]}
    assert float(data["greedy"]["mortality_pct"]) <= float(data["random"]["mortality_pct"])
    assert float(data["greedy"]["mean_reward"]) >= float(data["random"]["mean_reward"])


def test_train_writes_policy_and_curve(tmp_path):
    out = tmp_path / "policy.json"
    code = main(["train", "--family", "family-10x3", "--steps", "256",
                 "--seed", "2", "--out", str(out)])
    assert code == 0
    from mcisim.policy import load_policy

    spec = load_policy(out)
    assert spec.kind == "learned" and spec.caps == (10, 3)
    curve = out.with_suffix(".curve.csv").read_text().splitlines()
    assert curve[0] == "iteration,steps,mean_reward"
    assert len(curve) >= 2


def test_exit_codes(tmp_path, capsys):
    # our validation failure: patient count out of range
    assert main(["gen-scenario", "--patients", "5", "--seed", "1",
                 "--out", str(tmp_path / "x.json")]) == 1
    # missing file
    assert main(["run", "--scenario", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "r")]) == 1
    # argparse usage problems also map to validation
    assert main(["gen-scenario"]) == 1
    assert main(["no-such-command"]) == 1
    # malformed archive is a runtime failure
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["replay", "--archive", str(bad)]) == 2
