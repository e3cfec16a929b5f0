"""Greedy suggester, brute-force oracle, and their agreement."""

import math

import numpy as np
import pytest

from mcisim.core import ResourceKind, Severity
from mcisim.engine import NotFoundError, assign_patient, init_session, step
from mcisim.policy import (
    GreedyPolicy,
    RandomPolicy,
    SizeError,
    brute_force_joint,
    encode,
    greedy_suggest,
    projected_assignment_value,
    projected_unassigned_value,
)

from helpers import generous_caps, make_hospital, make_patient, make_scenario, random_small_state


def test_greedy_prefers_level_one_despite_distance():
    # critical patient, equal full match everywhere: level 1 at 40 min
    # projects 300 + 300*(1 - 40/60) = 400; level 3 at 10 min projects 300
    patient = make_patient(0, Severity.CRITICAL, req=(0,) * 8, window=60.0)
    hospitals = [make_hospital(0, 1, generous_caps()), make_hospital(1, 3, generous_caps())]
    scenario = make_scenario([patient], hospitals, [40.0, 10.0], fleet=2)
    state, _ = init_session(scenario)
    v_far, _, _, _ = projected_assignment_value(state, 0, 0)
    v_near, _, _, _ = projected_assignment_value(state, 0, 1)
    assert (v_far, v_near) == (400.0, 300.0)
    assert greedy_suggest(state, 0) == 0


def test_greedy_single_option():
    patient = make_patient(0, Severity.SEVERE)
    scenario = make_scenario([patient], [make_hospital(0, 2, generous_caps())], [15.0])
    state, _ = init_session(scenario)
    assert greedy_suggest(state, 0) == 0


def test_greedy_no_admissible_hospital():
    patient = make_patient(0, Severity.SEVERE)
    scenario = make_scenario([patient], [make_hospital(0, 2, (5, 0, 5, 5, 5, 5, 5, 5))], [15.0])
    state, _ = init_session(scenario)
    assert greedy_suggest(state, 0) is None


def test_greedy_tie_break_travel_then_id():
    # two identical level-2 hospitals, equal projections except travel
    patient = make_patient(0, Severity.MINOR, req=(0, 1, 0, 0, 0, 0, 0, 0))
    hospitals = [make_hospital(0, 2, generous_caps()), make_hospital(1, 2, generous_caps())]
    scenario = make_scenario([patient], hospitals, [20.0, 20.0], fleet=2)
    state, _ = init_session(scenario)
    assert greedy_suggest(state, 0) == 0  # equal travel: lower id
    scenario2 = make_scenario([patient], hospitals, [20.0, 10.0], fleet=2)
    state2, _ = init_session(scenario2)
    # minors have unbounded windows so PT is 1 either way: travel decides
    assert greedy_suggest(state2, 0) == 1


def test_greedy_unknown_patient():
    scenario = make_scenario([make_patient(0, Severity.MINOR)],
                             [make_hospital(0, 1, generous_caps())], [5.0])
    state, _ = init_session(scenario)
    with pytest.raises(NotFoundError):
        greedy_suggest(state, 9)


def test_greedy_projects_transit_expiry_when_window_blown():
    # survival window 20 but travel 50: arriving late is an in-transit death,
    # scored by the post-assignment penalty, mildest at level 3
    patient = make_patient(0, Severity.CRITICAL, req=(0,) * 8, window=20.0)
    hospitals = [make_hospital(0, 1, generous_caps()), make_hospital(1, 3, generous_caps())]
    scenario = make_scenario([patient], hospitals, [50.0, 50.0], fleet=2)
    state, _ = init_session(scenario)
    assert projected_assignment_value(state, 0, 0)[0] == -300.0
    assert projected_assignment_value(state, 0, 1)[0] == -100.0
    assert greedy_suggest(state, 0) == 1


def test_unassigned_projection_values():
    assert projected_unassigned_value(Severity.CRITICAL) == -600.0
    assert projected_unassigned_value(Severity.SEVERE) == -400.0
    assert projected_unassigned_value(Severity.MINOR) == 0.0


def test_brute_force_empty():
    scenario = make_scenario([make_patient(0, Severity.MINOR)],
                             [make_hospital(0, 1, generous_caps())], [5.0])
    state, _ = init_session(scenario)
    assignment, total = brute_force_joint(state, [])
    assert assignment == {} and total == 0.0


def test_brute_force_single_patient_assigns_when_positive():
    patient = make_patient(0, Severity.CRITICAL, req=(0,) * 8)
    scenario = make_scenario([patient], [make_hospital(0, 1, generous_caps())], [10.0])
    state, _ = init_session(scenario)
    assignment, total = brute_force_joint(state, [0])
    assert assignment == {0: 0}
    assert total == pytest.approx(300.0 + 300.0 * (1 - 10 / 60))


def test_brute_force_two_patients_one_slot_greater_delta_wins():
    # one emergency slot; enumeration by hand:
    #   assign critical only: 550 + (-400) = 150
    #   assign severe only:   -600 + 366.67 = -233.33
    #   assign neither:       -1000
    # critical (delta 1150) must win over severe (delta 766.67)
    critical = make_patient(0, Severity.CRITICAL, req=(0,) * 8, window=60.0)
    severe = make_patient(1, Severity.SEVERE, req=(0,) * 8, window=240.0)
    hospital = make_hospital(0, 1, (0, 1, 0, 0, 0, 0, 0, 0))
    scenario = make_scenario([critical, severe], [hospital], [10.0], fleet=4)
    state, _ = init_session(scenario)
    assignment, total = brute_force_joint(state, [0, 1])
    assert assignment == {0: 0, 1: None}
    assert total == pytest.approx(550.0 - 400.0)


def test_brute_force_respects_ambulance_budget():
    patients = [make_patient(i, Severity.SEVERE, req=(0,) * 8) for i in range(2)]
    hospital = make_hospital(0, 1, generous_caps())
    scenario = make_scenario(patients, [hospital], [10.0], fleet=1)
    state, _ = init_session(scenario)
    assignment, _ = brute_force_joint(state, [0, 1])
    assert sum(1 for h in assignment.values() if h is not None) == 1


def test_brute_force_soft_capacity_is_sequential():
    # one ICU: the first patient in roster order takes it, the second
    # matches only emergency
    req = (0, 1, 1, 0, 0, 0, 0, 0)
    patients = [make_patient(0, Severity.SEVERE, req=req), make_patient(1, Severity.SEVERE, req=req)]
    hospital = make_hospital(0, 1, (0, 5, 1, 0, 0, 0, 0, 0))
    scenario = make_scenario(patients, [hospital], [12.0], fleet=4)
    state, _ = init_session(scenario)
    assignment, total = brute_force_joint(state, [0, 1])
    assert assignment == {0: 0, 1: 0}
    pt = 1 - 12 / 240
    assert total == pytest.approx((200 * 1.0 + 200 * pt) + (200 * 0.5 + 200 * pt))


def test_brute_force_size_limits():
    patients = [make_patient(i, Severity.MINOR) for i in range(7)]
    scenario = make_scenario(patients, [make_hospital(0, 1, generous_caps())], [5.0])
    state, _ = init_session(scenario)
    with pytest.raises(SizeError):
        brute_force_joint(state, list(range(7)))
    hospitals = [make_hospital(j, 1, generous_caps()) for j in range(5)]
    scenario = make_scenario([make_patient(0, Severity.MINOR)], hospitals, [[5.0] * 5])
    state, _ = init_session(scenario)
    with pytest.raises(SizeError):
        brute_force_joint(state, [0])


def test_oracle_agreement_sample():
    # the acceptance suite runs 1,000 states; this is the fast module check
    from mcisim.core import PatientStatus

    rng = np.random.default_rng(123)
    agreements = trials = 0
    for _ in range(120):
        state = random_small_state(rng)
        if state.terminal:
            continue
        for i, p in enumerate(state.scenario.patients):
            if state.tracks[i].status is not PatientStatus.UNASSIGNED:
                continue
            joint, _ = brute_force_joint(state, [p.id])
            assert greedy_suggest(state, p.id) == joint[p.id]
            agreements += 1
            trials += 1
    assert trials > 100 and agreements == trials


def test_random_policy_waits_on_empty_mask():
    rng = np.random.default_rng(0)
    policy = RandomPolicy()
    mask = np.zeros((3, 3), dtype=bool)
    for _ in range(20):
        action, log_prob, value = policy.act(None, mask, rng=rng)
        assert action is None
        assert log_prob == pytest.approx(-math.log(1))
        assert value == 0.0


def test_random_policy_uniform_support():
    rng = np.random.default_rng(5)
    policy = RandomPolicy()
    mask = np.zeros((2, 2), dtype=bool)
    mask[0, 0] = mask[1, 1] = True
    seen = set()
    for _ in range(300):
        action, log_prob, _ = policy.act(None, mask, rng=rng)
        assert log_prob == pytest.approx(-math.log(3))
        seen.add(action)
    assert seen == {None, (0, 0), (1, 1)}


def test_greedy_policy_prioritizes_severity_then_waiting():
    patients = [
        make_patient(0, Severity.MINOR, reveal=0.0),
        make_patient(1, Severity.CRITICAL, req=(0, 1, 0, 0, 0, 0, 0, 0), reveal=2.0),
        make_patient(2, Severity.SEVERE, reveal=0.0),
    ]
    hospitals = [make_hospital(0, 1, generous_caps())]
    scenario = make_scenario(patients, hospitals, [10.0], fleet=3)
    state, _ = init_session(scenario)
    step(state, 2)
    policy = GreedyPolicy()
    obs, mask = encode(state, (3, 1))
    action, _, _ = policy.act(obs, mask, state=state)
    assert action == (1, 0)  # the critical patient goes first
    assign_patient(state, 1, 0)
    obs, mask = encode(state, (3, 1))
    action, _, _ = policy.act(obs, mask, state=state)
    assert action == (2, 0)  # then severe, then minor


def test_greedy_policy_waits_when_nothing_assignable():
    patient = make_patient(0, Severity.MINOR, reveal=100.0)
    scenario = make_scenario([patient], [make_hospital(0, 1, generous_caps())], [5.0])
    state, _ = init_session(scenario)
    obs, mask = encode(state, (1, 1))
    action, _, _ = GreedyPolicy().act(obs, mask, state=state)
    assert action is None
