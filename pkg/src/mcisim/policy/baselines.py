"""Myopic suggesters: projected-reward greedy and an exhaustive joint oracle.

Both rank options by the same projection: the reward the patient would
earn on arrival at each admissible hospital, given current unreserved
capacities and the travel clock, or the in-transit expiry penalty when the
trip cannot beat the survival window. Ties prefer shorter travel, then the
lower hospital id; leaving a patient unassigned is worth the eventual
unassigned-death penalty (or zero for minors) and is preferred last among
equals. The brute-force enumerator applies those same per-patient
preferences lexicographically, so on single-patient instances the two
agree exactly.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..core import PatientStatus, ResourceKind, Severity, resource_match_count
from ..engine import SimState, can_assign
from ..reward import (
    RewardCase,
    live_case_for,
    patient_reward,
    resource_penalty,
    time_penalty,
)

EMERGENCY = int(ResourceKind.EMERGENCY)


class SizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


BRUTE_FORCE_MAX_PATIENTS = 6
BRUTE_FORCE_MAX_HOSPITALS = 4


def projected_assignment_value(
    state: SimState, p_idx: int, h_idx: int, extra_reserved: np.ndarray | None = None
) -> tuple[float, float, float, float]:
    """Myopic value of dispatching patient p to hospital h right now.

    Returns (value, pt, pq, travel_min). extra_reserved lets the joint
    enumerator account for capacity consumed by earlier patients in the
    same hypothetical batch.
    """
    patient = state.scenario.patients[p_idx]
    track = state.tracks[p_idx]
    hospital = state.scenario.hospitals[h_idx]
    travel = state.scenario.travel_minutes(p_idx, h_idx)
    arrival = state.clock + travel
    elapsed = arrival - track.entry_time

    unreserved = state.unreserved(h_idx)
    if extra_reserved is not None:
        unreserved = np.maximum(unreserved - extra_reserved, 0)
    q, _ = resource_match_count(patient.requirements, unreserved)
    pq = resource_penalty(q, patient.required_count)

    if (
        patient.severity in (Severity.SEVERE, Severity.CRITICAL)
        and elapsed > patient.survival_window
    ):
        value = patient_reward(RewardCase.EXPIRED_POST_ASSIGNMENT, patient.severity, hospital.level)
        return value, 0.0, pq, travel

    pt = time_penalty(elapsed, patient.survival_window)
    value = patient_reward(live_case_for(patient.severity), patient.severity, hospital.level, pt, pq)
    return value, pt, pq, travel


def projected_unassigned_value(severity: Severity) -> float:
    if severity is Severity.CRITICAL:
        return -600.0
    if severity is Severity.SEVERE:
        return -400.0
    return 0.0


def greedy_suggest(state: SimState, patient_id: int) -> int | None:
    """Best admissible hospital for one unassigned patient, or None.

    Argmax of the projected arrival reward; ties broken by shorter travel,
    then lower hospital id.
    """
    if patient_id not in state.patient_index:
        from ..engine import NotFoundError

        raise NotFoundError(f"unknown patient id {patient_id}")
    p_idx = state.patient_index[patient_id]

    best = None
    for h_idx, hospital in enumerate(state.scenario.hospitals):
        if can_assign(state, p_idx, h_idx) is not None:
            continue
        value, _, _, travel = projected_assignment_value(state, p_idx, h_idx)
        key = (-value, travel, hospital.id)
        if best is None or key < best[0]:
            best = (key, hospital.id)
    return None if best is None else best[1]


def suggestion_rationale(state: SimState, patient_id: int, hospital_id: int) -> dict:
    """Explanation payload carried on suggestion events."""
    p_idx = state.patient_index[patient_id]
    h_idx = state.hospital_index[hospital_id]
    value, pt, pq, travel = projected_assignment_value(state, p_idx, h_idx)
    return {
        "projected_reward": value,
        "pt": pt,
        "pq": pq,
        "travel_min": travel,
    }


def brute_force_joint(
    state: SimState, patient_ids: list[int]
) -> tuple[dict[int, int | None], float]:
    """Exact joint optimum of the myopic projection over a small instance.

    Enumerates every admissible joint assignment (including leaving any
    patient unassigned), applying choices in patient order so each later
    patient sees the capacity left by earlier ones. Returns the assignment
    map (patient_id -> hospital_id or None) and its total projected value.
    Ties resolve to the lexicographically first option vector under each
    patient's (travel, hospital id, unassigned-last) preference order.
    """
    if len(patient_ids) > BRUTE_FORCE_MAX_PATIENTS:
        raise SizeError(f"at most {BRUTE_FORCE_MAX_PATIENTS} patients, got {len(patient_ids)}")
    if len(state.scenario.hospitals) > BRUTE_FORCE_MAX_HOSPITALS:
        raise SizeError(
            f"at most {BRUTE_FORCE_MAX_HOSPITALS} hospitals, got {len(state.scenario.hospitals)}"
        )

    p_indices = []
    for pid in patient_ids:
        if pid not in state.patient_index:
            from ..engine import NotFoundError

            raise NotFoundError(f"unknown patient id {pid}")
        p_indices.append(state.patient_index[pid])

    # per-patient option list: admissible hospitals by (travel, id), then None
    options: list[list[int | None]] = []
    for p_idx in p_indices:
        opts: list[tuple[tuple, int]] = []
        for h_idx, hospital in enumerate(state.scenario.hospitals):
            if can_assign(state, p_idx, h_idx) is None:
                opts.append(((state.scenario.travel_minutes(p_idx, h_idx), hospital.id), h_idx))
        ordered: list[int | None] = [h for _, h in sorted(opts)]
        ordered.append(None)
        options.append(ordered)

    n_h = len(state.scenario.hospitals)
    best_total = -math.inf
    best_choice: tuple[int | None, ...] | None = None

    for choice in itertools.product(*options):
        assigned_count = sum(1 for h in choice if h is not None)
        if assigned_count > state.ambulances_available:
            continue
        consumed = np.zeros((n_h, len(ResourceKind)), dtype=np.int64)
        total = 0.0
        feasible = True
        for p_idx, h_idx in zip(p_indices, choice):
            patient = state.scenario.patients[p_idx]
            if h_idx is None:
                total += projected_unassigned_value(patient.severity)
                continue
            remaining = state.unreserved(h_idx) - consumed[h_idx]
            if remaining[EMERGENCY] < 1:
                feasible = False
                break
            value, _, _, _ = projected_assignment_value(
                state, p_idx, h_idx, extra_reserved=consumed[h_idx]
            )
            total += value
            q, matched = resource_match_count(
                patient.requirements, np.maximum(remaining, 0)
            )
            take = list(matched)
            take[EMERGENCY] = 1
            consumed[h_idx] += np.array(take, dtype=np.int64)
        if feasible and total > best_total:
            best_total = total
            best_choice = choice

    if best_choice is None:
        # only possible with no patients: the empty assignment
        return {}, 0.0
    assignment = {
        pid: (None if h_idx is None else state.scenario.hospitals[h_idx].id)
        for pid, h_idx in zip(patient_ids, best_choice)
    }
    return assignment, best_total


# ---------------------------------------------------------------------------
# Baseline policies


_SEVERITY_RANK = {Severity.CRITICAL: 3, Severity.SEVERE: 2, Severity.MINOR: 1}


class RandomPolicy:
    """Uniform over currently admissible (patient, hospital) pairs plus wait."""

    kind = "random"

    def act(self, obs, mask, state=None, rng=None, deterministic=False):
        if rng is None:
            raise ValueError("RandomPolicy needs an rng")
        valid = np.argwhere(mask)
        n = len(valid) + 1  # wait included
        pick = int(rng.integers(0, n))
        log_prob = -math.log(n)
        if pick == len(valid):
            return None, log_prob, 0.0
        i, j = valid[pick]
        return (int(i), int(j)), log_prob, 0.0


class GreedyPolicy:
    """Assign the most urgent assignable patient to its best hospital.

    Urgency order: severity (critical first), then longest time in system,
    then lowest patient id. Waits only when nobody is assignable.
    """

    kind = "greedy"

    def act(self, obs, mask, state=None, rng=None, deterministic=False):
        if state is None:
            raise ValueError("GreedyPolicy needs the simulation state")
        candidates = []
        for i, patient in enumerate(state.scenario.patients):
            track = state.tracks[i]
            if track.status is not PatientStatus.UNASSIGNED:
                continue
            if not mask[i].any():
                continue
            candidates.append(
                (-_SEVERITY_RANK[patient.severity], track.entry_time, patient.id, i)
            )
        if not candidates:
            return None, 0.0, 0.0
        candidates.sort()
        p_idx = candidates[0][3]
        hospital_id = greedy_suggest(state, state.scenario.patients[p_idx].id)
        if hospital_id is None:
            return None, 0.0, 0.0
        return (p_idx, state.hospital_index[hospital_id]), 0.0, 0.0
