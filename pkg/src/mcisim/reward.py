"""Multi-objective assignment reward model.

Pure functions scoring transition outcomes per patient. Live admissions
earn a severity-scaled blend of a resource-match factor (PQ, the fraction
of required resource kinds the receiving hospital could supply) and a
time factor (PT, the fraction of the survival window remaining at
arrival), with coefficients that depend on the hospital's trauma level.
Deaths carry fixed penalties: larger when the patient was never assigned,
smaller (and level-dependent) when the patient expired in transit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .core import Severity
from .events import Event, EventKind


class RewardCase(Enum):
    NEWLY_DECEASED = "newly_deceased"
    CRITICAL = "critical"
    SEVERE = "severe"
    MINOR = "minor"
    EXPIRED_POST_ASSIGNMENT = "expired_post_assignment"


_LIVE_CASE = {
    Severity.CRITICAL: RewardCase.CRITICAL,
    Severity.SEVERE: RewardCase.SEVERE,
    Severity.MINOR: RewardCase.MINOR,
}

# Severity-scaled coefficients: PQ weight, and PT weight by hospital level.
_PQ_COEF = {
    RewardCase.CRITICAL: 300.0,
    RewardCase.SEVERE: 200.0,
    RewardCase.MINOR: 100.0,
}
_PT_COEF = {
    RewardCase.CRITICAL: {1: 300.0, 2: 150.0, 3: 0.0},
    RewardCase.SEVERE: {1: 200.0, 2: 200.0, 3: 100.0},
    RewardCase.MINOR: {1: 0.0, 2: 50.0, 3: 100.0},
}
_DEATH_UNASSIGNED = {Severity.CRITICAL: -600.0, Severity.SEVERE: -400.0}
_DEATH_POST_ASSIGNMENT = {1: -300.0, 2: -200.0, 3: -100.0}


def time_penalty(t: float, T: float) -> float:
    """Remaining-window factor PT = max(0, 1 - t/T), in [0, 1].

    t is elapsed minutes from system entry to hospital arrival; T is the
    maximum survival duration without intervention. An unbounded window
    (T = inf) yields PT = 1 for any finite t.
    """
    if not T > 0:
        raise ValueError(f"survival window must be > 0, got {T}")
    if t < 0:
        raise ValueError(f"elapsed time must be >= 0, got {t}")
    if math.isinf(T):
        return 1.0
    return max(0.0, 1.0 - t / T)


def resource_penalty(q: int, Q: int) -> float:
    """Match factor PQ = q/Q, in [0, 1]; a patient requiring nothing (Q = 0)
    counts as fully matched."""
    if Q < 0 or q < 0 or q > Q:
        raise ValueError(f"need 0 <= q <= Q, got q={q}, Q={Q}")
    if Q == 0:
        return 1.0
    return q / Q


def live_case_for(severity: Severity) -> RewardCase:
    try:
        return _LIVE_CASE[severity]
    except KeyError:
        raise ValueError(f"no live reward case for severity {severity}") from None


def patient_reward(
    case: RewardCase,
    severity: Severity,
    hospital_level: int | None,
    pt: float = 0.0,
    pq: float = 0.0,
) -> float:
    """Per-patient reward for one outcome case.

    Raises ValueError when the arguments are inconsistent with the case
    (e.g. a newly-deceased minor, or a live case missing a hospital level).
    """
    if case is RewardCase.NEWLY_DECEASED:
        if severity not in _DEATH_UNASSIGNED:
            raise ValueError(f"unassigned death undefined for severity {severity}")
        if hospital_level is not None:
            raise ValueError("unassigned death takes no hospital level")
        return _DEATH_UNASSIGNED[severity]

    if hospital_level not in (1, 2, 3):
        raise ValueError(f"hospital level must be 1-3, got {hospital_level}")

    if case is RewardCase.EXPIRED_POST_ASSIGNMENT:
        if severity not in (Severity.SEVERE, Severity.CRITICAL):
            raise ValueError(f"post-assignment expiry undefined for severity {severity}")
        return _DEATH_POST_ASSIGNMENT[hospital_level]

    if live_case_for(severity) is not case:
        raise ValueError(f"case {case} inconsistent with severity {severity}")
    if not (0.0 <= pt <= 1.0 and 0.0 <= pq <= 1.0):
        raise ValueError("PT and PQ must lie in [0, 1]")
    return _PQ_COEF[case] * pq + _PT_COEF[case][hospital_level] * pt


@dataclass(frozen=True)
class PatientReward:
    patient_id: int
    reward: float
    pt: float
    pq: float
    case: RewardCase


@dataclass(frozen=True)
class RewardBreakdown:
    per_patient: tuple[PatientReward, ...]
    total: float

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_patient": [
                {
                    "patient_id": r.patient_id,
                    "reward": r.reward,
                    "pt": r.pt,
                    "pq": r.pq,
                    "case": r.case.value,
                }
                for r in self.per_patient
            ],
        }


def transition_reward(pre_state, post_state, events: list[Event]) -> RewardBreakdown:
    """Score one tick's worth of events.

    Arrivals yield the live severity-cased reward evaluated at the arrival
    time; deaths yield the unassigned penalty or, for patients that expired
    in transit, the level-dependent post-assignment penalty. Patients with
    no arrival or death this tick contribute nothing. The state arguments
    exist for symmetry with the engine's step contract; event payloads are
    self-contained.
    """
    rows: list[PatientReward] = []
    for ev in events:
        if ev.kind is EventKind.ARRIVED:
            p = ev.payload
            severity = Severity(p["severity"])
            case = live_case_for(severity)
            pt = time_penalty(p["arrival_min"] - p["entry_min"], p["survival_window_min"] or math.inf)
            pq = resource_penalty(p["q"], p["Q"])
            rows.append(
                PatientReward(
                    patient_id=ev.patient_id,
                    reward=patient_reward(case, severity, p["hospital_level"], pt, pq),
                    pt=pt,
                    pq=pq,
                    case=case,
                )
            )
        elif ev.kind is EventKind.DIED:
            p = ev.payload
            severity = Severity(p["severity"])
            if p["phase"] == "in_transit":
                case = RewardCase.EXPIRED_POST_ASSIGNMENT
                r = patient_reward(case, severity, p["hospital_level"])
            else:
                case = RewardCase.NEWLY_DECEASED
                r = patient_reward(case, severity, None)
            rows.append(PatientReward(ev.patient_id, r, 0.0, 0.0, case))
    total = math.fsum(r.reward for r in rows)
    return RewardBreakdown(per_patient=tuple(rows), total=total)
