"""Domain types for MCI command simulation.

Defines the shared vocabulary used by every other module: triage severity
codes, the eight-kind medical resource vector, patients, hospitals, travel
durations, logistic reveal curves, and the scenario container that bundles
them. Everything here is an immutable value type; mutation happens only
inside the simulation engine's own state.

Canonical resource-kind ordering is fixed here and used everywhere vectors
are indexed or serialized: ventilator, emergency, ICU, operating room,
pRBC, burn center, pediatrics, obstetrics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Sequence

SCHEMA_VERSION = 1

#: Sentinel for an unbounded survival window (minor patients never time out).
UNBOUNDED = math.inf


class Severity(IntEnum):
    """Four-tier triage code; higher value = greater urgency among the living."""

    DECEASED = 0
    MINOR = 1
    SEVERE = 2
    CRITICAL = 3


class ResourceKind(IntEnum):
    """The eight medical resource kinds, in canonical vector order."""

    VENTILATOR = 0
    EMERGENCY = 1
    ICU = 2
    OPERATING_ROOM = 3
    PRBC = 4
    BURN_CENTER = 5
    PEDIATRICS = 6
    OBSTETRICS = 7


N_RESOURCE_KINDS = len(ResourceKind)

#: An 8-slot vector of non-negative counts indexed by ResourceKind.
#: Requirement vectors additionally hold only 0/1 entries.
ResourceVector = tuple[int, ...]

ZERO_VECTOR: ResourceVector = (0,) * N_RESOURCE_KINDS


class PatientStatus(Enum):
    HIDDEN = "hidden"
    UNASSIGNED = "unassigned"
    ASSIGNED = "assigned"
    IN_TRANSIT = "in_transit"
    ADMITTED = "admitted"
    DECEASED = "deceased"


def as_resource_vector(counts: Iterable[int]) -> ResourceVector:
    vec = tuple(int(c) for c in counts)
    if len(vec) != N_RESOURCE_KINDS:
        raise ValueError(f"resource vector must have {N_RESOURCE_KINDS} entries, got {len(vec)}")
    if any(c < 0 for c in vec):
        raise ValueError("resource vector entries must be non-negative")
    return vec


def is_binary(vec: Sequence[int]) -> bool:
    return all(c in (0, 1) for c in vec)


def resource_match_count(
    required: Sequence[int], available: Sequence[int]
) -> tuple[int, ResourceVector]:
    """Count the required resource kinds the available vector can supply.

    Returns ``(q, matched)`` where ``matched[k] = 1`` iff the kind is both
    required and available (count >= 1), and ``q = sum(matched)``. Totally
    defined for binary ``required``.
    """
    if not is_binary(required):
        raise ValueError("required vector must be binary")
    matched = tuple(
        1 if required[k] == 1 and available[k] >= 1 else 0 for k in range(N_RESOURCE_KINDS)
    )
    return sum(matched), matched


@dataclass(frozen=True)
class SigmoidParams:
    """Logistic reveal curve: floor + (ceiling-floor) / (1 + exp(-k (t - t0))).

    midpoint is in simulated minutes, steepness in 1/minutes. The curve is
    nondecreasing in t whenever steepness > 0.
    """

    midpoint: float
    steepness: float
    floor: float = 0.0
    ceiling: float = 1.0

    def at(self, t: float) -> float:
        z = -self.steepness * (t - self.midpoint)
        # exp overflow guard: beyond ~700 the logistic is saturated anyway
        if z > 700.0:
            return self.floor
        return self.floor + (self.ceiling - self.floor) / (1.0 + math.exp(z))

    def check(self) -> list[str]:
        problems = []
        if not self.steepness > 0:
            problems.append("steepness must be > 0")
        if not (0.0 <= self.floor < self.ceiling <= 1.0):
            problems.append("need 0 <= floor < ceiling <= 1")
        return problems


@dataclass(frozen=True)
class RevealParams:
    """Reveal curves for the three time-gated quantities."""

    patients: SigmoidParams
    ambulances: SigmoidParams
    capacity: SigmoidParams


@dataclass(frozen=True)
class Patient:
    """One casualty. survival_window is math.inf for patients that never
    time out; entry_time is set by the engine when the patient is revealed."""

    id: int
    severity: Severity
    requirements: ResourceVector
    survival_window: float
    reveal_time: float
    status: PatientStatus = PatientStatus.HIDDEN
    entry_time: float | None = None

    @property
    def required_count(self) -> int:
        return sum(self.requirements)


@dataclass(frozen=True)
class Hospital:
    id: int
    location: tuple[float, float]
    level: int
    capacities: ResourceVector


@dataclass(frozen=True)
class Scenario:
    """A complete, self-contained incident definition.

    travel[i][j] is the transport duration in simulated minutes from the
    incident site to hospital j for patient i; all patients share the site,
    so rows are identical by construction but kept per-patient.
    """

    id: str
    incident_location: tuple[float, float]
    patients: tuple[Patient, ...]
    hospitals: tuple[Hospital, ...]
    travel: tuple[tuple[float, ...], ...]
    reveal_params: RevealParams
    fleet_size_max: int
    horizon: float
    seed: int
    survival_windows: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_SURVIVAL_WINDOWS)
    )

    def travel_minutes(self, patient_idx: int, hospital_idx: int) -> float:
        return self.travel[patient_idx][hospital_idx]


#: Default maximum survival duration without intervention, by severity name.
#: Critical follows the golden-hour convention; minors never expire.
DEFAULT_SURVIVAL_WINDOWS: dict[str, float] = {
    "critical": 60.0,
    "severe": 240.0,
    "minor": UNBOUNDED,
}


@dataclass(frozen=True)
class Violation:
    """One scenario-invariant breach; data, not an exception."""

    code: str
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.detail}"


def validate_scenario(scenario: Scenario) -> list[Violation]:
    """Check every structural invariant; empty list means well-formed."""
    out: list[Violation] = []

    def bad(code: str, subject: str, detail: str) -> None:
        out.append(Violation(code, subject, detail))

    if scenario.horizon <= 0:
        bad("horizon", scenario.id, "horizon must be > 0")
    if scenario.fleet_size_max < 0:
        bad("fleet", scenario.id, "fleet_size_max must be >= 0")
    if len(scenario.hospitals) < 1:
        bad("hospitals", scenario.id, "at least one hospital required")

    seen_pids: set[int] = set()
    for p in scenario.patients:
        subject = f"patient {p.id}"
        if p.id in seen_pids:
            bad("duplicate_id", subject, "patient id reused")
        seen_pids.add(p.id)
        if len(p.requirements) != N_RESOURCE_KINDS:
            bad("requirements", subject, "requirement vector must have 8 entries")
        elif not is_binary(p.requirements):
            bad("requirements", subject, "requirement vector must be binary")
        if p.severity not in (Severity.MINOR, Severity.SEVERE, Severity.CRITICAL):
            bad("severity", subject, f"unsupported roster severity {p.severity}")
        if p.severity in (Severity.SEVERE, Severity.CRITICAL) and not p.survival_window > 0:
            bad("survival_window", subject, "severe/critical patients need survival_window > 0")
        if p.reveal_time < 0:
            bad("reveal_time", subject, "reveal_time must be >= 0")

    seen_hids: set[int] = set()
    for h in scenario.hospitals:
        subject = f"hospital {h.id}"
        if h.id in seen_hids:
            bad("duplicate_id", subject, "hospital id reused")
        seen_hids.add(h.id)
        if h.level not in (1, 2, 3):
            bad("level", subject, f"level must be 1-3, got {h.level}")
        if len(h.capacities) != N_RESOURCE_KINDS:
            bad("capacities", subject, "capacity vector must have 8 entries")
        elif any(c < 0 for c in h.capacities):
            bad("capacities", subject, "capacities must be non-negative")

    if len(scenario.travel) != len(scenario.patients):
        bad(
            "travel_shape",
            scenario.id,
            f"travel matrix has {len(scenario.travel)} rows for {len(scenario.patients)} patients",
        )
    for i, row in enumerate(scenario.travel):
        if len(row) != len(scenario.hospitals):
            bad("travel_shape", scenario.id, f"travel row {i} has {len(row)} columns")
        elif any(d < 0 for d in row):
            bad("travel_values", scenario.id, f"travel row {i} has negative durations")

    for name, params in (
        ("patients", scenario.reveal_params.patients),
        ("ambulances", scenario.reveal_params.ambulances),
        ("capacity", scenario.reveal_params.capacity),
    ):
        for problem in params.check():
            bad("reveal_params", f"{scenario.id}.{name}", problem)

    return out


# ---------------------------------------------------------------------------
# Scenario file format (schema_version 1)


def _sigmoid_to_dict(s: SigmoidParams) -> dict:
    return {
        "midpoint_min": s.midpoint,
        "steepness_per_min": s.steepness,
        "floor": s.floor,
        "ceiling": s.ceiling,
    }


def _sigmoid_from_dict(d: dict) -> SigmoidParams:
    return SigmoidParams(
        midpoint=float(d["midpoint_min"]),
        steepness=float(d["steepness_per_min"]),
        floor=float(d["floor"]),
        ceiling=float(d["ceiling"]),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_id": scenario.id,
        "incident_location": list(scenario.incident_location),
        "patients": [
            {
                "id": p.id,
                "severity": int(p.severity),
                "requirements": list(p.requirements),
                "survival_window_min": None if math.isinf(p.survival_window) else p.survival_window,
                "reveal_time_min": p.reveal_time,
            }
            for p in scenario.patients
        ],
        "hospitals": [
            {
                "id": h.id,
                "location": list(h.location),
                "level": h.level,
                "capacities": list(h.capacities),
            }
            for h in scenario.hospitals
        ],
        "travel_matrix": [list(row) for row in scenario.travel],
        "reveal_params": {
            "patients": _sigmoid_to_dict(scenario.reveal_params.patients),
            "ambulances": _sigmoid_to_dict(scenario.reveal_params.ambulances),
            "capacity": _sigmoid_to_dict(scenario.reveal_params.capacity),
        },
        "fleet": {"size_max": scenario.fleet_size_max},
        "horizon_min": scenario.horizon,
        "seed": scenario.seed,
        "survival_windows_min": {
            k: (None if math.isinf(v) else v) for k, v in scenario.survival_windows.items()
        },
    }


def scenario_from_dict(doc: dict) -> Scenario:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported scenario schema_version {version!r}")
    patients = tuple(
        Patient(
            id=int(p["id"]),
            severity=Severity(int(p["severity"])),
            requirements=as_resource_vector(p["requirements"]),
            survival_window=UNBOUNDED
            if p["survival_window_min"] is None
            else float(p["survival_window_min"]),
            reveal_time=float(p["reveal_time_min"]),
        )
        for p in doc["patients"]
    )
    hospitals = tuple(
        Hospital(
            id=int(h["id"]),
            location=(float(h["location"][0]), float(h["location"][1])),
            level=int(h["level"]),
            capacities=as_resource_vector(h["capacities"]),
        )
        for h in doc["hospitals"]
    )
    rp = doc["reveal_params"]
    windows = {
        k: (UNBOUNDED if v is None else float(v))
        for k, v in doc.get("survival_windows_min", {}).items()
    } or dict(DEFAULT_SURVIVAL_WINDOWS)
    return Scenario(
        id=str(doc["scenario_id"]),
        incident_location=(float(doc["incident_location"][0]), float(doc["incident_location"][1])),
        patients=patients,
        hospitals=hospitals,
        travel=tuple(tuple(float(d) for d in row) for row in doc["travel_matrix"]),
        reveal_params=RevealParams(
            patients=_sigmoid_from_dict(rp["patients"]),
            ambulances=_sigmoid_from_dict(rp["ambulances"]),
            capacity=_sigmoid_from_dict(rp["capacity"]),
        ),
        fleet_size_max=int(doc["fleet"]["size_max"]),
        horizon=float(doc["horizon_min"]),
        seed=int(doc["seed"]),
        survival_windows=windows,
    )


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, fixed separators, trailing newline.

    Re-dumping a loaded document reproduces the original bytes, which the
    round-trip contract for every artifact relies on.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(scenario_to_dict(scenario)))


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
