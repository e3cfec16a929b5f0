"""Hand-buildable micro-scenarios for unit tests."""

from __future__ import annotations

import numpy as np

from mcisim.core import (
    UNBOUNDED,
    Hospital,
    Patient,
    RevealParams,
    Scenario,
    Severity,
    SigmoidParams,
    as_resource_vector,
)

#: Saturated curve: full fleet and capacity from t=0 (the exp underflows,
#: so at(t) is exactly the ceiling for every t >= 0).
ALWAYS_ON = SigmoidParams(midpoint=-1e6, steepness=1.0, floor=0.0, ceiling=1.0)

FLAT_REVEAL = RevealParams(patients=ALWAYS_ON, ambulances=ALWAYS_ON, capacity=ALWAYS_ON)

DEFAULT_WINDOW = {Severity.CRITICAL: 60.0, Severity.SEVERE: 240.0, Severity.MINOR: UNBOUNDED}


def make_patient(pid: int, severity: Severity, req=(0, 0, 0, 0, 0, 0, 0, 0),
                 window: float | None = None, reveal: float = 0.0) -> Patient:
    return Patient(
        id=pid,
        severity=severity,
        requirements=as_resource_vector(req),
        survival_window=DEFAULT_WINDOW[severity] if window is None else window,
        reveal_time=reveal,
    )


def make_hospital(hid: int, level: int, caps) -> Hospital:
    return Hospital(id=hid, location=(43.6 + 0.01 * hid, -79.4), level=level,
                    capacities=as_resource_vector(caps))


def make_scenario(patients, hospitals, travel, *, fleet: int = 4, horizon: float = 200.0,
                  reveal: RevealParams = FLAT_REVEAL, seed: int = 0,
                  scenario_id: str = "test") -> Scenario:
    """travel is one row per patient, or a single per-hospital row shared by all."""
    if travel and not isinstance(travel[0], (list, tuple)):
        travel = [list(travel)] * len(patients)
    return Scenario(
        id=scenario_id,
        incident_location=(43.65, -79.38),
        patients=tuple(patients),
        hospitals=tuple(hospitals),
        travel=tuple(tuple(float(d) for d in row) for row in travel),
        reveal_params=reveal,
        fleet_size_max=fleet,
        horizon=horizon,
        seed=seed,
    )


def generous_caps(emergency: int = 10) -> tuple:
    return (5, emergency, 5, 5, 5, 5, 5, 5)


def random_small_state(rng: np.random.Generator, max_patients: int = 6, max_hospitals: int = 4):
    """A randomized reachable state on a tiny scenario: random rosters, a few
    random admissible assignments, and a short random advance."""
    from mcisim.engine import assign_patient, init_session, step
    from mcisim.policy import encode

    n_p = int(rng.integers(1, max_patients + 1))
    n_h = int(rng.integers(1, max_hospitals + 1))
    severities = [Severity(int(rng.integers(1, 4))) for _ in range(n_p)]
    patients = [
        make_patient(
            i,
            severities[i],
            req=tuple(int(rng.random() < 0.4) for _ in range(8)),
            reveal=float(rng.integers(0, 5)),
        )
        for i in range(n_p)
    ]
    hospitals = [
        make_hospital(
            j,
            level=int(rng.integers(1, 4)),
            caps=tuple(int(rng.integers(0, 4)) for _ in range(8)),
        )
        for j in range(n_h)
    ]
    travel = [[float(rng.integers(5, 40)) for _ in range(n_h)] for _ in range(n_p)]
    scenario = make_scenario(patients, hospitals, travel,
                             fleet=int(rng.integers(1, 5)), horizon=150.0, seed=int(rng.integers(1 << 30)))
    state, _ = init_session(scenario)
    for _ in range(int(rng.integers(0, 8))):
        obs, mask = encode(state, (n_p, n_h))
        pairs = np.argwhere(mask)
        if len(pairs) and rng.random() < 0.6:
            i, j = pairs[int(rng.integers(0, len(pairs)))]
            assign_patient(state, scenario.patients[i].id, scenario.hospitals[j].id)
        if not state.terminal:
            step(state, int(rng.integers(1, 6)))
        if state.terminal:
            break
    return state
