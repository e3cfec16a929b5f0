"""Procedural incident generation.

Scenarios are a pure function of (config, seed), drawn with numpy's PCG64
generator so they reproduce bit-for-bit across platforms. Victim discovery
follows a logistic curve: patient n of N is revealed at the earliest whole
minute t where curve(t) * N >= n, with the tail clamped to 90% of the
horizon so every casualty is eventually known. Severities come from a
configurable mix and resource requirements from severity-conditioned
probabilities; travel durations are drawn once per hospital because all
patients share the incident site.

The canned Standard (20-patient) and Complex (60-patient) exercises live
here too; Standard is regenerated under perturbed seeds until a greedy
rollout confirms every patient can be saved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    N_RESOURCE_KINDS,
    UNBOUNDED,
    DEFAULT_SURVIVAL_WINDOWS,
    Hospital,
    Patient,
    RevealParams,
    Scenario,
    Severity,
    SigmoidParams,
    as_resource_vector,
)


class ConfigError(ValueError):
    """Invalid generator configuration; message names the offending field."""


def reveal_fraction(t: float, params: SigmoidParams) -> float:
    """Fraction of a quantity revealed by minute t along the logistic curve."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return params.at(t)


# Severity-conditioned probability of needing each resource kind, in
# canonical order (ventilator, emergency, ICU, OR, pRBC, burn, peds, obs).
DEFAULT_REQUIREMENT_PROBS: dict[str, tuple[float, ...]] = {
    "critical": (0.60, 1.00, 0.70, 0.50, 0.40, 0.10, 0.05, 0.03),
    "severe": (0.15, 0.90, 0.30, 0.30, 0.25, 0.08, 0.05, 0.03),
    "minor": (0.00, 0.50, 0.02, 0.05, 0.05, 0.05, 0.05, 0.03),
}

# Per-level capacity draw ranges (inclusive), by resource kind. Level 1 is
# the most capable trauma center.
DEFAULT_CAPACITY_RANGES: dict[int, tuple[tuple[int, int], ...]] = {
    1: ((6, 12), (10, 16), (5, 10), (3, 6), (6, 12), (1, 3), (1, 4), (1, 3)),
    2: ((3, 6), (8, 12), (2, 5), (2, 4), (3, 6), (0, 2), (1, 3), (1, 2)),
    3: ((0, 2), (6, 10), (0, 2), (0, 2), (1, 3), (0, 1), (0, 2), (0, 2)),
}

DEFAULT_INCIDENT_LOCATION = (43.651, -79.383)


@dataclass(frozen=True)
class GeneratorConfig:
    patient_count: int = 20
    severity_mix: tuple[float, float, float] = (0.5, 0.3, 0.2)  # minor, severe, critical
    hospital_count: int = 4
    level_mix: tuple[float, float, float] = (0.25, 0.40, 0.35)  # level 1, 2, 3
    capacity_ranges: dict[int, tuple[tuple[int, int], ...]] = field(
        default_factory=lambda: dict(DEFAULT_CAPACITY_RANGES)
    )
    travel_time_range: tuple[int, int] = (8, 45)
    horizon: float = 480.0
    fleet_size_max: int = 8
    survival_windows: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_SURVIVAL_WINDOWS)
    )
    requirement_probs: dict[str, tuple[float, ...]] = field(
        default_factory=lambda: dict(DEFAULT_REQUIREMENT_PROBS)
    )
    incident_location: tuple[float, float] = DEFAULT_INCIDENT_LOCATION
    # Reveal-curve overrides; None picks the horizon-scaled defaults below.
    patient_reveal: SigmoidParams | None = None
    ambulance_reveal: SigmoidParams | None = None
    capacity_reveal: SigmoidParams | None = None
    # When set, the hospital roster and travel column are drawn from this
    # seed instead of the scenario seed, pinning the regional configuration
    # across a family of scenarios.
    hospital_seed: int | None = None
    name: str = "scenario"
    seed: int = 0


def default_reveal_params(horizon: float) -> RevealParams:
    k = 10.0 / horizon
    return RevealParams(
        patients=SigmoidParams(midpoint=0.20 * horizon, steepness=k, floor=0.0, ceiling=1.0),
        ambulances=SigmoidParams(midpoint=0.10 * horizon, steepness=k, floor=0.20, ceiling=1.0),
        capacity=SigmoidParams(midpoint=0.30 * horizon, steepness=k, floor=0.60, ceiling=1.0),
    )


def _check_config(config: GeneratorConfig) -> None:
    if not (10 <= config.patient_count <= 500):
        raise ConfigError(f"patient_count must be in [10, 500], got {config.patient_count}")
    if config.hospital_count < 1:
        raise ConfigError("hospital_count must be >= 1")
    for name, mix in (("severity_mix", config.severity_mix), ("level_mix", config.level_mix)):
        if len(mix) != 3 or any(p < 0 for p in mix):
            raise ConfigError(f"{name} must be three non-negative probabilities")
        if abs(sum(mix) - 1.0) > 1e-9:
            raise ConfigError(f"{name} must sum to 1, got {sum(mix)}")
    lo, hi = config.travel_time_range
    if not (0 <= lo <= hi):
        raise ConfigError(f"travel_time_range must be a non-empty range, got {config.travel_time_range}")
    if config.horizon <= 0:
        raise ConfigError("horizon must be > 0")
    if config.fleet_size_max < 0:
        raise ConfigError("fleet_size_max must be >= 0")
    for level in (1, 2, 3):
        ranges = config.capacity_ranges.get(level)
        if ranges is None or len(ranges) != N_RESOURCE_KINDS:
            raise ConfigError(f"capacity_ranges[{level}] must give 8 ranges")
        if any(r[0] > r[1] or r[0] < 0 for r in ranges):
            raise ConfigError(f"capacity_ranges[{level}] has an empty or negative range")
    for sev in ("minor", "severe", "critical"):
        probs = config.requirement_probs.get(sev)
        if probs is None or len(probs) != N_RESOURCE_KINDS:
            raise ConfigError(f"requirement_probs[{sev!r}] must give 8 probabilities")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ConfigError(f"requirement_probs[{sev!r}] out of [0, 1]")


_SEVERITY_ORDER = (Severity.MINOR, Severity.SEVERE, Severity.CRITICAL)
_SEVERITY_KEY = {Severity.MINOR: "minor", Severity.SEVERE: "severe", Severity.CRITICAL: "critical"}


def reveal_schedule(n: int, params: SigmoidParams, horizon: float) -> list[int]:
    """Quantile-inverted reveal minutes: entry n (1-based) is revealed at the
    earliest whole minute t with curve(t) * n_total >= n, clamped to 90% of
    the horizon."""
    clamp = int(math.floor(0.9 * horizon))
    times: list[int] = []
    t = 0
    for rank in range(1, n + 1):
        while t <= clamp and reveal_fraction(t, params) * n < rank:
            t += 1
        times.append(min(t, clamp))
    return times


def _draw_hospitals(
    config: GeneratorConfig, rng: np.random.Generator
) -> tuple[tuple[Hospital, ...], list[float]]:
    levels = [
        int(rng.choice([1, 2, 3], p=np.asarray(config.level_mix) / sum(config.level_mix)))
        for _ in range(config.hospital_count)
    ]
    # at least one top-tier center so critical patients always have a target
    if 1 not in levels:
        levels[0] = 1
    hospitals = []
    for j, level in enumerate(levels):
        caps = [int(rng.integers(lo, hi + 1)) for lo, hi in config.capacity_ranges[level]]
        lat = config.incident_location[0] + float(rng.uniform(-0.25, 0.25))
        lon = config.incident_location[1] + float(rng.uniform(-0.25, 0.25))
        hospitals.append(
            Hospital(id=j, location=(round(lat, 6), round(lon, 6)), level=level,
                     capacities=as_resource_vector(caps))
        )
    lo, hi = config.travel_time_range
    travel_per_hospital = [float(rng.integers(lo, hi + 1)) for _ in hospitals]
    return tuple(hospitals), travel_per_hospital


def generate_scenario(config: GeneratorConfig) -> Scenario:
    """Deterministically expand a config into a full scenario."""
    _check_config(config)
    rng = np.random.default_rng(np.random.PCG64(config.seed))

    reveal = RevealParams(
        patients=config.patient_reveal
        or default_reveal_params(config.horizon).patients,
        ambulances=config.ambulance_reveal
        or default_reveal_params(config.horizon).ambulances,
        capacity=config.capacity_reveal
        or default_reveal_params(config.horizon).capacity,
    )

    n = config.patient_count
    mix = np.asarray(config.severity_mix) / sum(config.severity_mix)
    severities = [
        _SEVERITY_ORDER[int(rng.choice(3, p=mix))] for _ in range(n)
    ]
    reveal_times = reveal_schedule(n, reveal.patients, config.horizon)

    patients = []
    for i, severity in enumerate(severities):
        probs = config.requirement_probs[_SEVERITY_KEY[severity]]
        req = [1 if rng.random() < p else 0 for p in probs]
        window = config.survival_windows[_SEVERITY_KEY[severity]]
        patients.append(
            Patient(
                id=i,
                severity=severity,
                requirements=as_resource_vector(req),
                survival_window=window,
                reveal_time=float(reveal_times[i]),
            )
        )

    if config.hospital_seed is not None:
        h_rng = np.random.default_rng(np.random.PCG64(config.hospital_seed))
    else:
        h_rng = rng
    hospitals, travel_per_hospital = _draw_hospitals(config, h_rng)

    travel = tuple(tuple(travel_per_hospital) for _ in range(n))

    return Scenario(
        id=f"{config.name}-{config.seed}",
        incident_location=config.incident_location,
        patients=tuple(patients),
        hospitals=hospitals,
        travel=travel,
        reveal_params=reveal,
        fleet_size_max=config.fleet_size_max,
        horizon=config.horizon,
        seed=config.seed,
        survival_windows=dict(config.survival_windows),
    )


# ---------------------------------------------------------------------------
# Canned exercises


def standard_config(seed: int = 0) -> GeneratorConfig:
    """20-patient exercise sized so a competent policy saves everyone.

    Ambulances start scarce (two on scene) and grow along the fleet curve,
    so triage order matters: a policy that ignores severity can strand a
    critical patient past the survival window even though capacity always
    suffices for a prioritizing one.
    """
    return GeneratorConfig(
        name="standard",
        patient_count=20,
        hospital_count=4,
        fleet_size_max=6,
        horizon=480.0,
        travel_time_range=(8, 40),
        ambulance_reveal=SigmoidParams(midpoint=72.0, steepness=10.0 / 480.0, floor=0.15, ceiling=1.0),
        seed=seed,
    )


def complex_config(seed: int = 0) -> GeneratorConfig:
    """60-patient exercise; scarcity is the point, no feasibility promise."""
    return GeneratorConfig(
        name="complex",
        patient_count=60,
        hospital_count=6,
        fleet_size_max=14,
        horizon=600.0,
        travel_time_range=(8, 45),
        seed=seed,
    )


class GenerationError(RuntimeError):
    pass


MAX_FEASIBILITY_RETRIES = 40


def standard_scenario(seed: int = 0) -> Scenario:
    """Generate a Standard exercise whose greedy rollout loses no one.

    Retries under deterministically perturbed seeds until the feasibility
    check passes; the returned scenario records the seed actually used.
    """
    # imported here: the rollout check rides on the engine and policy layers
    from .policy import greedy_rollout_mortality

    for attempt in range(MAX_FEASIBILITY_RETRIES):
        trial_seed = seed + attempt * 1_000_003
        scenario = generate_scenario(standard_config(trial_seed))
        if greedy_rollout_mortality(scenario) == 0.0:
            return scenario
    raise GenerationError(
        f"no feasible standard scenario within {MAX_FEASIBILITY_RETRIES} retries of seed {seed}"
    )


def complex_scenario(seed: int = 0) -> Scenario:
    return generate_scenario(complex_config(seed))


# ---------------------------------------------------------------------------
# Desk-scale training family: 10 patients, 3 fixed hospitals


def family_10x3_config(seed: int = 0) -> GeneratorConfig:
    """Small training family with a pinned regional layout.

    The three hospitals are drawn once from a fixed hospital seed (one per
    level; the level 3 site has no ventilators, ICU, or surgery) so the
    policy's task is stable across episode seeds while patients vary.
    Near-template requirements per severity and a small fleet make both
    hospital choice and dispatch order matter: misrouting a critical
    patient to the clinic forfeits most of the reward, and wasting the
    early ambulances on minors lets survival windows lapse.
    """
    return GeneratorConfig(
        name="fam10x3",
        patient_count=10,
        severity_mix=(0.25, 0.35, 0.40),
        hospital_count=3,
        level_mix=(1 / 3, 1 / 3, 1 / 3),
        fleet_size_max=2,
        horizon=240.0,
        travel_time_range=(10, 35),
        capacity_ranges={
            1: ((5, 6), (5, 6), (5, 6), (4, 5), (5, 6), (1, 2), (1, 2), (1, 2)),
            2: ((1, 2), (5, 6), (1, 2), (3, 4), (3, 4), (1, 2), (1, 2), (1, 2)),
            3: ((0, 0), (4, 5), (0, 0), (0, 1), (0, 1), (0, 0), (1, 2), (1, 2)),
        },
        requirement_probs={
            "critical": (0.90, 1.00, 0.90, 0.30, 0.30, 0.02, 0.02, 0.02),
            "severe": (0.05, 1.00, 0.10, 0.85, 0.70, 0.02, 0.02, 0.02),
            "minor": (0.00, 0.90, 0.00, 0.02, 0.02, 0.02, 0.02, 0.02),
        },
        ambulance_reveal=SigmoidParams(midpoint=24.0, steepness=10.0 / 240.0, floor=0.40, ceiling=1.0),
        hospital_seed=424266,  # draws one hospital per level: L1 at 35 min, L2 at 19, L3 at 11
        seed=seed,
    )


FAMILIES = {
    "standard": standard_config,
    "complex": complex_config,
    "family-10x3": family_10x3_config,
}


def family_config(name: str, seed: int = 0) -> GeneratorConfig:
    try:
        return FAMILIES[name](seed)
    except KeyError:
        raise ConfigError(f"unknown scenario family {name!r}; known: {sorted(FAMILIES)}") from None
