"""Fixed-size observation vectors and action masks over engine states.

Slot layout, per patient slot: [assignable bit, severity one-hot (minor,
severe, critical), 8 requirement bits, elapsed survival fraction,
in-transit bit]. Patients still in play (unassigned or riding) populate
their slot; hidden, admitted, and deceased patients leave it zeroed. The
in-transit bit lets the value function see rewards already in flight --
without it, dispatching to a far hospital looks strictly worse than a
near one because the arrival pays off outside the advantage horizon.

Per hospital slot: [present bit, level one-hot, 8 unreserved capacities
(normalized), travel time (normalized)]. Two globals: clock fraction and
available ambulances (normalized). The action mask is exactly the
engine's admissibility predicate per (patient, hospital) pair; flattened
policies get one extra trailing "wait" action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import N_RESOURCE_KINDS, PatientStatus, ResourceKind, Severity
from ..engine import SimState

PATIENT_SLOT = 1 + 3 + N_RESOURCE_KINDS + 1 + 1  # 14
HOSPITAL_SLOT = 1 + 3 + N_RESOURCE_KINDS + 1  # 13
N_GLOBALS = 2
EMERGENCY_IDX = int(ResourceKind.EMERGENCY)


class CapacityError(ValueError):
    """Roster larger than the encoder's slot capacity."""


@dataclass(frozen=True)
class ObsNorm:
    """Divisors that squash raw quantities into [0, 1]."""

    capacity: float = 20.0
    travel: float = 60.0
    fleet: float = 16.0


def obs_length(max_patients: int, max_hospitals: int) -> int:
    return PATIENT_SLOT * max_patients + HOSPITAL_SLOT * max_hospitals + N_GLOBALS


_SEV_SLOT = {Severity.MINOR: 0, Severity.SEVERE: 1, Severity.CRITICAL: 2}


def encode(
    state: SimState,
    caps: tuple[int, int],
    norm: ObsNorm = ObsNorm(),
) -> tuple[np.ndarray, np.ndarray]:
    """Encode a state into (observation, action_mask).

    The observation is a float64 vector of obs_length(*caps); the mask is a
    (max_patients, max_hospitals) boolean matrix, true exactly where
    assign_patient would succeed right now.
    """
    max_p, max_h = caps
    n_p = len(state.scenario.patients)
    n_h = len(state.scenario.hospitals)
    if n_p > max_p or n_h > max_h:
        raise CapacityError(
            f"roster ({n_p} patients, {n_h} hospitals) exceeds caps ({max_p}, {max_h})"
        )

    obs = np.zeros(obs_length(max_p, max_h))
    mask = np.zeros((max_p, max_h), dtype=bool)

    in_play = (PatientStatus.UNASSIGNED, PatientStatus.ASSIGNED, PatientStatus.IN_TRANSIT)
    for i in range(n_p):
        patient = state.scenario.patients[i]
        track = state.tracks[i]
        if track.status not in in_play:
            continue
        base = i * PATIENT_SLOT
        obs[base] = 1.0 if track.status is PatientStatus.UNASSIGNED else 0.0
        obs[base + 1 + _SEV_SLOT[patient.severity]] = 1.0
        obs[base + 4 : base + 4 + N_RESOURCE_KINDS] = patient.requirements
        elapsed = state.clock - track.entry_time
        if np.isfinite(patient.survival_window):
            obs[base + 4 + N_RESOURCE_KINDS] = min(1.0, max(0.0, elapsed / patient.survival_window))
        if track.status is not PatientStatus.UNASSIGNED:
            obs[base + 5 + N_RESOURCE_KINDS] = 1.0

    h_off = PATIENT_SLOT * max_p
    for j in range(n_h):
        hospital = state.scenario.hospitals[j]
        base = h_off + j * HOSPITAL_SLOT
        obs[base] = 1.0
        obs[base + 1 + (hospital.level - 1)] = 1.0
        unreserved = state.unreserved(j)
        obs[base + 4 : base + 4 + N_RESOURCE_KINDS] = np.minimum(
            unreserved / norm.capacity, 1.0
        )
        travel = state.scenario.travel[0][j] if n_p else 0.0
        obs[base + 4 + N_RESOURCE_KINDS] = min(1.0, travel / norm.travel)

    g_off = h_off + HOSPITAL_SLOT * max_h
    obs[g_off] = min(1.0, state.clock / state.scenario.horizon)
    obs[g_off + 1] = min(1.0, state.ambulances_available / norm.fleet)

    # vectorized form of can_assign over the whole grid
    if not state.terminal and state.ambulances_available >= 1:
        assignable = np.fromiter(
            (state.tracks[i].status is PatientStatus.UNASSIGNED for i in range(n_p)),
            dtype=bool,
            count=n_p,
        )
        emergency_ok = (
            state.effective_capacity[:, EMERGENCY_IDX] - state.reservations[:, EMERGENCY_IDX]
        ) >= 1
        mask[:n_p, :n_h] = assignable[:, None] & emergency_ok[None, :]

    return obs, mask


def flat_valid_actions(mask: np.ndarray) -> np.ndarray:
    """Flattened mask with the trailing always-valid wait action."""
    return np.concatenate([mask.ravel(), [True]])


def action_from_flat(index: int, mask_shape: tuple[int, int]) -> tuple[int, int] | None:
    """Map a flat action index back to (patient_slot, hospital_slot); the
    trailing index is the wait action (None)."""
    max_p, max_h = mask_shape
    if index == max_p * max_h:
        return None
    if not 0 <= index < max_p * max_h:
        raise ValueError(f"action index {index} out of range for shape {mask_shape}")
    return divmod(index, max_h)


PAIR_DIM = PATIENT_SLOT + HOSPITAL_SLOT + N_GLOBALS


def pair_features(obs_batch: np.ndarray, caps: tuple[int, int]) -> np.ndarray:
    """Per-action feature rows for a pair-scoring policy head.

    Maps (B, obs_dim) observations to (B, P*H+1, PAIR_DIM): every
    (patient, hospital) pair gets [patient slot, hospital slot, globals];
    the trailing wait action gets zeroed slots with the same globals.
    """
    max_p, max_h = caps
    B = obs_batch.shape[0]
    p_feats = obs_batch[:, : max_p * PATIENT_SLOT].reshape(B, max_p, PATIENT_SLOT)
    h_off = max_p * PATIENT_SLOT
    h_feats = obs_batch[:, h_off : h_off + max_h * HOSPITAL_SLOT].reshape(B, max_h, HOSPITAL_SLOT)
    globals_ = obs_batch[:, h_off + max_h * HOSPITAL_SLOT :]

    n_actions = max_p * max_h + 1
    out = np.zeros((B, n_actions, PAIR_DIM))
    p_rep = np.repeat(p_feats, max_h, axis=1)           # (B, P*H, pslot)
    h_rep = np.tile(h_feats, (1, max_p, 1))             # (B, P*H, hslot)
    out[:, :-1, :PATIENT_SLOT] = p_rep
    out[:, :-1, PATIENT_SLOT : PATIENT_SLOT + HOSPITAL_SLOT] = h_rep
    out[:, :, PATIENT_SLOT + HOSPITAL_SLOT :] = globals_[:, None, :]
    return out
