"""Policy descriptors and their on-disk container.

A PolicySpec names the policy kind and, for learned policies, the network
shape, observation normalization constants, and a flat little-endian
float32 parameter array (base64 inside the JSON container). Loading and
re-saving a policy file reproduces it byte for byte.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from ..core import canonical_json
from .baselines import GreedyPolicy, RandomPolicy
from .encoding import ObsNorm, action_from_flat, flat_valid_actions, obs_length
from .nets import ActorCritic

POLICY_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PolicySpec:
    kind: str  # random | greedy | learned
    caps: tuple[int, int] = (0, 0)
    hidden: int = 128
    norm: ObsNorm = field(default_factory=ObsNorm)
    params: np.ndarray | None = None  # float32, flat
    training_seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("random", "greedy", "learned"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "learned" and self.params is None:
            raise ValueError("learned policy needs a parameter blob")


class PolicyLoadError(ValueError):
    pass


class LearnedPolicy:
    """Masked categorical over (patient, hospital) pairs plus wait."""

    kind = "learned"

    def __init__(self, spec: PolicySpec):
        if spec.kind != "learned":
            raise PolicyLoadError("spec does not describe a learned policy")
        self.spec = spec
        self.caps = spec.caps
        self.norm = spec.norm
        rng = np.random.default_rng(0)  # placeholder init, overwritten below
        self.net = ActorCritic(spec.caps, spec.hidden, rng)
        expected = self.net.n_params
        if spec.params.size != expected:
            raise PolicyLoadError(
                f"parameter blob has {spec.params.size} values, network needs {expected}"
            )
        self.net.set_params(spec.params.astype(np.float64))

    def act(self, obs, mask, state=None, rng=None, deterministic=False):
        valid = flat_valid_actions(mask)
        if rng is None:
            rng = np.random.default_rng(0)
            deterministic = True
        idx, log_prob, value = self.net.step(obs, valid, rng, deterministic)
        return action_from_flat(idx, mask.shape), log_prob, value


def build_policy(spec: PolicySpec):
    if spec.kind == "random":
        return RandomPolicy()
    if spec.kind == "greedy":
        return GreedyPolicy()
    return LearnedPolicy(spec)


def act(policy, obs, mask, state=None, rng=None, deterministic=False):
    """Uniform entry point: (action pair or None-for-wait, log_prob, value)."""
    if isinstance(policy, PolicySpec):
        policy = build_policy(policy)
    return policy.act(obs, mask, state=state, rng=rng, deterministic=deterministic)


def spec_to_dict(spec: PolicySpec) -> dict:
    doc = {
        "schema_version": POLICY_SCHEMA_VERSION,
        "kind": spec.kind,
        "caps": list(spec.caps),
        "hidden": spec.hidden,
        "normalization": {
            "capacity": spec.norm.capacity,
            "travel": spec.norm.travel,
            "fleet": spec.norm.fleet,
        },
        "training_seed": spec.training_seed,
        "params_f32_le_b64": None,
    }
    if spec.params is not None:
        blob = spec.params.astype("<f4").tobytes()
        doc["params_f32_le_b64"] = base64.b64encode(blob).decode("ascii")
    return doc


def spec_from_dict(doc: dict) -> PolicySpec:
    if doc.get("schema_version") != POLICY_SCHEMA_VERSION:
        raise PolicyLoadError(f"unsupported policy schema_version {doc.get('schema_version')!r}")
    params = None
    if doc.get("params_f32_le_b64"):
        try:
            blob = base64.b64decode(doc["params_f32_le_b64"], validate=True)
        except Exception as exc:
            raise PolicyLoadError(f"corrupt parameter blob: {exc}") from exc
        params = np.frombuffer(blob, dtype="<f4").copy()
    norm = doc.get("normalization", {})
    return PolicySpec(
        kind=doc["kind"],
        caps=tuple(doc.get("caps", (0, 0))),
        hidden=int(doc.get("hidden", 128)),
        norm=ObsNorm(
            capacity=float(norm.get("capacity", 20.0)),
            travel=float(norm.get("travel", 60.0)),
            fleet=float(norm.get("fleet", 16.0)),
        ),
        params=params,
        training_seed=doc.get("training_seed"),
    )


def save_policy(spec: PolicySpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(spec_to_dict(spec)))


def load_policy(path) -> PolicySpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PolicyLoadError(f"policy file is not valid JSON: {exc}") from exc
    return spec_from_dict(doc)
