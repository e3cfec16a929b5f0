"""Domain types, resource matching, and scenario validation/serialization."""

import json
import math

import pytest
from hypothesis import given, strategies as st

from mcisim.core import (
    N_RESOURCE_KINDS,
    ResourceKind,
    Severity,
    SigmoidParams,
    as_resource_vector,
    canonical_json,
    load_scenario,
    resource_match_count,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)

from helpers import make_hospital, make_patient, make_scenario


def test_canonical_resource_order():
    assert [k.name for k in sorted(ResourceKind, key=int)] == [
        "VENTILATOR", "EMERGENCY", "ICU", "OPERATING_ROOM",
        "PRBC", "BURN_CENTER", "PEDIATRICS", "OBSTETRICS",
    ]
    assert N_RESOURCE_KINDS == 8


def test_severity_ordering():
    assert Severity.CRITICAL > Severity.SEVERE > Severity.MINOR
    assert int(Severity.DECEASED) == 0


def test_match_count_partial():
    q, matched = resource_match_count((1, 1, 1, 1, 0, 0, 0, 0), (0, 5, 2, 0, 0, 0, 0, 0))
    assert q == 2
    assert matched == (0, 1, 1, 0, 0, 0, 0, 0)


def test_match_count_no_requirements():
    q, matched = resource_match_count((0,) * 8, (9, 9, 9, 9, 9, 9, 9, 9))
    assert q == 0
    assert matched == (0,) * 8


def test_match_count_exact():
    q, matched = resource_match_count((1, 0, 0, 0, 0, 0, 0, 0), (1, 0, 0, 0, 0, 0, 0, 0))
    assert q == 1
    assert matched == (1, 0, 0, 0, 0, 0, 0, 0)


def test_match_count_rejects_nonbinary_required():
    with pytest.raises(ValueError):
        resource_match_count((2, 0, 0, 0, 0, 0, 0, 0), (1,) * 8)


binary_vec = st.tuples(*([st.integers(0, 1)] * 8))
count_vec = st.tuples(*([st.integers(0, 5)] * 8))


@given(required=binary_vec, available=count_vec, extra=count_vec)
def test_match_count_monotone_in_availability(required, available, extra):
    q1, _ = resource_match_count(required, available)
    more = tuple(a + e for a, e in zip(available, extra))
    q2, _ = resource_match_count(required, more)
    assert q2 >= q1


@given(required=binary_vec, available=count_vec)
def test_match_count_upper_bound(required, available):
    q, matched = resource_match_count(required, available)
    Q = sum(required)
    nonzero_available = sum(1 for r, a in zip(required, available) if r and a > 0)
    assert 0 <= q <= min(Q, nonzero_available)
    assert all(m <= r for m, r in zip(matched, required))


def test_as_resource_vector_validates():
    with pytest.raises(ValueError):
        as_resource_vector([1, 2, 3])
    with pytest.raises(ValueError):
        as_resource_vector([-1, 0, 0, 0, 0, 0, 0, 0])


def _well_formed():
    patients = [
        make_patient(0, Severity.CRITICAL, req=(1, 1, 0, 0, 0, 0, 0, 0)),
        make_patient(1, Severity.MINOR),
    ]
    hospitals = [make_hospital(0, 1, (5, 8, 5, 5, 5, 1, 1, 1))]
    return make_scenario(patients, hospitals, [10.0])


def test_validate_well_formed():
    assert validate_scenario(_well_formed()) == []


def test_validate_bad_hospital_level():
    s = _well_formed()
    bad = s.hospitals[0]
    s = make_scenario(list(s.patients), [make_hospital(bad.id, 4, bad.capacities)], [[10.0], [10.0]])
    violations = validate_scenario(s)
    assert any(v.code == "level" and "hospital 0" in v.subject for v in violations)


def test_validate_travel_shape():
    s = _well_formed()
    s = make_scenario(list(s.patients), list(s.hospitals), [[10.0]])  # one row for two patients
    violations = validate_scenario(s)
    assert any(v.code == "travel_shape" for v in violations)


def test_validate_nonbinary_requirements():
    p = make_patient(0, Severity.SEVERE)
    object.__setattr__(p, "requirements", (2, 0, 0, 0, 0, 0, 0, 0))
    s = make_scenario([p], [make_hospital(0, 2, (1,) * 8)], [5.0])
    assert any(v.code == "requirements" for v in validate_scenario(s))


def test_sigmoid_params_check():
    assert SigmoidParams(10, 0.5).check() == []
    assert SigmoidParams(10, -1.0).check() != []
    assert SigmoidParams(10, 1.0, floor=0.9, ceiling=0.5).check() != []


def test_scenario_roundtrip_is_byte_identical(tmp_path):
    s = _well_formed()
    path = tmp_path / "scn.json"
    save_scenario(s, path)
    first = path.read_bytes()
    loaded = load_scenario(path)
    save_scenario(loaded, path)
    assert path.read_bytes() == first
    assert loaded == s


def test_scenario_dict_roundtrip_preserves_unbounded_window():
    s = _well_formed()
    doc = scenario_to_dict(s)
    assert doc["patients"][1]["survival_window_min"] is None  # minor: unbounded
    back = scenario_from_dict(json.loads(canonical_json(doc)))
    assert math.isinf(back.patients[1].survival_window)
    assert back.patients[0].requirements == s.patients[0].requirements


def test_scenario_schema_version_enforced():
    doc = scenario_to_dict(_well_formed())
    doc["schema_version"] = 99
    with pytest.raises(ValueError):
        scenario_from_dict(doc)
