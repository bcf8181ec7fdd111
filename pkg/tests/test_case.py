import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridseg.case import (
    Branch,
    CaseError,
    branch_km_expand,
    case_to_dict,
    change_base,
    islands,
    machine_from_system_base,
    machine_on_system_base,
    normalize,
    parse_case,
    serialize_case,
)


def minimal_doc():
    return {
        "system": {"base_mva": 100.0, "frequency_hz": 50.0},
        "buses": [{"id": 1, "kind": "slack", "v_setpoint": 1.0}, {"id": 2, "kind": "pq"}],
        "branches": [{"id": "a", "from_bus": 1, "to_bus": 2, "r": 0.01, "x": 0.1, "rating_mva": 100}],
        "machines": [],
        "loads": [{"bus": 2, "p": 0.5, "q": 0.1}],
    }


def machine_doc(mid="G1", bus=1, rating=200.0, **over):
    doc = {
        "id": mid, "bus": bus, "rating_mva": rating, "H": 6.5, "D": 0.0, "Ra": 0.0025,
        "Xd": 1.8, "Xq": 1.7, "Xd_p": 0.3, "Xq_p": 0.55, "Xd_pp": 0.25, "Xq_pp": 0.25, "Xl": 0.2,
        "Td0_p": 8.0, "Td0_pp": 0.03, "Tq0_p": 0.4, "Tq0_pp": 0.05,
        "exciter": {"Tr": 0.01, "Ka": 200.0},
    }
    doc.update(over)
    return doc


def test_ts1_fixture_shape(ts1):
    assert len(ts1.machines) == 6
    assert len(ts1.buses) == 13
    assert len(ts1.branches) == 12
    assert ts1.system_base_mva == 100.0
    assert ts1.frequency_hz == 50.0


def test_transformer_base_change_in_fixture(ts1):
    assert ts1.branch("1-10").x == pytest.approx(0.075, rel=1e-12)
    assert change_base(0.15, 200.0, 100.0) == pytest.approx(0.075)


def test_fixture_lines_use_per_km_data(ts1):
    br = ts1.branch("30-35")
    assert (br.r, br.x, br.b_shunt) == pytest.approx((0.005, 0.05, 0.0875))
    br = ts1.branch("10-20")
    assert (br.r, br.x, br.b_shunt) == pytest.approx((0.0025, 0.025, 0.04375))


def test_machine_conversion_recorded(ts1):
    assert ts1.meta["machine_base_to_system_base"]["G1"] == pytest.approx(0.5)


@pytest.mark.parametrize(
    "length,expected",
    [(50.0, (0.005, 0.05, 0.0875)), (25.0, (0.0025, 0.025, 0.04375))],
)
def test_branch_km_expand(length, expected):
    got = branch_km_expand(length, {"r": 1e-4, "x": 1e-3, "b": 1.75e-3})
    assert got == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("length", [0.0, -3.0])
def test_branch_km_expand_rejects_non_positive_length(length):
    with pytest.raises(CaseError):
        branch_km_expand(length, {"x": 1e-3})


def test_per_km_branch_in_document():
    doc = minimal_doc()
    doc["branches"][0] = {"id": "a", "from_bus": 1, "to_bus": 2, "length_km": 50,
                          "per_km": {"r": 1e-4, "x": 1e-3, "b": 1.75e-3}}
    br = parse_case(json.dumps(doc)).branch("a")
    assert (br.r, br.x, br.b_shunt) == pytest.approx((0.005, 0.05, 0.0875))


def test_empty_bus_list_is_rejected():
    doc = minimal_doc()
    doc["buses"] = []
    with pytest.raises(CaseError) as err:
        parse_case(json.dumps(doc))
    assert err.value.path == "buses"


def test_duplicate_bus_id_reports_path():
    doc = minimal_doc()
    doc["buses"].append({"id": 2, "kind": "pq"})
    with pytest.raises(CaseError) as err:
        parse_case(json.dumps(doc))
    assert err.value.path == "buses[2].id"


def test_dangling_branch_reference():
    doc = minimal_doc()
    doc["branches"][0]["to_bus"] = 7
    with pytest.raises(CaseError) as err:
        parse_case(json.dumps(doc))
    assert "branches[0].to_bus" in str(err.value)


@pytest.mark.parametrize("base", [0.0, -100.0])
def test_non_positive_base(base):
    doc = minimal_doc()
    doc["system"]["base_mva"] = base
    with pytest.raises(CaseError, match="base_mva"):
        parse_case(json.dumps(doc))


def test_invalid_json_and_missing_keys():
    with pytest.raises(CaseError):
        parse_case("{not json")
    with pytest.raises(CaseError, match="system"):
        parse_case("{}")


def test_voltage_setpoint_range():
    doc = minimal_doc()
    doc["buses"][0]["v_setpoint"] = 1.6
    with pytest.raises(CaseError, match="v_setpoint"):
        parse_case(json.dumps(doc))


def test_machine_reactance_ordering_enforced():
    doc = minimal_doc()
    doc["machines"] = [machine_doc(Xd_p=2.0)]
    with pytest.raises(CaseError, match="machines\\[0\\]"):
        parse_case(json.dumps(doc))


def test_zero_reactance_branch_rejected():
    doc = minimal_doc()
    doc["branches"][0]["x"] = 0.0
    with pytest.raises(CaseError, match="x"):
        parse_case(json.dumps(doc))


def test_parallel_circuits_merge():
    doc = minimal_doc()
    doc["branches"].append({"id": "b", "from_bus": 2, "to_bus": 1, "r": 0.01, "x": 0.1, "rating_mva": 100})
    case = normalize(parse_case(json.dumps(doc)))
    assert len(case.branches) == 1
    br = case.branches[0]
    assert (br.r, br.x) == pytest.approx((0.005, 0.05), rel=1e-12)
    assert br.rating_mva == 200
    assert case.original_circuits(br.id) == ("a", "b")


def test_normalize_without_parallel_elements_is_identity(ts1):
    assert normalize(ts1) is ts1


def test_colocated_machines_merge():
    doc = minimal_doc()
    doc["machines"] = [machine_doc("G1"), machine_doc("G1b")]
    case = normalize(parse_case(json.dumps(doc)))
    assert len(case.machines) == 1
    m = case.machines[0]
    assert m.rating_mva == 400
    # identical units in parallel keep their per-unit values on the combined rating
    assert m.Xd == pytest.approx(1.8)
    assert m.H == pytest.approx(6.5)
    assert case.machine_origin[m.id] == ("G1", "G1b")


def test_round_trip(ts1, ts2):
    for case in (ts1, ts2):
        again = parse_case(serialize_case(case))
        assert case_to_dict(again) == case_to_dict(case)


def test_islands(ts1):
    assert islands(ts1) == [ts1.bus_ids]
    parts = islands(ts1, exclude=["35-40"])
    assert parts == [[1, 2, 3, 10, 20, 30, 35], [4, 5, 6, 40, 50, 60]]


def test_branch_admittances_with_tap():
    br = Branch("t", 1, 2, r=0.0, x=0.1, b_shunt=0.0, tap_ratio=1.05)
    yff, yft, ytf, ytt = br.admittances()
    ys = 1 / 0.1j
    assert yff == pytest.approx(ys / 1.05**2)
    assert yft == ytf == pytest.approx(-ys / 1.05)
    assert ytt == pytest.approx(ys)


positive = st.floats(min_value=0.05, max_value=5.0)


@st.composite
def machine_params(draw):
    xl = draw(st.floats(0.05, 0.2))
    xdpp = xl + draw(positive) * 0.1
    xdp = xdpp + draw(positive) * 0.1
    xd = xdp + draw(positive)
    xqpp = xdpp
    xqp = xqpp + draw(positive) * 0.1
    xq = xqp + draw(positive)
    rating = draw(st.floats(10.0, 2000.0))
    return machine_doc(
        rating=rating, Xl=xl, Xd_pp=xdpp, Xd_p=xdp, Xd=xd, Xq_pp=xqpp, Xq_p=xqp, Xq=xq,
        H=draw(st.floats(0.5, 12.0)), D=draw(st.floats(0.0, 3.0)), Ra=draw(st.floats(0.0, 0.01)),
    )


@settings(max_examples=60, deadline=None)
@given(machine_params(), st.floats(10.0, 1000.0))
def test_per_unit_round_trip(mdoc, sbase):
    doc = minimal_doc()
    doc["system"]["base_mva"] = sbase
    doc["machines"] = [mdoc]
    m = parse_case(json.dumps(doc)).machines[0]
    back = machine_from_system_base(machine_on_system_base(m, sbase), m.rating_mva, sbase)
    for name in ("H", "D", "Ra", "Xd", "Xq", "Xd_p", "Xq_p", "Xd_pp", "Xq_pp", "Xl"):
        orig, got = getattr(m, name), getattr(back, name)
        assert math.isclose(got, orig, rel_tol=1e-12, abs_tol=1e-300)


@st.composite
def parallel_docs(draw):
    doc = minimal_doc()
    doc["buses"].append({"id": 3, "kind": "pq"})
    doc["branches"] = []
    n = 0
    for u, v in ((1, 2), (2, 3), (1, 3)):
        for _ in range(draw(st.integers(1, 3))):
            n += 1
            flip = draw(st.booleans())
            doc["branches"].append({
                "id": f"c{n}", "from_bus": v if flip else u, "to_bus": u if flip else v,
                "r": draw(st.floats(0.0, 0.05)), "x": draw(st.floats(0.01, 0.5)),
                "b_shunt": draw(st.floats(0.0, 0.2)), "rating_mva": draw(st.floats(1.0, 1000.0)),
            })
    machines = draw(st.integers(1, 3))
    doc["machines"] = [machine_doc(f"G{k}", rating=draw(st.floats(50, 500))) for k in range(machines)]
    return doc


@settings(max_examples=40, deadline=None)
@given(parallel_docs())
def test_normalize_idempotent_and_serializable(doc):
    case = parse_case(json.dumps(doc))
    once = normalize(case)
    twice = normalize(once)
    assert case_to_dict(twice) == case_to_dict(once)
    assert case_to_dict(parse_case(serialize_case(once))) == case_to_dict(once)
    assert len(once.branches) == 3
    circuits = sorted(c for br in once.branches for c in once.original_circuits(br.id))
    assert circuits == sorted(b["id"] for b in doc["branches"])
    total = sum(b["rating_mva"] for b in doc["branches"])
    assert sum(br.rating_mva for br in once.branches) == pytest.approx(total)
    charging = sum(b["b_shunt"] for b in doc["branches"])
    assert sum(br.b_shunt for br in once.branches) == pytest.approx(charging)
