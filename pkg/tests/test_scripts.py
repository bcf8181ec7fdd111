import importlib.util
from pathlib import Path

import pytest

from gridseg.case import load_case, serialize_case
from gridseg.powerflow import solve_power_flow
from gridseg.segmenter import Cut, SegmentationPlan, segmented_case

from conftest import fixture_path

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def load_script(name):
    spec = importlib.util.spec_from_file_location(name, SCRIPTS / f"{name}.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def plan_with(*cuts):
    return SegmentationPlan(
        cuts=tuple(Cut(f"{a}-{b}", k + 1, a, b, (f"{a}-{b}",), 1.0, piv, ()) for k, (a, b, piv) in enumerate(cuts)),
        islands=(),
        iterations=len(cuts),
    )


def test_n44_checks_accept_reference_plan():
    n44 = load_script("reproduce_n44")
    checks = n44.check_plan(plan_with((6500, 5100, 6500), (3359, 5101, 3359)))
    assert all(checks.values())


@pytest.mark.parametrize(
    "cuts",
    [
        [(6500, 5100, 6500)],
        [(3359, 5101, 3359), (6500, 5100, 6500)],
        [(6500, 5100, 5100), (3359, 5101, 3359)],
        [(6500, 5100, 6500), (3359, 5102, 3359)],
    ],
)
def test_n44_checks_reject_other_plans(cuts):
    n44 = load_script("reproduce_n44")
    assert not all(n44.check_plan(plan_with(*cuts)).values())


def test_n44_script_on_wrong_case_fails(capsys):
    n44 = load_script("reproduce_n44")
    assert n44.main([str(fixture_path("ts1.json"))]) == 1
    assert "FAIL" in capsys.readouterr().out


@pytest.mark.parametrize("name", ["ts1_dcseg1.json", "ts1_dcseg2.json"])
def test_segmented_fixtures_are_up_to_date(name):
    gen = load_script("make_dcseg_fixtures")
    base = load_case(fixture_path("ts1.json"))
    fresh = serialize_case(segmented_case(base, solve_power_flow(base), [gen.VARIANTS[name]]))
    assert fresh == fixture_path(name).read_text()
