from importlib.resources import files

import pytest

from gridseg.case import load_case
from gridseg.segmenter import analyze, run_segmentation

FIXTURES = files("gridseg") / "fixtures"


def fixture_path(name: str):
    return FIXTURES / name


@pytest.fixture(scope="session")
def ts1():
    return load_case(fixture_path("ts1.json"))


@pytest.fixture(scope="session")
def ts2():
    return load_case(fixture_path("ts2.json"))


@pytest.fixture(scope="session")
def ts1_analysis(ts1):
    return analyze(ts1)


@pytest.fixture(scope="session")
def ts2_analysis(ts2):
    return analyze(ts2)


@pytest.fixture(scope="session")
def ts1_plan(ts1):
    return run_segmentation(ts1)
