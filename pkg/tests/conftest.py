import pytest

from carbonplace.fixtures import build_eu_fixture, shipped_deathstar_dir


@pytest.fixture(scope="session")
def golden_dir():
    d = shipped_deathstar_dir()
    assert (d / "scenario.json").exists(), "shipped golden fixture missing"
    return d


@pytest.fixture(scope="session")
def golden_scenario_path(golden_dir):
    return golden_dir / "scenario.json"


@pytest.fixture(scope="session")
def eu_scenario_path(tmp_path_factory):
    out = tmp_path_factory.mktemp("eu4day")
    return build_eu_fixture(out, seed=1)
