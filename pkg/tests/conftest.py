import json
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))

from gridforge.model import load_scenario, scenario_from_dict  # noqa: E402


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def toy2():
    return load_scenario(FIXTURES / "toy2.json")


@pytest.fixture
def bus3():
    return load_scenario(FIXTURES / "bus3_24h.json")


def fixture_doc(name: str) -> dict:
    return json.loads((FIXTURES / name).read_text())


def single_bus(horizon, gens, aggregators=(), inflexible=None, **extra):
    """One-bus scenario document; handy for hand-checkable toys."""
    doc = {
        "name": "single", "horizon": horizon,
        "regions": [{"id": "R", "reserve_fraction": extra.pop("reserve_fraction", 0.0)}],
        "buses": [{"id": "1", "region": "R"}], "lines": [],
        "generators": list(gens), "aggregators": [],
    }
    aggs = list(aggregators)
    if inflexible is not None and not aggs:
        aggs = [{"id": "D", "bus": "1", "inflexible": list(inflexible),
                 "underlying": [0.0] * horizon, "pv": [0.0] * horizon}]
    doc["aggregators"] = aggs
    doc.update(extra)
    return scenario_from_dict(doc)


def gen(gid, bus="1", **kw):
    d = {"id": gid, "bus": bus, "kind": "synchronous", "p_min": 0.0, "p_max": 10.0}
    d.update(kw)
    return d


def aggregator(aid, pu, pv, bus="1", inflexible=None, **kw):
    d = {"id": aid, "bus": bus, "inflexible": list(inflexible or [0.0] * len(pu)),
         "underlying": list(pu), "pv": list(pv),
         "p_b_min": -2.0, "p_b_max": 2.0, "e_min": 0.0, "e_max": 5.0, "retention": 1.0}
    d.update(kw)
    return d


@pytest.fixture(scope="session")
def bus3_96h_run():
    """The 96-hour fixture under the default 72/48 policy, solved once per session."""
    from gridforge.dispatch import HorizonPolicy, run_simulation

    s = load_scenario(FIXTURES / "bus3_96h.json")
    return s, run_simulation(s, HorizonPolicy(72, 48))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
