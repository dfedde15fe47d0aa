import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import gen, single_bus
from gridforge.milp import INFEASIBLE, OPTIMAL, SolverSettings, check_feasible, solve_milp
from gridforge.model import scenario_from_dict
from gridforge.uc import (GenState, SystemState, Window, build_uc, expected_row_counts,
                          reference_buses)
from oracles import uc_bruteforce
from uc_toys import random_uc_toy


def solve(f):
    sol = solve_milp(f.problem)
    return sol


def val(f, sol, kind, entity, t):
    return float(sol.x[f.var(kind, entity, t)])


def two_bus(load, loss=0.0, flow_limit=100.0, base_mva=100.0, gens=None, **line):
    ln = {"id": "L", "from": "1", "to": "2", "flow_limit": flow_limit, "x": 0.1,
          "loss_fraction": loss}
    ln.update(line)
    T = len(load)
    return scenario_from_dict({
        "horizon": T, "base_mva": base_mva,
        "regions": [{"id": "R", "reserve_fraction": 0.0}],
        "buses": [{"id": "1", "region": "R"}, {"id": "2", "region": "R"}],
        "lines": [ln],
        "generators": gens or [gen("g", "1", p_max=10.0, c_var=1.0)],
        "aggregators": [{"id": "D", "bus": "2", "inflexible": list(load),
                         "underlying": [0.0] * T, "pv": [0.0] * T}]})


# -- objective --------------------------------------------------------------

def test_objective_coefficients_copied():
    s = single_bus(2, [gen("g", c_fix=1.0, c_var=10.0)], inflexible=[1, 1])
    f = build_uc(s, Window(0, 2))
    P = f.problem
    for t in range(2):
        assert P.objective[f.var("s", "g", t)] == 1.0
        assert P.objective[f.var("p", "g", t)] == 10.0
    assert sorted(P.objective.values()) == [1.0, 1.0, 10.0, 10.0]


def test_res_bids_at_zero_cost():
    s = single_bus(1, [gen("w", kind="res_wind", c_var=7.0), gen("g", c_var=3.0)], inflexible=[1])
    f = build_uc(s, Window(0, 1))
    assert f.problem.objective.get(f.var("p", "w", 0), 0.0) == 0.0
    f2 = build_uc(s.with_changes(res_zero_cost=False), Window(0, 1))
    assert f2.problem.objective[f2.var("p", "w", 0)] == 7.0


def test_startup_cost_charged_once():
    s = single_bus(1, [gen("g", c_su=100.0, c_var=1.0, initial_status=0, initial_output=0.0)],
                   inflexible=[2.0])
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    assert sol.objective == pytest.approx(100.0 + 2.0)
    assert val(f, sol, "u", "g", 0) == 1.0


# -- balance and losses -----------------------------------------------------

def test_lossless_transfer():
    s = two_bus([1.0])
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    assert val(f, sol, "p", "g", 0) == pytest.approx(1.0)
    assert val(f, sol, "flow", "L", 0) == pytest.approx(1.0)


def test_losses_split_between_endpoints():
    # half of 10% of |f| at each end: f = 1/0.95 reaches bus 2, p_g = 1.05 f
    s = two_bus([1.0], loss=0.10)
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    flow = val(f, sol, "flow", "L", 0)
    assert flow == pytest.approx(1 / 0.95)
    assert val(f, sol, "p", "g", 0) == pytest.approx(1.05 / 0.95)
    assert val(f, sol, "p", "g", 0) == pytest.approx(1.105263, abs=1e-6)
    total_loss = 0.10 * (val(f, sol, "flow_pos", "L", 0) + val(f, sol, "flow_neg", "L", 0))
    assert val(f, sol, "p", "g", 0) == pytest.approx(1.0 + total_loss)


def test_isolated_bus_gets_a_balance_row():
    s = single_bus(1, [gen("g")], inflexible=[1.0])
    s.buses.append(type(s.buses[0])("9", "R"))
    f = build_uc(s, Window(0, 1))
    assert "9" in reference_buses(s)
    rows = [c for c in f.problem.constraints if c.name == "balance[9,0]"]
    assert len(rows) == 1 and not rows[0].coeffs and rows[0].rhs == 0.0
    assert solve(f).status == OPTIMAL


def test_reference_bus_is_lowest_id():
    s = two_bus([1.0])
    f = build_uc(s, Window(0, 1))
    lo, hi = f.problem.bounds()
    j = f.var("theta", "1", 0)
    assert lo[j] == hi[j] == 0.0
    assert reference_buses(scenario_from_dict({
        "horizon": 1, "regions": [{"id": "R"}],
        "buses": [{"id": "10", "region": "R"}, {"id": "9", "region": "R"}, {"id": "x", "region": "R"}],
        "lines": [{"id": "a", "from": "10", "to": "9", "flow_limit": 1}],
        "generators": [gen("g", "9")]})) == {"9", "x"}


# -- line limits ------------------------------------------------------------

def cheap_far_expensive_near(load, **kw):
    gens = [gen("cheap", "1", p_max=100.0, c_var=1.0), gen("dear", "2", p_max=100.0, c_var=50.0)]
    return two_bus(load, gens=gens, **kw)


def test_flow_limit_confines_angle():
    s = cheap_far_expensive_near([5.0], flow_limit=1.0, base_mva=1.0, susceptance=10.0)
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    d = val(f, sol, "theta", "1", 0) - val(f, sol, "theta", "2", 0)
    assert d == pytest.approx(0.1)
    assert val(f, sol, "flow", "L", 0) == pytest.approx(1.0)


def test_angle_limit_binds_when_flow_limit_is_huge():
    s = cheap_far_expensive_near([80.0], flow_limit=1e6, susceptance=1.0)
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    d = val(f, sol, "theta", "1", 0) - val(f, sol, "theta", "2", 0)
    assert d == pytest.approx(math.pi / 6)
    assert val(f, sol, "flow", "L", 0) == pytest.approx(100.0 * math.pi / 6)


# -- generator limits and logic ---------------------------------------------

def test_offline_forces_zero_output_and_start_logic():
    s = single_bus(2, [gen("g", c_fix=5.0, initial_status=0, initial_output=0.0)],
                   inflexible=[0.0, 3.0])
    f = build_uc(s, Window(0, 2))
    sol = solve(f)
    assert val(f, sol, "s", "g", 0) == 0.0 and val(f, sol, "p", "g", 0) == 0.0
    assert (val(f, sol, "u", "g", 1), val(f, sol, "d", "g", 1)) == (1.0, 0.0)


def test_res_cap_follows_trace():
    s = single_bus(1, [gen("w", kind="res_pv", p_max=10.0, availability_trace=[0.5]),
                       gen("g", c_var=100.0)], inflexible=[8.0])
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    assert val(f, sol, "p", "w", 0) == pytest.approx(5.0)
    assert val(f, sol, "p", "g", 0) == pytest.approx(3.0)


# -- reserves ---------------------------------------------------------------

def test_reserve_requirement_from_regional_demand():
    s = single_bus(1, [gen("g", p_max=50.0)], inflexible=[10.0], reserve_fraction=0.10)
    f = build_uc(s, Window(0, 1))
    row = next(c for c in f.problem.constraints if c.family == "reserve")
    assert row.rhs == pytest.approx(1.0)


def test_reserve_uses_underlying_flexible_demand_too():
    agg = {"id": "A", "bus": "1", "inflexible": [6.0], "underlying": [4.0], "pv": [4.0],
           "p_b_min": -1, "p_b_max": 1, "e_max": 1}
    s = single_bus(1, [gen("g", p_max=50.0)], aggregators=[agg], reserve_fraction=0.10)
    row = next(c for c in build_uc(s, Window(0, 1)).problem.constraints if c.family == "reserve")
    assert row.rhs == pytest.approx(1.0)


def test_reserve_without_synchronous_units_is_infeasible():
    s = single_bus(1, [gen("w", kind="res_wind", p_max=20.0)], inflexible=[5.0], reserve_fraction=0.1)
    assert solve(build_uc(s, Window(0, 1))).status == INFEASIBLE


def test_reserve_met_with_equality():
    s = single_bus(1, [gen("g", p_max=5.0, c_var=1.0)], inflexible=[4.5], reserve_fraction=1 / 9)
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    assert sol.status == OPTIMAL
    row = next(i for i, c in enumerate(f.problem.constraints) if c.family == "reserve")
    lhs = f.problem.matrix().toarray()[row] @ sol.x
    assert lhs == pytest.approx(0.5) and f.problem.constraints[row].rhs == pytest.approx(0.5)


# -- minimum up and down ----------------------------------------------------

def test_min_up_row_structure():
    s = single_bus(6, [gen("g", min_up=2)], inflexible=[1] * 6)
    f = build_uc(s, Window(0, 6))
    row = next(c for c in f.problem.constraints if c.name == "min_up[g,3]")
    assert set(row.coeffs) == {f.var("u", "g", 3), f.var("d", "g", 3), f.var("d", "g", 4)}
    s1 = single_bus(3, [gen("g", min_up=1, min_down=1)], inflexible=[1] * 3)
    f1 = build_uc(s1, Window(0, 3))
    for c in f1.problem.constraints:
        if c.family in ("min_up", "min_down"):
            assert len(c.coeffs) == 2 and c.rhs == 1.0


def test_min_up_keeps_unit_on_after_spike():
    s = single_bus(4, [gen("g", p_max=10.0, c_fix=10.0, c_var=1.0, min_up=3,
                           initial_status=0, initial_output=0.0)], inflexible=[5, 0, 0, 0])
    f = build_uc(s, Window(0, 4))
    sol = solve(f)
    assert [val(f, sol, "s", "g", t) for t in range(4)] == [1, 1, 1, 0]
    ref = uc_bruteforce(s)
    assert ref[1] == [[1, 1, 1, 0]] and sol.objective == pytest.approx(ref[0])


def test_history_locks_leading_hours():
    s = single_bus(3, [gen("g", c_fix=10.0, min_down=3, initial_status=0, initial_output=0.0),
                       gen("b", c_var=100.0)], inflexible=[1, 1, 1])
    state = SystemState({"g": GenState(0, 0.0, 1), "b": GenState(1, 0.0)}, {})
    f = build_uc(s, Window(0, 3), state)
    assert f.problem.family_counts()["min_down_init"] == 2
    sol = solve(f)
    assert [val(f, sol, "u", "g", t) for t in range(2)] == [0.0, 0.0]


# -- ramps ------------------------------------------------------------------

def ramp_toy(load):
    return single_bus(len(load), [gen("g", p_max=5.0, ramp_up=1.0, ramp_down=1.0,
                                      initial_status=1, initial_output=0.0)], inflexible=load)


def test_ramp_limit_binds():
    assert solve(build_uc(ramp_toy([5.0]), Window(0, 1))).status == INFEASIBLE
    assert solve(build_uc(ramp_toy([1, 2, 3, 4, 5]), Window(0, 5))).status == OPTIMAL


def test_infinite_ramps_emit_no_rows():
    s = single_bus(3, [gen("g")], inflexible=[1, 1, 1])
    counts = build_uc(s, Window(0, 3)).problem.family_counts()
    assert "ramp_up" not in counts and "ramp_down" not in counts


def test_constant_demand_leaves_ramps_slack():
    s = ramp_toy([0.0, 0.0, 0.0])
    f = build_uc(s, Window(0, 3))
    sol = solve(f)
    A = f.problem.matrix().toarray()
    for i, c in enumerate(f.problem.constraints):
        if c.family.startswith("ramp"):
            assert abs(A[i] @ sol.x - c.rhs) == pytest.approx(1.0)


# -- audits -----------------------------------------------------------------

def test_row_count_closed_form(toy2):
    # 2 buses, 1 line, 2 generators (both with finite ramps), 1 region, 24 h
    f = build_uc(toy2, Window(0, 24))
    counts = f.problem.family_counts()
    assert counts == expected_row_counts(toy2, Window(0, 24))
    assert counts["balance"] == 48 and counts["line_limit"] == 48 and counts["angle_limit"] == 48
    assert counts["min_up"] == counts["min_down"] == 48 and counts["reserve"] == 24
    assert f.problem.n_cons == sum(counts.values())


@pytest.mark.parametrize("seed", range(10))
def test_row_count_matches_on_random_toys(seed):
    s = random_uc_toy(seed)
    f = build_uc(s, Window(0, s.horizon))
    assert f.problem.family_counts() == expected_row_counts(s, Window(0, s.horizon))


@pytest.mark.parametrize("seed", range(25))
def test_energy_audit_and_commitment_replay(seed):
    s = random_uc_toy(seed)
    f = build_uc(s, Window(0, s.horizon))
    sol = solve(f)
    if sol.status != OPTIMAL:
        return
    assert not check_feasible(f.problem, sol.x, 1e-6)
    for t in range(s.horizon):
        gen_total = sum(val(f, sol, "p", g.id, t) for g in s.generators)
        demand = sum(s.traces[a.inflexible][t] for a in s.aggregators)
        losses = sum(ln.loss_fraction * (val(f, sol, "flow_pos", ln.id, t)
                                         + val(f, sol, "flow_neg", ln.id, t)) for ln in s.lines)
        assert gen_total == pytest.approx(demand + losses, abs=1e-6)
    for g in s.generators:
        prev = g.s0
        for t in range(s.horizon):
            st_, u, d = (round(val(f, sol, k, g.id, t)) for k in "sud")
            assert u == int(st_ > prev) and d == int(st_ < prev)
            prev = st_


@pytest.mark.parametrize("seed", range(30))
def test_matches_brute_force(seed):
    s = random_uc_toy(seed)
    ref = uc_bruteforce(s)
    for backend in ("builtin", "highs"):
        sol = solve_milp(build_uc(s, Window(0, s.horizon)).problem, SolverSettings(backend=backend))
        if ref is None:
            assert sol.status == INFEASIBLE
        else:
            assert sol.status == OPTIMAL
            assert sol.objective == pytest.approx(ref[0], rel=1e-9, abs=1e-6)


def _cannot_reduce(s, f, sol, t):
    """Every online priced unit is pinned at p_min or by its ramp-down limit."""
    for g in s.generators:
        p = val(f, sol, "p", g.id, t)
        if val(f, sol, "s", g.id, t) < 0.5 or p <= 1e-9 or g.c_var == 0:
            continue
        prev = g.p0 if t == 0 else val(f, sol, "p", g.id, t - 1)
        if p > g.p_min + 1e-7 and p > prev - g.ramp_down + 1e-7:
            return False
    return True


@settings(max_examples=60, deadline=None)
@given(st.integers(1000, 10**6))
def test_flow_magnitude_split_is_tight_when_losses_cost(seed):
    # A loose split dissipates surplus; that can only pay off when no online
    # priced unit is able to back down.
    s = random_uc_toy(seed)
    f = build_uc(s, Window(0, s.horizon))
    sol = solve(f)
    if sol.status != OPTIMAL:
        return
    for ln in s.lines:
        if ln.loss_fraction == 0:
            continue
        for t in range(s.horizon):
            pos, neg = val(f, sol, "flow_pos", ln.id, t), val(f, sol, "flow_neg", ln.id, t)
            if min(pos, neg) > 1e-7:
                assert _cannot_reduce(s, f, sol, t)


def test_loose_split_absorbs_forced_surplus():
    gens = [gen("a", "1", p_min=5.0, p_max=30.0, c_var=1.0, min_up=3, initial_status=1,
                initial_output=5.0, initial_hours_in_state=1),
            gen("b", "2", p_min=5.0, p_max=30.0, c_var=1.0, min_up=3, initial_status=1,
                initial_output=5.0, initial_hours_in_state=1)]
    s = two_bus([9.5], loss=0.1, gens=gens)
    f = build_uc(s, Window(0, 1))
    sol = solve(f)
    loss = 0.1 * (val(f, sol, "flow_pos", "L", 0) + val(f, sol, "flow_neg", "L", 0))
    assert loss == pytest.approx(0.5)
