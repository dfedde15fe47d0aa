"""Upper-level unit commitment over a DC network with proportional losses.

Each ``build_*`` function appends one family of rows to a shared
:class:`UcFormulation` and returns the indices of the rows it added.  Row
counts per family for G generators, B buses, L lines, R regions, T hours:

=================  =======================================================
family             rows
=================  =======================================================
balance            B * T
flow_def           L * T
flow_split         L * T
line_limit         2 * L * T
angle_limit        2 * L * T
gen_min, gen_max   G * T each
logic              G * T
reserve            R * T
min_up, min_down   G * T each, plus one row per hour still locked by the
                   history carried into the window (``*_init``)
ramp_up/down       G * T each, only for generators with a finite limit
=================  =======================================================
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .milp import BINARY, EQ, GE, LE, MilpProblem
from .model import AggregatorModel, Generator, GridScenario

SHED_PENALTY = 1e6


@dataclass(frozen=True)
class Window:
    start: int
    length: int

    @property
    def hours(self) -> range:
        return range(self.start, self.start + self.length)


@dataclass
class GenState:
    status: int
    output: float
    hours_in_state: int = 10_000


@dataclass
class SystemState:
    """Conditions carried into a window from the committed past."""

    gens: dict[str, GenState]
    energy: dict[str, float]

    @classmethod
    def initial(cls, s: GridScenario) -> "SystemState":
        return cls(
            {g.id: GenState(g.s0, g.p0, g.initial_hours_in_state) for g in s.generators},
            {a.id: a.e0 for a in s.aggregators},
        )


@dataclass
class UcFormulation:
    scenario: GridScenario
    window: Window
    state: SystemState
    problem: MilpProblem = field(default_factory=MilpProblem)
    index: dict[tuple[str, str, int], int] = field(default_factory=dict)

    def var(self, kind: str, entity: str, t: int) -> int:
        return self.index[(kind, entity, t)]

    def new_var(self, kind, entity, t, lb=0.0, ub=math.inf, vtype="continuous") -> int:
        j = self.problem.add_var(f"{kind}[{entity},{t}]", lb, ub, vtype)
        self.index[(kind, entity, t)] = j
        return j

    @property
    def T(self) -> int:
        return self.window.length

    def hour(self, t: int) -> int:
        return self.window.start + t


def _bus_key(bus_id: str):
    return (0, int(bus_id), "") if bus_id.lstrip("-").isdigit() else (1, 0, bus_id)


def reference_buses(s: GridScenario) -> set[str]:
    """Lowest-id bus of every connected component."""
    adj = defaultdict(set)
    for ln in s.lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    refs, seen = set(), set()
    for b in sorted((b.id for b in s.buses), key=_bus_key):
        if b in seen:
            continue
        refs.add(b)
        todo = [b]
        seen.add(b)
        while todo:
            for nb in adj[todo.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    todo.append(nb)
    return refs


def marginal_cost(s: GridScenario, g: Generator) -> float:
    return 0.0 if (g.is_res and s.res_zero_cost) else g.c_var


def available_capacity(s: GridScenario, g: Generator, h: int) -> float:
    if g.availability_trace is None:
        return g.p_max
    return g.p_max * s.traces[g.availability_trace][h]


def create_variables(f: UcFormulation, shed: bool = False) -> None:
    s = f.scenario
    refs = reference_buses(s)
    for t in range(f.T):
        for g in s.generators:
            f.new_var("s", g.id, t, vtype=BINARY)
            f.new_var("u", g.id, t, vtype=BINARY)
            f.new_var("d", g.id, t, vtype=BINARY)
            f.new_var("p", g.id, t, 0.0, g.p_max)
        for b in s.buses:
            if b.id in refs:
                f.new_var("theta", b.id, t, 0.0, 0.0)
            else:
                f.new_var("theta", b.id, t, -math.inf, math.inf)
            if shed:
                f.new_var("shed", b.id, t)
        for ln in s.lines:
            f.new_var("flow", ln.id, t, -math.inf, math.inf)
            f.new_var("flow_pos", ln.id, t)
            f.new_var("flow_neg", ln.id, t)


def build_objective(f: UcFormulation) -> list[tuple[int, float]]:
    s = f.scenario
    terms = []
    for t in range(f.T):
        for g in s.generators:
            terms += [(f.var("s", g.id, t), g.c_fix), (f.var("u", g.id, t), g.c_su),
                      (f.var("d", g.id, t), g.c_sd), (f.var("p", g.id, t), marginal_cost(s, g))]
        for b in s.buses:
            if ("shed", b.id, t) in f.index:
                terms.append((f.var("shed", b.id, t), SHED_PENALTY))
    terms = [(j, c) for j, c in terms if c != 0.0]
    for j, c in terms:
        f.problem.add_objective(j, c)
    return terms


def build_balance(f: UcFormulation, flexible: dict[tuple[str, int], int | float]) -> list[int]:
    """Nodal balance; ``flexible`` maps (aggregator, t) to a variable id or a constant."""
    s = f.scenario
    rows = []
    for t in range(f.T):
        h = f.hour(t)
        for b in s.buses:
            coeffs: dict[int, float] = defaultdict(float)
            rhs = 0.0
            for g in s.generators_at(b.id):
                coeffs[f.var("p", g.id, t)] += 1.0
            for a in s.aggregators_at(b.id):
                rhs += s.traces[a.inflexible][h]
                flx = flexible[(a.id, t)]
                if isinstance(flx, int):
                    coeffs[flx] -= 1.0
                else:
                    rhs += float(flx)
            for ln in s.lines:
                if b.id not in (ln.from_bus, ln.to_bus):
                    continue
                sign = 1.0 if ln.from_bus == b.id else -1.0
                coeffs[f.var("flow", ln.id, t)] -= sign
                half = ln.loss_fraction / 2.0
                coeffs[f.var("flow_pos", ln.id, t)] -= half
                coeffs[f.var("flow_neg", ln.id, t)] -= half
            if ("shed", b.id, t) in f.index:
                coeffs[f.var("shed", b.id, t)] += 1.0
            rows.append(f.problem.add_constraint(coeffs, EQ, rhs, f"balance[{b.id},{t}]", "balance"))
    return rows


def build_line_limits(f: UcFormulation) -> list[int]:
    s = f.scenario
    lim = math.radians(s.angle_limit_deg)
    P = f.problem
    rows = []
    for t in range(f.T):
        for ln in s.lines:
            ti, tj = f.var("theta", ln.from_bus, t), f.var("theta", ln.to_bus, t)
            fl = f.var("flow", ln.id, t)
            bb = s.base_mva * ln.dc_susceptance
            rows.append(P.add_constraint({fl: 1.0, ti: -bb, tj: bb}, EQ, 0.0,
                                         f"flow_def[{ln.id},{t}]", "flow_def"))
            rows.append(P.add_constraint({fl: 1.0, f.var("flow_pos", ln.id, t): -1.0,
                                          f.var("flow_neg", ln.id, t): 1.0}, EQ, 0.0,
                                         f"flow_split[{ln.id},{t}]", "flow_split"))
            rows.append(P.add_constraint({ti: bb, tj: -bb}, LE, ln.flow_limit,
                                         f"line_max[{ln.id},{t}]", "line_limit"))
            rows.append(P.add_constraint({ti: bb, tj: -bb}, GE, -ln.flow_limit,
                                         f"line_min[{ln.id},{t}]", "line_limit"))
            rows.append(P.add_constraint({ti: 1.0, tj: -1.0}, LE, lim,
                                         f"angle_max[{ln.id},{t}]", "angle_limit"))
            rows.append(P.add_constraint({ti: 1.0, tj: -1.0}, GE, -lim,
                                         f"angle_min[{ln.id},{t}]", "angle_limit"))
    return rows


def build_gen_limits_and_logic(f: UcFormulation) -> list[int]:
    s = f.scenario
    P = f.problem
    rows = []
    for t in range(f.T):
        h = f.hour(t)
        for g in s.generators:
            sv, pv = f.var("s", g.id, t), f.var("p", g.id, t)
            cap = available_capacity(s, g, h)
            rows.append(P.add_constraint({pv: 1.0, sv: -g.p_min}, GE, 0.0,
                                         f"gen_min[{g.id},{t}]", "gen_min"))
            rows.append(P.add_constraint({pv: 1.0, sv: -cap}, LE, 0.0,
                                         f"gen_max[{g.id},{t}]", "gen_max"))
            coeffs = {f.var("u", g.id, t): 1.0, f.var("d", g.id, t): -1.0, sv: -1.0}
            rhs = 0.0
            if t == 0:
                rhs = -float(f.state.gens[g.id].status)
            else:
                coeffs[f.var("s", g.id, t - 1)] = 1.0
            rows.append(P.add_constraint(coeffs, EQ, rhs, f"logic[{g.id},{t}]", "logic"))
    return rows


def regional_demand(s: GridScenario, region_id: str, h: int) -> float:
    total = 0.0
    for a in s.aggregators:
        if s.region_of(a.bus_id) == region_id:
            total += s.traces[a.inflexible][h] + s.traces[a.underlying][h]
    return total


def build_reserves(f: UcFormulation) -> list[int]:
    s = f.scenario
    rows = []
    for t in range(f.T):
        h = f.hour(t)
        for r in s.regions:
            coeffs = {}
            for g in s.generators:
                if g.eligible_for_reserve and s.region_of(g.bus_id) == r.id:
                    coeffs[f.var("s", g.id, t)] = available_capacity(s, g, h)
                    coeffs[f.var("p", g.id, t)] = -1.0
            rhs = r.reserve_fraction * regional_demand(s, r.id, h)
            rows.append(f.problem.add_constraint(coeffs, GE, rhs, f"reserve[{r.id},{t}]", "reserve"))
    return rows


def build_min_up_down(f: UcFormulation) -> list[int]:
    s = f.scenario
    P = f.problem
    T = f.T
    rows = []
    for g in s.generators:
        for t in range(T):
            up = {f.var("u", g.id, t): 1.0}
            for k in range(g.min_up):
                if t + k < T:
                    j = f.var("d", g.id, t + k)
                    up[j] = up.get(j, 0.0) + 1.0
            rows.append(P.add_constraint(up, LE, 1.0, f"min_up[{g.id},{t}]", "min_up"))
            down = {f.var("d", g.id, t): 1.0}
            for k in range(g.min_down):
                if t + k < T:
                    j = f.var("u", g.id, t + k)
                    down[j] = down.get(j, 0.0) + 1.0
            rows.append(P.add_constraint(down, LE, 1.0, f"min_down[{g.id},{t}]", "min_down"))
        st = f.state.gens[g.id]
        # A start (stop) less than min_up (min_down) hours before the window
        # still forbids the opposite transition in the leading hours.
        if st.status == 1:
            for t in range(max(0, min(T, g.min_up - st.hours_in_state))):
                rows.append(P.add_constraint({f.var("d", g.id, t): 1.0}, LE, 0.0,
                                             f"min_up_init[{g.id},{t}]", "min_up_init"))
        else:
            for t in range(max(0, min(T, g.min_down - st.hours_in_state))):
                rows.append(P.add_constraint({f.var("u", g.id, t): 1.0}, LE, 0.0,
                                             f"min_down_init[{g.id},{t}]", "min_down_init"))
    return rows


def build_ramps(f: UcFormulation) -> list[int]:
    s = f.scenario
    P = f.problem
    rows = []
    for g in s.generators:
        p0 = f.state.gens[g.id].output
        for t in range(f.T):
            coeffs = {f.var("p", g.id, t): 1.0}
            rhs_shift = 0.0
            if t == 0:
                rhs_shift = p0
            else:
                coeffs[f.var("p", g.id, t - 1)] = -1.0
            if math.isfinite(g.ramp_up):
                rows.append(P.add_constraint(coeffs, LE, g.ramp_up + rhs_shift,
                                             f"ramp_up[{g.id},{t}]", "ramp_up"))
            if math.isfinite(g.ramp_down):
                rows.append(P.add_constraint(coeffs, GE, -g.ramp_down + rhs_shift,
                                             f"ramp_down[{g.id},{t}]", "ramp_down"))
    return rows


UC_FAMILIES = ("line_limits", "gen_limits", "reserves", "min_up_down", "ramps")


def build_uc(s: GridScenario, window: Window, state: SystemState | None = None,
             flexible: dict[tuple[str, int], int | float] | None = None,
             problem: MilpProblem | None = None, shed: bool = False,
             skip: tuple[str, ...] = ()) -> UcFormulation:
    """Assemble the full upper level.  ``skip`` drops whole families (diagnostics)."""
    state = state or SystemState.initial(s)
    f = UcFormulation(s, window, state, problem or MilpProblem(f"uc[{window.start}]"))
    create_variables(f, shed=shed)
    if flexible is None:
        flexible = fixed_flexible_demand(s, window)
    build_objective(f)
    build_balance(f, flexible)
    if "line_limits" not in skip:
        build_line_limits(f)
    else:
        _flow_rows_only(f)
    if "gen_limits" not in skip:
        build_gen_limits_and_logic(f)
    else:
        _logic_only(f)
    if "reserves" not in skip:
        build_reserves(f)
    if "min_up_down" not in skip:
        build_min_up_down(f)
    if "ramps" not in skip:
        build_ramps(f)
    return f


def _flow_rows_only(f: UcFormulation):
    s = f.scenario
    for t in range(f.T):
        for ln in s.lines:
            ti, tj = f.var("theta", ln.from_bus, t), f.var("theta", ln.to_bus, t)
            fl = f.var("flow", ln.id, t)
            bb = s.base_mva * ln.dc_susceptance
            f.problem.add_constraint({fl: 1.0, ti: -bb, tj: bb}, EQ, 0.0, family="flow_def")
            f.problem.add_constraint({fl: 1.0, f.var("flow_pos", ln.id, t): -1.0,
                                      f.var("flow_neg", ln.id, t): 1.0}, EQ, 0.0,
                                     family="flow_split")


def _logic_only(f: UcFormulation):
    for t in range(f.T):
        for g in f.scenario.generators:
            coeffs = {f.var("u", g.id, t): 1.0, f.var("d", g.id, t): -1.0, f.var("s", g.id, t): -1.0}
            rhs = -float(f.state.gens[g.id].status) if t == 0 else 0.0
            if t:
                coeffs[f.var("s", g.id, t - 1)] = 1.0
            f.problem.add_constraint(coeffs, EQ, rhs, family="logic")
            f.problem.add_constraint({f.var("p", g.id, t): 1.0, f.var("s", g.id, t): -g.p_max},
                                     LE, 0.0, family="gen_max")


def fixed_flexible_demand(s: GridScenario, window: Window) -> dict[tuple[str, int], float]:
    """Grid intake with the battery idle: max(underlying - pv, 0)."""
    out = {}
    for a in s.aggregators:
        for t, h in enumerate(window.hours):
            out[(a.id, t)] = float(max(s.traces[a.underlying][h] - s.traces[a.pv][h], 0.0))
    return out


def expected_row_counts(s: GridScenario, window: Window,
                        state: SystemState | None = None) -> dict[str, int]:
    """Closed-form row count per family, mirrored by the builders above."""
    state = state or SystemState.initial(s)
    G, B, L, R, T = (len(s.generators), len(s.buses), len(s.lines), len(s.regions), window.length)
    counts = {
        "balance": B * T, "flow_def": L * T, "flow_split": L * T,
        "line_limit": 2 * L * T, "angle_limit": 2 * L * T,
        "gen_min": G * T, "gen_max": G * T, "logic": G * T, "reserve": R * T,
        "min_up": G * T, "min_down": G * T,
        "ramp_up": T * sum(math.isfinite(g.ramp_up) for g in s.generators),
        "ramp_down": T * sum(math.isfinite(g.ramp_down) for g in s.generators),
        "min_up_init": 0, "min_down_init": 0,
    }
    for g in s.generators:
        st = state.gens[g.id]
        if st.status == 1:
            counts["min_up_init"] += max(0, min(T, g.min_up - st.hours_in_state))
        else:
            counts["min_down_init"] += max(0, min(T, g.min_down - st.hours_in_state))
    return {k: v for k, v in counts.items() if v}


__all__ = [
    "AggregatorModel", "GenState", "SystemState", "UcFormulation", "Window", "build_balance",
    "build_gen_limits_and_logic", "build_line_limits", "build_min_up_down", "build_objective",
    "build_ramps", "build_reserves", "build_uc", "expected_row_counts", "fixed_flexible_demand",
    "marginal_cost", "reference_buses", "regional_demand",
]
