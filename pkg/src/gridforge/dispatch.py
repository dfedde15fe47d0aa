"""Rolling-horizon bi-level market simulation."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .milp import INFEASIBLE, MilpProblem, MilpSolution, SolverSettings, solve_milp
from .model import GridScenario
from .prosumer import (KktBlock, binding_dual_big_m, build_kkt_block,
                       default_dual_big_m, verify_kkt)
from .uc import (UC_FAMILIES, GenState, SystemState, UcFormulation, Window,
                 SHED_PENALTY, build_uc, marginal_cost)

log = logging.getLogger(__name__)

MAX_ESCALATIONS = 3
VOLATILE_WINDOW_KEYS = ("runtime_s",)
ESCALATION_FACTOR = 10.0


class WindowInfeasibleError(RuntimeError):
    def __init__(self, window_index: int, start: int, hint: str | None):
        self.window_index = window_index
        self.start = start
        self.hint = hint
        msg = f"window {window_index} (hour {start}) is infeasible"
        if hint:
            msg += f"; relaxing '{hint}' restores feasibility"
        super().__init__(msg)


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class HorizonPolicy:
    window: int = 72
    overlap: int = 48
    resolution: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least one hour")
        if not 0 <= self.overlap < self.window:
            raise ValueError("overlap must satisfy 0 <= overlap < window")
        if self.resolution != 1:
            raise ValueError("only hourly resolution is supported")

    @property
    def step(self) -> int:
        return self.window - self.overlap


def plan_windows(total_hours: int, hp: HorizonPolicy) -> list[tuple[Window, int]]:
    """(window, hours committed) pairs; the tail window shrinks to what is left."""
    out = []
    start = 0
    while start < total_hours:
        remaining = total_hours - start
        out.append((Window(start, min(hp.window, remaining)), min(hp.step, remaining)))
        start += hp.step
    return out


@dataclass
class WindowResult:
    solution: MilpSolution
    uc: UcFormulation
    blocks: list[KktBlock]
    dual_m: float
    escalations: int = 0
    kkt_max_residual: float = 0.0
    kkt_ok: bool = True


def build_window_problem(s: GridScenario, window: Window, state: SystemState,
                         dual_m: float | None = None, shed: bool = False,
                         skip: tuple[str, ...] = ()) -> tuple[MilpProblem, UcFormulation, list[KktBlock]]:
    P = MilpProblem(f"window[{window.start}+{window.length}]")
    blocks = []
    flexible: dict[tuple[str, int], int | float] = {}
    for a in s.aggregators:
        blk = build_kkt_block(P, s, a, window, state.energy[a.id], dual_m)
        blocks.append(blk)
        for t, j in enumerate(blk.p_flx):
            flexible[(a.id, t)] = j
    uc = build_uc(s, window, state, flexible, problem=P, shed=shed, skip=skip)
    return P, uc, blocks


def solve_window(s: GridScenario, window: Window, state: SystemState,
                 settings: SolverSettings | None = None, shed: bool = False,
                 dual_m: float | None = None, kkt_tol: float = 1e-6) -> WindowResult:
    """Solve one bi-level window, escalating the dual big-M when it looks too small.

    A solve is accepted outright when every aggregator passes
    :func:`verify_kkt` and no multiplier sits at its big-M cap.  A cap that
    binds triggers escalation; if the objective is unchanged after escalating,
    the cap was not restricting the optimum (multipliers are often
    non-unique) and the solve is accepted.  Infeasibility also escalates,
    since an undersized cap can cut off every KKT point.
    """
    settings = settings or dispatch_settings(s)
    md = default_dual_big_m(s) if dual_m is None else dual_m
    accepted = None     # last KKT-valid result
    last = None
    for attempt in range(MAX_ESCALATIONS + 1):
        P, uc, blocks = build_window_problem(s, window, state, md, shed)
        sol = solve_milp(P, settings)
        if sol.x is None:
            if sol.status != INFEASIBLE:
                return WindowResult(sol, uc, blocks, md, attempt, kkt_ok=False)
            last = WindowResult(sol, uc, blocks, md, attempt, kkt_ok=False)
            log.info("window %d infeasible with dual big-M %.3g", window.start, md)
        else:
            worst, kkt_ok, binding = 0.0, True, []
            for blk, a in zip(blocks, s.aggregators):
                rep = verify_kkt(s, a, window, blk.values(sol.x), kkt_tol, blk.e_init)
                worst = max(worst, *map(float, rep.max_residual.values()))
                kkt_ok &= rep.ok
                binding += binding_dual_big_m(blk, sol.x)
            last = WindowResult(sol, uc, blocks, md, attempt, worst, kkt_ok)
            if kkt_ok and not binding:
                return last
            if kkt_ok and accepted is not None and math.isclose(
                    sol.objective, accepted.solution.objective, rel_tol=1e-9, abs_tol=1e-6):
                log.info("window %d: objective unchanged after escalation; accepting", window.start)
                return last
            if kkt_ok:
                accepted = last
            log.info("window %d: dual big-M %.3g suspicious (%s); escalating", window.start, md,
                     "KKT residual" if not kkt_ok else ", ".join(binding[:3]))
        if attempt == MAX_ESCALATIONS or not s.aggregators:
            break
        md *= ESCALATION_FACTOR
    if accepted is not None:
        log.warning("window %d: multipliers still at the big-M cap after %d escalations",
                    window.start, MAX_ESCALATIONS)
        return accepted
    return last


def infeasibility_hint(s: GridScenario, window: Window, state: SystemState,
                       settings: SolverSettings) -> str | None:
    """First constraint family whose removal makes the window feasible."""
    probe = SolverSettings(**{**settings.__dict__, "node_limit": 2000})
    for fam in UC_FAMILIES:
        P, _, _ = build_window_problem(s, window, state, None, False, skip=(fam,))
        sol = solve_milp(P, probe)
        if sol.x is not None:
            return fam
    if s.aggregators:
        no_ll = s.with_changes(aggregators=[])
        P, _, _ = build_window_problem(no_ll, window, SystemState(state.gens, {}))
        if solve_milp(P, probe).x is not None:
            return "lower_level"
    return None


# ----------------------------------------------------------------------

@dataclass
class DispatchSchedule:
    hours: list[int] = field(default_factory=list)
    gen_status: dict[str, list[int]] = field(default_factory=lambda: defaultdict(list))
    gen_output: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    gen_start: dict[str, list[int]] = field(default_factory=lambda: defaultdict(list))
    gen_stop: dict[str, list[int]] = field(default_factory=lambda: defaultdict(list))
    angle: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    flow: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    loss: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    shed: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    p_flx: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    p_b: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    e_b: dict[str, list[float]] = field(default_factory=lambda: defaultdict(list))
    windows: list[dict] = field(default_factory=list)
    total_cost: float = 0.0

    def __len__(self) -> int:
        return len(self.hours)

    def row(self, h: int) -> int:
        return self.hours.index(h)


def _clean(v: float) -> float:
    v = float(v)
    return 0.0 if abs(v) < 1e-10 else v


def _commit(sched: DispatchSchedule, s: GridScenario, res: WindowResult, n_commit: int) -> float:
    x = res.solution.x
    uc = res.uc
    cost = 0.0
    for t in range(n_commit):
        sched.hours.append(uc.hour(t))
        for g in s.generators:
            st = int(round(x[uc.var("s", g.id, t)]))
            u = int(round(x[uc.var("u", g.id, t)]))
            d = int(round(x[uc.var("d", g.id, t)]))
            p = _clean(x[uc.var("p", g.id, t)])
            sched.gen_status[g.id].append(st)
            sched.gen_start[g.id].append(u)
            sched.gen_stop[g.id].append(d)
            sched.gen_output[g.id].append(p)
            cost += g.c_fix * st + g.c_su * u + g.c_sd * d + marginal_cost(s, g) * p
        for b in s.buses:
            sched.angle[b.id].append(_clean(x[uc.var("theta", b.id, t)]))
            if ("shed", b.id, t) in uc.index:
                shed = _clean(x[uc.var("shed", b.id, t)])
                sched.shed[b.id].append(shed)
                cost += SHED_PENALTY * shed
        for ln in s.lines:
            sched.flow[ln.id].append(_clean(x[uc.var("flow", ln.id, t)]))
            mag = x[uc.var("flow_pos", ln.id, t)] + x[uc.var("flow_neg", ln.id, t)]
            sched.loss[ln.id].append(_clean(ln.loss_fraction * mag))
        for blk in res.blocks:
            sched.p_flx[blk.aggregator].append(_clean(x[blk.vars["p_flx"][t]]))
            sched.p_b[blk.aggregator].append(_clean(x[blk.vars["p_b"][t]]))
            sched.e_b[blk.aggregator].append(_clean(x[blk.vars["e"][t]]))
    return cost


def _next_state(s: GridScenario, sched: DispatchSchedule, prev: SystemState) -> SystemState:
    gens = {}
    for g in s.generators:
        status = sched.gen_status[g.id]
        last = status[-1]
        run = 0
        for v in reversed(status):
            if v != last:
                break
            run += 1
        if run == len(status) and prev.gens[g.id].status == last:
            run += prev.gens[g.id].hours_in_state
        gens[g.id] = GenState(last, sched.gen_output[g.id][-1], run)
    energy = {a.id: sched.e_b[a.id][-1] for a in s.aggregators}
    return SystemState(gens, energy)


def dispatch_settings(s: GridScenario, **overrides) -> SolverSettings:
    """Solver settings for market windows: HiGHS unless the scenario says otherwise.

    Full-size windows carry hundreds of complementarity binaries, which the
    dense built-in branch-and-bound handles only slowly.
    """
    return SolverSettings(**{"backend": "highs", **s.solver, **overrides})


def run_simulation(s: GridScenario, hp: HorizonPolicy | None = None,
                   settings: SolverSettings | None = None, shed: bool = False,
                   hours: int | None = None) -> DispatchSchedule:
    """Solve consecutive windows, committing the leading ``step`` hours of each."""
    hp = hp or HorizonPolicy()
    settings = settings or dispatch_settings(s)
    total = s.horizon if hours is None else min(hours, s.horizon)
    sched = DispatchSchedule()
    state = SystemState.initial(s)
    for k, (window, n_commit) in enumerate(plan_windows(total, hp)):
        res = solve_window(s, window, state, settings, shed)
        sol = res.solution
        if sol.x is None:
            if sol.status == INFEASIBLE:
                hint = infeasibility_hint(s, window, state, settings)
                raise WindowInfeasibleError(k, window.start, hint)
            raise NumericalFailure(f"window {k}: solver returned {sol.status}")
        if not res.kkt_ok:
            raise NumericalFailure(f"window {k}: lower-level optimality check failed "
                                   f"(max residual {res.kkt_max_residual:.3g})")
        sched.total_cost += _commit(sched, s, res, n_commit)
        sched.windows.append({
            "index": k, "start": window.start, "length": window.length, "committed": n_commit,
            "status": sol.status, "objective": sol.objective, "nodes": sol.nodes,
            "gap": 0.0 if math.isnan(sol.gap) else sol.gap,
            "dual_big_m": res.dual_m, "escalations": res.escalations,
            "kkt_max_residual": res.kkt_max_residual, "runtime_s": sol.runtime,
        })
        log.info("window %d [%d, %d) committed %d h, objective %.6g, %d nodes",
                 k, window.start, window.start + window.length, n_commit,
                 sol.objective, sol.nodes)
        state = _next_state(s, sched, state)
    return sched


# ----------------------------------------------------------------------

def operational_demand(sched: DispatchSchedule, s: GridScenario, h: int) -> float:
    """Grid-side demand: inflexible load plus aggregator grid intake."""
    r = sched.row(h)
    return float(sum(s.traces[a.inflexible][h] + sched.p_flx[a.id][r] for a in s.aggregators))


def operational_demand_profile(sched: DispatchSchedule, s: GridScenario) -> np.ndarray:
    return np.array([operational_demand(sched, s, h) for h in sched.hours])


def summarize_generation_mix(sched: DispatchSchedule, s: GridScenario) -> dict:
    """Energy by generator label (fuel, falling back to kind) per hour and in total."""
    labels = sorted({g.label for g in s.generators})
    per_hour = {lab: [0.0] * len(sched) for lab in labels}
    for g in s.generators:
        for r, p in enumerate(sched.gen_output[g.id]):
            per_hour[g.label][r] += p
    return {"hours": list(sched.hours), "per_hour": per_hour,
            "total": {lab: float(sum(v)) for lab, v in per_hour.items()}}


# ----------------------------------------------------------------------
# Persistence

def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if v == 0.0:
        return "0"
    return f"{v:.9g}"


def write_schedule(sched: DispatchSchedule, s: GridScenario, out: Path,
                   extra_summary: dict | None = None) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    def write(name, header, rows):
        p = out / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
        paths.append(p)

    write("generators.csv", ["hour", "gen_id", "s", "p"],
          ((h, g.id, sched.gen_status[g.id][r], sched.gen_output[g.id][r])
           for r, h in enumerate(sched.hours) for g in s.generators))
    write("aggregators.csv", ["hour", "agg_id", "p_flx", "p_b", "e_b"],
          ((h, a.id, sched.p_flx[a.id][r], sched.p_b[a.id][r], sched.e_b[a.id][r])
           for r, h in enumerate(sched.hours) for a in s.aggregators))
    write("network.csv", ["hour", "line_id", "flow", "loss"],
          ((h, ln.id, sched.flow[ln.id][r], sched.loss[ln.id][r])
           for r, h in enumerate(sched.hours) for ln in s.lines))
    summary = {
        "scenario": s.name,
        "hours": len(sched),
        "total_cost": float(fmt(sched.total_cost)),
        "generator_labels": {g.id: g.label for g in s.generators},
        "generation_mwh": {k: float(fmt(v)) for k, v in
                           summarize_generation_mix(sched, s)["total"].items()},
        # wall-clock times vary run to run; they go to the run manifest instead
        "windows": [{k: (float(fmt(v)) if isinstance(v, float) else v) for k, v in w.items()
                     if k not in VOLATILE_WINDOW_KEYS} for w in sched.windows],
    }
    if extra_summary:
        summary.update(extra_summary)
    p = out / "summary.json"
    p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    paths.append(p)
    return paths


def read_schedule(path: Path) -> DispatchSchedule:
    """Rebuild the committed schedule from the CSV directory."""
    path = Path(path)
    sched = DispatchSchedule()
    with open(path / "generators.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            h = int(r["hour"])
            if not sched.hours or sched.hours[-1] != h:
                if h not in sched.hours:
                    sched.hours.append(h)
            sched.gen_status[r["gen_id"]].append(int(r["s"]))
            sched.gen_output[r["gen_id"]].append(float(r["p"]))
    for name, key, cols in (("aggregators.csv", "agg_id", ("p_flx", "p_b", "e_b")),
                            ("network.csv", "line_id", ("flow", "loss"))):
        with open(path / name, newline="") as fh:
            for r in csv.DictReader(fh):
                for c in cols:
                    getattr(sched, c)[r[key]].append(float(r[c]))
    summary = json.loads((path / "summary.json").read_text())
    sched.total_cost = summary.get("total_cost", 0.0)
    sched.windows = summary.get("windows", [])
    return sched
