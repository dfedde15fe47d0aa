"""Per-hour stability sweep over a committed dispatch schedule."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dispatch import DispatchSchedule, fmt
from ..model import GridScenario, QLimits
from .contingency import screen_contingencies
from .loadability import LoadIncreasePattern, loadability_margin
from .modal import SingularAngleBlock, modal_analysis
from .powerflow import PQ, PV, SLACK, PowerFlowCase, solve_ac_power_flow

log = logging.getLogger(__name__)


def q_range(limits: QLimits, p: float, p_max: float) -> tuple[float, float]:
    """Reactive output interval (MVAr) at active output ``p``."""
    if limits.type == "power_factor":
        q = p_max * math.tan(math.acos(limits.pf))
        return -q, q
    if limits.type == "table":
        pts = sorted(limits.points)
        ps = [r[0] for r in pts]
        return float(np.interp(p, ps, [r[1] for r in pts])), float(np.interp(p, ps, [r[2] for r in pts]))
    if limits.type == "res_taper":
        frac = p / p_max if p_max > 0 else 0.0
        if frac <= limits.knee:
            q = limits.q_full
        else:
            span = max(1.0 - limits.knee, 1e-12)
            q = limits.q_full + (limits.q_rated - limits.q_full) * min(1.0, (frac - limits.knee) / span)
        return -q * p_max, q * p_max
    raise ValueError(f"unknown reactive limit type {limits.type!r}")


def case_from_dispatch(s: GridScenario, sched: DispatchSchedule, hour: int) -> PowerFlowCase:
    """AC operating point for one committed hour.

    Loads take operational demand at a fixed power factor.  Buses with an
    online generator regulate voltage within the summed reactive capability;
    the slack is the bus of the largest online synchronous unit.
    """
    r = sched.row(hour)
    ids = [b.id for b in s.buses]
    pos = {b: i for i, b in enumerate(ids)}
    n = len(ids)
    p_gen, p_load = np.zeros(n), np.zeros(n)
    q_min, q_max = np.zeros(n), np.zeros(n)
    v_set = np.ones(n)
    online = np.zeros(n, bool)
    slack_key = None
    for g in s.generators:
        p = sched.gen_output[g.id][r]
        on = sched.gen_status[g.id][r] == 1 and (not g.is_res or p > 0)
        if not on:
            continue
        i = pos[g.bus_id]
        p_gen[i] += p
        lo, hi = q_range(g.capability(), p, g.p_max)
        q_min[i] += lo
        q_max[i] += hi
        v_set[i] = g.voltage_setpoint if not online[i] else max(v_set[i], g.voltage_setpoint)
        online[i] = True
        if not g.is_res:
            key = (-g.p_max, g.bus_id)
            slack_key = key if slack_key is None else min(slack_key, key)
    for a in s.aggregators:
        p_load[pos[a.bus_id]] += s.traces[a.inflexible][hour] + sched.p_flx[a.id][r]
    tan_phi = math.tan(math.acos(s.ac.load_power_factor))
    types = np.where(online, PV, PQ)
    slack = pos[slack_key[1]] if slack_key else int(np.argmax(online)) if online.any() else 0
    types[slack] = SLACK
    v_set = np.where(online | (np.arange(n) == slack), v_set, 1.0)
    lines = s.lines
    return PowerFlowCase(
        ids, types, p_gen, p_load, p_load * tan_phi, v_set, q_min, q_max,
        [ln.id for ln in lines], [pos[ln.from_bus] for ln in lines], [pos[ln.to_bus] for ln in lines],
        [ln.r for ln in lines], [ln.x for ln in lines], [ln.b for ln in lines],
        [ln.flow_limit for ln in lines], s.base_mva, s.ac.pf_tol, s.ac.max_iter)


@dataclass
class HourResult:
    hour: int
    converged: bool
    iterations: int
    singular: bool
    switched_to_pq: list[str]
    margins: dict[str, float] = field(default_factory=dict)
    limiting: dict[str, str | None] = field(default_factory=dict)
    min_eigenvalue: float = math.nan
    top_buses: list[tuple[str, float]] = field(default_factory=list)
    contingencies: list[str] = field(default_factory=list)
    islanding: list[str] = field(default_factory=list)
    note: str | None = None


@dataclass
class StabilityReport:
    scenario: str
    patterns: list[str]
    top_k: int
    hours: list[HourResult]

    @property
    def unstable_hours(self) -> int:
        return sum(not h.converged for h in self.hours)

    def average_margin(self, pattern: str) -> float:
        vals = [h.margins[pattern] for h in self.hours if h.converged]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def average_min_eigenvalue(self) -> float:
        vals = [h.min_eigenvalue for h in self.hours if h.converged and math.isfinite(h.min_eigenvalue)]
        return float(np.mean(vals)) if vals else math.nan

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "hours": len(self.hours),
            "top_k": self.top_k,
            "unstable_hours": self.unstable_hours,
            "average_margin_mw": {p: self.average_margin(p) for p in self.patterns},
            "average_min_eigenvalue": self.average_min_eigenvalue,
        }

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "hours": [asdict(h) for h in self.hours]}


def analyse_hour(s: GridScenario, sched: DispatchSchedule, hour: int,
                 patterns: list[LoadIncreasePattern], top_k: int = 20) -> HourResult:
    case = case_from_dispatch(s, sched, hour)
    base = solve_ac_power_flow(case.copy())
    res = HourResult(hour, base.converged, base.iterations, base.singular, base.switched_to_pq)
    if not base.converged:
        res.margins = {p.name: 0.0 for p in patterns}
        res.limiting = {p.name: "base" for p in patterns}
        res.note = "singular Jacobian" if base.singular else "power flow diverged"
        return res
    ranked = screen_contingencies(base, top_k)
    res.contingencies = [c.line_id for c in ranked]
    res.islanding = [c.line_id for c in ranked if c.islanding]
    for p in patterns:
        m = loadability_margin(case, p, ranked)
        res.margins[p.name] = m.margin_mw
        res.limiting[p.name] = m.limiting
    try:
        modal = modal_analysis(base)
        res.min_eigenvalue = modal.min_eigenvalue
        res.top_buses = modal.top_buses(3)
    except SingularAngleBlock as exc:
        res.note = str(exc)
    return res


def run_stability_suite(s: GridScenario, sched: DispatchSchedule,
                        patterns: list[LoadIncreasePattern], top_k: int = 20,
                        threads: int = 1, hours: list[int] | None = None) -> StabilityReport:
    """Power flow, N-1 screening, margins and modal analysis for every committed hour.

    Failures in one hour are recorded in that hour's row; the sweep continues.
    """
    if not patterns:
        raise ValueError("at least one load-increase pattern is required")
    hours = list(sched.hours) if hours is None else hours

    def one(h):
        try:
            return analyse_hour(s, sched, h, patterns, top_k)
        except Exception as exc:  # keep sweeping, but surface the failure in the row
            log.exception("hour %d failed", h)
            return HourResult(h, False, 0, False, [], {p.name: 0.0 for p in patterns},
                              note=f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, hours))
    else:
        rows = [one(h) for h in hours]
    rows.sort(key=lambda r: r.hour)
    return StabilityReport(s.name, [p.name for p in patterns], top_k, rows)


def _clean_json(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    return obj


def write_report(report: StabilityReport, out: Path) -> list[Path]:
    """``stability.json`` plus ``loadability.csv`` and ``modal.csv`` tables."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p_json = out / "stability.json"
    p_json.write_text(json.dumps(_clean_json(report.to_dict()), indent=2, sort_keys=True) + "\n")
    p_load = out / "loadability.csv"
    with open(p_load, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "converged", *[f"margin_mw[{p}]" for p in report.patterns]])
        for h in report.hours:
            w.writerow([h.hour, int(h.converged), *[fmt(h.margins.get(p, 0.0)) for p in report.patterns]])
    p_modal = out / "modal.csv"
    with open(p_modal, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "converged", "min_real_eigenvalue", "top_buses"])
        for h in report.hours:
            eig = fmt(h.min_eigenvalue) if math.isfinite(h.min_eigenvalue) else ""
            w.writerow([h.hour, int(h.converged), eig, " ".join(b for b, _ in h.top_buses)])
    return [p_json, p_load, p_modal]


def load_patterns(doc) -> list[LoadIncreasePattern]:
    """Patterns from a JSON list of {name, load?, generation?} objects."""
    if not isinstance(doc, list) or not doc:
        raise ValueError("patterns file must hold a non-empty JSON list")
    return [LoadIncreasePattern(str(p["name"]), dict(p.get("load", {})), dict(p.get("generation", {})))
            for p in doc]
