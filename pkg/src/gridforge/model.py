"""Scenario data model: network, generators, prosumer aggregators and traces.

Units are MW, MWh, hours and dollars everywhere; per-unit quantities appear
only in the AC power-flow code, with ``base_mva`` as the explicit base.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

SYNCHRONOUS = "synchronous"
RES_WIND = "res_wind"
RES_PV = "res_pv"
HYDRO = "hydro"
GENERATOR_KINDS = (SYNCHRONOUS, RES_WIND, RES_PV, HYDRO)
RES_KINDS = (RES_WIND, RES_PV)


class ScenarioFormatError(ValueError):
    """The scenario document cannot be parsed into the data model at all."""


@dataclass
class Bus:
    id: str
    region_id: str
    base_kv: float = 1.0


@dataclass
class Line:
    id: str
    from_bus: str
    to_bus: str
    flow_limit: float
    susceptance: float | None = None
    r: float = 0.0
    x: float = 0.1
    b: float = 0.0
    loss_fraction: float = 0.10

    @property
    def dc_susceptance(self) -> float:
        if self.susceptance is not None:
            return self.susceptance
        return 1.0 / self.x if self.x else 0.0


@dataclass
class QLimits:
    """Reactive capability.

    ``power_factor``: |Q| <= P_max * tan(acos(pf)).
    ``table``: piecewise-linear (p, q_min, q_max) points in MW/MVAr.
    ``res_taper``: full +/- ``q_full * P_max`` up to ``knee * P_max`` output,
    tapering linearly to ``q_rated * P_max`` at rated output.
    """

    type: str = "power_factor"
    pf: float = 0.8
    points: list[list[float]] = field(default_factory=list)
    q_full: float = 0.33
    knee: float = 0.8
    q_rated: float = 0.1


@dataclass
class Generator:
    id: str
    bus_id: str
    kind: str
    p_min: float
    p_max: float
    c_fix: float = 0.0
    c_su: float = 0.0
    c_sd: float = 0.0
    c_var: float = 0.0
    ramp_up: float = math.inf
    ramp_down: float = math.inf
    min_up: int = 1
    min_down: int = 1
    initial_status: int | None = None
    initial_output: float | None = None
    initial_hours_in_state: int = 10_000
    availability_trace: str | None = None
    fuel: str | None = None
    reserve_eligible: bool | None = None
    q_limits: QLimits | None = None
    voltage_setpoint: float = 1.0

    @property
    def is_res(self) -> bool:
        return self.kind in RES_KINDS

    @property
    def eligible_for_reserve(self) -> bool:
        if self.reserve_eligible is not None:
            return self.reserve_eligible
        return self.kind == SYNCHRONOUS

    @property
    def label(self) -> str:
        return self.fuel or self.kind

    @property
    def s0(self) -> int:
        return 1 if self.initial_status is None else int(self.initial_status)

    @property
    def p0(self) -> float:
        if self.initial_output is not None:
            return self.initial_output
        return self.p_min if self.s0 else 0.0

    def capability(self) -> QLimits:
        if self.q_limits is not None:
            return self.q_limits
        if self.is_res:
            return QLimits(type="res_taper")
        return QLimits(type="power_factor", pf=0.8)


@dataclass
class Region:
    id: str
    reserve_fraction: float = 0.10


@dataclass
class AggregatorModel:
    id: str
    bus_id: str
    inflexible: str
    underlying: str
    pv: str
    p_b_min: float = 0.0
    p_b_max: float = 0.0
    e_min: float = 0.0
    e_max: float = 0.0
    retention: float = 1.0
    e_initial: float | None = None

    @property
    def e0(self) -> float:
        return self.e_min if self.e_initial is None else self.e_initial


@dataclass
class AcSettings:
    load_power_factor: float = 0.95
    pf_tol: float = 1e-8
    max_iter: int = 30


@dataclass
class GridScenario:
    name: str
    horizon: int
    buses: list[Bus]
    lines: list[Line]
    generators: list[Generator]
    regions: list[Region]
    aggregators: list[AggregatorModel] = field(default_factory=list)
    traces: dict[str, list[float]] = field(default_factory=dict)
    base_mva: float = 100.0
    res_zero_cost: bool = True
    angle_limit_deg: float = 30.0
    solver: dict[str, Any] = field(default_factory=dict)
    stages: dict[str, bool] = field(default_factory=lambda: {"dc_market": True, "ac_stability": True})
    ac: AcSettings = field(default_factory=AcSettings)

    # -- lookups ------------------------------------------------------------
    def bus(self, bus_id: str) -> Bus:
        return next(b for b in self.buses if b.id == bus_id)

    def region_of(self, bus_id: str) -> str:
        return self.bus(bus_id).region_id

    def trace(self, trace_id: str) -> list[float]:
        return self.traces[trace_id]

    def generators_at(self, bus_id: str) -> list[Generator]:
        return [g for g in self.generators if g.bus_id == bus_id]

    def aggregators_at(self, bus_id: str) -> list[AggregatorModel]:
        return [a for a in self.aggregators if a.bus_id == bus_id]

    def with_changes(self, **kw) -> "GridScenario":
        s = copy.deepcopy(self)
        for k, v in kw.items():
            setattr(s, k, v)
        return s


def total_inflexible_demand(s: GridScenario, h: int) -> float:
    if not 0 <= h < s.horizon:
        raise IndexError(f"hour {h} outside horizon 0..{s.horizon - 1}")
    return float(sum(s.traces[a.inflexible][h] for a in s.aggregators))


# ----------------------------------------------------------------------
# Validation

@dataclass
class Problem:
    entity: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message}"


@dataclass
class ValidationReport:
    problems: list[Problem] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def add(self, entity: str, message: str) -> None:
        self.problems.append(Problem(entity, message))

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def messages(self) -> list[str]:
        return [str(p) for p in self.problems]


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and not math.isnan(x)


def _dupes(items, what, report):
    seen = set()
    for it in items:
        if it.id in seen:
            report.add(f"{what} {it.id}", "duplicate id")
        seen.add(it.id)


def validate_scenario(s: GridScenario) -> ValidationReport:
    """Collect every invariant violation; never raises on a parsed scenario."""
    rep = ValidationReport()
    H = s.horizon
    if not isinstance(H, int) or isinstance(H, bool) or H < 1:
        rep.add("scenario", f"horizon must be a positive integer, got {H!r}")
    if not (_num(s.base_mva) and s.base_mva > 0):
        rep.add("scenario", "base_mva must be positive")
    if not (_num(s.angle_limit_deg) and 0 < s.angle_limit_deg < 90):
        rep.add("scenario", "angle_limit_deg must lie in (0, 90)")
    for what, items in (("bus", s.buses), ("line", s.lines), ("generator", s.generators),
                        ("region", s.regions), ("aggregator", s.aggregators)):
        _dupes(items, what, rep)
    region_ids = {r.id for r in s.regions}
    bus_ids = {b.id for b in s.buses}

    for r in s.regions:
        if not (_num(r.reserve_fraction) and r.reserve_fraction >= 0):
            rep.add(f"region {r.id}", "reserve_fraction must be >= 0")
    for b in s.buses:
        if b.region_id not in region_ids:
            rep.add(f"bus {b.id}", f"unknown region {b.region_id!r}")

    for ln in s.lines:
        ent = f"line {ln.id}"
        if ln.from_bus == ln.to_bus:
            rep.add(ent, "from bus equals to bus")
        for end in (ln.from_bus, ln.to_bus):
            if end not in bus_ids:
                rep.add(ent, f"unknown bus {end!r}")
        if not (_num(ln.flow_limit) and ln.flow_limit > 0):
            rep.add(ent, "flow_limit must be > 0")
        if not (_num(ln.loss_fraction) and 0 <= ln.loss_fraction <= 0.5):
            rep.add(ent, "loss_fraction must lie in [0, 0.5]")
        if not (_num(ln.x) and _num(ln.r) and _num(ln.b)):
            rep.add(ent, "impedance values must be numbers")
            continue
        if ln.x == 0 and ln.r == 0:
            rep.add(ent, "series impedance must be non-zero")
        if not (_num(ln.dc_susceptance) and ln.dc_susceptance > 0):
            rep.add(ent, "susceptance must be > 0")

    if not s.generators:
        rep.add("scenario", "at least one generator is required")
    for g in s.generators:
        ent = f"generator {g.id}"
        if g.bus_id not in bus_ids:
            rep.add(ent, f"unknown bus {g.bus_id!r}")
        if g.kind not in GENERATOR_KINDS:
            rep.add(ent, f"unknown kind {g.kind!r}")
        if not (_num(g.p_min) and _num(g.p_max) and 0 <= g.p_min <= g.p_max):
            rep.add(ent, "requires 0 <= p_min <= p_max")
        for nm in ("c_fix", "c_su", "c_sd", "c_var"):
            v = getattr(g, nm)
            if not (_num(v) and v >= 0):
                rep.add(ent, f"{nm} must be >= 0")
        for nm in ("ramp_up", "ramp_down"):
            v = getattr(g, nm)
            if not (_num(v) and v >= 0):
                rep.add(ent, f"{nm} must be >= 0")
        for nm in ("min_up", "min_down"):
            v = getattr(g, nm)
            if not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
                rep.add(ent, f"{nm} must be an integer >= 1")
        if g.initial_status not in (None, 0, 1) or isinstance(g.initial_status, bool):
            rep.add(ent, "initial_status must be 0 or 1")
        elif g.initial_output is not None and not _num(g.initial_output):
            rep.add(ent, "initial_output must be a number")
        elif _num(g.p_min) and _num(g.p_max):
            if g.s0 == 1 and not g.p_min - 1e-9 <= g.p0 <= g.p_max + 1e-9:
                rep.add(ent, "initial_output outside [p_min, p_max] for an online unit")
            if g.s0 == 0 and abs(g.p0) > 1e-9:
                rep.add(ent, "initial_output must be 0 for an offline unit")
        if not (isinstance(g.initial_hours_in_state, int) and g.initial_hours_in_state >= 0):
            rep.add(ent, "initial_hours_in_state must be a non-negative integer")
        if g.availability_trace is not None:
            _check_trace(s, g.availability_trace, ent, rep)
            tr = s.traces.get(g.availability_trace)
            if tr and any(_num(v) and v > 1 for v in tr):
                rep.add(ent, "availability trace values must lie in [0, 1]")
        if g.is_res and g.eligible_for_reserve:
            rep.add(ent, "RES units cannot provide spinning reserve")
        q = g.capability()
        if q.type not in ("power_factor", "table", "res_taper"):
            rep.add(ent, f"unknown q_limits type {q.type!r}")
        elif q.type == "power_factor" and not (_num(q.pf) and 0 < q.pf <= 1):
            rep.add(ent, "q_limits power factor must lie in (0, 1]")

    for a in s.aggregators:
        ent = f"aggregator {a.id}"
        if a.bus_id not in bus_ids:
            rep.add(ent, f"unknown bus {a.bus_id!r}")
        for nm in ("inflexible", "underlying", "pv"):
            _check_trace(s, getattr(a, nm), f"{ent} {nm}", rep)
        if not (_num(a.p_b_min) and _num(a.p_b_max) and a.p_b_min <= 0 <= a.p_b_max):
            rep.add(ent, "battery power bounds must satisfy p_b_min <= 0 <= p_b_max")
        if not (_num(a.e_min) and _num(a.e_max) and _num(a.e0)
                and 0 <= a.e_min <= a.e0 <= a.e_max):
            rep.add(ent, "battery energy must satisfy 0 <= e_min <= e_initial <= e_max")
        if not _num(a.retention) or a.retention <= 0:
            rep.add(ent, "retention factor must be > 0")
        elif a.retention > 1:
            rep.add(ent, "retention factor > 1")
    if rep.ok:
        for a in s.aggregators:
            h = first_surplus_violation(s, a)
            if h is not None:
                rep.add(f"aggregator {a.id}",
                        f"PV surplus exceeds battery absorption at hour {h}")
    if bus_ids and not _connected(s):
        rep.add("scenario", "network graph is not connected")
    return rep


def _check_trace(s, trace_id, ent, rep):
    if trace_id not in s.traces:
        rep.add(ent, f"unknown trace {trace_id!r}")
        return
    tr = s.traces[trace_id]
    if len(tr) != s.horizon:
        rep.add(ent, f"trace {trace_id!r} has {len(tr)} values, horizon is {s.horizon}")
    if any(not _num(v) or v < 0 for v in tr):
        rep.add(ent, f"trace {trace_id!r} must be non-negative numbers")


def _connected(s: GridScenario) -> bool:
    adj = defaultdict(set)
    ids = {b.id for b in s.buses}
    for ln in s.lines:
        if ln.from_bus in ids and ln.to_bus in ids:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
    start = s.buses[0].id
    seen = {start}
    todo = [start]
    while todo:
        for nb in adj[todo.pop()]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return seen == ids


def first_surplus_violation(s: GridScenario, a: AggregatorModel, start: int = 0,
                            e_start: float | None = None, hours: int | None = None):
    """First hour where rooftop surplus cannot be stored, else None.

    Without export or curtailment the battery must take ``pv - demand``; the
    lowest-energy battery trajectory is the most permissive one to follow.
    """
    pu, pv = s.traces[a.underlying], s.traces[a.pv]
    e = a.e0 if e_start is None else e_start
    end = s.horizon if hours is None else min(s.horizon, start + hours)
    for h in range(start, end):
        need = max(a.p_b_min, pv[h] - pu[h], a.e_min - a.retention * e)
        if need > a.p_b_max + 1e-9:
            return h
        e = a.retention * e + need
        if e > a.e_max + 1e-9:
            return h
    return None


# ----------------------------------------------------------------------
# JSON I/O

def _req(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioFormatError(f"{where}: missing field {key!r}")
    return d[key]


def _inf(v):
    return math.inf if v is None else v


def _load_csv_trace(path: Path) -> list[float]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) != {"hour", "value"}:
        raise ScenarioFormatError(f"{path}: CSV trace header must be 'hour,value'")
    values: dict[int, float] = {}
    for r in rows:
        values[int(r["hour"])] = float(r["value"])
    n = max(values) + 1 if values else 0
    if sorted(values) != list(range(n)):
        raise ScenarioFormatError(f"{path}: hours must be 0..{n - 1} without gaps")
    return [values[h] for h in range(n)]


def _qlimits(ql, where: str) -> QLimits | None:
    if ql is None:
        return None
    if not isinstance(ql, dict):
        raise ScenarioFormatError(f"{where}: q_limits must be an object")
    return QLimits(**ql)


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> GridScenario:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    base_dir = base_dir or Path(".")
    traces: dict[str, list[float]] = {}
    for tid, spec in doc.get("traces", {}).items():
        if isinstance(spec, list):
            traces[tid] = [float(v) if _num(v) else v for v in spec]
        elif isinstance(spec, dict) and "csv" in spec:
            traces[tid] = _load_csv_trace(base_dir / spec["csv"])
        else:
            raise ScenarioFormatError(f"trace {tid!r}: expected array or {{'csv': path}}")

    def trace_ref(value, fallback_id):
        if isinstance(value, list):
            traces[fallback_id] = [float(v) if _num(v) else v for v in value]
            return fallback_id
        if not isinstance(value, str):
            raise ScenarioFormatError(f"{fallback_id}: expected a trace id or an inline array")
        return value

    try:
        regions = [Region(str(_req(r, "id", "region")), r.get("reserve_fraction", 0.10))
                   for r in doc.get("regions", [])]
        buses = [Bus(str(_req(b, "id", "bus")), str(_req(b, "region", f"bus {b.get('id')}")),
                     b.get("base_kv", 1.0)) for b in _req(doc, "buses", "scenario")]
        lines = []
        for ln in doc.get("lines", []):
            where = f"line {ln.get('id')}"
            lines.append(Line(
                str(_req(ln, "id", "line")), str(_req(ln, "from", where)), str(_req(ln, "to", where)),
                _req(ln, "flow_limit", where), ln.get("susceptance"), ln.get("r", 0.0),
                ln.get("x", 0.1), ln.get("b", 0.0), ln.get("loss_fraction", 0.10)))
        gens = []
        for g in _req(doc, "generators", "scenario"):
            where = f"generator {g.get('id')}"
            ql = g.get("q_limits")
            gens.append(Generator(
                str(_req(g, "id", "generator")), str(_req(g, "bus", where)), _req(g, "kind", where),
                _req(g, "p_min", where), _req(g, "p_max", where),
                g.get("c_fix", 0.0), g.get("c_su", 0.0), g.get("c_sd", 0.0), g.get("c_var", 0.0),
                _inf(g.get("ramp_up")), _inf(g.get("ramp_down")),
                g.get("min_up", 1), g.get("min_down", 1),
                g.get("initial_status"), g.get("initial_output"),
                g.get("initial_hours_in_state", 10_000),
                g.get("availability_trace"), g.get("fuel"), g.get("reserve_eligible"),
                _qlimits(ql, where),
                g.get("voltage_setpoint", 1.0)))
        aggs = []
        for a in doc.get("aggregators", []):
            aid = str(_req(a, "id", "aggregator"))
            where = f"aggregator {aid}"
            aggs.append(AggregatorModel(
                aid, str(_req(a, "bus", where)),
                trace_ref(_req(a, "inflexible", where), f"{aid}.inflexible"),
                trace_ref(_req(a, "underlying", where), f"{aid}.underlying"),
                trace_ref(_req(a, "pv", where), f"{aid}.pv"),
                a.get("p_b_min", 0.0), a.get("p_b_max", 0.0),
                a.get("e_min", 0.0), a.get("e_max", 0.0),
                a.get("retention", 1.0), a.get("e_initial")))
        for g, gd in zip(gens, doc["generators"]):
            if gd.get("availability_trace") is not None:
                g.availability_trace = trace_ref(gd["availability_trace"], f"{g.id}.availability")
        ac = AcSettings(**doc.get("ac", {}))
    except TypeError as exc:
        raise ScenarioFormatError(str(exc)) from exc
    return GridScenario(
        name=doc.get("name", "scenario"),
        horizon=_req(doc, "horizon", "scenario"),
        buses=buses, lines=lines, generators=gens, regions=regions,
        aggregators=aggs, traces=traces,
        base_mva=doc.get("base_mva", 100.0),
        res_zero_cost=doc.get("res_zero_cost", True),
        angle_limit_deg=doc.get("angle_limit_deg", 30.0),
        solver=dict(doc.get("solver", {})),
        stages={"dc_market": True, "ac_stability": True, **doc.get("stages", {})},
        ac=ac,
    )


def scenario_to_dict(s: GridScenario) -> dict:
    def fin(v):
        return None if v == math.inf else v

    gens = []
    for g in s.generators:
        d = {"id": g.id, "bus": g.bus_id, "kind": g.kind, "p_min": g.p_min, "p_max": g.p_max,
             "c_fix": g.c_fix, "c_su": g.c_su, "c_sd": g.c_sd, "c_var": g.c_var,
             "ramp_up": fin(g.ramp_up), "ramp_down": fin(g.ramp_down),
             "min_up": g.min_up, "min_down": g.min_down,
             "initial_status": g.initial_status, "initial_output": g.initial_output,
             "initial_hours_in_state": g.initial_hours_in_state,
             "availability_trace": g.availability_trace, "fuel": g.fuel,
             "reserve_eligible": g.reserve_eligible,
             "voltage_setpoint": g.voltage_setpoint}
        if g.q_limits is not None:
            d["q_limits"] = asdict(g.q_limits)
        gens.append(d)
    return {
        "name": s.name,
        "horizon": s.horizon,
        "base_mva": s.base_mva,
        "res_zero_cost": s.res_zero_cost,
        "angle_limit_deg": s.angle_limit_deg,
        "stages": dict(s.stages),
        "solver": dict(s.solver),
        "ac": asdict(s.ac),
        "regions": [{"id": r.id, "reserve_fraction": r.reserve_fraction} for r in s.regions],
        "buses": [{"id": b.id, "region": b.region_id, "base_kv": b.base_kv} for b in s.buses],
        "lines": [{"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "flow_limit": ln.flow_limit,
                   "susceptance": ln.susceptance, "r": ln.r, "x": ln.x, "b": ln.b,
                   "loss_fraction": ln.loss_fraction} for ln in s.lines],
        "generators": gens,
        "aggregators": [{"id": a.id, "bus": a.bus_id, "inflexible": a.inflexible,
                         "underlying": a.underlying, "pv": a.pv,
                         "p_b_min": a.p_b_min, "p_b_max": a.p_b_max,
                         "e_min": a.e_min, "e_max": a.e_max,
                         "retention": a.retention, "e_initial": a.e_initial}
                        for a in s.aggregators],
        "traces": {k: list(v) for k, v in s.traces.items()},
    }


def load_scenario(path) -> GridScenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(doc, path.parent)


def dump_scenario(s: GridScenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
