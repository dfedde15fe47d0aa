"""Prosumer aggregator lower level: standalone LP and its KKT embedding.

The aggregator minimises total grid intake ``sum_h p_flx[h]`` subject to

    p_flx[h] = p_u[h] - p_pv[h] + p_b[h]
    e[h]     = eta * e[h-1] + p_b[h]
    p_b_min <= p_b[h] <= p_b_max,   e_min <= e[h] <= e_max,   p_flx[h] >= 0

The embedding writes primal feasibility, dual feasibility, stationarity and
big-M complementarity as MILP rows so the upper level only sees optimal
lower-level responses.  Multiplier signs follow ``L = f + lam'g + mu'h`` with
inequalities written as ``h(x) <= 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .milp import EQ, GE, LE, MilpProblem, SolverSettings, solve_lp
from .model import AggregatorModel, GridScenario
from .uc import Window

COMPLEMENTARITY = ("flx", "pmin", "pmax", "emin", "emax")
MULTIPLIERS = ("lam_p", "lam_e", "mu_flx", "mu_pmin", "mu_pmax", "mu_emin", "mu_emax")
DUAL_M_FLOOR = 10.0


@dataclass
class LowerLevelSolution:
    status: str
    p_flx: np.ndarray | None = None
    p_b: np.ndarray | None = None
    e: np.ndarray | None = None
    objective: float = math.nan
    multipliers: dict[str, np.ndarray] = field(default_factory=dict)


def _traces(s: GridScenario, m: AggregatorModel, window: Window):
    hrs = list(window.hours)
    pu = np.array([s.traces[m.underlying][h] for h in hrs], dtype=float)
    pv = np.array([s.traces[m.pv][h] for h in hrs], dtype=float)
    return pu, pv


def solve_lower_level_lp(s: GridScenario, m: AggregatorModel, window: Window,
                         e_init: float | None = None,
                         settings: SolverSettings | None = None) -> LowerLevelSolution:
    """Standalone aggregator LP; infeasibility is a status, not an exception.

    Multipliers are read off the LP duals in the same sign convention used by
    :func:`verify_kkt`, so the returned point is a complete KKT certificate.
    """
    pu, pv = _traces(s, m, window)
    T = window.length
    eta = m.retention
    e0 = m.e0 if e_init is None else e_init
    P = MilpProblem(f"lower[{m.id}]")
    fx = [P.add_var(f"p_flx[{t}]", -math.inf, math.inf) for t in range(T)]
    pb = [P.add_var(f"p_b[{t}]", -math.inf, math.inf) for t in range(T)]
    ev = [P.add_var(f"e[{t}]", -math.inf, math.inf) for t in range(T)]
    rows: dict[str, list[int]] = {k: [] for k in ("bal", "dyn", "flx", "pmin", "pmax", "emin", "emax")}
    for t in range(T):
        rows["bal"].append(P.add_constraint({fx[t]: 1.0, pb[t]: -1.0}, EQ, pu[t] - pv[t]))
        if t == 0:
            rows["dyn"].append(P.add_constraint({ev[0]: 1.0, pb[0]: -1.0}, EQ, eta * e0))
        else:
            rows["dyn"].append(P.add_constraint({ev[t]: 1.0, ev[t - 1]: -eta, pb[t]: -1.0}, EQ, 0.0))
        rows["flx"].append(P.add_constraint({fx[t]: 1.0}, GE, 0.0))
        rows["pmin"].append(P.add_constraint({pb[t]: 1.0}, GE, m.p_b_min))
        rows["pmax"].append(P.add_constraint({pb[t]: 1.0}, LE, m.p_b_max))
        rows["emin"].append(P.add_constraint({ev[t]: 1.0}, GE, m.e_min))
        rows["emax"].append(P.add_constraint({ev[t]: 1.0}, LE, m.e_max))
        P.add_objective(fx[t], 1.0)
    sol = solve_lp(P, settings)
    if not sol.optimal:
        return LowerLevelSolution(sol.status)
    x = sol.x
    y = sol.duals

    def dual(name):
        return np.array([y[i] for i in rows[name]])

    # y = d(obj)/d(rhs): equality multipliers are -y; "<=" rows give mu = -y,
    # ">=" rows give mu = y.
    mult = {
        "lam_p": -dual("bal"), "lam_e": -dual("dyn"),
        "mu_flx": dual("flx"), "mu_pmin": dual("pmin"), "mu_pmax": -dual("pmax"),
        "mu_emin": dual("emin"), "mu_emax": -dual("emax"),
    }
    return LowerLevelSolution(
        "optimal",
        p_flx=np.array([x[j] for j in fx]),
        p_b=np.array([x[j] for j in pb]),
        e=np.array([x[j] for j in ev]),
        objective=float(sum(x[j] for j in fx)),
        multipliers=mult,
    )


# ----------------------------------------------------------------------

@dataclass
class BigM:
    flx: float
    pmin: float
    pmax: float
    emin: float
    emax: float
    dual: float


def primal_big_m(s: GridScenario, m: AggregatorModel, window: Window) -> dict[str, float]:
    pu, _ = _traces(s, m, window)
    return {
        "flx": float(np.max(pu + m.p_b_max)) if len(pu) else 0.0,
        "pmin": m.p_b_max - m.p_b_min,
        "pmax": m.p_b_max - m.p_b_min,
        "emin": m.e_max - m.e_min,
        "emax": m.e_max - m.e_min,
    }


def default_dual_big_m(s: GridScenario) -> float:
    costs = [g.c_var for g in s.generators]
    return max(10.0 * max(costs, default=0.0), DUAL_M_FLOOR)


@dataclass
class KktBlock:
    aggregator: str
    window: Window
    e_init: float
    big_m: BigM
    vars: dict[str, list[int]]
    dual_rows: dict[str, list[int]] = field(default_factory=dict)

    @property
    def p_flx(self) -> list[int]:
        return self.vars["p_flx"]

    def values(self, x) -> dict[str, np.ndarray]:
        return {k: np.array([x[j] for j in ids]) for k, ids in self.vars.items()}


def build_kkt_block(problem: MilpProblem, s: GridScenario, m: AggregatorModel, window: Window,
                    e_init: float | None = None, dual_m: float | None = None) -> KktBlock:
    """Append the aggregator's optimality system to ``problem``.

    Returns the block; ``block.p_flx`` holds the variable ids that enter the
    upper-level nodal balance.
    """
    pu, pv = _traces(s, m, window)
    T = window.length
    eta = m.retention
    e0 = m.e0 if e_init is None else e_init
    pm = primal_big_m(s, m, window)
    md = default_dual_big_m(s) if dual_m is None else dual_m
    bm = BigM(dual=md, **pm)
    P = problem
    tag = m.id
    v: dict[str, list[int]] = {k: [] for k in ("p_flx", "p_b", "e") + MULTIPLIERS}
    for c in COMPLEMENTARITY:
        v[f"b_{c}"] = []
    for t in range(T):
        v["p_flx"].append(P.add_var(f"p_flx[{tag},{t}]", 0.0, math.inf))
        v["p_b"].append(P.add_var(f"p_b[{tag},{t}]", -math.inf, math.inf))
        v["e"].append(P.add_var(f"e_b[{tag},{t}]", 0.0, math.inf))
        v["lam_p"].append(P.add_var(f"lam_p[{tag},{t}]", -math.inf, math.inf))
        v["lam_e"].append(P.add_var(f"lam_e[{tag},{t}]", -math.inf, math.inf))
        for mu in MULTIPLIERS[2:]:
            v[mu].append(P.add_var(f"{mu}[{tag},{t}]", 0.0, math.inf))
        for c in COMPLEMENTARITY:
            v[f"b_{c}"].append(P.add_binary(f"b_{c}[{tag},{t}]"))

    def add(coeffs, rel, rhs, name, family):
        return P.add_constraint(coeffs, rel, rhs, f"{name}[{tag},{t}]", family)

    dual_rows: dict[str, list[int]] = {c: [] for c in COMPLEMENTARITY}
    for t in range(T):
        fx, pb, e = v["p_flx"][t], v["p_b"][t], v["e"][t]
        lp, le = v["lam_p"][t], v["lam_e"][t]
        mf, mpl, mpu, mel, meu = (v[k][t] for k in MULTIPLIERS[2:])
        # primal feasibility
        add({fx: 1.0, pb: -1.0}, EQ, pu[t] - pv[t], "ll_balance", "ll_balance")
        if t == 0:
            add({e: 1.0, pb: -1.0}, EQ, eta * e0, "ll_energy", "ll_energy")
        else:
            add({e: 1.0, v["e"][t - 1]: -eta, pb: -1.0}, EQ, 0.0, "ll_energy", "ll_energy")
        add({pb: 1.0}, GE, m.p_b_min, "ll_pmin", "ll_bounds")
        add({pb: 1.0}, LE, m.p_b_max, "ll_pmax", "ll_bounds")
        add({e: 1.0}, GE, m.e_min, "ll_emin", "ll_bounds")
        add({e: 1.0}, LE, m.e_max, "ll_emax", "ll_bounds")
        # stationarity
        add({lp: 1.0, mf: -1.0}, EQ, -1.0, "stat_flx", "stationarity")
        add({lp: -1.0, le: -1.0, mpl: -1.0, mpu: 1.0}, EQ, 0.0, "stat_pb", "stationarity")
        st = {le: 1.0, mel: -1.0, meu: 1.0}
        if t + 1 < T:
            st[v["lam_e"][t + 1]] = -eta
        add(st, EQ, 0.0, "stat_e", "stationarity")
        # complementarity: slack <= M_p * b,  mu <= M_d * (1 - b)
        bf, bpl, bpu, bel, beu = (v[f"b_{c}"][t] for c in COMPLEMENTARITY)
        add({fx: 1.0, bf: -bm.flx}, LE, 0.0, "cs_flx_primal", "complementarity")
        add({pb: 1.0, bpl: -bm.pmin}, LE, m.p_b_min, "cs_pmin_primal", "complementarity")
        add({pb: -1.0, bpu: -bm.pmax}, LE, -m.p_b_max, "cs_pmax_primal", "complementarity")
        add({e: 1.0, bel: -bm.emin}, LE, m.e_min, "cs_emin_primal", "complementarity")
        add({e: -1.0, beu: -bm.emax}, LE, -m.e_max, "cs_emax_primal", "complementarity")
        for c, mu, b in (("flx", mf, bf), ("pmin", mpl, bpl), ("pmax", mpu, bpu),
                         ("emin", mel, bel), ("emax", meu, beu)):
            dual_rows[c].append(add({mu: 1.0, b: md}, LE, md, f"cs_{c}_dual", "complementarity"))
    return KktBlock(m.id, window, e0, bm, v, dual_rows)


def binding_dual_big_m(block: KktBlock, x, tol: float = 1e-7) -> list[str]:
    """Multipliers sitting at the dual big-M cap (a sign the cap may be too small)."""
    out = []
    cap = block.big_m.dual
    for c, mu in zip(COMPLEMENTARITY, MULTIPLIERS[2:]):
        for t, j in enumerate(block.vars[mu]):
            if x[j] >= cap - tol * max(1.0, cap):
                out.append(f"{mu}[{block.aggregator},{t}]")
    return out


# ----------------------------------------------------------------------

@dataclass
class KktReport:
    max_residual: dict[str, float]
    violations: dict[str, list[tuple[str, float]]]
    tol: float

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def verify_kkt(s: GridScenario, m: AggregatorModel, window: Window, values: dict,
               tol: float = 1e-6, e_init: float | None = None) -> KktReport:
    """Check every KKT condition directly, with true complementarity products.

    ``values`` maps ``p_flx``, ``p_b``, ``e`` and every multiplier name to a
    per-hour sequence.  Nothing here depends on big-M constants.
    """
    pu, pv = _traces(s, m, window)
    T = window.length
    eta = m.retention
    e0 = m.e0 if e_init is None else e_init
    val = {k: np.asarray(values[k], dtype=float) for k in ("p_flx", "p_b", "e") + MULTIPLIERS}
    fx, pb, e = val["p_flx"], val["p_b"], val["e"]
    res: dict[str, list[tuple[str, float]]] = {
        "primal": [], "dual": [], "stationarity": [], "complementarity": []}
    prev_e = np.concatenate([[e0], e[:-1]])
    for t in range(T):
        res["primal"] += [
            (f"balance[{t}]", abs(fx[t] + pv[t] - pb[t] - pu[t])),
            (f"energy[{t}]", abs(e[t] - eta * prev_e[t] - pb[t])),
            (f"flx_nonneg[{t}]", max(-fx[t], 0.0)),
            (f"pmin[{t}]", max(m.p_b_min - pb[t], 0.0)),
            (f"pmax[{t}]", max(pb[t] - m.p_b_max, 0.0)),
            (f"emin[{t}]", max(m.e_min - e[t], 0.0)),
            (f"emax[{t}]", max(e[t] - m.e_max, 0.0)),
        ]
        for mu in MULTIPLIERS[2:]:
            res["dual"].append((f"{mu}[{t}]", max(-val[mu][t], 0.0)))
        nxt = val["lam_e"][t + 1] if t + 1 < T else 0.0
        res["stationarity"] += [
            (f"d_p_flx[{t}]", abs(1.0 + val["lam_p"][t] - val["mu_flx"][t])),
            (f"d_p_b[{t}]", abs(-val["lam_p"][t] - val["lam_e"][t]
                                - val["mu_pmin"][t] + val["mu_pmax"][t])),
            (f"d_e[{t}]", abs(val["lam_e"][t] - eta * nxt
                              - val["mu_emin"][t] + val["mu_emax"][t])),
        ]
        res["complementarity"] += [
            (f"flx[{t}]", abs(fx[t] * val["mu_flx"][t])),
            (f"pmin[{t}]", abs((pb[t] - m.p_b_min) * val["mu_pmin"][t])),
            (f"pmax[{t}]", abs((m.p_b_max - pb[t]) * val["mu_pmax"][t])),
            (f"emin[{t}]", abs((e[t] - m.e_min) * val["mu_emin"][t])),
            (f"emax[{t}]", abs((m.e_max - e[t]) * val["mu_emax"][t])),
        ]
    max_res = {k: max((r for _, r in v), default=0.0) for k, v in res.items()}
    viol = {k: [(n, r) for n, r in v if r > tol] for k, v in res.items()}
    return KktReport(max_res, viol, tol)


def terminal_energy(e0: float, eta: float, p_b) -> float:
    """Closed form of the storage recursion: eta^T e0 + sum eta^(T-1-t) p_b[t]."""
    p_b = np.asarray(p_b, dtype=float)
    T = len(p_b)
    return float(eta ** T * e0 + sum(eta ** (T - 1 - t) * p_b[t] for t in range(T)))
