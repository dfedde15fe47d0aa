"""Polar Newton-Raphson AC power flow with generator reactive limits."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

PQ, PV, SLACK = 1, 2, 3
MAX_Q_SWITCH_ROUNDS = 10


@dataclass
class PowerFlowCase:
    """Bus/branch AC case.  Powers are MW/MVAr; the solver works in per unit.

    ``q_min``/``q_max`` bound the total generator reactive output at a bus and
    only matter for PV buses.  Solution fields are filled by
    :func:`solve_ac_power_flow`.
    """

    bus_ids: list[str]
    bus_type: np.ndarray
    p_gen: np.ndarray
    p_load: np.ndarray
    q_load: np.ndarray
    v_set: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    line_ids: list[str]
    from_bus: np.ndarray
    to_bus: np.ndarray
    r: np.ndarray
    x: np.ndarray
    b: np.ndarray
    rate: np.ndarray
    base_mva: float = 100.0
    pf_tol: float = 1e-8
    max_iter: int = 30
    # solution
    v: np.ndarray | None = None
    theta: np.ndarray | None = None
    q_gen: np.ndarray | None = None
    converged: bool = False
    singular: bool = False
    iterations: int = 0
    max_mismatch: float = np.inf
    switched_to_pq: list[str] = field(default_factory=list)
    q_limit_oscillation: bool = False
    active_types: np.ndarray | None = None
    q_fixed: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.bus_ids)
        for name in ("bus_type", "p_gen", "p_load", "q_load", "v_set", "q_min", "q_max"):
            arr = np.asarray(getattr(self, name), dtype=int if name == "bus_type" else float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per bus")
            setattr(self, name, arr)
        m = len(self.line_ids)
        for name in ("from_bus", "to_bus", "r", "x", "b", "rate"):
            arr = np.asarray(getattr(self, name), dtype=int if name.endswith("bus") else float)
            if arr.shape != (m,):
                raise ValueError(f"{name} must have one entry per line")
            setattr(self, name, arr)
        if np.count_nonzero(self.bus_type == SLACK) != 1:
            raise ValueError("case needs exactly one slack bus")

    @property
    def n_bus(self) -> int:
        return len(self.bus_ids)

    @property
    def slack(self) -> int:
        return int(np.flatnonzero(self.bus_type == SLACK)[0])

    @property
    def total_load(self) -> float:
        return float(self.p_load.sum())

    def copy(self) -> "PowerFlowCase":
        out = copy.copy(self)
        for k, v in vars(self).items():
            if isinstance(v, (np.ndarray, list)):
                setattr(out, k, v.copy())
        return out

    def reset_solution(self) -> None:
        self.v = self.theta = self.q_gen = self.active_types = self.q_fixed = None
        self.converged = self.singular = self.q_limit_oscillation = False
        self.iterations = 0
        self.max_mismatch = np.inf
        self.switched_to_pq = []

    def without_line(self, k: int) -> "PowerFlowCase":
        keep = np.arange(len(self.line_ids)) != k
        out = self.copy()
        out.line_ids = [lid for i, lid in enumerate(self.line_ids) if keep[i]]
        for name in ("from_bus", "to_bus", "r", "x", "b", "rate"):
            setattr(out, name, getattr(self, name)[keep])
        return out

    def injections_pu(self) -> tuple[np.ndarray, np.ndarray]:
        """Specified net injections; Q at PV/slack buses is meaningless."""
        p = (self.p_gen - self.p_load) / self.base_mva
        q = -self.q_load / self.base_mva
        return p, q

    def line_flows(self) -> np.ndarray:
        """Sending-end complex power per line in MVA."""
        V = self.v * np.exp(1j * self.theta)
        ys = 1.0 / (self.r + 1j * self.x)
        vf, vt = V[self.from_bus], V[self.to_bus]
        i_f = (vf - vt) * ys + vf * 1j * self.b / 2
        return vf * np.conj(i_f) * self.base_mva


def admittance_matrix(case: PowerFlowCase) -> np.ndarray:
    """Pi-model bus admittance matrix (dense; cases here are small)."""
    n = case.n_bus
    ys = 1.0 / (case.r + 1j * case.x)
    ysh = 1j * case.b / 2
    f, t = case.from_bus, case.to_bus
    Y = np.zeros((n, n), dtype=complex)
    np.add.at(Y, (f, f), ys + ysh)
    np.add.at(Y, (t, t), ys + ysh)
    np.add.at(Y, (f, t), -ys)
    np.add.at(Y, (t, f), -ys)
    return Y


def calc_power(Y, v, theta) -> np.ndarray:
    V = v * np.exp(1j * theta)
    return V * np.conj(Y @ V)


def power_jacobians(Y, v, theta):
    """Derivatives of complex injections w.r.t. angle and magnitude (dense)."""
    V = v * np.exp(1j * theta)
    Yd = np.asarray(Y)
    I = Yd @ V
    # diag(V) conj(diag(I) - Y diag(V)) and diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    dS_dth = 1j * V[:, None] * np.conj(np.diag(I) - Yd * V[None, :])
    Vn = V / v
    dS_dv = V[:, None] * np.conj(Yd * Vn[None, :]) + np.diag(np.conj(I) * Vn)
    return dS_dth, dS_dv


def _index_sets(bus_type):
    non_slack = np.flatnonzero(bus_type != SLACK)
    pq = np.flatnonzero(bus_type == PQ)
    return non_slack, pq


def mismatch_vector(case: PowerFlowCase, v, theta, bus_type=None, q_fixed=None) -> np.ndarray:
    """[dP at non-slack buses, dQ at PQ buses] in per unit (specified minus calculated)."""
    bus_type = case.bus_type if bus_type is None else bus_type
    Y = admittance_matrix(case)
    S = calc_power(Y, v, theta)
    p_spec, q_spec = case.injections_pu()
    if q_fixed is not None:
        q_spec = q_spec + q_fixed
    ns, pq = _index_sets(bus_type)
    return np.concatenate([p_spec[ns] - S.real[ns], q_spec[pq] - S.imag[pq]])


def jacobian(case: PowerFlowCase, v, theta, bus_type=None) -> np.ndarray:
    """Jacobian of the calculated injections over the unknowns [theta_ns, v_pq].

    Rows follow :func:`mismatch_vector` ordering; the mismatch Jacobian is its
    negative.
    """
    bus_type = case.bus_type if bus_type is None else bus_type
    Y = admittance_matrix(case)
    dth, dv = power_jacobians(Y, v, theta)
    ns, pq = _index_sets(bus_type)
    top = np.hstack([dth.real[np.ix_(ns, ns)], dv.real[np.ix_(ns, pq)]])
    bot = np.hstack([dth.imag[np.ix_(pq, ns)], dv.imag[np.ix_(pq, pq)]])
    return np.vstack([top, bot])


def _newton(case, v, theta, bus_type, q_fixed):
    ns, pq = _index_sets(bus_type)
    Y = admittance_matrix(case)
    p_spec, q_spec = case.injections_pu()
    q_spec = q_spec + q_fixed
    k = len(ns)
    J = np.empty((k + len(pq), k + len(pq)))
    ix_pt, ix_pv, ix_qt, ix_qv = np.ix_(ns, ns), np.ix_(ns, pq), np.ix_(pq, ns), np.ix_(pq, pq)

    def residual(v, theta):
        S = calc_power(Y, v, theta)
        F = np.concatenate([p_spec[ns] - S.real[ns], q_spec[pq] - S.imag[pq]])
        return F, (float(np.max(np.abs(F))) if F.size else 0.0)

    for it in range(1, case.max_iter + 1):
        F, err = residual(v, theta)
        if not np.isfinite(err):
            return v, theta, False, False, it, err
        if err <= case.pf_tol:
            return v, theta, True, False, it, err
        dth, dv = power_jacobians(Y, v, theta)
        J[:k, :k] = dth.real[ix_pt]
        J[:k, k:] = dv.real[ix_pv]
        J[k:, :k] = dth.imag[ix_qt]
        J[k:, k:] = dv.imag[ix_qv]
        try:
            dx = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return v, theta, False, True, it, err
        if not np.all(np.isfinite(dx)):
            return v, theta, False, True, it, err
        theta = theta.copy()
        v = v.copy()
        theta[ns] += dx[:len(ns)]
        v[pq] += dx[len(ns):]
    F, err = residual(v, theta)
    return v, theta, err <= case.pf_tol, False, case.max_iter, err


def solve_ac_power_flow(case: PowerFlowCase, start: tuple[np.ndarray, np.ndarray] | None = None,
                        enforce_q_limits: bool = True) -> PowerFlowCase:
    """Solve ``case`` in place and return it.

    Divergence and a singular Jacobian are reported through ``converged`` and
    ``singular``; neither raises.  After each converged Newton run, PV buses
    whose generator reactive output leaves [q_min, q_max] become PQ at the
    violated limit; a switched bus returns to PV once its voltage moves back
    to the setpoint side.  Switching rounds are capped.
    """
    case.reset_solution()
    n = case.n_bus
    bus_type = case.bus_type.copy()
    if start is None:
        v = np.where(bus_type == PQ, 1.0, case.v_set).astype(float)
        theta = np.zeros(n)
    else:
        v, theta = (np.array(a, dtype=float) for a in start)
        v = np.where(bus_type == PQ, v, case.v_set)
    q_fixed = np.zeros(n)
    at_limit = np.zeros(n)  # +1 at q_max, -1 at q_min
    iters = 0
    for rnd in range(MAX_Q_SWITCH_ROUNDS + 1):
        v, theta, ok, singular, it, err = _newton(case, v, theta, bus_type, q_fixed)
        iters += it
        if not ok or not enforce_q_limits:
            break
        S = calc_power(admittance_matrix(case), v, theta)
        qg = S.imag * case.base_mva + case.q_load
        changed = False
        for i in range(n):
            if bus_type[i] == PV:
                if qg[i] > case.q_max[i] + 1e-9:
                    bus_type[i], at_limit[i], changed = PQ, 1, True
                    q_fixed[i] = case.q_max[i] / case.base_mva
                elif qg[i] < case.q_min[i] - 1e-9:
                    bus_type[i], at_limit[i], changed = PQ, -1, True
                    q_fixed[i] = case.q_min[i] / case.base_mva
            elif at_limit[i] and (at_limit[i] * (v[i] - case.v_set[i]) > 1e-9):
                # voltage overshoots the setpoint on the capped side: regulate again
                bus_type[i], at_limit[i], q_fixed[i], changed = PV, 0, 0.0, True
                v[i] = case.v_set[i]
        if not changed:
            break
        if rnd == MAX_Q_SWITCH_ROUNDS:
            case.q_limit_oscillation = True
            log.warning("reactive limit switching did not settle")
    case.v, case.theta = v, theta
    case.iterations = iters
    case.singular = singular
    case.converged = bool(ok)
    case.max_mismatch = err
    S = calc_power(admittance_matrix(case), v, theta)
    case.q_gen = S.imag * case.base_mva + case.q_load
    case.switched_to_pq = [case.bus_ids[i] for i in np.flatnonzero(at_limit != 0)]
    case.active_types = bus_type
    case.q_fixed = q_fixed * case.base_mva
    return case


def branch_flow_mismatch(case: PowerFlowCase) -> float:
    """Largest nodal imbalance (p.u.) from explicit branch flows.

    Independent of the admittance matrix and Newton bookkeeping: sums the
    pi-model flows leaving each bus and compares with specified injections.
    Slack P and the Q of voltage-regulating buses are taken from the solution.
    """
    V = case.v * np.exp(1j * case.theta)
    out = np.zeros(case.n_bus, dtype=complex)
    for k in range(len(case.line_ids)):
        f, t = case.from_bus[k], case.to_bus[k]
        ys = 1.0 / complex(case.r[k], case.x[k])
        sh = 1j * case.b[k] / 2
        out[f] += V[f] * np.conj((V[f] - V[t]) * ys + V[f] * sh)
        out[t] += V[t] * np.conj((V[t] - V[f]) * ys + V[t] * sh)
    p_spec, _ = case.injections_pu()
    q_spec = (case.q_fixed - case.q_load) / case.base_mva
    worst = 0.0
    types = case.active_types
    for i in range(case.n_bus):
        if types[i] != SLACK:
            worst = max(worst, abs(p_spec[i] - out[i].real))
        if types[i] == PQ:
            worst = max(worst, abs(q_spec[i] - out[i].imag))
    return worst
