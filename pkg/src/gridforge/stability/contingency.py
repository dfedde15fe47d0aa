"""N-1 line outage screening with a DC flow proxy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from .powerflow import PowerFlowCase


@dataclass(frozen=True)
class Contingency:
    line_id: str
    index: int
    max_loading: float
    worst_line: str | None
    islanding: bool = False


def _islands(n: int, f: np.ndarray, t: np.ndarray) -> int:
    g = sp.csr_matrix((np.ones(len(f)), (f, t)), shape=(n, n))
    return connected_components(g, directed=False)[0]


def dc_flows(case: PowerFlowCase, active: np.ndarray | None = None) -> np.ndarray:
    """DC line flows (MW) with the slack absorbing the injection imbalance."""
    m = len(case.line_ids)
    active = np.ones(m, bool) if active is None else active
    n = case.n_bus
    f, t = case.from_bus[active], case.to_bus[active]
    bser = 1.0 / case.x[active]
    B = np.zeros((n, n))
    np.add.at(B, (f, f), bser)
    np.add.at(B, (t, t), bser)
    np.add.at(B, (f, t), -bser)
    np.add.at(B, (t, f), -bser)
    p, _ = case.injections_pu()
    keep = np.arange(n) != case.slack
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], p[keep])
    flows = np.zeros(m)
    flows[active] = bser * (theta[f] - theta[t]) * case.base_mva
    return flows


def _loading(flows, rate, active):
    with np.errstate(divide="ignore", invalid="ignore"):
        ld = np.where(rate > 0, np.abs(flows) / rate, 0.0)
    ld[~active] = 0.0
    return ld


def screen_contingencies(case: PowerFlowCase, top_k: int = 20) -> list[Contingency]:
    """Rank single-line outages by post-outage maximum loading.

    Outages that split the network come first, flagged as islanding.  Ties
    break by line id so the ranking is reproducible.
    """
    if top_k < 0:
        raise ValueError("top_k must be non-negative")
    m = len(case.line_ids)
    out = []
    for k in range(m):
        active = np.ones(m, bool)
        active[k] = False
        if _islands(case.n_bus, case.from_bus[active], case.to_bus[active]) > 1:
            out.append(Contingency(case.line_ids[k], k, math.inf, None, True))
            continue
        ld = _loading(dc_flows(case, active), case.rate, active)
        j = int(np.argmax(ld))
        out.append(Contingency(case.line_ids[k], k, float(ld[j]), case.line_ids[j]))
    out.sort(key=lambda c: (-c.max_loading, c.line_id))
    return out[:top_k]
