"""Loadability margin by stepwise load increase."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .contingency import Contingency
from .powerflow import PowerFlowCase, solve_ac_power_flow

log = logging.getLogger(__name__)

INITIAL_STEP = 0.01     # fraction of base load
MIN_STEP = 1e-4         # fraction of base load


@dataclass
class LoadIncreasePattern:
    """How extra load and the matching generation are spread over buses.

    Weights are relative; an empty ``load`` mapping means "in proportion to the
    base-case loads" and likewise for ``generation``.
    """

    name: str
    load: dict[str, float] = field(default_factory=dict)
    generation: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for side, w in (("load", self.load), ("generation", self.generation)):
            if any(v < 0 for v in w.values()):
                raise ValueError(f"pattern {self.name!r}: negative {side} participation")
            if w and not any(v > 0 for v in w.values()):
                raise ValueError(f"pattern {self.name!r}: {side} participation is all zero")

    def weights(self, case: PowerFlowCase) -> tuple[np.ndarray, np.ndarray]:
        def vec(mapping, default):
            if not mapping:
                w = np.clip(default, 0.0, None)
            else:
                unknown = set(mapping) - set(case.bus_ids)
                if unknown:
                    raise KeyError(f"pattern {self.name!r}: unknown buses {sorted(unknown)}")
                w = np.array([mapping.get(b, 0.0) for b in case.bus_ids], dtype=float)
            s = w.sum()
            return w / s if s > 0 else w
        return vec(self.load, case.p_load), vec(self.generation, case.p_gen)


def uniform_pattern(name: str = "uniform") -> LoadIncreasePattern:
    return LoadIncreasePattern(name)


def scaled_case(case: PowerFlowCase, pattern: LoadIncreasePattern, delta_mw: float) -> PowerFlowCase:
    """Case with ``delta_mw`` extra load; reactive load follows at each bus's power factor."""
    wl, wg = pattern.weights(case)
    out = case.copy()
    out.reset_solution()
    dp = delta_mw * wl
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(case.p_load > 0, case.q_load / case.p_load, 0.0)
    out.p_load = case.p_load + dp
    out.q_load = case.q_load + dp * ratio
    out.p_gen = case.p_gen + delta_mw * wg
    return out


@dataclass
class MarginResult:
    pattern: str
    margin_mw: float
    base_converged: bool
    levels_tried: int
    limiting: str | None = None   # "base" or the contingency line id that failed first

    @property
    def flag(self) -> str | None:
        return None if self.base_converged else "base case diverged"


def loadability_margin(case: PowerFlowCase, pattern: LoadIncreasePattern,
                       contingencies: list[Contingency] = (),
                       base_load_mw: float | None = None) -> MarginResult:
    """Extra MW the system carries before a power flow fails to converge.

    Starting from the base case the load rises by 1% of base load per step;
    a failed level halves the step, and the search stops once the step falls
    below 0.01% of base load.  A level counts only if the intact case and
    every listed non-islanding outage still converge.
    """
    base = solve_ac_power_flow(case.copy())
    if not base.converged:
        return MarginResult(pattern.name, 0.0, False, 1, "base")
    ref = base_load_mw if base_load_mw is not None else case.total_load
    if ref <= 0:
        raise ValueError("loadability needs a positive base load")
    outages = [c for c in contingencies if not c.islanding]
    warm = {None: (base.v, base.theta)}
    for c in outages:
        post = solve_ac_power_flow(case.without_line(c.index))
        warm[c.line_id] = (post.v, post.theta) if post.converged else None

    level, step, tried = 0.0, INITIAL_STEP * ref, 0
    limiting = None
    while step >= MIN_STEP * ref:
        trial = level + step
        tried += 1
        cand = scaled_case(case, pattern, trial)
        failed = None
        starts = {}
        sol = solve_ac_power_flow(cand, warm[None])
        if not sol.converged:
            failed = "base"
        else:
            starts[None] = (sol.v, sol.theta)
            for c in outages:
                post = solve_ac_power_flow(cand.without_line(c.index), warm[c.line_id])
                if not post.converged:
                    failed = c.line_id
                    break
                starts[c.line_id] = (post.v, post.theta)
        if failed is None:
            level = trial
            warm.update(starts)
        else:
            limiting = failed
            step /= 2
    return MarginResult(pattern.name, level, True, tried, limiting)
