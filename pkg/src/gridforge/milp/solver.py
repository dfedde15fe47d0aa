"""LP and MILP entry points: built-in simplex + branch-and-bound, or HiGHS."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .problem import MilpProblem
from .simplex import (INFEASIBLE, OPTIMAL, UNBOUNDED, BasisState,
                      BoundedSimplex, LpOutcome)

log = logging.getLogger(__name__)

NODE_LIMIT = "node_limit"

MOST_FRACTIONAL = "most-fractional"
LOWEST_INDEX = "lowest-index"


@dataclass
class SolverSettings:
    feas_tol: float = 1e-6
    int_tol: float = 1e-6
    gap_abs: float = 1e-6
    gap_rel: float = 0.0
    node_limit: int = 200_000
    branching: str = MOST_FRACTIONAL
    backend: str = "builtin"
    time_limit: float | None = None

    def __post_init__(self):
        for name in ("feas_tol", "int_tol", "gap_abs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gap_rel < 0:
            raise ValueError("gap_rel must be non-negative")
        if self.branching not in (MOST_FRACTIONAL, LOWEST_INDEX):
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.backend not in ("builtin", "highs"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass
class MilpSolution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    nodes: int = 0
    gap: float = math.nan
    runtime: float = 0.0
    names: dict[str, int] = field(default_factory=dict, repr=False)
    basis: BasisState | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name: str) -> float:
        return float(self.x[self.names[name]])

    def value(self, name: str, default: float = 0.0) -> float:
        j = self.names.get(name)
        return default if j is None or self.x is None else float(self.x[j])


def _engine(problem: MilpProblem) -> BoundedSimplex:
    return BoundedSimplex(problem.matrix().toarray(), problem.rhs(),
                          problem.cost_vector(), problem.relations())


def solve_lp(problem: MilpProblem, settings: SolverSettings | None = None,
             warm: BasisState | None = None) -> MilpSolution:
    """Solve the continuous relaxation; duals follow ``d objective / d rhs``.

    Rows of type ``<=`` therefore carry non-positive duals and ``>=`` rows
    non-negative ones.
    """
    settings = settings or SolverSettings()
    problem.validate()
    t0 = time.perf_counter()
    names = {v.name: j for j, v in enumerate(problem.variables)}
    if settings.backend == "highs":
        from .highs import highs_lp
        sol = highs_lp(problem)
        sol.names = names
        sol.runtime = time.perf_counter() - t0
        return sol
    lo, hi = problem.bounds()
    out = _engine(problem).solve(lo, hi, warm)
    return _to_solution(problem, out, names, time.perf_counter() - t0)


def _to_solution(problem, out: LpOutcome, names, runtime) -> MilpSolution:
    if out.status != OPTIMAL:
        return MilpSolution(out.status, names=names, runtime=runtime)
    return MilpSolution(
        OPTIMAL,
        objective=problem.evaluate(out.x),
        x=out.x,
        duals=out.duals,
        reduced_costs=out.reduced_costs,
        gap=0.0,
        names=names,
        runtime=runtime,
        basis=out.basis,
    )


# ----------------------------------------------------------------------
@dataclass(order=True)
class _Node:
    bound: float
    depth_key: int
    seq: int
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    warm: BasisState | None = field(compare=False, default=None)


def _pick_branch(x, binaries, rule, int_tol):
    frac = np.abs(x[binaries] - np.round(x[binaries]))
    cand = np.flatnonzero(frac > int_tol)
    if not len(cand):
        return None
    if rule == LOWEST_INDEX:
        return int(binaries[cand[0]])
    dist = np.abs(x[binaries][cand] - 0.5)
    return int(binaries[cand[np.argmin(dist)]])


def solve_milp(problem: MilpProblem, settings: SolverSettings | None = None,
               warm: BasisState | None = None) -> MilpSolution:
    """Branch-and-bound over binaries on top of the bounded simplex.

    Nodes are explored best-bound first with a depth-first dive after each
    expansion.  ``warm`` is an optional root basis hint.
    """
    settings = settings or SolverSettings()
    problem.validate()
    names = {v.name: j for j, v in enumerate(problem.variables)}
    t0 = time.perf_counter()
    if settings.backend == "highs":
        from .highs import highs_milp
        sol = highs_milp(problem, settings)
        sol.names = names
        sol.runtime = time.perf_counter() - t0
        return sol

    binaries = np.array(problem.binaries, dtype=int)
    engine = _engine(problem)
    lo0, hi0 = problem.bounds()
    if len(binaries):
        lo0[binaries] = np.ceil(lo0[binaries] - settings.int_tol)
        hi0[binaries] = np.floor(hi0[binaries] + settings.int_tol)
    c = problem.cost_vector()

    incumbent_x = None
    incumbent_obj = math.inf
    nodes = 0
    seq = 0
    heap: list[_Node] = []
    root = engine.solve(lo0, hi0, warm)
    nodes += 1
    if root.status == INFEASIBLE:
        return MilpSolution(INFEASIBLE, nodes=nodes, names=names,
                            runtime=time.perf_counter() - t0)
    if root.status == UNBOUNDED:
        return MilpSolution(UNBOUNDED, nodes=nodes, names=names,
                            runtime=time.perf_counter() - t0)
    stack = [(lo0, hi0, root)]
    best_bound = root.objective
    limit_hit = False

    def prune_level():
        if not math.isfinite(incumbent_obj):
            return math.inf
        return incumbent_obj - max(settings.gap_abs, settings.gap_rel * abs(incumbent_obj))

    while stack or heap:
        if stack:
            lo, hi, out = stack.pop()
        else:
            node = heapq.heappop(heap)
            if node.bound >= prune_level():
                continue
            if nodes >= settings.node_limit or (
                    settings.time_limit and time.perf_counter() - t0 > settings.time_limit):
                heapq.heappush(heap, node)
                limit_hit = True
                break
            lo, hi = node.lo, node.hi
            out = engine.solve(lo, hi, node.warm)
            nodes += 1
        if out.status != OPTIMAL:
            continue
        obj = float(c @ out.x)
        if obj >= prune_level():
            continue
        j = _pick_branch(out.x, binaries, settings.branching, settings.int_tol)
        if j is None:
            incumbent_x, incumbent_obj = out.x.copy(), obj
            log.debug("incumbent %.9g after %d nodes", obj, nodes)
            continue
        if nodes >= settings.node_limit or (
                settings.time_limit and time.perf_counter() - t0 > settings.time_limit):
            heapq.heappush(heap, _Node(obj, 0, seq, lo, hi, out.basis))
            limit_hit = True
            break
        children = []
        for val in (0.0, 1.0):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = val
            children.append((clo, chi))
        # Dive toward the nearer integer, queue the other child.
        near = 1 if out.x[j] >= 0.5 else 0
        far = 1 - near
        seq += 1
        heapq.heappush(heap, _Node(obj, 0, seq, children[far][0], children[far][1], out.basis))
        clo, chi = children[near]
        child = engine.solve(clo, chi, out.basis)
        nodes += 1
        stack.append((clo, chi, child))

    runtime = time.perf_counter() - t0
    open_bound = min((n.bound for n in heap), default=math.inf)
    if limit_hit:
        best_bound = min(open_bound, incumbent_obj)
        if incumbent_x is None:
            return MilpSolution(NODE_LIMIT, nodes=nodes, names=names, runtime=runtime)
    if incumbent_x is None:
        return MilpSolution(INFEASIBLE, nodes=nodes, names=names, runtime=runtime)
    x, final = _polish(problem, engine, incumbent_x, binaries, lo0, hi0)
    objective = problem.evaluate(x)
    gap = 0.0 if not limit_hit else max(0.0, objective - best_bound)
    return MilpSolution(
        NODE_LIMIT if limit_hit else OPTIMAL,
        objective=objective,
        x=x,
        duals=final.duals if final is not None and not len(binaries) else None,
        reduced_costs=final.reduced_costs if final is not None and not len(binaries) else None,
        nodes=nodes,
        gap=gap,
        names=names,
        runtime=runtime,
        basis=final.basis if final is not None else None,
    )


def _polish(problem, engine, x, binaries, lo0, hi0):
    """Round binaries exactly and re-solve the continuous part."""
    if not len(binaries):
        return x, engine.solve(lo0, hi0)
    lo, hi = lo0.copy(), hi0.copy()
    fixed = np.round(x[binaries])
    lo[binaries] = hi[binaries] = fixed
    out = engine.solve(lo, hi)
    if out.status != OPTIMAL:
        log.warning("re-solve with fixed binaries failed (%s); keeping B&B point", out.status)
        x = x.copy()
        x[binaries] = fixed
        return x, None
    xr = out.x.copy()
    xr[binaries] = fixed
    return xr, out
