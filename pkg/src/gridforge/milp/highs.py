"""HiGHS backend through scipy, for windows too large for the dense simplex."""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .problem import EQ, GE, LE, MilpProblem


def _row_bounds(problem: MilpProblem):
    rhs = problem.rhs()
    lb = np.full(len(rhs), -np.inf)
    ub = np.full(len(rhs), np.inf)
    for i, rel in enumerate(problem.relations()):
        if rel in (LE, EQ):
            ub[i] = rhs[i]
        if rel in (GE, EQ):
            lb[i] = rhs[i]
    return lb, ub


def highs_milp(problem: MilpProblem, settings):
    from .solver import NODE_LIMIT, MilpSolution

    c = problem.cost_vector()
    lo, hi = problem.bounds()
    integrality = np.array([1 if v.kind == "binary" else 0 for v in problem.variables])
    constraints = []
    if problem.n_cons:
        lb, ub = _row_bounds(problem)
        constraints = [LinearConstraint(problem.matrix(), lb, ub)]
    options = {
        "mip_rel_gap": settings.gap_rel,
        "node_limit": settings.node_limit,
        "presolve": False,   # presolve returns non-optimal answers on some small MILPs
    }
    if settings.time_limit:
        options["time_limit"] = settings.time_limit
    res = milp(c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lo, hi), options=options)
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        b = integrality.astype(bool)
        x[b] = np.round(x[b])
        return MilpSolution("optimal", objective=problem.evaluate(x), x=x,
                            gap=float(getattr(res, "mip_gap", 0.0) or 0.0),
                            nodes=int(getattr(res, "mip_node_count", 0) or 0))
    if res.status == 2:
        return MilpSolution("infeasible")
    if res.status == 3:
        return MilpSolution("unbounded")
    if res.x is not None:
        x = np.asarray(res.x, dtype=float)
        return MilpSolution(NODE_LIMIT, objective=problem.evaluate(x), x=x)
    return MilpSolution(NODE_LIMIT)


def highs_lp(problem: MilpProblem):
    from .solver import MilpSolution

    c = problem.cost_vector()
    lo, hi = problem.bounds()
    A = problem.matrix()
    rel = problem.relations()
    rhs = problem.rhs()
    ub_rows = [i for i, r in enumerate(rel) if r != EQ]
    eq_rows = [i for i, r in enumerate(rel) if r == EQ]
    sign = np.array([1.0 if rel[i] == LE else -1.0 for i in ub_rows])
    kwargs = {}
    if ub_rows:
        kwargs["A_ub"] = A[ub_rows].multiply(sign[:, None]).tocsr()
        kwargs["b_ub"] = rhs[ub_rows] * sign
    if eq_rows:
        kwargs["A_eq"] = A[eq_rows]
        kwargs["b_eq"] = rhs[eq_rows]
    res = linprog(c, bounds=list(zip(lo, hi)), method="highs", **kwargs)
    if res.status == 2:
        return MilpSolution("infeasible")
    if res.status == 3:
        return MilpSolution("unbounded")
    if res.status != 0:
        return MilpSolution("node_limit")
    duals = np.zeros(problem.n_cons)
    if ub_rows:
        duals[ub_rows] = res.ineqlin.marginals * sign
    if eq_rows:
        duals[eq_rows] = res.eqlin.marginals
    x = np.asarray(res.x, dtype=float)
    return MilpSolution("optimal", objective=problem.evaluate(x), x=x, duals=duals,
                        reduced_costs=res.lower.marginals + res.upper.marginals, gap=0.0)
