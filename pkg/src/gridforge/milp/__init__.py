"""Mixed-integer linear programming: container, simplex, branch-and-bound."""

from .lpformat import read_lp, write_lp
from .problem import (BINARY, CONTINUOUS, EQ, GE, LE, MalformedProblemError,
                      MilpProblem, Violation, check_feasible)
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, SimplexError
from .solver import (LOWEST_INDEX, MOST_FRACTIONAL, NODE_LIMIT, MilpSolution,
                     SolverSettings, solve_lp, solve_milp)

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "LE", "INFEASIBLE", "OPTIMAL", "UNBOUNDED",
    "NODE_LIMIT", "LOWEST_INDEX", "MOST_FRACTIONAL", "MalformedProblemError",
    "MilpProblem", "MilpSolution", "SimplexError", "SolverSettings", "Violation",
    "check_feasible", "read_lp", "solve_lp", "solve_milp", "write_lp",
]
