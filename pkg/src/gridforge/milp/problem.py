"""Linear-algebraic MILP container shared by every model builder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
GE = ">="
EQ = "="
_RELATIONS = (LE, GE, EQ)


class MalformedProblemError(ValueError):
    """Raised when a problem violates the container invariants."""


@dataclass
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = math.inf


@dataclass
class Constraint:
    name: str
    coeffs: dict[int, float]
    relation: str
    rhs: float
    family: str = ""


@dataclass
class MilpProblem:
    """Minimisation MILP with sparse rows.

    Variables and constraints are addressed by integer position; names are kept
    unique so that solutions can be looked up by name as well.
    """

    name: str = "problem"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}

    # -- construction -----------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                kind: str = CONTINUOUS) -> int:
        if name in self._index:
            raise MalformedProblemError(f"duplicate variable name {name!r}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.variables.append(Variable(name, kind, float(lb), float(ub)))
        self._index[name] = len(self.variables) - 1
        return len(self.variables) - 1

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, BINARY)

    def add_constraint(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                       relation: str, rhs: float, name: str | None = None,
                       family: str = "") -> int:
        if relation not in _RELATIONS:
            raise MalformedProblemError(f"unknown relation {relation!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: dict[int, float] = {}
        for j, a in items:
            row[j] = row.get(j, 0.0) + float(a)
        row = {j: a for j, a in row.items() if a != 0.0}
        name = name or f"c{len(self.constraints)}"
        self.constraints.append(Constraint(name, row, relation, float(rhs), family))
        return len(self.constraints) - 1

    def add_objective(self, j: int, coef: float) -> None:
        self.objective[j] = self.objective.get(j, 0.0) + float(coef)

    # -- queries ----------------------------------------------------------
    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_cons(self) -> int:
        return len(self.constraints)

    @property
    def binaries(self) -> list[int]:
        return [j for j, v in enumerate(self.variables) if v.kind == BINARY]

    def family_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for c in self.constraints:
            counts[c.family] = counts.get(c.family, 0) + 1
        return counts

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([v.lb for v in self.variables], dtype=float)
        hi = np.array([v.ub for v in self.variables], dtype=float)
        return lo, hi

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, a in self.objective.items():
            c[j] += a
        return c

    def matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(a)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_cons, self.n_vars))

    def rhs(self) -> np.ndarray:
        return np.array([c.rhs for c in self.constraints], dtype=float)

    def relations(self) -> list[str]:
        return [c.relation for c in self.constraints]

    def evaluate(self, x: np.ndarray) -> float:
        return float(sum(a * x[j] for j, a in self.objective.items())) + self.objective_constant

    def validate(self) -> None:
        """Raise MalformedProblemError on any container invariant violation."""
        n = self.n_vars
        for v in self.variables:
            if math.isnan(v.lb) or math.isnan(v.ub):
                raise MalformedProblemError(f"NaN bound on {v.name}")
            if v.lb > v.ub:
                raise MalformedProblemError(f"empty bounds on {v.name}: [{v.lb}, {v.ub}]")
            if v.kind == BINARY and (v.lb < 0.0 or v.ub > 1.0):
                raise MalformedProblemError(f"binary {v.name} bounds outside [0, 1]")
            if v.kind not in (BINARY, CONTINUOUS):
                raise MalformedProblemError(f"unknown kind {v.kind!r}")
        for c in self.constraints:
            if not math.isfinite(c.rhs):
                raise MalformedProblemError(f"non-finite rhs in {c.name}")
            for j, a in c.coeffs.items():
                if not 0 <= j < n:
                    raise MalformedProblemError(f"{c.name} references unknown variable {j}")
                if not math.isfinite(a):
                    raise MalformedProblemError(f"non-finite coefficient in {c.name}")
        for j, a in self.objective.items():
            if not 0 <= j < n:
                raise MalformedProblemError(f"objective references unknown variable {j}")
            if not math.isfinite(a):
                raise MalformedProblemError("non-finite objective coefficient")

    def copy(self) -> "MilpProblem":
        p = MilpProblem(
            self.name,
            [Variable(v.name, v.kind, v.lb, v.ub) for v in self.variables],
            [Constraint(c.name, dict(c.coeffs), c.relation, c.rhs, c.family)
             for c in self.constraints],
            dict(self.objective),
            self.objective_constant,
        )
        return p

    def relaxed(self) -> "MilpProblem":
        p = self.copy()
        for v in p.variables:
            v.kind = CONTINUOUS
        return p


@dataclass
class Violation:
    row: int
    name: str
    residual: float


def check_feasible(problem: MilpProblem, x, tol: float = 1e-6,
                   check_bounds: bool = True) -> list[Violation]:
    """Report every row (and optionally bound) violated by more than ``tol``.

    Bound violations are reported with ``row = -1 - j`` for variable ``j``.
    """
    x = np.asarray(x, dtype=float)
    out = []
    for i, con in enumerate(problem.constraints):
        lhs = sum(a * x[j] for j, a in con.coeffs.items())
        if con.relation == LE:
            r = lhs - con.rhs
        elif con.relation == GE:
            r = con.rhs - lhs
        else:
            r = abs(lhs - con.rhs)
        if r > tol:
            out.append(Violation(i, con.name, r))
    if check_bounds:
        for j, v in enumerate(problem.variables):
            r = max(v.lb - x[j], x[j] - v.ub, 0.0)
            if r > tol:
                out.append(Violation(-1 - j, v.name, r))
    return out
