"""Export/import of the CPLEX-style LP text format (subset).

Grammar written and accepted here::

    \\ comment lines start with a backslash
    Minimize
     obj: [<coef> <var>]* [+ <constant>]
    Subject To
     <name>: [<coef> <var>]* (<=|>=|=) <rhs>
    Bounds
     <lb> <= <var> <= <ub>       (either side may be -inf / +inf)
     <var> free
    Binaries
     <var> ...
    End

Every term is written as ``+ c name`` or ``- c name`` with ``c`` in repr
form, so reading a written file reproduces the problem exactly.  Names are
sanitised by mapping ``[`` ``]`` to ``(`` ``)`` and spaces to ``_``.
"""

from __future__ import annotations

import math
import re

from .problem import BINARY, CONTINUOUS, MilpProblem

_BAD = str.maketrans({"[": "(", "]": ")", " ": "_", ":": ";"})


def _name(s: str) -> str:
    return s.translate(_BAD)


def _num(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _terms(coeffs, names) -> str:
    parts = []
    for j, a in coeffs:
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {repr(abs(float(a)))} {names[j]}")
    return " ".join(parts) if parts else "0"


def write_lp(problem: MilpProblem) -> str:
    names = [_name(v.name) for v in problem.variables]
    lines = [f"\\ {problem.name}", "Minimize"]
    obj = _terms(sorted(problem.objective.items()), names)
    if problem.objective_constant:
        obj += f" + {repr(problem.objective_constant)}"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    for c in problem.constraints:
        lines.append(f" {_name(c.name)}: {_terms(sorted(c.coeffs.items()), names)} "
                     f"{c.relation} {repr(c.rhs)}")
    lines.append("Bounds")
    for v, nm in zip(problem.variables, names):
        if v.lb == -math.inf and v.ub == math.inf:
            lines.append(f" {nm} free")
        else:
            lines.append(f" {_num(v.lb)} <= {nm} <= {_num(v.ub)}")
    bins = [nm for v, nm in zip(problem.variables, names) if v.kind == BINARY]
    if bins:
        lines.append("Binaries")
        lines.append(" " + " ".join(bins))
    lines.append("End")
    return "\n".join(lines) + "\n"


_TERM = re.compile(r"([+-])\s*(\S+)\s+(\S+)")


def _parse_terms(text: str, index: dict[str, int], problem: MilpProblem):
    coeffs = []
    for sign, num, var in _TERM.findall(text):
        if var not in index:
            index[var] = problem.add_var(var, -math.inf, math.inf)
        a = float(num)
        coeffs.append((index[var], -a if sign == "-" else a))
    return coeffs


def read_lp(text: str) -> MilpProblem:
    """Parse text produced by :func:`write_lp`."""
    problem = MilpProblem()
    index: dict[str, int] = {}
    section = None
    pending_bounds: dict[str, tuple[float, float]] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            problem.name = line[1:].strip() or problem.name
            continue
        key = line.lower()
        if key in ("minimize", "subject to", "bounds", "binaries", "end"):
            section = key
            continue
        if section == "minimize":
            body = line.split(":", 1)[1]
            rest = _TERM.sub("", body).replace(" ", "")
            if rest and rest != "0":
                problem.objective_constant = float(rest)
            for j, a in _parse_terms(body, index, problem):
                problem.add_objective(j, a)
        elif section == "subject to":
            name, body = line.split(":", 1)
            m = re.search(r"(<=|>=|=)\s*(\S+)$", body)
            rel, rhs = m.group(1), float(m.group(2))
            coeffs = _parse_terms(body[: m.start()], index, problem)
            problem.add_constraint(coeffs, rel, rhs, name=name.strip())
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1] == "free":
                pending_bounds[parts[0]] = (-math.inf, math.inf)
            else:
                pending_bounds[parts[2]] = (float(parts[0]), float(parts[4]))
        elif section == "binaries":
            for nm in line.split():
                if nm not in index:
                    index[nm] = problem.add_var(nm, 0.0, 1.0)
                problem.variables[index[nm]].kind = BINARY
    for nm, (lb, ub) in pending_bounds.items():
        if nm not in index:
            index[nm] = problem.add_var(nm, lb, ub)
        v = problem.variables[index[nm]]
        v.lb, v.ub = lb, ub
    # Variables mentioned nowhere in Bounds keep the LP-format default [0, inf).
    for nm, j in index.items():
        if nm not in pending_bounds and problem.variables[j].kind == CONTINUOUS:
            problem.variables[j].lb, problem.variables[j].ub = 0.0, math.inf
    return problem
