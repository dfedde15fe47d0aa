"""Dense bounded-variable revised simplex (primal and dual).

Every row is turned into an equality with one slack column, so the working
system is ``[A | I] z = b`` with per-column bounds.  Slack bounds encode the row
relation: ``<=`` rows get ``s >= 0``, ``>=`` rows ``s <= 0`` and equalities a
fixed zero slack.  Phase one uses one artificial column per violated row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BASIC, AT_LO, AT_HI, FREE = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# Pivot streak after which Dantzig pricing hands over to Bland's rule.
DEGENERATE_STREAK = 50
REFACTOR_EVERY = 64


class SimplexError(RuntimeError):
    """Numerical breakdown or iteration limit inside the simplex."""


@dataclass
class BasisState:
    basis: np.ndarray
    status: np.ndarray


@dataclass
class LpOutcome:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: BasisState | None = None
    iterations: int = 0


def equilibrate(A: np.ndarray, passes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Geometric row/column scaling factors for ``A``."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    absA = np.abs(A)
    nz = absA > 0
    for _ in range(passes):
        B = absA * r[:, None] * s[None, :]
        big = np.where(nz, B, 0.0).max(axis=1, initial=0.0)
        small = np.where(nz, B, np.inf).min(axis=1, initial=np.inf)
        ok = big > 0
        r[ok] /= np.sqrt(big[ok] * small[ok])
        B = absA * r[:, None] * s[None, :]
        big = np.where(nz, B, 0.0).max(axis=0, initial=0.0)
        small = np.where(nz, B, np.inf).min(axis=0, initial=np.inf)
        ok = big > 0
        s[ok] /= np.sqrt(big[ok] * small[ok])
    # Powers of two keep the scaling exact in floating point.
    r = 2.0 ** np.round(np.log2(r))
    s = 2.0 ** np.round(np.log2(s))
    return r, s


class BoundedSimplex:
    """Reusable LP engine for one constraint matrix and cost vector.

    Only the column bounds vary between calls to :meth:`solve`, which is what
    branch-and-bound needs; the optimal basis of one call can seed the next.
    """

    def __init__(self, A, b, c, relations, scale: bool = True,
                 primal_tol: float = 1e-9, dual_tol: float = 1e-9,
                 pivot_tol: float = 1e-9, max_iter: int = 200_000):
        A = np.asarray(A, dtype=float)
        self.m, self.n = A.shape
        if scale and A.size:
            self.row_scale, self.col_scale = equilibrate(A)
        else:
            self.row_scale, self.col_scale = np.ones(self.m), np.ones(self.n)
        R, S = self.row_scale, self.col_scale
        As = A * R[:, None] * S[None, :]
        self.W = np.hstack([As, np.eye(self.m)])
        self.b = np.asarray(b, dtype=float) * R
        self.cost = np.concatenate([np.asarray(c, dtype=float) * S, np.zeros(self.m)])
        slo = np.zeros(self.m)
        shi = np.zeros(self.m)
        for i, rel in enumerate(relations):
            if rel == "<=":
                shi[i] = math.inf
            elif rel == ">=":
                slo[i] = -math.inf
        self.slack_lo, self.slack_hi = slo, shi
        self.ptol, self.dtol, self.pivtol = primal_tol, dual_tol, pivot_tol
        self.max_iter = max_iter

    # ------------------------------------------------------------------
    def solve(self, lo, hi, warm: BasisState | None = None) -> LpOutcome:
        lo = np.asarray(lo, dtype=float) / self.col_scale
        hi = np.asarray(hi, dtype=float) / self.col_scale
        if np.any(lo > hi + 1e-12):
            return LpOutcome(INFEASIBLE)
        if warm is not None:
            out = self._warm(lo, hi, warm)
            if out is not None:
                return out
        return self._cold(lo, hi)

    # ------------------------------------------------------------------
    def _setup(self, lo, hi, W):
        self.lo = np.concatenate([lo, self.slack_lo, np.zeros(W.shape[1] - self.n - self.m)])
        self.hi = np.concatenate([hi, self.slack_hi, np.full(W.shape[1] - self.n - self.m, math.inf)])
        self.Wk = W
        self.iters = 0
        self.since_refactor = 0

    def _refactor(self):
        Bm = self.Wk[:, self.basis]
        try:
            self.Binv = np.linalg.inv(Bm)
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis") from exc
        z = self.z.copy()
        z[self.basis] = 0.0
        self.z[self.basis] = self.Binv @ (self.b - self.Wk @ z)
        self.since_refactor = 0

    def _nonbasic_value(self, j):
        lo, hi = self.lo[j], self.hi[j]
        if math.isfinite(lo):
            return lo, AT_LO
        if math.isfinite(hi):
            return hi, AT_HI
        return 0.0, FREE

    def _cold(self, lo, hi) -> LpOutcome:
        n, m = self.n, self.m
        x = np.empty(n)
        st = np.empty(n, dtype=int)
        for j in range(n):
            if math.isfinite(lo[j]):
                x[j], st[j] = lo[j], AT_LO
            elif math.isfinite(hi[j]):
                x[j], st[j] = hi[j], AT_HI
            else:
                x[j], st[j] = 0.0, FREE
        slack = self.b - self.W[:, :n] @ x
        clipped = np.clip(slack, self.slack_lo, self.slack_hi)
        resid = slack - clipped
        art_rows = np.flatnonzero(np.abs(resid) > self.ptol)
        k = len(art_rows)
        W = self.W
        if k:
            art = np.zeros((m, k))
            art[art_rows, np.arange(k)] = np.sign(resid[art_rows])
            W = np.hstack([self.W, art])
        self._setup(lo, hi, W)
        N = W.shape[1]
        self.z = np.zeros(N)
        self.status = np.zeros(N, dtype=int)
        self.z[:n] = x
        self.status[:n] = st
        self.basis = np.arange(n, n + m)
        if k:
            for r_idx, i in enumerate(art_rows):
                col = n + m + r_idx
                self.basis[i] = col
                sj = n + i
                val = clipped[i]
                self.z[sj] = val
                self.status[sj] = AT_LO if val == self.lo[sj] else AT_HI
        self.status[self.basis] = BASIC
        self._refactor()
        if k:
            phase1 = np.zeros(N)
            phase1[n + m:] = 1.0
            res = self._primal(phase1)
            if res == UNBOUNDED:  # cannot happen for a bounded-below objective
                raise SimplexError("phase one unbounded")
            infeas = float(self.z[n + m:].sum())
            if infeas > max(self.ptol, 1e-9) * 10:
                return LpOutcome(INFEASIBLE, iterations=self.iters)
            self.hi[n + m:] = 0.0
            self._drive_out_artificials()
        cost = np.concatenate([self.cost, np.zeros(N - n - m)])
        res = self._primal(cost)
        if res == UNBOUNDED:
            return LpOutcome(UNBOUNDED, iterations=self.iters)
        return self._extract(cost)

    def _warm(self, lo, hi, warm: BasisState) -> LpOutcome | None:
        n, m = self.n, self.m
        self._setup(lo, hi, self.W)
        self.basis = warm.basis.copy()
        self.status = warm.status.copy()
        self.z = np.zeros(n + m)
        for j in np.flatnonzero(self.status != BASIC):
            s = self.status[j]
            if s == AT_LO and math.isfinite(self.lo[j]):
                self.z[j] = self.lo[j]
            elif s == AT_HI and math.isfinite(self.hi[j]):
                self.z[j] = self.hi[j]
            else:
                self.z[j], self.status[j] = self._nonbasic_value(j)
        try:
            self._refactor()
        except SimplexError:
            return None
        cost = self.cost
        y = cost[self.basis] @ self.Binv
        d = cost - y @ self.W
        movable = self.hi > self.lo
        bad = movable & (((self.status == AT_LO) & (d < -1e-7))
                         | ((self.status == AT_HI) & (d > 1e-7))
                         | ((self.status == FREE) & (np.abs(d) > 1e-7)))
        if bad.any():
            return None
        try:
            res = self._dual(cost)
            if res == INFEASIBLE:
                return LpOutcome(INFEASIBLE, iterations=self.iters)
            res = self._primal(cost)
        except SimplexError:
            return None
        if res == UNBOUNDED:
            return LpOutcome(UNBOUNDED, iterations=self.iters)
        return self._extract(cost)

    # ------------------------------------------------------------------
    def _pivot(self, r, q, alpha):
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.status[q] = BASIC
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self._refactor()

    def _primal(self, cost) -> str:
        bland = False
        streak = 0
        lo, hi, W = self.lo, self.hi, self.Wk
        movable = hi > lo
        while True:
            self.iters += 1
            if self.iters > self.max_iter:
                raise SimplexError("iteration limit")
            y = cost[self.basis] @ self.Binv
            d = cost - y @ W
            st = self.status
            inc = movable & ((st == AT_LO) | (st == FREE)) & (d < -self.dtol)
            dec = movable & ((st == AT_HI) | (st == FREE)) & (d > self.dtol)
            cand = inc | dec
            if not cand.any():
                return OPTIMAL
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                q = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            direction = 1.0 if inc[q] else -1.0
            alpha = self.Binv @ W[:, q]
            rate = -direction * alpha
            zB = self.z[self.basis]
            loB = lo[self.basis]
            hiB = hi[self.basis]
            t = np.full(self.m, math.inf)
            neg = rate < -self.pivtol
            pos = rate > self.pivtol
            with np.errstate(invalid="ignore"):
                t[neg] = (zB[neg] - loB[neg]) / -rate[neg]
                t[pos] = (hiB[pos] - zB[pos]) / rate[pos]
            t = np.where(np.isnan(t), math.inf, np.maximum(t, 0.0))
            t_flip = hi[q] - lo[q] if st[q] != FREE else math.inf
            tmin = float(t.min()) if self.m else math.inf
            if not math.isfinite(tmin) and not math.isfinite(t_flip):
                return UNBOUNDED
            if t_flip <= tmin:
                step = t_flip
                self.z[q] = hi[q] if direction > 0 else lo[q]
                self.status[q] = AT_HI if direction > 0 else AT_LO
                self.z[self.basis] = zB + rate * step
            else:
                ties = np.flatnonzero(t <= tmin + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                step = float(t[r])
                leaving = self.basis[r]
                self.z[self.basis] = zB + rate * step
                self.z[q] = self.z[q] + direction * step
                if rate[r] < 0:
                    self.z[leaving], self.status[leaving] = lo[leaving], AT_LO
                else:
                    self.z[leaving], self.status[leaving] = hi[leaving], AT_HI
                self._pivot(r, q, alpha)
            if step <= 1e-12:
                streak += 1
                if streak > DEGENERATE_STREAK:
                    bland = True
            else:
                streak = 0

    def _dual(self, cost) -> str:
        lo, hi, W = self.lo, self.hi, self.Wk
        movable = hi > lo
        while True:
            self.iters += 1
            if self.iters > self.max_iter:
                raise SimplexError("iteration limit")
            zB = self.z[self.basis]
            loB = lo[self.basis]
            hiB = hi[self.basis]
            infeas = np.maximum(np.maximum(loB - zB, zB - hiB), 0.0)
            r = int(np.argmax(infeas)) if self.m else 0
            if not self.m or infeas[r] <= self.ptol:
                return OPTIMAL
            to_lower = zB[r] < loB[r]
            target = loB[r] if to_lower else hiB[r]
            arow = self.Binv[r] @ W
            y = cost[self.basis] @ self.Binv
            d = cost - y @ W
            st = self.status
            up = movable & ((st == AT_LO) | (st == FREE))
            down = movable & ((st == AT_HI) | (st == FREE))
            if to_lower:
                elig = (up & (arow < -self.pivtol)) | (down & (arow > self.pivtol))
            else:
                elig = (up & (arow > self.pivtol)) | (down & (arow < -self.pivtol))
            if not elig.any():
                return INFEASIBLE
            idx = np.flatnonzero(elig)
            ratios = np.abs(d[idx]) / np.abs(arow[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(arow[ties]))])
            alpha = self.Binv @ W[:, q]
            delta = (zB[r] - target) / alpha[r]
            leaving = self.basis[r]
            self.z[self.basis] = zB - delta * alpha
            self.z[q] += delta
            self.z[leaving] = target
            self.status[leaving] = AT_LO if to_lower else AT_HI
            self._pivot(r, q, alpha)

    def _drive_out_artificials(self):
        n, m = self.n, self.m
        for r in range(m):
            if self.basis[r] < n + m:
                continue
            row = self.Binv[r] @ self.Wk[:, :n + m]
            row[self.basis[self.basis < n + m]] = 0.0
            cand = np.flatnonzero((np.abs(row) > 1e-7) & (self.status[:n + m] != BASIC))
            if not len(cand):
                continue  # redundant row; the artificial stays basic at zero
            q = int(cand[np.argmax(np.abs(row[cand]))])
            alpha = self.Binv @ self.Wk[:, q]
            art = self.basis[r]
            self.status[art] = AT_LO
            self.z[art] = 0.0
            self._pivot(r, q, alpha)
        self._refactor()

    def _extract(self, cost) -> LpOutcome:
        self._refactor()
        n, m = self.n, self.m
        y = cost[self.basis] @ self.Binv
        d = cost - y @ self.Wk
        x = self.z[:n] * self.col_scale
        basis = None
        if np.all(self.basis < n + m):
            basis = BasisState(self.basis.copy(), self.status[:n + m].copy())
        return LpOutcome(
            OPTIMAL,
            x=x,
            objective=float(self.cost[:n] @ self.z[:n]),
            duals=y * self.row_scale,
            reduced_costs=d[:n] / self.col_scale,
            basis=basis,
            iterations=self.iters,
        )
