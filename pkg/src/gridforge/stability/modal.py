"""V-Q modal analysis of the reduced power-flow Jacobian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .powerflow import PQ, SLACK, PowerFlowCase, admittance_matrix, power_jacobians


class SingularAngleBlock(np.linalg.LinAlgError):
    pass


@dataclass
class ModalResult:
    bus_ids: list[str]            # PQ buses, the rows of the reduced matrix
    eigenvalues: np.ndarray       # real parts, ascending
    right: np.ndarray             # columns are right eigenvectors
    left: np.ndarray              # rows are left eigenvectors
    participation: np.ndarray     # (mode, bus), each row sums to 1
    reduced: np.ndarray

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0]) if len(self.eigenvalues) else float("nan")

    def top_buses(self, k: int = 3, mode: int = 0) -> list[tuple[str, float]]:
        if not len(self.eigenvalues):
            return []
        row = self.participation[mode]
        order = sorted(range(len(row)), key=lambda i: (-row[i], self.bus_ids[i]))
        return [(self.bus_ids[i], float(row[i])) for i in order[:k]]


def reduced_vq_jacobian(case: PowerFlowCase) -> tuple[np.ndarray, list[int]]:
    """J_QV - J_Qth J_Pth^-1 J_PV over the PQ buses at the solved point."""
    types = case.active_types if case.active_types is not None else case.bus_type
    dth, dv = power_jacobians(admittance_matrix(case), case.v, case.theta)
    ns = np.flatnonzero(types != SLACK)
    pq = np.flatnonzero(types == PQ)
    j_pt = dth.real[np.ix_(ns, ns)]
    j_pv = dv.real[np.ix_(ns, pq)]
    j_qt = dth.imag[np.ix_(pq, ns)]
    j_qv = dv.imag[np.ix_(pq, pq)]
    try:
        sol = np.linalg.solve(j_pt, j_pv)
    except np.linalg.LinAlgError as exc:
        raise SingularAngleBlock("P-theta block of the Jacobian is singular") from exc
    if np.linalg.cond(j_pt) > 1e14:
        raise SingularAngleBlock("P-theta block of the Jacobian is singular")
    return j_qv - j_qt @ sol, list(pq)


def modal_analysis(case: PowerFlowCase) -> ModalResult:
    if not case.converged:
        raise ValueError("modal analysis needs a converged case")
    jr, pq = reduced_vq_jacobian(case)
    ids = [case.bus_ids[i] for i in pq]
    if not len(pq):
        empty = np.zeros((0, 0))
        return ModalResult(ids, np.zeros(0), empty, empty, empty, jr)
    lam, xi = np.linalg.eig(jr)
    order = np.argsort(lam.real, kind="stable")
    lam, xi = lam[order], xi[:, order]
    eta = np.linalg.inv(xi)
    part = np.abs(xi.T * eta)        # p[mode, bus] = |xi[bus, mode] * eta[mode, bus]|
    part = part / part.sum(axis=1, keepdims=True)
    return ModalResult(ids, lam.real.copy(), xi, eta, part, jr)
