"""Sparse convex QP solver with certified KKT residuals.

Problems are stated in the canonical form

    minimize    0.5 x'Qx + c'x
    subject to  A_eq x  = b_eq
                A_in x <= h_in

and solved by the Clarabel interior-point method.  Interior-point
iterates satisfy the optimality system only to the solver's relative
tolerances, so candidate solutions are then polished: the active
inequalities are guessed from the returned duals and slacks, the
resulting equality-constrained KKT system is factorized once with a
small static regularization, and the solution is corrected by
iterative refinement against the unregularized system.  A polish is
accepted only when it verifies; otherwise the interior-point answer
is kept.  Either way the reported residuals are recomputed from the
returned (x, y, z), never trusted from the backend.

Dual convention: stationarity is Qx + c + A_eq' y + A_in' z = 0 with
z >= 0, so for a binding constraint a'x <= h the multiplier z measures
the objective increase per unit tightening of h.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SolverError

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_MAX_ITER = "max_iter"

_POLISH_REG = 1e-9
_POLISH_REFINE_STEPS = 12


@dataclass
class QuadraticProgram:
    """Immutable-by-convention problem data in canonical form."""

    Q: sp.csc_matrix
    c: np.ndarray
    A_eq: sp.csc_matrix
    b_eq: np.ndarray
    A_in: sp.csc_matrix
    h_in: np.ndarray
    var_slices: dict = field(default_factory=dict)  # name -> slice, diagnostics only
    row_slices: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Q = sp.csc_matrix(self.Q)
        self.A_eq = sp.csc_matrix(self.A_eq)
        self.A_in = sp.csc_matrix(self.A_in)
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        self.h_in = np.asarray(self.h_in, dtype=float).ravel()
        n = self.c.size
        if self.Q.shape != (n, n):
            raise ValueError(f"Q is {self.Q.shape}, expected {(n, n)}")
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(f"A_eq is {self.A_eq.shape}, expected {(self.b_eq.size, n)}")
        if self.A_in.shape != (self.h_in.size, n):
            raise ValueError(f"A_in is {self.A_in.shape}, expected {(self.h_in.size, n)}")

    @property
    def n(self):
        return self.c.size

    @property
    def m_eq(self):
        return self.b_eq.size

    @property
    def m_in(self):
        return self.h_in.size

    def check_symmetry(self, tol=1e-10):
        gap = abs(self.Q - self.Q.T)
        worst = gap.max() if gap.nnz else 0.0
        if worst > tol * max(1.0, abs(self.Q).max() if self.Q.nnz else 0.0):
            raise ValueError(f"Q is not symmetric (max asymmetry {worst:.3e})")

    def check_psd(self, tol=1e-8):
        """Smallest-eigenvalue check; meant for tests and small problems."""
        self.check_symmetry()
        if self.n == 0 or self.Q.nnz == 0:
            return
        dense = self.Q.toarray()
        lo = float(np.linalg.eigvalsh(dense)[0])
        if lo < -tol * max(1.0, abs(dense).max()):
            raise ValueError(f"Q has negative eigenvalue {lo:.3e}")

    def objective(self, x):
        return float(0.5 * x @ (self.Q @ x) + self.c @ x)

    def dump_triplets(self, path):
        """Write the problem as a plain-text triplet dump.

        One section per component.  Matrix lines are ``row col value``
        in 0-based COO order; vector lines are ``index value``.  The
        format is meant for offline inspection and diffing, and is
        read back verbatim by the tests.
        """
        with open(path, "w") as fh:
            fh.write(f"# qp n={self.n} m_eq={self.m_eq} m_in={self.m_in}\n")
            for name, mat in (("Q", self.Q), ("A_eq", self.A_eq), ("A_in", self.A_in)):
                coo = mat.tocoo()
                fh.write(f"[{name}] nnz={coo.nnz}\n")
                order = np.lexsort((coo.col, coo.row))
                for r, c, vv in zip(coo.row[order], coo.col[order], coo.data[order]):
                    fh.write(f"{r} {c} {float(vv)!r}\n")
            for name, vec in (("c", self.c), ("b_eq", self.b_eq), ("h_in", self.h_in)):
                fh.write(f"[{name}] len={vec.size}\n")
                for i, vv in enumerate(vec):
                    fh.write(f"{i} {float(vv)!r}\n")


@dataclass
class KktResiduals:
    """Infinity-norm optimality residuals of a returned point.

    ``stationarity`` is scaled by 1 + ||c||_inf; the other three are
    absolute.  A point is certified optimal at tolerance ``tol`` when
    all four are at most ``tol``.
    """

    stationarity: float
    primal_eq: float
    primal_in: float
    complementarity: float

    def worst(self):
        return max(self.stationarity, self.primal_eq, self.primal_in, self.complementarity)

    def within(self, tol):
        return self.worst() <= tol


@dataclass
class QpSolution:
    x: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    status: str
    objective: float
    kkt: KktResiduals
    iterations: int
    polished: bool


def _residuals(qp, x, y, z):
    grad = qp.Q @ x + qp.c
    if qp.m_eq:
        grad = grad + qp.A_eq.T @ y
    if qp.m_in:
        grad = grad + qp.A_in.T @ z
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    stat /= 1.0 + (float(np.max(np.abs(qp.c))) if qp.c.size else 0.0)
    p_eq = float(np.max(np.abs(qp.A_eq @ x - qp.b_eq))) if qp.m_eq else 0.0
    if qp.m_in:
        slack = qp.h_in - qp.A_in @ x
        p_in = float(np.max(np.maximum(-slack, 0.0)))
        comp = float(np.max(np.abs(z * slack)))
    else:
        p_in = comp = 0.0
    return KktResiduals(stat, p_eq, p_in, comp)


def _polish(qp, x, y, z, tol):
    """Active-set refinement of an interior-point solution.

    Guesses the active inequalities, solves the corresponding KKT
    system with a static regularization, and refines against the
    unregularized matrix.  Returns (x, y, z) on verified success,
    None otherwise.
    """
    if qp.m_in:
        slack = qp.h_in - qp.A_in @ x
        guesses = [
            z > slack,                                   # dual larger than slack
            slack < 1e-7 * (1.0 + np.abs(qp.h_in)),      # small relative slack
        ]
    else:
        guesses = [np.zeros(0, dtype=bool)]

    n, m_eq = qp.n, qp.m_eq
    for active in guesses:
        a_act = qp.A_in[active] if qp.m_in else qp.A_in
        n_act = a_act.shape[0]
        k0 = sp.bmat(
            [
                [qp.Q, qp.A_eq.T if m_eq else None, a_act.T if n_act else None],
                [qp.A_eq if m_eq else None, None, None],
                [a_act if n_act else None, None, None],
            ],
            format="csc",
        )
        reg = sp.diags(
            np.concatenate([np.full(n, _POLISH_REG), np.full(m_eq + n_act, -_POLISH_REG)]),
            format="csc",
        )
        rhs = np.concatenate([-qp.c, qp.b_eq, qp.h_in[active] if qp.m_in else np.zeros(0)])
        try:
            lu = splu((k0 + reg).tocsc())
        except RuntimeError:
            continue
        # Refine starting from the interior-point iterate rather than a
        # direct solve: when the KKT matrix is singular (variables that
        # appear in no active row or objective term) the refinement
        # leaves their feasible values untouched instead of zeroing them.
        sol = np.concatenate([x, y, z[active] if qp.m_in else np.zeros(0)])
        scale = max(1.0, float(np.max(np.abs(rhs))) if rhs.size else 1.0)
        for _ in range(_POLISH_REFINE_STEPS):
            resid = rhs - k0 @ sol
            worst = float(np.max(np.abs(resid))) if resid.size else 0.0
            if worst <= 1e-15 * scale:
                break
            sol = sol + lu.solve(resid)
        x_new = sol[:n]
        y_new = sol[n : n + m_eq]
        z_new = np.zeros(qp.m_in)
        if n_act:
            z_act = sol[n + m_eq :]
            # Tiny negative multipliers are active-set noise; real sign
            # violations mean the guess was wrong.
            if np.min(z_act) < -1e-7 * scale:
                continue
            z_new[active] = np.maximum(z_act, 0.0)
        if _residuals(qp, x_new, y_new, z_new).within(0.5 * tol):
            return x_new, y_new, z_new
    return None


_STATUS_MAP = {
    "Solved": STATUS_OPTIMAL,
    "AlmostSolved": STATUS_OPTIMAL,
    "PrimalInfeasible": STATUS_INFEASIBLE,
    "AlmostPrimalInfeasible": STATUS_INFEASIBLE,
    "DualInfeasible": STATUS_UNBOUNDED,
    "AlmostDualInfeasible": STATUS_UNBOUNDED,
    "MaxIterations": STATUS_MAX_ITER,
    "MaxTime": STATUS_MAX_ITER,
    "NumericalError": STATUS_MAX_ITER,
    "InsufficientProgress": STATUS_MAX_ITER,
}


def solve_qp(qp, tol=1e-8, max_iter=50_000, x0=None):
    """Solve a canonical-form QP and certify the result.

    Parameters
    ----------
    qp : QuadraticProgram
    tol : float
        Absolute KKT tolerance a solution must meet to be reported
        ``optimal`` (stationarity scaled by 1 + ||c||_inf).
    max_iter : int
        Iteration cap passed to the backend.
    x0 : array, optional
        Accepted for interface compatibility; the interior-point
        backend does not warm-start, so the hint is unused.

    Returns
    -------
    QpSolution
        ``status`` is one of optimal / infeasible / unbounded /
        max_iter, and when optimal the recomputed KKT residuals are
        all at most ``tol``.
    """
    qp.check_symmetry()
    if qp.c.size == 0:
        raise ValueError("empty problem: no variables")

    a_all = sp.vstack([qp.A_eq, qp.A_in], format="csc") if qp.m_in or qp.m_eq else qp.A_eq
    b_all = np.concatenate([qp.b_eq, qp.h_in])
    cones = []
    if qp.m_eq:
        cones.append(clarabel.ZeroConeT(qp.m_eq))
    if qp.m_in:
        cones.append(clarabel.NonnegativeConeT(qp.m_in))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(min(max_iter, 2_000_000))
    # Push the backend well past the target so polish starts close.
    settings.tol_feas = min(1e-9, tol)
    settings.tol_gap_abs = min(1e-9, tol)
    settings.tol_gap_rel = min(1e-9, tol)
    settings.reduced_tol_feas = 1e-7
    settings.reduced_tol_gap_abs = 1e-7
    settings.reduced_tol_gap_rel = 1e-7

    try:
        solver = clarabel.DefaultSolver(qp.Q, qp.c, a_all, b_all, cones, settings)
        result = solver.solve()
    except BaseException as exc:  # the rust layer raises pyo3 exceptions
        raise SolverError(f"QP backend failed: {exc}") from exc

    raw_status = str(result.status)
    status = _STATUS_MAP.get(raw_status)
    if status is None:
        raise SolverError(f"QP backend returned unknown status {raw_status!r}")

    x = np.asarray(result.x, dtype=float)
    z_all = np.asarray(result.z, dtype=float)
    y = z_all[: qp.m_eq]
    z = np.maximum(z_all[qp.m_eq :], 0.0)

    if status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED):
        kkt = _residuals(qp, x, y, z)
        return QpSolution(x, y, z, status, qp.objective(x), kkt, result.iterations, False)

    polished = False
    refined = _polish(qp, x, y, z, tol)
    if refined is not None:
        x, y, z = refined
        polished = True
    kkt = _residuals(qp, x, y, z)
    if status == STATUS_OPTIMAL and not kkt.within(tol):
        status = STATUS_MAX_ITER
    return QpSolution(x, y, z, status, qp.objective(x), kkt, result.iterations, polished)
