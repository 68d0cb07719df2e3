"""Bounded-variable revised primal simplex.

The problem is put in computational form by giving every row ``i`` a
logical variable ``r_i`` with ``A x - r = 0`` and row bounds moved onto
``r``. The initial basis is all logicals; phase 1 minimises the sum of
bound infeasibilities of basic variables, phase 2 the true objective.

The basis inverse is held as a sparse LU factorisation of the initial basis
followed by product-form eta updates, refactorised every
``refactor_every`` pivots. Pricing is Dantzig's rule with ties broken by
the lowest variable index; after a run of degenerate pivots the method
falls back to Bland's rule until progress resumes.
"""

from __future__ import annotations

import logging
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from buq.errors import NumericalError
from buq.optimizer.problem import EQ, GE, LE, OptProblem, SolveResult, Status

logger = logging.getLogger(__name__)


class _Basis:
    """LU of the last refactorised basis plus eta file."""

    def __init__(self, cols: sp.csc_matrix, basis: np.ndarray):
        B = cols[:, basis].tocsc()
        try:
            self.lu = spla.splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise NumericalError(f"singular basis: {exc}") from exc
        diag = self.lu.U.diagonal()
        if not np.isfinite(diag).all() or np.abs(diag).min(initial=np.inf) < 1e-11:
            raise NumericalError("numerically singular basis")
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for p, alpha in self.etas:
            vp = v[p] / alpha[p]
            if vp != 0.0:
                v -= vp * alpha
            v[p] = vp
        return v

    def btran(self, c: np.ndarray) -> np.ndarray:
        w = c.copy()
        for p, alpha in reversed(self.etas):
            # E^T w only changes component p.
            ap = alpha[p]
            w[p] = (w[p] - (alpha @ w - ap * w[p])) / ap
        return self.lu.solve(w, trans="T")

    def push(self, p: int, alpha: np.ndarray) -> None:
        self.etas.append((p, alpha))


def solve_lp_simplex(problem: OptProblem, *, feas_tol: float = 1e-7, opt_tol: float = 1e-9,
                     max_iters: int | None = None, refactor_every: int = 50,
                     lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> SolveResult:
    """Solve the continuous relaxation of ``problem``.

    ``lb``/``ub`` override the problem's variable bounds (used by
    branch-and-bound without rebuilding the problem).
    """
    t0 = time.perf_counter()
    A = problem.A.tocsc()
    m, n = A.shape
    N = n + m
    cols = sp.hstack([A, -sp.identity(m, format="csc")], format="csc")
    indptr, indices, data = cols.indptr, cols.indices, cols.data
    AT = problem.A.T.tocsr()

    L = np.empty(N)
    U = np.empty(N)
    L[:n] = problem.lb if lb is None else lb
    U[:n] = problem.ub if ub is None else ub
    rhs = problem.rhs
    L[n:] = np.where(problem.sense == LE, -np.inf, rhs)
    U[n:] = np.where(problem.sense == GE, np.inf, rhs)
    if (L > U).any():
        return SolveResult(Status.INFEASIBLE, stats={"iterations": 0, "wall_time": time.perf_counter() - t0})

    cost = np.zeros(N)
    cost[:n] = problem.c
    if m == 0:
        return _solve_bounds_only(problem.c, L, U, t0)
    if max_iters is None:
        max_iters = max(10_000, 20 * (n + m))

    x = np.zeros(N)
    x[:n] = np.where(np.isfinite(L[:n]), L[:n], np.where(np.isfinite(U[:n]), U[:n], 0.0))
    basis = np.arange(n, N)
    pos = np.full(N, -1, dtype=np.int64)
    pos[basis] = np.arange(m)

    def column(j: int) -> np.ndarray:
        a = np.zeros(m)
        s, e = indptr[j], indptr[j + 1]
        a[indices[s:e]] = data[s:e]
        return a

    def recompute_basics(fac: _Basis) -> None:
        xn = np.where(pos < 0, x, 0.0)
        r = -(cols @ xn)
        x[basis] = fac.ftran(r)

    _crash(problem, x, L, U, basis, pos, indptr, indices, data, n)
    fac = _Basis(cols, basis)
    recompute_basics(fac)

    iters = 0
    degenerate_run = 0
    bland = False
    phase = 1
    status = None
    y = np.zeros(m)

    while True:
        if len(fac.etas) >= refactor_every:
            fac = _Basis(cols, basis)
            recompute_basics(fac)

        xb = x[basis]
        lb_b, ub_b = L[basis], U[basis]
        below = xb < lb_b - feas_tol
        above = xb > ub_b + feas_tol
        infeasible = below.any() or above.any()
        phase = 1 if infeasible else 2
        if phase == 1:
            cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
        else:
            cb = cost[basis]

        y = fac.btran(cb)
        d = np.empty(N)
        if phase == 1:
            d[:n] = -(AT @ y)
        else:
            d[:n] = cost[:n] - AT @ y
        d[n:] = y  # cost of logicals is zero; column is -e_i
        nonbasic = pos < 0
        at_lower = nonbasic & (x <= L) & (L < U)
        at_upper = nonbasic & (x >= U) & (L < U)
        free = nonbasic & ~np.isfinite(L) & ~np.isfinite(U)
        tol = opt_tol * (1.0 if phase == 1 else max(1.0, float(np.abs(cost).max(initial=0.0))))
        eligible = (at_lower & (d < -tol)) | (at_upper & (d > tol)) | (free & (np.abs(d) > tol))
        if not eligible.any():
            if phase == 1:
                status = Status.INFEASIBLE
                break
            if fac.etas:
                # Confirm on a fresh factorisation before declaring optimality.
                fac = _Basis(cols, basis)
                recompute_basics(fac)
                continue
            status = Status.OPTIMAL
            break
        if iters >= max_iters:
            status = Status.ITERATION_LIMIT
            break
        iters += 1

        cand = np.flatnonzero(eligible)
        q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
        direction = 1.0 if d[q] < 0 else -1.0
        alpha = fac.ftran(column(q))
        delta = -direction * alpha

        # Harris two-pass ratio test.
        piv_tol = 1e-9
        inc = delta > piv_tol
        dec = delta < -piv_tol
        target = np.full(m, np.nan)
        if phase == 1:
            target[inc & below] = lb_b[inc & below]
            target[dec & above] = ub_b[dec & above]
            ok = ~below & ~above
            target[inc & ok] = ub_b[inc & ok]
            target[dec & ok] = lb_b[dec & ok]
        else:
            target[inc] = ub_b[inc]
            target[dec] = lb_b[dec]
        blocking = np.isfinite(target)
        flip = U[q] - L[q]
        if not blocking.any():
            if np.isfinite(flip):
                theta, p = flip, -1
            elif phase == 2:
                status = Status.UNBOUNDED
                break
            else:
                raise NumericalError("phase 1 ratio test found no blocking variable")
        else:
            rows = np.flatnonzero(blocking)
            dr = delta[rows]
            gap = target[rows] - xb[rows]
            if bland:
                ratios = np.maximum(gap / dr, 0.0)
                best = ratios.min()
                tied = rows[ratios <= best + 1e-12]
                p = int(tied[np.argmin(basis[tied])])
                theta = float(max(best, 0.0))
            else:
                relaxed = (gap + np.sign(dr) * feas_tol) / dr
                theta_max = relaxed.min()
                ratios = gap / dr
                within = ratios <= theta_max
                pick = rows[within]
                p = int(pick[np.argmax(np.abs(alpha[pick]))])
                theta = float(max((target[p] - xb[p]) / delta[p], 0.0))
            if np.isfinite(flip) and flip <= theta:
                theta, p = flip, -1

        degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0
        if degenerate_run > 50 and not bland:
            bland = True
        elif degenerate_run == 0 and bland:
            bland = False

        x[q] += direction * theta
        x[basis] = xb + theta * delta
        if p < 0:
            # Bound flip: snap to the opposite bound.
            x[q] = U[q] if direction > 0 else L[q]
            continue
        leaving = int(basis[p])
        x[leaving] = target[p]
        basis[p] = q
        pos[q] = p
        pos[leaving] = -1
        fac.push(p, alpha)

    x_struct = x[:n].copy()
    stats = {"iterations": iters, "wall_time": time.perf_counter() - t0, "method": "simplex"}
    if status == Status.OPTIMAL:
        return SolveResult(status, float(problem.c @ x_struct), x_struct, duals=y.copy(), stats=stats)
    if status == Status.ITERATION_LIMIT:
        return SolveResult(status, float(problem.c @ x_struct), x_struct, proven=False, stats=stats)
    return SolveResult(status, stats=stats)



def _crash(problem: OptProblem, x: np.ndarray, L: np.ndarray, U: np.ndarray, basis: np.ndarray,
           pos: np.ndarray, indptr: np.ndarray, indices: np.ndarray, data: np.ndarray, n: int) -> None:
    """Swap column singletons into the basis for rows whose logical starts infeasible.

    A row is repaired when a nonbasic structural appearing in that row
    only can take the value that satisfies it within its own bounds. The
    basis stays triangular, so this never makes it singular.
    """
    counts = np.diff(indptr[:n + 1])
    act = problem.A @ x[:n]
    bad = (act < L[n:]) | (act > U[n:])
    if not bad.any():
        return
    taken = np.zeros(problem.n_cons, dtype=bool)
    for j in np.flatnonzero(counts == 1):
        i = int(indices[indptr[j]])
        if not bad[i] or taken[i]:
            continue
        a = data[indptr[j]]
        target = min(max(act[i], L[n + i]), U[n + i])
        v = x[j] + (target - act[i]) / a
        if not L[j] - 1e-12 <= v <= U[j] + 1e-12:
            continue
        basis[i] = j
        pos[j] = i
        pos[n + i] = -1
        x[n + i] = target
        taken[i] = True


def _solve_bounds_only(c: np.ndarray, L: np.ndarray, U: np.ndarray, t0: float) -> SolveResult:
    x = np.where(c > 0, L, np.where(c < 0, U, np.where(np.isfinite(L), L, np.where(np.isfinite(U), U, 0.0))))
    stats = {"iterations": 0, "wall_time": time.perf_counter() - t0, "method": "simplex"}
    if not np.isfinite(x).all():
        return SolveResult(Status.UNBOUNDED, stats=stats)
    return SolveResult(Status.OPTIMAL, float(c @ x), x, duals=np.zeros(0), stats=stats)
