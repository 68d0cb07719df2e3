"""HiGHS backend through :mod:`scipy.optimize`."""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from buq.errors import NumericalError
from buq.optimizer.problem import EQ, GE, LE, OptProblem, SolveResult, Status

_MILP_STATUS = {0: Status.OPTIMAL, 1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}


def _row_bounds(p: OptProblem) -> tuple[np.ndarray, np.ndarray]:
    lo = np.where(p.sense == LE, -np.inf, p.rhs)
    hi = np.where(p.sense == GE, np.inf, p.rhs)
    return lo, hi


def solve_lp_highs(p: OptProblem, *, feas_tol: float = 1e-7, max_iters: int | None = None,
                   lb=None, ub=None) -> SolveResult:
    t0 = time.perf_counter()
    lb = p.lb if lb is None else lb
    ub = p.ub if ub is None else ub
    le, ge, eq = p.sense == LE, p.sense == GE, p.sense == EQ
    A = p.A.tocsr()
    A_ub = None
    b_ub = None
    if le.any() or ge.any():
        A_ub = sp.vstack([A[le], -A[ge]]).tocsr()
        b_ub = np.concatenate([p.rhs[le], -p.rhs[ge]])
    options = {"primal_feasibility_tolerance": feas_tol, "dual_feasibility_tolerance": feas_tol}
    if max_iters is not None:
        options["maxiter"] = int(max_iters)
    res = linprog(p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A[eq] if eq.any() else None,
                  b_eq=p.rhs[eq] if eq.any() else None, bounds=np.column_stack([lb, ub]),
                  method="highs", options=options)
    stats = {"iterations": int(getattr(res, "nit", 0) or 0), "wall_time": time.perf_counter() - t0,
             "method": "highs"}
    if res.status == 0:
        duals = np.zeros(p.n_cons)
        n_le = int(le.sum())
        if A_ub is not None:
            duals[le] = res.ineqlin.marginals[:n_le]
            duals[ge] = -res.ineqlin.marginals[n_le:]
        if eq.any():
            duals[eq] = res.eqlin.marginals
        return SolveResult(Status.OPTIMAL, float(res.fun), np.asarray(res.x), duals=duals, stats=stats)
    if res.status == 1:
        return SolveResult(Status.ITERATION_LIMIT, proven=False, stats=stats)
    if res.status == 3:
        return SolveResult(Status.UNBOUNDED, stats=stats)
    if res.status == 2:
        return SolveResult(Status.INFEASIBLE, stats=stats)
    raise NumericalError(f"HiGHS failed: {res.message}")


def solve_milp_highs(p: OptProblem, *, mip_gap: float = 1e-6, node_limit: int | None = None,
                     feas_tol: float = 1e-7, lb=None, ub=None) -> SolveResult:
    t0 = time.perf_counter()
    lb = p.lb if lb is None else lb
    ub = p.ub if ub is None else ub
    lo, hi = _row_bounds(p)
    constraints = [LinearConstraint(p.A, lo, hi)] if p.n_cons else []
    options = {"mip_rel_gap": mip_gap}
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    res = milp(p.c, constraints=constraints, integrality=(p.kind != 0).astype(int),
               bounds=Bounds(lb, ub), options=options)
    stats = {"nodes": int(getattr(res, "mip_node_count", 0) or 0), "wall_time": time.perf_counter() - t0,
             "method": "highs", "best_bound": float(getattr(res, "mip_dual_bound", np.nan) or np.nan)}
    status = _MILP_STATUS.get(res.status)
    if status is None:
        raise NumericalError(f"HiGHS failed: {res.message}")
    if res.x is None:
        if status == Status.ITERATION_LIMIT:
            status = Status.NODE_LIMIT
        return SolveResult(status, proven=False, stats=stats)
    x = np.asarray(res.x).copy()
    ints = p.integer_indices
    x[ints] = np.round(x[ints])
    if status == Status.ITERATION_LIMIT:
        return SolveResult(Status.NODE_LIMIT, float(p.c @ x), x, proven=False, stats=stats)
    return SolveResult(status, float(p.c @ x), x, stats=stats)
