"""Best-first branch-and-bound over LP relaxations."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from collections.abc import Callable

import numpy as np

from buq.optimizer.problem import OptProblem, SolveResult, Status

LpSolver = Callable[..., SolveResult]


def _most_fractional(x: np.ndarray, int_idx: np.ndarray, int_tol: float) -> int | None:
    frac = np.abs(x[int_idx] - np.round(x[int_idx]))
    if frac.size == 0 or frac.max() <= int_tol:
        return None
    # argmax of distance to 0.5 ties -> lowest index
    score = 0.5 - np.abs(frac - 0.5)
    score[frac <= int_tol] = -1.0
    return int(int_idx[int(np.argmax(score))])


def _rounding_heuristic(problem: OptProblem, lp_solver: LpSolver, x: np.ndarray, int_idx: np.ndarray,
                        lb: np.ndarray, ub: np.ndarray, lp_opts: dict) -> tuple[SolveResult | None, int]:
    """Fix every integer at ``round(x)``, then at ``ceil(x)``; return the first feasible LP."""
    iters = 0
    for op in (np.round, np.ceil):
        v = np.clip(op(x[int_idx]), lb[int_idx], ub[int_idx])
        flb, fub = lb.copy(), ub.copy()
        flb[int_idx] = v
        fub[int_idx] = v
        res = lp_solver(problem, lb=flb, ub=fub, **lp_opts)
        iters += res.stats.get("iterations", 0)
        if res.status == Status.OPTIMAL:
            return res, iters
    return None, iters


def branch_and_bound(problem: OptProblem, lp_solver: LpSolver, *, mip_gap: float = 1e-6,
                     node_limit: int = 100_000, int_tol: float = 1e-6, heuristic_every: int = 25,
                     **lp_opts) -> SolveResult:
    """Minimise ``problem`` with integrality, branching on the most fractional variable.

    Nodes are explored in order of their parent's LP bound, deepest first
    among equal bounds so that ties dive towards an incumbent. The search stops
    when the relative gap between incumbent and best open bound is at most
    ``mip_gap``; hitting ``node_limit`` returns the incumbent with
    ``proven=False`` and status ``NodeLimit``. A rounding heuristic runs at
    the root and every ``heuristic_every`` nodes (0 disables it) whenever
    more than one integer is fractional.
    """
    t0 = time.perf_counter()
    int_idx = problem.integer_indices
    lb0 = problem.lb.copy()
    ub0 = problem.ub.copy()
    lb0[int_idx] = np.ceil(lb0[int_idx] - int_tol)
    ub0[int_idx] = np.floor(ub0[int_idx] + int_tol)

    counter = itertools.count()
    heap: list = [(-math.inf, 0, next(counter), lb0, ub0)]
    incumbent: np.ndarray | None = None
    best = math.inf
    nodes = 0
    lp_iters = 0
    root_bound = -math.inf
    unbounded = False

    def gap_closed(bound: float) -> bool:
        if incumbent is None:
            return False
        return best - bound <= mip_gap * max(1.0, abs(best))

    while heap:
        bound, depth, _, lb, ub = heap[0]
        if gap_closed(bound):
            break
        if nodes >= node_limit:
            break
        heapq.heappop(heap)
        if (lb > ub).any():
            continue
        res = lp_solver(problem, lb=lb, ub=ub, **lp_opts)
        nodes += 1
        lp_iters += res.stats.get("iterations", 0)
        if res.status == Status.UNBOUNDED:
            unbounded = True
            break
        if res.status != Status.OPTIMAL:
            continue
        if nodes == 1:
            root_bound = res.objective
        if res.objective >= best - mip_gap * max(1.0, abs(best)) and incumbent is not None:
            continue
        j = _most_fractional(res.x, int_idx, int_tol)
        if j is None:
            if res.objective < best:
                best = res.objective
                incumbent = res.x.copy()
                incumbent[int_idx] = np.round(incumbent[int_idx])
            continue
        # With a single fractional integer the two children already are its roundings.
        n_frac = int((np.abs(res.x[int_idx] - np.round(res.x[int_idx])) > int_tol).sum())
        if heuristic_every and (nodes - 1) % heuristic_every == 0 and n_frac > 1:
            h, its = _rounding_heuristic(problem, lp_solver, res.x, int_idx, lb, ub, lp_opts)
            lp_iters += its
            if h is not None and h.objective < best:
                best = h.objective
                incumbent = h.x.copy()
                incumbent[int_idx] = np.round(incumbent[int_idx])
                if res.objective >= best - mip_gap * max(1.0, abs(best)):
                    continue
        v = res.x[j]
        down_ub = ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = lb.copy()
        up_lb[j] = math.ceil(v)
        heapq.heappush(heap, (res.objective, depth - 1, next(counter), lb, down_ub))
        heapq.heappush(heap, (res.objective, depth - 1, next(counter), up_lb, ub))

    stats = {"nodes": nodes, "branch_nodes": max(nodes - 1, 0), "iterations": lp_iters,
             "root_bound": root_bound, "wall_time": time.perf_counter() - t0}
    if unbounded:
        return SolveResult(Status.UNBOUNDED, stats=stats)
    open_bound = min((h[0] for h in heap), default=math.inf)
    stats["best_bound"] = min(open_bound, best)
    if incumbent is None:
        if heap:
            return SolveResult(Status.NODE_LIMIT, proven=False, stats=stats)
        return SolveResult(Status.INFEASIBLE, stats=stats)
    proven = not heap or gap_closed(open_bound)
    status = Status.OPTIMAL if proven else Status.NODE_LIMIT
    return SolveResult(status, float(best), incumbent, proven=proven, stats=stats)
