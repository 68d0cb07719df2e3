"""Linear and mixed-integer programming: problem model, embedded solvers, LP export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from buq.optimizer.adapter import AdapterConfig, external_solve
from buq.optimizer.branch_bound import branch_and_bound
from buq.optimizer.highs import solve_lp_highs, solve_milp_highs
from buq.optimizer.lpfile import export_lp_file, read_lp_file
from buq.optimizer.problem import (BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, OptProblem, ProblemBuilder,
                                   SolveResult, Status)
from buq.optimizer.simplex import solve_lp_simplex

logger = logging.getLogger(__name__)

METHODS = ("auto", "simplex", "highs", "adapter")


@dataclass(frozen=True)
class SolverOptions:
    """How problems are solved.

    ``simplex`` is the embedded revised simplex (with branch-and-bound for
    integer problems); ``highs`` runs HiGHS in-process; ``adapter`` shells
    out to an external solver. ``auto`` uses ``simplex`` for problems with
    at most ``simplex_max_nnz`` nonzeros and ``simplex_max_integers``
    integer variables, ``highs`` otherwise.
    """

    method: str = "auto"
    feas_tol: float = 1e-7
    mip_gap: float = 1e-6
    max_iters: int | None = None
    node_limit: int = 100_000
    simplex_max_nnz: int = 50_000
    simplex_max_integers: int = 64
    adapter: AdapterConfig = field(default_factory=AdapterConfig)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}; expected one of {METHODS}")

    def pick(self, p: OptProblem) -> str:
        if self.method != "auto":
            return self.method
        small = p.nnz <= self.simplex_max_nnz and p.integer_indices.size <= self.simplex_max_integers
        return "simplex" if small else "highs"


def solve_lp(p: OptProblem, opts: SolverOptions | None = None) -> SolveResult:
    """Solve a continuous LP."""
    opts = opts or SolverOptions()
    if p.is_mip:
        raise ValueError("solve_lp called on a problem with integer variables; use solve_milp")
    method = opts.pick(p)
    if method == "simplex":
        return solve_lp_simplex(p, feas_tol=opts.feas_tol, max_iters=opts.max_iters)
    if method == "highs":
        return solve_lp_highs(p, feas_tol=opts.feas_tol, max_iters=opts.max_iters)
    return external_solve(p, opts.adapter)


def solve_milp(p: OptProblem, opts: SolverOptions | None = None) -> SolveResult:
    """Solve a mixed-integer program (plain LPs are accepted too)."""
    opts = opts or SolverOptions()
    method = opts.pick(p)
    if method == "simplex":
        if not p.is_mip:
            return solve_lp_simplex(p, feas_tol=opts.feas_tol, max_iters=opts.max_iters)
        return branch_and_bound(p, solve_lp_simplex, mip_gap=opts.mip_gap, node_limit=opts.node_limit,
                                feas_tol=opts.feas_tol, max_iters=opts.max_iters)
    if method == "highs":
        return solve_milp_highs(p, mip_gap=opts.mip_gap, node_limit=opts.node_limit, feas_tol=opts.feas_tol)
    return external_solve(p, opts.adapter)


def solve(p: OptProblem, opts: SolverOptions | None = None) -> SolveResult:
    return solve_milp(p, opts) if p.is_mip else solve_lp(p, opts)


__all__ = [
    "AdapterConfig", "BINARY", "CONTINUOUS", "EQ", "GE", "INTEGER", "LE", "OptProblem", "ProblemBuilder",
    "SolveResult", "SolverOptions", "Status", "branch_and_bound", "export_lp_file", "external_solve",
    "read_lp_file", "solve", "solve_lp", "solve_lp_highs", "solve_lp_simplex", "solve_milp",
    "solve_milp_highs",
]
