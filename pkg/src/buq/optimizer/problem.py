"""Solver-agnostic linear / mixed-integer programs.

Problems are always minimisations::

    min  c @ x
    s.t. A[i] @ x  (<=, =, >=)  b[i]
         lb <= x <= ub,  x[j] integral where kind[j] != CONTINUOUS
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONTINUOUS, INTEGER, BINARY = 0, 1, 2
LE, EQ, GE = -1, 0, 1
_SENSE_CODES = {"<=": LE, "=": EQ, "==": EQ, ">=": GE, LE: LE, EQ: EQ, GE: GE}


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"
    NODE_LIMIT = "NodeLimit"


@dataclass(frozen=True, eq=False)
class OptProblem:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    kind: np.ndarray
    var_names: tuple[str, ...] = ()
    con_names: tuple[str, ...] = ()
    name: str = "problem"

    def __post_init__(self) -> None:
        n = self.c.size
        m = self.rhs.size
        if self.A.shape != (m, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(m, n)}")
        for arr, size, label in ((self.lb, n, "lb"), (self.ub, n, "ub"), (self.kind, n, "kind"),
                                 (self.sense, m, "sense")):
            if arr.size != size:
                raise ValueError(f"{label} has length {arr.size}, expected {size}")
        if not (np.isfinite(self.c).all() and np.isfinite(self.A.data).all() and np.isfinite(self.rhs).all()):
            raise ValueError("non-finite coefficient")
        if (self.lb > self.ub).any():
            j = int(np.flatnonzero(self.lb > self.ub)[0])
            raise ValueError(f"variable {self.var_name(j)} has lb > ub")
        if np.isnan(self.lb).any() or np.isnan(self.ub).any():
            raise ValueError("NaN bound")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_cons(self) -> int:
        return self.rhs.size

    @property
    def nnz(self) -> int:
        return int(self.A.nnz)

    @property
    def is_mip(self) -> bool:
        return bool((self.kind != CONTINUOUS).any())

    @property
    def integer_indices(self) -> np.ndarray:
        return np.flatnonzero(self.kind != CONTINUOUS)

    def var_name(self, j: int) -> str:
        return self.var_names[j] if self.var_names else f"x{j}"

    def con_name(self, i: int) -> str:
        return self.con_names[i] if self.con_names else f"c{i}"

    def var_index(self) -> dict[str, int]:
        return {self.var_name(j): j for j in range(self.n_vars)}

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation of rows and bounds at ``x``."""
        ax = self.A @ x
        viol = np.zeros(self.n_cons)
        viol = np.where(self.sense == LE, np.maximum(ax - self.rhs, 0), viol)
        viol = np.where(self.sense == GE, np.maximum(self.rhs - ax, 0), viol)
        viol = np.where(self.sense == EQ, np.abs(ax - self.rhs), viol)
        bound = np.maximum(np.maximum(self.lb - x, 0), np.maximum(x - self.ub, 0))
        return float(max(viol.max(initial=0.0), bound.max(initial=0.0)))

    def relaxed(self) -> OptProblem:
        """Same problem with integrality dropped."""
        return OptProblem(self.c, self.A, self.sense, self.rhs, self.lb, self.ub,
                          np.zeros_like(self.kind), self.var_names, self.con_names, self.name)

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> OptProblem:
        return OptProblem(self.c, self.A, self.sense, self.rhs, lb, ub,
                          self.kind, self.var_names, self.con_names, self.name)


@dataclass
class SolveResult:
    status: Status
    objective: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    proven: bool = True
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL

    def value(self, problem: OptProblem, name: str) -> float:
        return float(self.x[problem.var_index()[name]])


class ProblemBuilder:
    """Incremental, vectorised construction of an :class:`OptProblem`.

    Variables and rows are added in blocks; every ``add_*`` call returns
    the integer indices of what it created.
    """

    def __init__(self, name: str = "problem", keep_names: bool = True):
        self.name = name
        self.keep_names = keep_names
        self._c: list[np.ndarray] = []
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._kind: list[np.ndarray] = []
        self._vnames: list[str] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self._cnames: list[str] = []
        self.n_vars = 0
        self.n_cons = 0

    def add_vars(self, names, lb=0.0, ub=np.inf, cost=0.0, kind=CONTINUOUS) -> np.ndarray:
        names = [names] if isinstance(names, str) else list(names)
        n = len(names)
        idx = np.arange(self.n_vars, self.n_vars + n)
        self._c.append(np.broadcast_to(np.asarray(cost, float), (n,)).copy())
        self._lb.append(np.broadcast_to(np.asarray(lb, float), (n,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, float), (n,)).copy())
        self._kind.append(np.broadcast_to(np.asarray(kind, dtype=np.int8), (n,)).copy())
        if self.keep_names:
            self._vnames.extend(names)
        self.n_vars += n
        return idx

    def add_rows(self, names, rows, cols, vals, sense, rhs) -> np.ndarray:
        """Add ``len(names)`` rows given COO triplets with row offsets local to the block."""
        names = [names] if isinstance(names, str) else list(names)
        n = len(names)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape)
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ValueError("row offset outside block")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ValueError("constraint references an undeclared variable")
        code = _SENSE_CODES[sense] if not isinstance(sense, np.ndarray) else None
        self._rows.append(rows + self.n_cons)
        self._cols.append(cols)
        self._vals.append(vals.copy())
        self._sense.append(np.full(n, code, dtype=np.int8) if code is not None
                           else np.asarray(sense, dtype=np.int8))
        self._rhs.append(np.broadcast_to(np.asarray(rhs, float), (n,)).copy())
        if self.keep_names:
            self._cnames.extend(names)
        idx = np.arange(self.n_cons, self.n_cons + n)
        self.n_cons += n
        return idx

    def add_row(self, name: str, cols, vals, sense, rhs) -> int:
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        return int(self.add_rows([name], np.zeros(cols.size, dtype=np.int64), cols, vals, sense, rhs)[0])

    def build(self) -> OptProblem:
        def cat(parts, dtype=float):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

        c = cat(self._c)
        A = sp.coo_matrix((cat(self._vals), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
                          shape=(self.n_cons, self.n_vars)).tocsr()
        A.sum_duplicates()
        return OptProblem(c, A, cat(self._sense, np.int8), cat(self._rhs), cat(self._lb), cat(self._ub),
                          cat(self._kind, np.int8), tuple(self._vnames), tuple(self._cnames), self.name)
