"""Run an external LP/MIP solver as a subprocess.

The adapter writes the problem as an LP file, runs the configured command
and parses a CBC-style solution file::

    <status line>
    <index> <name> <value> [<reduced cost>]
    ...

The status line starts with ``Optimal``, ``Infeasible``, ``Integer
infeasible``, ``Unbounded`` or ``Stopped``. Value lines may carry a
leading ``**`` marker (CBC flags infeasibilities that way). Variables
missing from the file are zero.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from buq.errors import AdapterError
from buq.optimizer.lpfile import escape_name, export_lp_file
from buq.optimizer.problem import OptProblem, SolveResult, Status

ENV_COMMAND = "BUQ_SOLVER_PATH"


@dataclass(frozen=True)
class AdapterConfig:
    """``args`` may contain ``{lp}`` and ``{sol}`` placeholders."""

    command: str = "cbc"
    args: tuple[str, ...] = ("{lp}", "solve", "solu", "{sol}")
    timeout: float = 3600.0
    env: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> AdapterConfig:
        return cls(command=str(d.get("command", "cbc")), args=tuple(str(a) for a in d.get("args", cls.args)),
                   timeout=float(d.get("timeout", 3600.0)), env=dict(d.get("env", {})))


def parse_solution(text: str, problem: OptProblem) -> SolveResult:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise AdapterError("empty solution file")
    head = lines[0].strip().lower()
    if head.startswith("optimal"):
        status = Status.OPTIMAL
    elif "infeasible" in head:
        status = Status.INFEASIBLE
    elif "unbounded" in head:
        status = Status.UNBOUNDED
    elif head.startswith("stopped"):
        status = Status.ITERATION_LIMIT
    else:
        raise AdapterError(f"unrecognised solver status {lines[0]!r}")
    if status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return SolveResult(status)

    index = {escape_name(problem.var_name(j)): j for j in range(problem.n_vars)}
    x = np.zeros(problem.n_vars)
    for ln in lines[1:]:
        parts = ln.replace("**", " ").split()
        if len(parts) < 3:
            raise AdapterError(f"malformed solution line {ln!r}")
        name, value = parts[1], parts[2]
        if name not in index:
            raise AdapterError(f"solution names unknown variable {name!r}")
        try:
            x[index[name]] = float(value)
        except ValueError:
            raise AdapterError(f"malformed value in {ln!r}") from None
    ints = problem.integer_indices
    x[ints] = np.round(x[ints])
    return SolveResult(status, float(problem.c @ x), x, proven=status == Status.OPTIMAL)


def external_solve(problem: OptProblem, config: AdapterConfig | None = None) -> SolveResult:
    """Solve ``problem`` with an external process.

    Raises
    ------
    AdapterError
        Executable missing, non-zero exit, timeout, or unparseable output.
    """
    config = config or AdapterConfig()
    command = os.environ.get(ENV_COMMAND) or config.command
    exe = shutil.which(command)
    if exe is None:
        raise AdapterError(f"solver executable {command!r} not found")
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="buq-solve-") as tmp:
        lp = Path(tmp) / "model.lp"
        sol = Path(tmp) / "model.sol"
        lp.write_text(export_lp_file(problem), encoding="utf-8")
        argv = [exe] + [a.format(lp=lp, sol=sol) for a in config.args]
        env = {**os.environ, **config.env}
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=config.timeout, env=env)
        except subprocess.TimeoutExpired as exc:
            raise AdapterError(f"solver timed out after {config.timeout}s") from exc
        except OSError as exc:
            raise AdapterError(f"could not run solver: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterError(f"solver exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
        if not sol.exists():
            raise AdapterError("solver wrote no solution file")
        result = parse_solution(sol.read_text(encoding="utf-8"), problem)
    result.stats.update({"wall_time": time.perf_counter() - t0, "method": "adapter"})
    return result


def write_solution(result: SolveResult, problem: OptProblem) -> str:
    """Render a result in the grammar :func:`parse_solution` reads."""
    head = {Status.OPTIMAL: "Optimal", Status.INFEASIBLE: "Infeasible", Status.UNBOUNDED: "Unbounded"}.get(
        result.status, "Stopped")
    if result.x is None:
        return f"{head}\n"
    lines = [f"{head} - objective value {result.objective!r}"]
    for j, v in enumerate(result.x):
        if v != 0.0:
            lines.append(f"{j} {escape_name(problem.var_name(j))} {float(v)!r} 0")
    return "\n".join(lines) + "\n"
