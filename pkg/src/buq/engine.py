"""m-out-of-n stratified block bootstrap.

A model is solved on ``K`` resampled series of ``n_S`` hours. The sample
variance of each (annualised) output across those runs, rescaled by
``n_S / n_O``, estimates the sampling variance of the output computed on
the full ``n_O``-hour series::

    var_S   = 1/(K-1) * sum_k (O_k - mean(O))^2
    sigma_O = sqrt(n_S / n_O * var_S)

and ``n_O = n_S * var_S / sigma_target^2`` is the length needed for a
target standard deviation.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Protocol, Sequence

import numpy as np

from buq import __version__
from buq.errors import DegenerateInput, SolverError, TooManyFailures
from buq.psm import OutputSet
from buq.resampler import SamplePlan, SampleScheme, assemble, draw_plans
from buq.timeseries import HOURS_PER_YEAR, TimeSeriesTable

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


class Model(Protocol):
    def __call__(self, table: TimeSeriesTable) -> OutputSet: ...

    def describe(self) -> dict: ...


@dataclass(frozen=True)
class DemandMeanModel:
    """Solver-free pseudo-model.

    ``demand_mean`` is the mean of all-bus total demand (MW) and
    ``demand_peak`` its maximum, a sample extreme.
    """

    def __call__(self, table: TimeSeriesTable) -> OutputSet:
        total = table.demand.sum(axis=0)
        return OutputSet({"demand_mean": math.fsum(total) / total.size, "demand_peak": float(total.max())},
                         {"demand_mean": "MW", "demand_peak": "MW"})

    def describe(self) -> dict:
        return {"model": "demand_mean"}


# -- estimators --------------------------------------------------------------

def sample_variance(values: Sequence[float]) -> float:
    """Unbiased sample variance, independent of the order of ``values``.

    Raises
    ------
    DegenerateInput
        Fewer than two values.
    """
    v = [float(x) for x in values]
    if len(v) < 2:
        raise DegenerateInput(f"sample variance needs at least 2 values, got {len(v)}")
    # fsum is correctly rounded, so both sums are order independent.
    mean = math.fsum(v) / len(v)
    return math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1)


def extrapolate_sigma(var_s: float, n_s: float, n_o: float) -> float:
    """Standard deviation at length ``n_o`` from the variance at length ``n_s``."""
    if var_s < 0:
        raise ValueError("variance must be non-negative")
    if n_s <= 0 or n_o <= 0:
        raise ValueError("sample lengths must be positive")
    return math.sqrt(var_s * n_s / n_o)


@dataclass(frozen=True)
class SampleLength:
    """Required series length; ``hours`` and ``years`` are exact rationals."""

    hours: Fraction
    years: Fraction

    @property
    def years_ceiling(self) -> int:
        return math.ceil(self.years)

    def to_dict(self) -> dict:
        return {"hours": float(self.hours), "years": float(self.years), "years_ceiling": self.years_ceiling}


def required_sample_length(var_s: float, n_s: float, target_sigma: float) -> SampleLength:
    """Length giving standard deviation ``target_sigma``: ``n_s * var_s / target_sigma**2``.

    Arithmetic is exact on the binary values of the inputs.
    """
    if target_sigma <= 0:
        raise ValueError("target sigma must be positive")
    if var_s < 0 or n_s <= 0:
        raise ValueError("variance must be non-negative and n_s positive")
    hours = Fraction(n_s) * Fraction(var_s) / Fraction(target_sigma) ** 2
    return SampleLength(hours, hours / HOURS_PER_YEAR)


def point_estimate(model: Model, table: TimeSeriesTable) -> OutputSet:
    """Outputs of a single run on the full series."""
    return model(table)


# -- report ------------------------------------------------------------------

@dataclass
class BootstrapReport:
    """Point estimates, bootstrap standard deviations and intervals per output.

    ``samples`` has one row per successful resample (``sample_ids``) and one
    column per output, in ``names`` order.
    """

    names: list[str]
    units: dict[str, str]
    point: dict[str, float]
    var_s: dict[str, float]
    sigma: dict[str, float]
    K: int
    n_s_hours: int
    n_o_hours: int
    scheme: dict
    samples: np.ndarray
    sample_ids: list[int]
    failures: list[int] = field(default_factory=list)
    model: dict = field(default_factory=dict)
    table_fingerprint: str = ""

    @property
    def k_used(self) -> int:
        return len(self.sample_ids)

    def interval(self, name: str) -> tuple[float, float]:
        o, s = self.point[name], self.sigma[name]
        return o - 2 * s, o + 2 * s

    def sigma_at(self, name: str, n_hours: float) -> float:
        """Standard deviation rescaled to another series length."""
        return extrapolate_sigma(self.var_s[name], self.n_s_hours, n_hours)

    def rows(self) -> list[dict]:
        out = []
        for n in self.names:
            lo, hi = self.interval(n)
            out.append({"name": n, "point_estimate": self.point[n], "sigma_hat": self.sigma[n], "lo": lo,
                        "hi": hi, "lo_clamped": max(lo, 0.0), "units": self.units[n]})
        return out

    def to_dict(self) -> dict:
        return {
            "version": __version__,
            "model": self.model,
            "scheme": self.scheme,
            "table_fingerprint": self.table_fingerprint,
            "K": self.K,
            "K_used": self.k_used,
            "failures": self.failures,
            "n_s_hours": self.n_s_hours,
            "n_o_hours": self.n_o_hours,
            "outputs": [dict(r, var_s=self.var_s[r["name"]]) for r in self.rows()],
            "samples": {"ids": self.sample_ids,
                        "values": {n: self.samples[:, j].tolist() for j, n in enumerate(self.names)}},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> BootstrapReport:
        outs = d["outputs"]
        names = [o["name"] for o in outs]
        vals = d["samples"]["values"]
        samples = np.column_stack([vals[n] for n in names]) if names else np.zeros((0, 0))
        return cls(names, {o["name"]: o["units"] for o in outs}, {o["name"]: o["point_estimate"] for o in outs},
                   {o["name"]: o["var_s"] for o in outs}, {o["name"]: o["sigma_hat"] for o in outs},
                   d["K"], d["n_s_hours"], d["n_o_hours"], d["scheme"], samples, list(d["samples"]["ids"]),
                   list(d["failures"]), d.get("model", {}), d.get("table_fingerprint", ""))

    @classmethod
    def from_json(cls, text: str) -> BootstrapReport:
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["name", "point_estimate", "sigma_hat", "lo", "hi", "lo_clamped", "units"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        return buf.getvalue()


# -- orchestration -----------------------------------------------------------

_WORKER: dict = {}


def _init_worker(table: TimeSeriesTable, model: Model, plans: list[SamplePlan]) -> None:
    _WORKER.update(table=table, model=model, plans=plans)


def _run_one(k: int) -> tuple[int, dict | None, str | None]:
    table, model, plans = _WORKER["table"], _WORKER["model"], _WORKER["plans"]
    try:
        out = model(assemble(table, plans[k]))
    except SolverError as exc:
        return k, None, str(exc)
    return k, out.values, None


def run_samples(model: Model, table: TimeSeriesTable, plans: list[SamplePlan], jobs: int = 1,
                progress: Callable[[int, int], None] | None = None) -> dict[int, dict | None]:
    """Run ``model`` on every plan; failed solves map to ``None``."""
    results: dict[int, dict | None] = {}
    todo = range(len(plans))

    def collect(item) -> None:
        k, values, err = item
        if err is not None:
            logger.warning("sample %d failed: %s", k, err)
        results[k] = values
        if progress is not None:
            progress(len(results), len(plans))

    if jobs <= 1:
        _init_worker(table, model, plans)
        try:
            for k in todo:
                collect(_run_one(k))
        finally:
            _WORKER.clear()
    else:
        chunk = max(1, len(plans) // (8 * jobs))
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(table, model, plans)) as ex:
            for item in ex.map(_run_one, todo, chunksize=chunk):
                collect(item)
    return results


def run_bootstrap(model: Model, table: TimeSeriesTable, scheme: SampleScheme, *, jobs: int = 1,
                  point: OutputSet | None = None, plans: list[SamplePlan] | None = None,
                  max_failure_fraction: float = MAX_FAILURE_FRACTION,
                  progress: Callable[[int, int], None] | None = None) -> BootstrapReport:
    """Bootstrap standard deviations of every model output.

    ``point`` may carry an already computed point estimate of ``table``.

    Raises
    ------
    EmptyStratum
        The table cannot supply a block for some stratum of the scheme.
    TooManyFailures
        More than ``max_failure_fraction`` of the resample solves failed.
    """
    plans = draw_plans(table, scheme) if plans is None else plans
    n_s = plans[0].n_hours
    n_o = table.n_hours
    if n_s > n_o:
        warnings.warn(f"bootstrap samples ({n_s} h) are longer than the series ({n_o} h)", stacklevel=2)
    if point is None:
        point = point_estimate(model, table)
    results = run_samples(model, table, plans, jobs, progress)
    failed = sorted(k for k, v in results.items() if v is None)
    if len(failed) > max_failure_fraction * len(plans):
        raise TooManyFailures(f"{len(failed)} of {len(plans)} resample solves failed")
    ok = sorted(k for k, v in results.items() if v is not None)
    if len(ok) < 2:
        raise DegenerateInput("fewer than two successful resamples")
    names = point.names()
    samples = np.array([[results[k][n] for n in names] for k in ok], dtype=float).reshape(len(ok), len(names))
    var_s = {n: sample_variance(samples[:, j]) for j, n in enumerate(names)}
    sigma = {n: extrapolate_sigma(var_s[n], n_s, n_o) for n in names}
    describe = getattr(model, "describe", None)
    return BootstrapReport(names, dict(point.units), dict(point.values), var_s, sigma, len(plans), n_s, n_o,
                           scheme.describe(), samples, ok, failed, describe() if describe else {},
                           table.fingerprint())
