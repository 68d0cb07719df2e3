"""Consistency diagnostic and disjoint-sample validation.

The diagnostic reruns the bootstrap over a grid of sample lengths and
rescales each standard deviation to a one-year equivalent. For outputs
the bootstrap handles well the rescaled values stay roughly constant;
outputs driven by sample extremes drift with the sample length. The
check is necessary, not sufficient, for consistency.

The validation harness solves the model on disjoint same-length series
and reports their sample standard deviation with a percentile-bootstrap
95% confidence interval.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from buq.engine import BootstrapReport, Model, extrapolate_sigma, point_estimate, run_bootstrap, sample_variance
from buq.errors import InsufficientData, InsufficientGrid, SolverError
from buq.resampler import SampleScheme
from buq.synth import SynthConfig, synth_generate
from buq.timeseries import HOURS_PER_WEEK, HOURS_PER_YEAR, TimeSeriesTable

logger = logging.getLogger(__name__)

DEFAULT_STABILITY_RATIO = 1.5
DEFAULT_GRID_HOURS = tuple(w * HOURS_PER_WEEK for w in (4, 12, 24, 36, 48)) + tuple(
    y * HOURS_PER_YEAR for y in (1, 2, 3))
MIN_DISJOINT_SERIES = 8

__all__ = [
    "DEFAULT_GRID_HOURS", "DiagnosticReport", "DisjointSigma", "SynthConfig", "compare_to_disjoint",
    "disjoint_mc_sigma", "grid_point_seed", "run_diagnostic", "synth_generate",
]


def grid_point_seed(seed: int, n_hours: int) -> int:
    """Seed for one grid point, derived from the master seed and the length."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(n_hours),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class OutputVerdict:
    name: str
    n_s_hours: list[int]
    sigma_1yr: list[float]
    included: list[bool]
    ratio: float
    stable: bool

    @property
    def verdict(self) -> str:
        return "stable" if self.stable else "unstable"


def _verdict(name: str, hours: list[int], sig: list[float], included: list[bool],
             threshold: float) -> OutputVerdict:
    used = [s for s, keep in zip(sig, included) if keep]
    hi, lo = max(used), min(used)
    if hi == 0:
        ratio = 1.0
    elif lo == 0:
        ratio = math.inf
    else:
        ratio = hi / lo
    return OutputVerdict(name, hours, sig, included, ratio, ratio <= threshold)


@dataclass
class DiagnosticReport:
    """One-year-equivalent standard deviations per output across sample lengths."""

    outputs: dict[str, OutputVerdict]
    units: dict[str, str]
    stability_ratio: float
    schemes: list[dict]
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)

    def verdict(self, name: str) -> str:
        return self.outputs[name].verdict

    def to_dict(self) -> dict:
        return {
            "stability_ratio": self.stability_ratio,
            "schemes": self.schemes,
            "outputs": {
                n: {"units": self.units[n], "verdict": v.verdict, "ratio": v.ratio if math.isfinite(v.ratio) else None,
                    "n_s_hours": v.n_s_hours, "sigma_1yr": v.sigma_1yr, "included": v.included,
                    "ci95": list(self.ci[n]) if n in self.ci else None}
                for n, v in self.outputs.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["output", "n_s_hours", "sigma_1yr_equiv", "ci_lo", "ci_hi", "included", "verdict"])
        for n, v in self.outputs.items():
            lo, hi = self.ci.get(n, ("", ""))
            for h, s, inc in zip(v.n_s_hours, v.sigma_1yr, v.included):
                w.writerow([n, h, repr(s), lo if lo == "" else repr(lo), hi if hi == "" else repr(hi),
                            str(inc).lower(), v.verdict])
        return buf.getvalue()


def run_diagnostic(model: Model, table: TimeSeriesTable, grid_hours: Sequence[int], *, K: int, seed: int,
                   stability_ratio: float = DEFAULT_STABILITY_RATIO, exclude_below_hours: int = 0,
                   scheme_kind: str | None = None, jobs: int = 1,
                   point=None) -> tuple[DiagnosticReport, list[BootstrapReport]]:
    """Bootstrap at every grid length and judge each output's stability.

    Lengths under one year use the weeks scheme, whole years the months
    scheme, unless ``scheme_kind`` forces one. Grid points shorter than
    ``exclude_below_hours`` are reported but left out of the verdict.

    Raises
    ------
    InsufficientGrid
        Fewer than two lengths would enter the verdict.
    """
    grid = sorted(set(int(h) for h in grid_hours))
    included = [h >= exclude_below_hours for h in grid]
    if len(grid) < 2 or sum(included) < 2:
        raise InsufficientGrid("the diagnostic needs at least two sample lengths")
    if point is None:
        point = point_estimate(model, table)
    reports = []
    for h in grid:
        s = grid_point_seed(seed, h)
        if scheme_kind == "weeks" or (scheme_kind is None and h < HOURS_PER_YEAR):
            if h % HOURS_PER_WEEK:
                raise InsufficientGrid(f"{h} h is not a whole number of weeks")
            scheme = SampleScheme("weeks", h // HOURS_PER_WEEK, s, K)
        else:
            scheme = SampleScheme.for_hours(h, s, K)
        logger.info("diagnostic: %s scheme, %d h, K=%d", scheme.kind, h, K)
        reports.append(run_bootstrap(model, table, scheme, jobs=jobs, point=point))
    outputs = {}
    for n in point.names():
        sig = [extrapolate_sigma(r.var_s[n], r.n_s_hours, HOURS_PER_YEAR) for r in reports]
        outputs[n] = _verdict(n, grid, sig, included, stability_ratio)
    report = DiagnosticReport(outputs, dict(point.units), stability_ratio, [r.scheme for r in reports])
    return report, reports


@dataclass
class DisjointSigma:
    sigma: float
    ci95: tuple[float, float]
    values: list[float]


def _solve_series(args: tuple) -> tuple[int, dict | None, str | None]:
    i, model, table = args
    try:
        return i, model(table).values, None
    except SolverError as exc:
        return i, None, str(exc)


def disjoint_mc_sigma(model: Model, tables: Sequence[TimeSeriesTable], *, B: int = 2000, seed: int = 0,
                      jobs: int = 1) -> dict[str, DisjointSigma]:
    """Standard deviation of outputs across disjoint series, with a 95% CI.

    The interval is the 2.5/97.5 percentile range of the sample standard
    deviation over ``B`` resamples (with replacement) of the per-series
    outputs. Outputs are sorted before resampling, so the result does not
    depend on the order of ``tables``.

    Raises
    ------
    InsufficientData
        Fewer than eight series.
    """
    if len(tables) < MIN_DISJOINT_SERIES:
        raise InsufficientData(f"need at least {MIN_DISJOINT_SERIES} disjoint series, got {len(tables)}")
    work = [(i, model, t) for i, t in enumerate(tables)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_solve_series, work))
    else:
        results = [_solve_series(w) for w in work]
    runs = []
    for i, values, err in results:
        if err is not None:
            raise SolverError(f"disjoint series {i}: {err}")
        runs.append(values)
    rng = np.random.default_rng(seed)
    n = len(runs)
    idx = rng.integers(0, n, size=(B, n))
    out = {}
    for name in runs[0]:
        vals = np.sort(np.array([r[name] for r in runs], dtype=float))
        sigma = math.sqrt(sample_variance(vals))
        boot = vals[idx]
        sds = np.sqrt(np.maximum(((boot - boot.mean(axis=1, keepdims=True)) ** 2).sum(axis=1) / (n - 1), 0.0))
        lo, hi = np.percentile(sds, [2.5, 97.5])
        out[name] = DisjointSigma(sigma, (float(lo), float(hi)), vals.tolist())
    return out


def compare_to_disjoint(report: BootstrapReport, disjoint: dict[str, DisjointSigma],
                        n_hours: int = HOURS_PER_YEAR) -> list[dict]:
    """Bootstrap standard deviation at ``n_hours`` against the disjoint-series interval."""
    rows = []
    for name in report.names:
        if name not in disjoint:
            continue
        d = disjoint[name]
        s = report.sigma_at(name, n_hours)
        rows.append({"name": name, "sigma_bootstrap": s, "sigma_disjoint": d.sigma, "ci_lo": d.ci95[0],
                     "ci_hi": d.ci95[1], "inside": bool(d.ci95[0] <= s <= d.ci95[1]),
                     "units": report.units[name]})
    return rows
