"""Command-line interface.

Every command reads a YAML run config (``--config``), applies flag
overrides, and writes its outputs plus a ``manifest.json`` into the
output directory. Files are written only after all computation succeeds,
each via a temporary file and an atomic rename.

Exit codes: 0 success, 1 other error, 2 bad configuration, 3 file access,
4 bad input data, 5 solver failure. Errors are also reported as one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import re
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy
import yaml

from buq import __version__
from buq.diagnostic import DEFAULT_GRID_HOURS, compare_to_disjoint, disjoint_mc_sigma, run_diagnostic
from buq.engine import (BootstrapReport, DemandMeanModel, point_estimate, required_sample_length,
                        run_bootstrap)
from buq.errors import (AdapterError, BuqError, ConfigError, EmptyStratum, InsufficientData, InsufficientGrid,
                        OutOfRange, ParseError, SchemeError, SolverError, SpecError, TooManyFailures,
                        ValidationError)
from buq.optimizer import AdapterConfig, SolverOptions
from buq.psm import PsmModel, default_spec, load_spec, spec_from_dict
from buq.resampler import SampleScheme
from buq.synth import SynthConfig, synth_generate
from buq.timeseries import HOURS_PER_WEEK, HOURS_PER_YEAR, detrend_demand, load_csv, split_years, write_csv

logger = logging.getLogger("buq")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_IO, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3, 4, 5

_UNITS = {"h": 1, "hr": 1, "hour": 1, "hours": 1, "w": HOURS_PER_WEEK, "wk": HOURS_PER_WEEK,
          "week": HOURS_PER_WEEK, "weeks": HOURS_PER_WEEK, "y": HOURS_PER_YEAR, "yr": HOURS_PER_YEAR,
          "year": HOURS_PER_YEAR, "years": HOURS_PER_YEAR}


def parse_duration(value: Any) -> int:
    """Hours in ``value``: an integer (hours) or a string like ``12w``, ``1y``, ``720h``."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([a-zA-Z]*)\s*", str(value))
    if not m or m.group(2).lower() not in _UNITS | {"": 1}:
        raise ConfigError(f"cannot read duration {value!r}")
    hours = float(m.group(1)) * _UNITS.get(m.group(2).lower(), 1)
    if hours != int(hours) or hours <= 0:
        raise ConfigError(f"duration {value!r} is not a positive whole number of hours")
    return int(hours)


# -- configuration -----------------------------------------------------------

_SECTIONS = {"seed", "data", "output_dir", "detrend", "model", "scheme", "solver", "diagnostic", "validate",
             "synth", "jobs", "log_level"}


@dataclass
class RunConfig:
    seed: int | None = None
    data: str | None = None
    output_dir: str = "buq-out"
    detrend: str = "none"
    model: dict = field(default_factory=lambda: {"variant": "lp_plan"})
    scheme: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    diagnostic: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    jobs: int = 1
    log_level: str = "WARNING"
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("run config must be a mapping")
        unknown = sorted(set(d) - _SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        cfg = cls(**{k: v for k, v in d.items()}, base_dir=base_dir)
        for name in ("model", "scheme", "solver", "diagnostic", "validate", "synth"):
            if not isinstance(getattr(cfg, name), dict):
                raise ConfigError(f"config section {name!r} must be a mapping")
        return cfg

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in sorted(_SECTIONS)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True, default=str).encode()).hexdigest()

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2**64)")
        return self.seed

    def require_data(self) -> Path:
        if not self.data:
            raise ConfigError("no input data given (config 'data' or --data)")
        p = self.path(self.data)
        if not p.is_file():
            raise FileNotFoundError(f"data file not found: {p}")
        return p


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        d = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return RunConfig.from_dict(d, p.parent)


def solver_options(cfg: RunConfig) -> SolverOptions:
    s = dict(cfg.solver)
    method = s.pop("method", "auto")
    if method == "embedded":
        method = "simplex"
    adapter = s.pop("adapter", None)
    try:
        return SolverOptions(method=method, adapter=AdapterConfig.from_dict(adapter or {}), **s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver section: {exc}") from exc


def make_model(cfg: RunConfig):
    m = dict(cfg.model)
    variant = m.get("variant", "lp_plan")
    if variant == "demand_mean":
        return DemandMeanModel()
    if "spec" in m:
        spec = load_spec(cfg.path(m["spec"]))
        if spec.variant != variant and "variant" in m:
            raise ConfigError(f"spec file variant {spec.variant!r} differs from model.variant {variant!r}")
    else:
        d = {"variant": variant}
        for k in ("fixed_caps", "horizon_hours", "technologies", "topology"):
            if k in m:
                d[k] = m[k]
        spec = spec_from_dict(d) if len(d) > 1 else default_spec(variant)
    return PsmModel(spec, solver_options(cfg))


def make_scheme(cfg: RunConfig, seed: int) -> SampleScheme:
    s = dict(cfg.scheme)
    K = int(s.get("K", 1000))
    if "n_s" in s:
        hours = parse_duration(s["n_s"])
        kind = s.get("kind")
        if kind == "weeks":
            if hours % HOURS_PER_WEEK:
                raise ConfigError(f"weeks scheme needs whole weeks, got {hours} h")
            return SampleScheme("weeks", hours // HOURS_PER_WEEK, seed, K)
        if kind == "months":
            if hours % HOURS_PER_YEAR:
                raise ConfigError(f"months scheme needs whole years, got {hours} h")
            return SampleScheme("months", hours // HOURS_PER_YEAR, seed, K)
        return SampleScheme.for_hours(hours, seed, K)
    if "kind" not in s or "length" not in s:
        raise ConfigError("scheme needs either n_s or both kind and length")
    return SampleScheme(s["kind"], int(s["length"]), seed, K)


def load_table(cfg: RunConfig):
    return detrend_demand(load_csv(cfg.require_data()), cfg.detrend)


# -- output ------------------------------------------------------------------

def _sha256_file(p: Path) -> str:
    h = hashlib.sha256()
    with open(p, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(cfg: RunConfig, command: str, argv: list[str], files: dict[str, str],
                  extra: dict | None = None) -> Path:
    out = cfg.path(cfg.output_dir)
    inputs = {}
    if cfg.data and cfg.path(cfg.data).is_file():
        inputs[str(cfg.data)] = _sha256_file(cfg.path(cfg.data))
    manifest = {
        "command": command,
        "argv": argv,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "inputs_sha256": inputs,
        "outputs": sorted(files),
        "versions": {"buq": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    if extra:
        manifest.update(extra)
    for name, text in files.items():
        write_atomic(out / name, text)
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=1, default=str) + "\n")
    return out


def render_svg(report: BootstrapReport, names: list[str] | None = None) -> str:
    """Error-bar chart (point estimate +- 2 sigma) of the chosen outputs."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("SVG output needs matplotlib (install the 'plot' extra)") from exc
    import io

    names = names or report.names
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names)), 3.5))
    y = [report.point[n] for n in names]
    ax.errorbar(range(len(names)), y, yerr=[2 * report.sigma[n] for n in names], fmt="o", capsize=3)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_ylabel(", ".join(sorted({report.units[n] for n in names})))
    fig.tight_layout()
    buf = io.StringIO()
    plt.rcParams["svg.hashsalt"] = "buq"
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


# -- commands ----------------------------------------------------------------

def cmd_point(cfg: RunConfig, args, argv) -> int:
    table = load_table(cfg)
    model = make_model(cfg)
    out = point_estimate(model, table)
    write_outputs(cfg, "point", argv, {"point.json": out.to_json(), "point.csv": out.to_csv()},
                  {"model": model.describe(), "table_fingerprint": table.fingerprint()})
    return EXIT_OK


def cmd_bootstrap(cfg: RunConfig, args, argv) -> int:
    seed = cfg.require_seed()
    table = load_table(cfg)
    model = make_model(cfg)
    scheme = make_scheme(cfg, seed)
    report = run_bootstrap(model, table, scheme, jobs=cfg.jobs)
    files = {"report.json": report.to_json(), "report.csv": report.to_csv()}
    if args.svg:
        files["report.svg"] = render_svg(report, args.svg_outputs)
    write_outputs(cfg, "bootstrap", argv, files, {"model": model.describe(), "scheme": scheme.describe()})
    return EXIT_OK


def _plan_rows(args, cfg: RunConfig) -> list[dict]:
    target = float(args.target)
    if args.report:
        report = BootstrapReport.from_json(cfg.path(args.report).read_text(encoding="utf-8"))
        names = [args.output] if args.output else report.names
        rows = []
        for n in names:
            if n not in report.var_s:
                raise ConfigError(f"report has no output {n!r}")
            rows.append((n, report.var_s[n], report.n_s_hours))
    else:
        if args.sigma_s is None or args.n_s is None:
            raise ConfigError("give --report, or both --sigma-s and --n-s")
        sigma_s = float(args.sigma_s)
        rows = [(args.output or "output", sigma_s * sigma_s, parse_duration(args.n_s))]
    out = []
    for name, var_s, n_s in rows:
        plan = required_sample_length(var_s, n_s, target)
        out.append({"name": name, "sigma_s": var_s ** 0.5, "n_s_years": n_s / HOURS_PER_YEAR,
                    "target_sigma": target, **plan.to_dict()})
    return out


def cmd_plan_length(cfg: RunConfig, args, argv) -> int:
    rows = _plan_rows(args, cfg)
    if args.json:
        print(json.dumps(rows, indent=1))
    else:
        print(f"{'output':<32} {'sigma_S':>12} {'n_S [yr]':>9} {'target':>12} {'required [yr]':>14} "
              f"{'ceil [yr]':>9}")
        for r in rows:
            print(f"{r['name']:<32} {r['sigma_s']:>12.6g} {r['n_s_years']:>9.6g} {r['target_sigma']:>12.6g} "
                  f"{r['years']:>14.6g} {r['years_ceiling']:>9d}")
    return EXIT_OK


def _grid(cfg: RunConfig) -> list[int]:
    g = cfg.diagnostic.get("grid")
    return [parse_duration(x) for x in g] if g else list(DEFAULT_GRID_HOURS)


def cmd_diagnose(cfg: RunConfig, args, argv) -> int:
    seed = cfg.require_seed()
    table = load_table(cfg)
    model = make_model(cfg)
    d = cfg.diagnostic
    # Integer planning is too costly beyond one-year samples.
    default_max = HOURS_PER_YEAR if cfg.model.get("variant") == "milp_plan" else 10**9
    grid = [h for h in _grid(cfg) if h <= parse_duration(d.get("max_n_s", default_max))]
    report, _ = run_diagnostic(model, table, grid, K=int(d.get("K", 200)), seed=seed,
                               stability_ratio=float(d.get("stability_ratio", 1.5)),
                               exclude_below_hours=parse_duration(d["exclude_below"]) if "exclude_below" in d
                               else 0, scheme_kind=d.get("scheme_kind"), jobs=cfg.jobs)
    write_outputs(cfg, "diagnose", argv, {"diagnostic.json": report.to_json(), "diagnostic.csv": report.to_csv()},
                  {"model": model.describe()})
    return EXIT_OK


def _disjoint_series(table, years_per_series: int):
    years = split_years(table)
    if years_per_series == 1:
        return years
    from buq.timeseries import concat

    groups = [years[i:i + years_per_series] for i in range(0, len(years) - years_per_series + 1, years_per_series)]
    return [concat(g, start=str(g[0].timestamps[0])) for g in groups]


def cmd_validate(cfg: RunConfig, args, argv) -> int:
    import csv
    import io

    seed = cfg.require_seed()
    table = load_table(cfg)
    model = make_model(cfg)
    v = cfg.validate
    per = int(v.get("years_per_series", 1))
    series = _disjoint_series(table, per)
    disjoint = disjoint_mc_sigma(model, series, B=int(v.get("B", 2000)), seed=seed, jobs=cfg.jobs)
    report = run_bootstrap(model, table, make_scheme(cfg, seed), jobs=cfg.jobs)
    rows = compare_to_disjoint(report, disjoint, per * HOURS_PER_YEAR)
    buf = io.StringIO()
    cols = ["name", "sigma_bootstrap", "sigma_disjoint", "ci_lo", "ci_hi", "inside", "units"]
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(x) if isinstance(x, float) else x for k, x in r.items()})
    doc = {"series": len(series), "years_per_series": per, "rows": rows}
    write_outputs(cfg, "validate", argv, {"validate.csv": buf.getvalue(),
                                          "validate.json": json.dumps(doc, indent=1) + "\n",
                                          "report.json": report.to_json()}, {"model": model.describe()})
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args, argv) -> int:
    seed = cfg.require_seed()
    s = dict(cfg.synth)
    try:
        config = SynthConfig(seed=seed, **s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synth section: {exc}") from exc
    table = synth_generate(config)
    name = args.name or "synth.csv"
    out = cfg.path(cfg.output_dir)
    with tempfile.TemporaryDirectory() as tmp:
        write_csv(table, Path(tmp) / name)
        text = (Path(tmp) / name).read_text(encoding="utf-8")
    moments = {"mean_total_demand_mw": config.mean_demand(),
               "sigma_yearly_mean_total_demand_mw": config.sigma_mean_demand()}
    write_outputs(cfg, "synth", argv, {name: text}, {"analytic": moments})
    logger.info("wrote %s", out / name)
    return EXIT_OK


COMMANDS = {"point": cmd_point, "bootstrap": cmd_bootstrap, "plan-length": cmd_plan_length,
            "diagnose": cmd_diagnose, "validate": cmd_validate, "synth": cmd_synth}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="buq", description="Demand and weather uncertainty for power system models.")
    p.add_argument("--version", action="version", version=f"buq {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", help="YAML run config")
        c.add_argument("--data", help="input CSV (overrides config)")
        c.add_argument("--output-dir", help="output directory (overrides config)")
        c.add_argument("--seed", type=int, help="master seed (overrides config)")
        c.add_argument("--jobs", type=int, help="parallel solves (overrides config)")
        c.add_argument("--variant", help="model variant: lp_plan, milp_plan, operate or demand_mean")
        c.add_argument("--solver", help="solver method: auto, simplex, highs or adapter")
        c.add_argument("--K", type=int, help="number of bootstrap samples")
        c.add_argument("--n-s", dest="n_s", help="bootstrap sample length, e.g. 12w or 1y")
        c.add_argument("--log-level", help="logging level")
        if name == "bootstrap":
            c.add_argument("--svg", action="store_true", help="also write an error-bar chart")
            c.add_argument("--svg-outputs", nargs="+", help="outputs to chart (default all)")
        if name == "plan-length":
            c.add_argument("--target", required=True, type=float, help="target standard deviation")
            c.add_argument("--sigma-s", dest="sigma_s", type=float, help="bootstrap standard deviation at n_S")
            c.add_argument("--report", help="bootstrap report.json to read sigma_S and n_S from")
            c.add_argument("--output", help="output name")
            c.add_argument("--json", action="store_true", help="print JSON instead of a table")
        if name == "synth":
            c.add_argument("--years", type=int, help="years to generate")
            c.add_argument("--name", help="CSV file name (default synth.csv)")
    return p


def _apply_overrides(cfg: RunConfig, args) -> None:
    for attr in ("data", "output_dir", "seed", "jobs", "log_level"):
        v = getattr(args, attr, None)
        if v is not None:
            setattr(cfg, attr, v)
    if args.variant:
        cfg.model = {**cfg.model, "variant": args.variant}
    if args.solver:
        cfg.solver = {**cfg.solver, "method": args.solver}
    if args.K is not None:
        cfg.scheme = {**cfg.scheme, "K": args.K}
    if args.n_s is not None and args.command != "plan-length":
        s = {k: v for k, v in cfg.scheme.items() if k not in ("length",)}
        cfg.scheme = {**s, "n_s": args.n_s}
    if getattr(args, "years", None) is not None:
        cfg.synth = {**cfg.synth, "years": args.years}
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, SpecError, SchemeError, InsufficientGrid)):
        return EXIT_CONFIG
    if isinstance(exc, (FileNotFoundError, PermissionError, IsADirectoryError)):
        return EXIT_IO
    if isinstance(exc, (ParseError, ValidationError, InsufficientData, EmptyStratum, OutOfRange)):
        return EXIT_DATA
    if isinstance(exc, (SolverError, AdapterError, TooManyFailures)):
        return EXIT_SOLVER
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_OTHER


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        logging.basicConfig(level=getattr(logging, str(cfg.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](cfg, args, argv)
    except (BuqError, OSError) as exc:
        code = _exit_code(exc)
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
        return code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
