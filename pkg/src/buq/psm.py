"""Six-bus benchmark power system models.

Three variants share one formulation:

* ``lp_plan``: choose generation and transmission capacities and hourly
  dispatch to minimise annualised install cost plus generation cost.
* ``milp_plan``: as ``lp_plan`` with nuclear built in whole blocks.
* ``operate``: fixed capacities, dispatch only, with nuclear unit
  commitment (off, or between minimum load and capacity).

Internally power is in GW, energy in GWh and money in £m, which keeps
matrix coefficients near unity. Costs given per kW and kWh convert
without change of value (1 £/kWyr = 1 £m/GWyr, 1 £/kWh = 1 £m/GWh).
Reported outputs are in MW, MWh/yr, tCO2e/yr and £/yr.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from buq.errors import SolverError, SpecError
from buq.optimizer import BINARY, INTEGER, OptProblem, ProblemBuilder, SolveResult, SolverOptions, solve
from buq.timeseries import HOURS_PER_YEAR, TimeSeriesTable

logger = logging.getLogger(__name__)

VARIANTS = ("lp_plan", "milp_plan", "operate")
TECHS = ("nuclear", "ccgt", "ocgt", "wind", "unmet")
# Capacity factors below this are treated as zero (keeps coefficients well scaled).
CF_FLOOR = 1e-6


@dataclass(frozen=True)
class Technology:
    """Install cost in £/kWyr, generation cost in £/kWh, emissions in gCO2e/kWh."""

    id: str
    install_cost: float
    gen_cost: float
    emissions: float

    def __post_init__(self) -> None:
        if self.id not in TECHS:
            raise SpecError(f"unknown technology {self.id!r}")
        if min(self.install_cost, self.gen_cost, self.emissions) < 0:
            raise SpecError(f"technology {self.id}: negative parameter")
        if self.id == "unmet" and self.install_cost != 0:
            raise SpecError("unmet demand cannot carry an install cost")


@dataclass(frozen=True)
class Topology:
    """Buses, where each technology may be built, and candidate links.

    ``placements`` maps a technology to the buses it may occupy. Unmet
    demand is available at every demand bus. ``link_costs`` holds the
    transmission install cost (£/kWyr) of each undirected link.
    """

    buses: tuple[str, ...]
    placements: Mapping[str, tuple[str, ...]]
    demand_buses: tuple[str, ...]
    links: tuple[tuple[str, str], ...]
    link_costs: Mapping[tuple[str, str], float]

    def __post_init__(self) -> None:
        known = set(self.buses)
        for tech, buses in self.placements.items():
            if tech not in TECHS or tech == "unmet":
                raise SpecError(f"cannot place technology {tech!r}")
            for b in buses:
                if b not in known:
                    raise SpecError(f"{tech} placed at unknown bus {b!r}")
        for b in self.demand_buses:
            if b not in known:
                raise SpecError(f"unknown demand bus {b!r}")
        seen = set()
        for a, b in self.links:
            if a not in known or b not in known or a == b:
                raise SpecError(f"bad link ({a}, {b})")
            key = frozenset((a, b))
            if key in seen:
                raise SpecError(f"duplicate link ({a}, {b})")
            seen.add(key)
            if (a, b) not in self.link_costs:
                raise SpecError(f"no install cost for link ({a}, {b})")

    def sites(self) -> list[tuple[str, str]]:
        """(technology, bus) pairs that carry generation, unmet last."""
        out = [(t, b) for t in TECHS[:-1] for b in self.placements.get(t, ())]
        return out + [("unmet", b) for b in self.demand_buses]


@dataclass(frozen=True)
class PsmSpec:
    """Complete model definition.

    ``fixed_caps`` (``operate`` only) maps output-style names such as
    ``cap_ccgt_b1`` or ``cap_tr_1_2`` to MW. ``horizon_hours`` (``operate``
    only) splits the series into independent windows of that many hours,
    trading inter-window ramping for speed.
    """

    variant: str
    technologies: tuple[Technology, ...]
    topology: Topology
    fixed_caps: Mapping[str, float] | None = None
    nuclear_block_mw: float = 3000.0
    nuclear_ramp_frac: float = 0.2
    nuclear_min_load_frac: float = 0.5
    horizon_hours: int | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise SpecError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        ids = [t.id for t in self.technologies]
        if sorted(ids) != sorted(TECHS):
            raise SpecError(f"technologies must be exactly {TECHS}, got {ids}")
        if self.variant == "operate":
            if self.fixed_caps is None:
                raise SpecError("operate variant requires fixed capacities")
            missing = [n for n in self.cap_names() if n not in self.fixed_caps]
            if missing:
                raise SpecError(f"fixed capacities missing for {missing}")
            unknown = sorted(set(self.fixed_caps) - set(self.cap_names()))
            if unknown:
                raise SpecError(f"fixed capacities name unknown sites {unknown}")
            if any(v < 0 for v in self.fixed_caps.values()):
                raise SpecError("negative fixed capacity")
        elif self.horizon_hours is not None:
            raise SpecError("horizon_hours applies to the operate variant only")
        if self.horizon_hours is not None and self.horizon_hours < 2:
            raise SpecError("horizon_hours must be at least 2")
        if self.nuclear_ramp_frac <= 0 or self.nuclear_block_mw <= 0:
            raise SpecError("nuclear ramp fraction and block size must be positive")
        if not 0 <= self.nuclear_min_load_frac <= 1:
            raise SpecError("nuclear minimum load fraction must lie in [0, 1]")

    def tech(self, tech_id: str) -> Technology:
        return next(t for t in self.technologies if t.id == tech_id)

    def cap_names(self) -> list[str]:
        topo = self.topology
        names = [f"cap_{t}_b{b}" for t, b in topo.sites() if t != "unmet"]
        return names + [f"cap_tr_{a}_{b}" for a, b in topo.links]

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(spec_to_dict(self), sort_keys=True).encode()).hexdigest()


DEFAULT_TECHNOLOGIES = (
    Technology("nuclear", 300.0, 0.005, 200.0),
    Technology("ccgt", 100.0, 0.035, 400.0),
    Technology("ocgt", 50.0, 0.100, 400.0),
    Technology("wind", 100.0, 0.0, 0.0),
    Technology("unmet", 0.0, 6.0, 0.0),
)
DEFAULT_LINKS = (("1", "2"), ("1", "5"), ("1", "6"), ("2", "3"), ("3", "4"), ("4", "5"), ("5", "6"))
_LINK_COST = {("1", "5"): 150.0, ("1", "6"): 130.0}


def default_topology(nuclear_buses: tuple[str, ...] = ("3",),
                     demand_buses: tuple[str, ...] = ("2", "4", "5")) -> Topology:
    """Six-bus layout: CCGT at 1 and 3, OCGT at 1 and 6, wind at 2, 5 and 6."""
    return Topology(
        buses=tuple(str(b) for b in range(1, 7)),
        placements={"nuclear": tuple(nuclear_buses), "ccgt": ("1", "3"), "ocgt": ("1", "6"),
                    "wind": ("2", "5", "6")},
        demand_buses=tuple(demand_buses),
        links=DEFAULT_LINKS,
        link_costs={ln: _LINK_COST.get(ln, 100.0) for ln in DEFAULT_LINKS},
    )


def reference_caps() -> dict[str, float]:
    """Bundled capacities (MW) used as the default fleet of the operate model."""
    text = resources.files("buq").joinpath("data/reference_caps.json").read_text(encoding="utf-8")
    return {k: float(v) for k, v in json.loads(text)["caps_mw"].items()}


def default_spec(variant: str, *, nuclear_buses: tuple[str, ...] = ("3",),
                 fixed_caps: Mapping[str, float] | None = None,
                 horizon_hours: int | None = None) -> PsmSpec:
    """Default economics and topology; ``operate`` uses the bundled fleet unless given one."""
    if variant == "operate" and fixed_caps is None:
        fixed_caps = reference_caps()
    return PsmSpec(variant, DEFAULT_TECHNOLOGIES, default_topology(nuclear_buses), fixed_caps,
                   horizon_hours=horizon_hours)


# -- serialisation -----------------------------------------------------------

def spec_to_dict(spec: PsmSpec) -> dict:
    topo = spec.topology
    return {
        "variant": spec.variant,
        "technologies": {t.id: {"install_cost": t.install_cost, "gen_cost": t.gen_cost,
                                "emissions": t.emissions} for t in spec.technologies},
        "topology": {
            "buses": list(topo.buses),
            "placements": {k: list(v) for k, v in topo.placements.items()},
            "demand_buses": list(topo.demand_buses),
            "links": [{"from": a, "to": b, "install_cost": topo.link_costs[(a, b)]} for a, b in topo.links],
        },
        "fixed_caps": None if spec.fixed_caps is None else dict(sorted(spec.fixed_caps.items())),
        "nuclear_block_mw": spec.nuclear_block_mw,
        "nuclear_ramp_frac": spec.nuclear_ramp_frac,
        "nuclear_min_load_frac": spec.nuclear_min_load_frac,
        "horizon_hours": spec.horizon_hours,
    }


def spec_from_dict(d: Mapping) -> PsmSpec:
    """Build a spec from a config mapping; absent sections take the defaults."""
    try:
        variant = d["variant"]
        techs = DEFAULT_TECHNOLOGIES
        if "technologies" in d:
            given = d["technologies"]
            order = [k for k in TECHS if k in given] + [k for k in given if k not in TECHS]
            techs = tuple(Technology(k, float(given[k]["install_cost"]), float(given[k]["gen_cost"]),
                                     float(given[k]["emissions"])) for k in order)
        topo = default_topology()
        if "topology" in d:
            t = d["topology"]
            links = tuple((str(x["from"]), str(x["to"])) for x in t["links"])
            topo = Topology(
                buses=tuple(str(b) for b in t["buses"]),
                placements={k: tuple(str(b) for b in v) for k, v in t["placements"].items()},
                demand_buses=tuple(str(b) for b in t["demand_buses"]),
                links=links,
                link_costs={(str(x["from"]), str(x["to"])): float(x["install_cost"]) for x in t["links"]},
            )
        fixed = d.get("fixed_caps")
        if fixed is None and variant == "operate":
            fixed = reference_caps()
        return PsmSpec(
            variant, techs, topo,
            None if fixed is None else {str(k): float(v) for k, v in fixed.items()},
            nuclear_block_mw=float(d.get("nuclear_block_mw", 3000.0)),
            nuclear_ramp_frac=float(d.get("nuclear_ramp_frac", 0.2)),
            nuclear_min_load_frac=float(d.get("nuclear_min_load_frac", 0.5)),
            horizon_hours=d.get("horizon_hours"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed model spec: {exc}") from exc


def load_spec(path: str | Path) -> PsmSpec:
    import yaml

    try:
        d = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: {exc}") from exc
    if not isinstance(d, dict):
        raise SpecError(f"{path}: expected a mapping")
    return spec_from_dict(d)


# -- problem construction ----------------------------------------------------

@dataclass(frozen=True)
class _Layout:
    """Column offsets of each variable family for a horizon of ``T`` hours."""

    T: int
    sites: tuple[tuple[str, str], ...]
    links: tuple[tuple[str, str], ...]
    nuclear_sites: tuple[int, ...]
    cap0: int       # planning: one capacity per non-unmet site
    k0: int         # milp: one block count per nuclear site
    captr0: int     # planning: one capacity per link
    gen0: int       # every site x T
    trp0: int       # every link x T (flow in the link's direction)
    trn0: int       # every link x T (flow against it)
    u0: int         # operate: every nuclear site x T
    n: int

    def gen(self, s: int) -> np.ndarray:
        return self.gen0 + s * self.T + np.arange(self.T)

    def trp(self, l: int) -> np.ndarray:
        return self.trp0 + l * self.T + np.arange(self.T)

    def trn(self, l: int) -> np.ndarray:
        return self.trn0 + l * self.T + np.arange(self.T)


def _layout(spec: PsmSpec, T: int) -> _Layout:
    sites = tuple(spec.topology.sites())
    links = tuple(spec.topology.links)
    nuc = tuple(i for i, (t, _) in enumerate(sites) if t == "nuclear")
    planning = spec.variant != "operate"
    n_cap = sum(t != "unmet" for t, _ in sites) if planning else 0
    cap0 = 0
    k0 = cap0 + n_cap
    captr0 = k0 + (len(nuc) if spec.variant == "milp_plan" else 0)
    gen0 = captr0 + (len(links) if planning else 0)
    trp0 = gen0 + len(sites) * T
    trn0 = trp0 + len(links) * T
    u0 = trn0 + len(links) * T
    n = u0 + (len(nuc) * T if spec.variant == "operate" else 0)
    return _Layout(T, sites, links, nuc, cap0, k0, captr0, gen0, trp0, trn0, u0, n)


def _series(spec: PsmSpec, table: TimeSeriesTable) -> tuple[np.ndarray, np.ndarray]:
    """Demand (GW) per topology bus and wind cf per site, validated against the topology."""
    topo = spec.topology
    unknown = [b for b in table.bus_ids if b not in topo.buses]
    if unknown:
        raise SpecError(f"table has buses not in the topology: {unknown}")
    T = table.n_hours
    demand = np.zeros((len(topo.buses), T))
    for i, b in enumerate(topo.buses):
        if b in table.bus_ids:
            demand[i] = table.demand_of(b) / 1000.0
        elif b in topo.demand_buses:
            raise SpecError(f"table has no series for demand bus {b}")
        if b not in topo.demand_buses and demand[i].any():
            raise SpecError(f"bus {b} has demand but is not a demand bus")
    cf = {}
    for b in topo.placements.get("wind", ()):
        if b not in table.bus_ids:
            raise SpecError(f"table has no wind series for bus {b}")
        w = np.array(table.wind_of(b), dtype=float)
        w[w < CF_FLOOR] = 0.0
        cf[b] = w
    return demand, cf


def _fixed_gw(spec: PsmSpec, name: str) -> float:
    return float(spec.fixed_caps[name]) / 1000.0


def build_problem(spec: PsmSpec, table: TimeSeriesTable, *, names: bool = True) -> OptProblem:
    """Encode ``spec`` over the full ``table`` horizon as a minimisation.

    Raises
    ------
    SpecError
        The table lacks a bus the topology needs, or carries an unknown one.
    """
    demand, cf = _series(spec, table)
    return _build(spec, demand, cf, names)


def _build(spec: PsmSpec, demand: np.ndarray, cf: dict[str, np.ndarray], names: bool) -> OptProblem:
    T = demand.shape[1]
    L = _layout(spec, T)
    topo = spec.topology
    planning = spec.variant != "operate"
    weight = T / HOURS_PER_YEAR
    hours = np.arange(T)
    b = ProblemBuilder(f"{spec.variant}_{T}h", keep_names=names)

    def labels(stem: str) -> list[str]:
        return [f"{stem}[{t}]" for t in hours] if names else [""] * T

    # Capacity variables (planning only).
    cap_col = {}
    if planning:
        for s, (tech, bus) in enumerate(L.sites):
            if tech == "unmet":
                continue
            cap_col[s] = int(b.add_vars(f"cap_{tech}_b{bus}", cost=weight * spec.tech(tech).install_cost)[0])
        if spec.variant == "milp_plan":
            for s in L.nuclear_sites:
                b.add_vars(f"blocks_nuclear_b{L.sites[s][1]}", kind=INTEGER)
        for a, c in L.links:
            b.add_vars(f"cap_tr_{a}_{c}", cost=weight * topo.link_costs[(a, c)])

    for tech, bus in L.sites:
        t = spec.tech(tech)
        ub = np.inf
        if not planning and tech not in ("unmet", "nuclear"):
            cap = _fixed_gw(spec, f"cap_{tech}_b{bus}")
            ub = cap * cf[bus] if tech == "wind" else cap
        b.add_vars(labels(f"gen_{tech}_b{bus}"), ub=ub, cost=t.gen_cost)
    for sign in ("fwd", "rev"):
        for a, c in L.links:
            b.add_vars(labels(f"tr_{a}_{c}_{sign}"))
    if not planning:
        for s in L.nuclear_sites:
            b.add_vars(labels(f"on_nuclear_b{L.sites[s][1]}"), ub=1.0, kind=BINARY)
    assert b.n_vars == L.n

    # Demand and flow balance at every bus and hour.
    rows, cols, vals = [], [], []
    bus_pos = {bb: i for i, bb in enumerate(topo.buses)}
    for s, (_, bus) in enumerate(L.sites):
        rows.append(bus_pos[bus] * T + hours)
        cols.append(L.gen(s))
        vals.append(np.ones(T))
    for l, (a, c) in enumerate(L.links):
        for bus, sgn in ((c, 1.0), (a, -1.0)):
            rows += [bus_pos[bus] * T + hours] * 2
            cols += [L.trp(l), L.trn(l)]
            vals += [np.full(T, sgn), np.full(T, -sgn)]
    b.add_rows([f"balance_b{bb}[{t}]" if names else "" for bb in topo.buses for t in hours],
               np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), "=", demand.ravel())

    # Generation limited by capacity.
    if planning:
        for s, (tech, bus) in enumerate(L.sites):
            if tech == "unmet":
                continue
            coef = -cf[bus] if tech == "wind" else -np.ones(T)
            keep = coef != 0
            rr = np.concatenate([hours, hours[keep]])
            cc = np.concatenate([L.gen(s), np.full(int(keep.sum()), cap_col[s])])
            b.add_rows(labels(f"gen_le_cap_{tech}_b{bus}"), rr, cc, np.concatenate([np.ones(T), coef[keep]]),
                       "<=", 0.0)
    else:
        for j, s in enumerate(L.nuclear_sites):
            bus = L.sites[s][1]
            cap = _fixed_gw(spec, f"cap_nuclear_b{bus}")
            u = L.u0 + j * T + hours
            b.add_rows(labels(f"nuclear_max_b{bus}"), np.r_[hours, hours], np.r_[L.gen(s), u],
                       np.r_[np.ones(T), np.full(T, -cap)], "<=", 0.0)
            b.add_rows(labels(f"nuclear_min_b{bus}"), np.r_[hours, hours], np.r_[L.gen(s), u],
                       np.r_[np.ones(T), np.full(T, -spec.nuclear_min_load_frac * cap)], ">=", 0.0)

    # Nuclear ramping, both directions.
    if T > 1:
        steps = np.arange(T - 1)
        for s in L.nuclear_sites:
            bus = L.sites[s][1]
            g = L.gen(s)
            for direction, sgn in (("up", 1.0), ("down", -1.0)):
                rr = [steps, steps]
                cc = [g[1:], g[:-1]]
                vv = [np.full(T - 1, sgn), np.full(T - 1, -sgn)]
                rhs = 0.0
                if planning:
                    rr.append(steps)
                    cc.append(np.full(T - 1, cap_col[s]))
                    vv.append(np.full(T - 1, -spec.nuclear_ramp_frac))
                else:
                    rhs = spec.nuclear_ramp_frac * _fixed_gw(spec, f"cap_nuclear_b{bus}")
                b.add_rows([f"ramp_{direction}_b{bus}[{t}]" if names else "" for t in steps],
                           np.concatenate(rr), np.concatenate(cc), np.concatenate(vv), "<=", rhs)

    # Transmission: |flow| limited by the (symmetric) link capacity.
    for l, (a, c) in enumerate(L.links):
        rr, cc, vv = [hours, hours], [L.trp(l), L.trn(l)], [np.ones(T), np.ones(T)]
        rhs = 0.0
        if planning:
            rr.append(hours)
            cc.append(np.full(T, L.captr0 + l))
            vv.append(-np.ones(T))
        else:
            rhs = _fixed_gw(spec, f"cap_tr_{a}_{c}")
        b.add_rows(labels(f"tr_le_cap_{a}_{c}"), np.concatenate(rr), np.concatenate(cc), np.concatenate(vv),
                   "<=", rhs)

    # Nuclear built in whole blocks.
    if spec.variant == "milp_plan":
        block = spec.nuclear_block_mw / 1000.0
        for j, s in enumerate(L.nuclear_sites):
            b.add_row(f"nuclear_blocks_b{L.sites[s][1]}", [cap_col[s], L.k0 + j], [1.0, -block], "=", 0.0)
    return b.build()


# -- outputs -----------------------------------------------------------------

@dataclass
class OutputSet:
    """Named scalar model outputs with units."""

    values: dict[str, float]
    units: dict[str, str]

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def names(self) -> list[str]:
        return list(self.values)

    def to_dict(self) -> dict:
        return {n: {"value": self.values[n], "units": self.units[n]} for n in self.values}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "value", "units"])
        for n, v in self.values.items():
            w.writerow([n, repr(float(v)), self.units[n]])
        return buf.getvalue()


@dataclass
class _Summary:
    """Horizon totals from which every output is computed (GW, GWh, £m)."""

    hours: int
    objective: float
    gen: np.ndarray        # GWh per site
    tr_fwd: np.ndarray     # GWh per link
    tr_rev: np.ndarray
    peak_unmet: float      # GW
    caps: np.ndarray | None = None     # GW per non-unmet site (planning)
    caps_tr: np.ndarray | None = None  # GW per link (planning)

    def merge(self, other: _Summary) -> _Summary:
        return _Summary(self.hours + other.hours, self.objective + other.objective, self.gen + other.gen,
                        self.tr_fwd + other.tr_fwd, self.tr_rev + other.tr_rev,
                        max(self.peak_unmet, other.peak_unmet))


def _summarise(spec: PsmSpec, T: int, result: SolveResult) -> _Summary:
    L = _layout(spec, T)
    x = np.maximum(result.x, 0.0)
    gen = x[L.gen0:L.trp0].reshape(len(L.sites), T)
    trp = x[L.trp0:L.trn0].reshape(len(L.links), T)
    trn = x[L.trn0:L.u0].reshape(len(L.links), T)
    net = trp - trn
    unmet = np.array([i for i, (t, _) in enumerate(L.sites) if t == "unmet"], dtype=int)
    peak = float(gen[unmet].sum(axis=0).max(initial=0.0)) if unmet.size else 0.0
    s = _Summary(T, float(result.objective), gen.sum(axis=1), np.maximum(net, 0).sum(axis=1),
                 np.maximum(-net, 0).sum(axis=1), peak)
    if spec.variant != "operate":
        s.caps = x[L.cap0:L.k0]
        s.caps_tr = x[L.captr0:L.gen0]
    return s


def _outputs(spec: PsmSpec, s: _Summary) -> OutputSet:
    topo = spec.topology
    sites = topo.sites()
    annual = HOURS_PER_YEAR / s.hours
    vals: dict[str, float] = {}
    units: dict[str, str] = {}

    def put(name: str, value: float, unit: str) -> None:
        vals[name] = float(value)
        units[name] = unit

    if s.caps is not None:
        built = [(t, b) for t, b in sites if t != "unmet"]
        for (t, b), c in zip(built, s.caps):
            put(f"cap_{t}_b{b}", 1000 * c, "MW")
        for tech in TECHS[:-1]:
            put(f"cap_{tech}_total", 1000 * sum(c for (t, _), c in zip(built, s.caps) if t == tech), "MW")
        for (a, b), c in zip(topo.links, s.caps_tr):
            put(f"cap_tr_{a}_{b}", 1000 * c, "MW")
        put("cap_transmission_total", 1000 * float(np.sum(s.caps_tr)), "MW")

    mwh = 1000 * annual
    for (t, b), g in zip(sites, s.gen):
        put(f"gen_{t}_b{b}", mwh * g, "MWh/yr")
    for tech in TECHS:
        put(f"gen_{tech}_total", mwh * sum(g for (t, _), g in zip(sites, s.gen) if t == tech), "MWh/yr")
    put("gen_total", mwh * sum(g for (t, _), g in zip(sites, s.gen) if t != "unmet"), "MWh/yr")
    for (a, b), f, r in zip(topo.links, s.tr_fwd, s.tr_rev):
        put(f"tr_{a}_{b}_fwd", mwh * f, "MWh/yr")
        put(f"tr_{a}_{b}_rev", mwh * r, "MWh/yr")
    put("tr_total", mwh * float(np.sum(s.tr_fwd) + np.sum(s.tr_rev)), "MWh/yr")
    put("peak_unmet_systemwide", 1000 * s.peak_unmet, "MW")
    # gCO2e/kWh is numerically t/GWh.
    em = sum(spec.tech(t).emissions * g for (t, _), g in zip(sites, s.gen))
    put("emissions_total", annual * em, "tCO2e/yr")
    put("cost_total", 1e6 * annual * s.objective, "GBP/yr")
    return OutputSet(vals, units)


def extract_outputs(spec: PsmSpec, table: TimeSeriesTable, solution: SolveResult) -> OutputSet:
    """Annualised named outputs of a solve of ``build_problem(spec, table)``."""
    if solution.x is None:
        raise SolverError(f"no solution to extract (status {solution.status.value})")
    return _outputs(spec, _summarise(spec, table.n_hours, solution))


# -- running -----------------------------------------------------------------

def _windows(T: int, horizon: int | None) -> list[tuple[int, int]]:
    if horizon is None or horizon >= T:
        return [(0, T)]
    return [(a, min(a + horizon, T)) for a in range(0, T, horizon)]


@dataclass
class PsmModel:
    """Callable mapping a table to its :class:`OutputSet`.

    Window solves are cached on the window's data, so resamples that
    reuse the same source weeks are solved once per process.
    """

    spec: PsmSpec
    options: SolverOptions = field(default_factory=SolverOptions)
    cache_size: int = 20_000
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, table: TimeSeriesTable) -> OutputSet:
        demand, cf = _series(self.spec, table)
        total = None
        for a, z in _windows(table.n_hours, self.spec.horizon_hours):
            part = self._solve_window(demand[:, a:z], {k: v[a:z] for k, v in cf.items()})
            total = part if total is None else total.merge(part)
        return _outputs(self.spec, total)

    def _solve_window(self, demand: np.ndarray, cf: dict[str, np.ndarray]) -> _Summary:
        key = None
        if self.cache_size:
            h = hashlib.sha256(np.ascontiguousarray(demand).tobytes())
            for k in sorted(cf):
                h.update(k.encode())
                h.update(np.ascontiguousarray(cf[k]).tobytes())
            key = h.hexdigest()
            if key in self._cache:
                return self._cache[key]
        p = _build(self.spec, demand, cf, names=False)
        res = solve(p, self.options)
        if not res.ok:
            raise SolverError(f"{self.spec.variant} solve ended {res.status.value}")
        s = _summarise(self.spec, demand.shape[1], res)
        if key is not None:
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = s
        return s

    def describe(self) -> dict:
        return {"spec_sha256": self.spec.digest(), "variant": self.spec.variant,
                "solver": self.options.method}


def run_model(spec: PsmSpec, table: TimeSeriesTable, options: SolverOptions | None = None) -> OutputSet:
    return PsmModel(spec, options or SolverOptions(), cache_size=0)(table)


def with_caps(spec: PsmSpec, caps: Mapping[str, float], **changes) -> PsmSpec:
    """Operate-variant copy of ``spec`` running the given fleet (MW)."""
    keep = {k: float(caps[k]) for k in spec.cap_names()}
    return replace(spec, variant="operate", fixed_caps=keep, **changes)
