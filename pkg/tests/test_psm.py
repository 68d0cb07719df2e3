from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from buq.errors import SpecError
from buq.optimizer import SolverOptions, Status, solve
from buq.psm import (DEFAULT_TECHNOLOGIES, PsmModel, PsmSpec, build_problem, default_spec, extract_outputs,
                     load_spec, reference_caps, run_model, spec_from_dict, spec_to_dict, with_caps)
from buq.resampler import SampleScheme, assemble, draw_plans
from buq.timeseries import HOURS_PER_YEAR, concat, split_years

from conftest import make_table
from toys import (capacity_cost_gbp, demand_table, nuclear_blocks_cost_gbp, one_bus_spec, sweep_capacity,
                  technologies)

SIMPLEX = SolverOptions(method="simplex")
HIGHS = SolverOptions(method="highs")


@pytest.fixture(scope="module")
def week(synth2):
    return synth2.slice(24 * 180, 24 * 180 + 168)


# -- defaults ----------------------------------------------------------------

def test_default_economics():
    spec = default_spec("lp_plan")
    assert spec.tech("unmet").gen_cost == 6.0
    assert spec.tech("nuclear").install_cost == 300.0
    assert [(t.id, t.install_cost, t.gen_cost, t.emissions) for t in DEFAULT_TECHNOLOGIES] == [
        ("nuclear", 300, 0.005, 200), ("ccgt", 100, 0.035, 400), ("ocgt", 50, 0.100, 400),
        ("wind", 100, 0, 0), ("unmet", 0, 6, 0)]
    costs = spec.topology.link_costs
    assert costs[("2", "3")] == 100.0
    assert costs[("1", "5")] == 150.0 and costs[("1", "6")] == 130.0


def test_default_topology_and_nuclear_switch():
    topo = default_spec("lp_plan").topology
    assert topo.placements["nuclear"] == ("3",)
    assert topo.placements["ccgt"] == ("1", "3") and topo.placements["ocgt"] == ("1", "6")
    assert topo.placements["wind"] == ("2", "5", "6")
    assert default_spec("lp_plan", nuclear_buses=("1",)).topology.placements["nuclear"] == ("1",)


def test_reference_caps_cover_operate_spec():
    spec = default_spec("operate")
    assert set(spec.fixed_caps) == set(spec.cap_names()) == set(reference_caps())


def test_spec_errors():
    with pytest.raises(SpecError):
        PsmSpec("operate", DEFAULT_TECHNOLOGIES, default_spec("lp_plan").topology)
    with pytest.raises(SpecError):
        default_spec("lp_plan", nuclear_buses=("9",))
    with pytest.raises(SpecError):
        PsmSpec("dispatch", DEFAULT_TECHNOLOGIES, default_spec("lp_plan").topology)
    with pytest.raises(SpecError):
        spec_from_dict({"technologies": {}})
    caps = dict(reference_caps())
    caps.pop("cap_tr_1_2")
    with pytest.raises(SpecError, match="missing"):
        default_spec("operate", fixed_caps=caps)


def test_table_bus_must_exist_in_topology():
    t = make_table(24, buses=("1", "7"))
    with pytest.raises(SpecError, match="not in the topology"):
        build_problem(default_spec("lp_plan"), t)


def test_spec_yaml_round_trip(tmp_path):
    import yaml

    spec = default_spec("operate", horizon_hours=168)
    path = tmp_path / "spec.yaml"
    path.write_text(yaml.safe_dump(spec_to_dict(spec)), encoding="utf-8")
    back = load_spec(path)
    assert back == spec
    assert back.digest() == spec.digest()


# -- encoding ----------------------------------------------------------------

def test_full_year_install_weight_is_one(synth2):
    year = split_years(synth2)[0]
    p = build_problem(default_spec("lp_plan"), year)
    idx = p.var_index()
    assert p.c[idx["cap_nuclear_b3"]] == 300.0
    assert p.c[idx["cap_tr_2_3"]] == 100.0
    half = build_problem(default_spec("lp_plan"), year.slice(0, 4380))
    assert half.c[half.var_index()["cap_nuclear_b3"]] == 150.0


def test_milp_forbids_fractional_nuclear_blocks(week):
    t = week.slice(0, 6)
    p = build_problem(default_spec("milp_plan"), t)
    j = p.var_index()["cap_nuclear_b3"]
    lb, ub = p.lb.copy(), p.ub.copy()
    lb[j] = ub[j] = 7.5  # GW
    assert solve(p.with_bounds(lb, ub), SIMPLEX).status == Status.INFEASIBLE
    lb[j] = ub[j] = 9.0
    assert solve(p.with_bounds(lb, ub), SIMPLEX).status == Status.OPTIMAL


def test_operate_zero_wind_bounds_wind_generation(week):
    t = type(week)(week.timestamps, week.bus_ids, week.demand, np.zeros_like(week.wind_cf))
    p = build_problem(default_spec("operate"), t)
    for name, j in p.var_index().items():
        if name.startswith("gen_wind"):
            assert p.ub[j] == 0.0


def test_operate_nuclear_commitment_and_ramping(week):
    spec = default_spec("operate")
    t = week.slice(0, 48)
    p = build_problem(spec, t)
    res = solve(p, HIGHS)
    assert res.ok
    cap = reference_caps()["cap_nuclear_b3"] / 1000
    idx = p.var_index()
    g = np.array([res.x[idx[f"gen_nuclear_b3[{h}]"]] for h in range(48)])
    on = (g > 1e-6)
    assert np.all(g[on] >= 0.5 * cap - 1e-6) and np.all(g <= cap + 1e-6)
    assert np.all(np.abs(np.diff(g)) <= 0.2 * cap + 1e-6)


def test_energy_balance_and_flow_antisymmetry(week):
    spec = default_spec("lp_plan")
    t = week.slice(0, 24)
    p = build_problem(spec, t)
    res = solve(p, SIMPLEX)
    assert res.ok
    idx = p.var_index()
    x = res.x
    for h in range(24):
        for bus in spec.topology.buses:
            inflow = sum(x[idx[f"gen_{tech}_b{b}[{h}]"]] for tech, b in spec.topology.sites() if b == bus)
            for a, c in spec.topology.links:
                net = x[idx[f"tr_{a}_{c}_fwd[{h}]"]] - x[idx[f"tr_{a}_{c}_rev[{h}]"]]
                inflow += net if c == bus else (-net if a == bus else 0.0)
            d = t.demand_of(bus)[h] / 1000 if bus in t.bus_ids else 0.0
            assert inflow == pytest.approx(d, rel=1e-6, abs=1e-9)


def test_lp_relaxation_bounds_milp(week):
    t = week.slice(0, 48)
    lp = run_model(default_spec("lp_plan"), t, HIGHS)
    milp = run_model(default_spec("milp_plan"), t, HIGHS)
    assert lp["cost_total"] <= milp["cost_total"] * (1 + 1e-9)
    assert milp["cap_nuclear_total"] % 3000 == pytest.approx(0.0, abs=1e-6)


def test_unmet_keeps_every_instance_feasible(week):
    # Operate with no fleet at all: everything is unmet demand.
    caps = {k: 0.0 for k in reference_caps()}
    out = run_model(default_spec("operate", fixed_caps=caps), week.slice(0, 24), SIMPLEX)
    total = week.slice(0, 24).demand.sum() * HOURS_PER_YEAR / 24
    assert out["gen_unmet_total"] == pytest.approx(total, rel=1e-9)
    assert out["gen_total"] == 0.0


# -- toy oracles -------------------------------------------------------------

def test_lp_toy_matches_capacity_sweep():
    d = np.array([100.0, 200.0])
    spec = one_bus_spec("lp_plan", ("ocgt",))
    out = run_model(spec, demand_table(d), SIMPLEX)
    c_star, cost_star = sweep_capacity(d, install=50.0, gen=0.100, voll=6.0)
    assert c_star == 200.0
    assert out["cap_ocgt_b1"] == pytest.approx(c_star, rel=1e-6)
    assert out["cost_total"] * d.size / HOURS_PER_YEAR == pytest.approx(cost_star, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 500), min_size=1, max_size=5), st.floats(1, 2000), st.floats(0, 1), st.floats(1.5, 10))
def test_lp_toy_random_costs(demand, install, gen, voll):
    d = np.array(demand)
    spec = one_bus_spec("lp_plan", ("ocgt",), technologies(ocgt=(install, gen, 400.0), unmet=(0.0, voll, 0.0)))
    out = run_model(spec, demand_table(d), SIMPLEX)
    _, cost_star = sweep_capacity(d, install, gen, voll, points=2001)
    horizon_cost = out["cost_total"] * d.size / HOURS_PER_YEAR
    assert horizon_cost == pytest.approx(cost_star, rel=1e-6, abs=1e-6)
    assert capacity_cost_gbp(out["cap_ocgt_b1"], d, install, gen, voll) == pytest.approx(cost_star, rel=1e-6,
                                                                                        abs=1e-6)


def test_milp_toy_matches_block_enumeration():
    d = np.full(24, 4000.0)
    spec = one_bus_spec("milp_plan", ("nuclear",))
    out = run_model(spec, demand_table(d), SIMPLEX)
    costs = {k: nuclear_blocks_cost_gbp(k, d) for k in range(4)}
    best = min(costs, key=costs.get)
    assert best == 2
    assert out["cap_nuclear_b1"] == pytest.approx(3000.0 * best)
    assert out["cost_total"] * d.size / HOURS_PER_YEAR == pytest.approx(costs[best], rel=1e-6)


# -- outputs -----------------------------------------------------------------

def _ccgt_operate(T, demand=1.0):
    spec = one_bus_spec("operate", ("ccgt",), fixed_caps={"cap_ccgt_b1": 10.0})
    return spec, demand_table(np.full(T, demand))


def test_ccgt_emissions_per_mwh():
    spec, t = _ccgt_operate(24)
    out = run_model(spec, t, SIMPLEX)
    assert out["emissions_total"] / out["gen_ccgt_total"] == pytest.approx(0.4, rel=1e-12)


def test_annualisation_factor_two():
    spec, t = _ccgt_operate(4380)
    p = build_problem(spec, t)
    res = solve(p, HIGHS)
    out = extract_outputs(spec, t, res)
    assert out["cost_total"] == pytest.approx(2 * res.objective * 1e6, rel=1e-12)
    assert out["gen_ccgt_total"] == pytest.approx(2 * 4380 * 1.0, rel=1e-9)


def test_zero_unmet_and_zero_demand(week):
    spec, t = _ccgt_operate(12)
    out = run_model(spec, t, SIMPLEX)
    assert out["peak_unmet_systemwide"] == 0.0 and out["gen_unmet_total"] == 0.0
    zero = type(week)(week.timestamps, week.bus_ids, np.zeros_like(week.demand), week.wind_cf)
    out = run_model(default_spec("operate"), zero.slice(0, 24), SIMPLEX)
    assert all(v == 0.0 for k, v in out.values.items() if k.startswith("gen_"))


def test_peak_unmet_not_annualised():
    spec = one_bus_spec("operate", ("ccgt",), fixed_caps={"cap_ccgt_b1": 100.0})
    out = run_model(spec, demand_table([50.0, 180.0, 130.0]), SIMPLEX)
    assert out["peak_unmet_systemwide"] == pytest.approx(80.0)
    assert out["gen_unmet_total"] == pytest.approx(110.0 * HOURS_PER_YEAR / 3)


def test_outputs_deterministic_and_serialisable(week):
    t = week.slice(0, 24)
    a = run_model(default_spec("lp_plan"), t, SIMPLEX)
    b = run_model(default_spec("lp_plan"), t, SIMPLEX)
    assert a.to_json() == b.to_json()
    assert all(v >= 0 for v in a.values.values())
    lines = a.to_csv().splitlines()
    assert lines[0] == "name,value,units" and len(lines) == len(a.values) + 1
    assert a.units["cost_total"] == "GBP/yr" and a.units["peak_unmet_systemwide"] == "MW"


def test_annualisation_consistent_under_repetition(week):
    t = week.slice(0, 24)
    doubled = concat([t, t])
    a = run_model(default_spec("lp_plan"), t, HIGHS)
    b = run_model(default_spec("lp_plan"), doubled, HIGHS)
    for n in ("gen_total", "emissions_total", "cost_total", "gen_unmet_total"):
        assert b[n] == pytest.approx(a[n], rel=1e-6, abs=1e-3)


def test_operate_windows_and_cache(synth2):
    plans = draw_plans(synth2, SampleScheme("weeks", 2, 3, 2))
    spec = default_spec("operate", horizon_hours=168)
    model = PsmModel(spec, HIGHS)
    t = assemble(synth2, plans[0])
    a = model(t)
    assert len(model._cache) == 2
    b = model(t)
    assert a.values == b.values
    direct = run_model(spec, t, HIGHS)
    for n in a.names():
        assert a[n] == pytest.approx(direct[n], rel=1e-9, abs=1e-6)


def test_with_caps_builds_operate_spec():
    lp = default_spec("lp_plan")
    op = with_caps(lp, reference_caps(), horizon_hours=168)
    assert op.variant == "operate" and op.horizon_hours == 168
    assert op.fixed_caps == reference_caps()
