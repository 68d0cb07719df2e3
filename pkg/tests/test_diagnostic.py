from __future__ import annotations

import json
import math

import numpy as np
import pytest

from buq.diagnostic import (DEFAULT_GRID_HOURS, compare_to_disjoint, disjoint_mc_sigma, grid_point_seed,
                            run_diagnostic)
from buq.engine import DemandMeanModel, run_bootstrap
from buq.errors import InsufficientData, InsufficientGrid
from buq.resampler import SampleScheme
from buq.synth import SynthConfig, ar1_mean_factor, synth_generate
from buq.timeseries import HOURS_PER_WEEK, HOURS_PER_YEAR, split_years

from conftest import make_table

W = HOURS_PER_WEEK


@pytest.fixture(scope="module")
def synth38():
    cfg = SynthConfig(years=38, seed=12)
    return cfg, synth_generate(cfg)


# -- synthetic generator -----------------------------------------------------

def test_synth_reproducible_and_bounded():
    cfg = SynthConfig(years=1, seed=4)
    a, b = synth_generate(cfg), synth_generate(cfg)
    np.testing.assert_array_equal(a.demand, b.demand)
    np.testing.assert_array_equal(a.wind_cf, b.wind_cf)
    assert a.fingerprint() == b.fingerprint()
    assert a.wind_cf.min() >= 0 and a.wind_cf.max() <= 1
    assert a.demand.min() >= 0
    assert synth_generate(SynthConfig(years=1, seed=5)).fingerprint() != a.fingerprint()


def test_synth_degenerate_white_noise():
    base = {"1": 1000.0}
    cfg = SynthConfig(years=3, seed=0, base_demand=base, wind_mean={"1": 0.0}, seasonal_amplitude=0.0,
                      diurnal_amplitude=0.0, ar_coef=0.0, noise_sd=0.1)
    t = synth_generate(cfg)
    d = t.demand[0]
    assert d.mean() == pytest.approx(1000.0, abs=4 * 100 / math.sqrt(d.size))
    assert d.std() == pytest.approx(100.0, rel=0.02)
    lag1 = np.corrcoef(d[1:], d[:-1])[0, 1]
    assert abs(lag1) < 4 / math.sqrt(d.size)
    assert cfg.sigma_mean_demand(HOURS_PER_YEAR) == pytest.approx(100 / math.sqrt(HOURS_PER_YEAR))


def test_ar1_mean_factor_against_direct_sum():
    for phi in (0.0, 0.5, 0.95):
        for n in (1, 10, 500):
            lags = np.arange(1, n)
            direct = 1 + 2 * np.sum((1 - lags / n) * phi ** lags)
            assert ar1_mean_factor(phi, n) == pytest.approx(direct, rel=1e-12)


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(years=0)
    with pytest.raises(ValueError):
        SynthConfig(ar_coef=1.0)
    with pytest.raises(ValueError):
        SynthConfig(wind_mean={"1": 0.9}, base_demand={"1": 1.0})


# -- diagnostic --------------------------------------------------------------

def test_demand_mean_is_stable_and_matches_clt(synth10):
    cfg = SynthConfig(years=10, seed=5)
    rep, boots = run_diagnostic(DemandMeanModel(), synth10, [13 * W, 26 * W, 52 * W], K=300, seed=1,
                                scheme_kind="weeks")
    v = rep.outputs["demand_mean"]
    assert v.stable and rep.verdict("demand_mean") == "stable"
    analytic = cfg.sigma_mean_demand()
    for s in v.sigma_1yr:
        assert s == pytest.approx(analytic, rel=0.3)
    assert [b.n_s_hours for b in boots] == [13 * W, 26 * W, 52 * W]


def test_grid_rules(synth2):
    with pytest.raises(InsufficientGrid):
        run_diagnostic(DemandMeanModel(), synth2, [4 * W], K=10, seed=0)
    with pytest.raises(InsufficientGrid):
        run_diagnostic(DemandMeanModel(), synth2, [4 * W, 8 * W], K=10, seed=0, exclude_below_hours=8 * W)
    rep, boots = run_diagnostic(DemandMeanModel(), synth2, [4 * W, 8 * W, HOURS_PER_YEAR], K=10, seed=0,
                                exclude_below_hours=8 * W)
    assert rep.outputs["demand_mean"].included == [False, True, True]
    assert [b.scheme["kind"] for b in boots] == ["weeks", "weeks", "months"]


def test_verdicts_deterministic(synth2):
    grid = [4 * W, 8 * W, 12 * W]
    a, _ = run_diagnostic(DemandMeanModel(), synth2, grid, K=20, seed=3)
    b, _ = run_diagnostic(DemandMeanModel(), synth2, grid, K=20, seed=3)
    assert a.to_json() == b.to_json()
    json.loads(a.to_json())


def test_report_csv_shape(synth2):
    rep, _ = run_diagnostic(DemandMeanModel(), synth2, [4 * W, 8 * W], K=10, seed=0)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "output,n_s_hours,sigma_1yr_equiv,ci_lo,ci_hi,included,verdict"
    assert len(lines) == 1 + 2 * len(rep.outputs)


def test_constant_output_counts_as_stable():
    t = make_table(2 * HOURS_PER_YEAR)
    rep, _ = run_diagnostic(DemandMeanModel(), t, [4 * W, 8 * W], K=5, seed=0)
    assert rep.outputs["demand_mean"].ratio == 1.0 and rep.verdict("demand_mean") == "stable"


def test_default_grid_and_seeds():
    assert DEFAULT_GRID_HOURS == (4 * W, 12 * W, 24 * W, 36 * W, 48 * W, HOURS_PER_YEAR, 2 * HOURS_PER_YEAR,
                                  3 * HOURS_PER_YEAR)
    seeds = {grid_point_seed(7, h) for h in DEFAULT_GRID_HOURS}
    assert len(seeds) == len(DEFAULT_GRID_HOURS)
    assert grid_point_seed(7, 672) == grid_point_seed(7, 672)


# -- disjoint Monte Carlo ----------------------------------------------------

def test_identical_series_give_zero_sigma():
    t = make_table(HOURS_PER_YEAR)
    d = disjoint_mc_sigma(DemandMeanModel(), [t] * 8, B=200)
    assert d["demand_mean"].sigma == 0.0
    assert d["demand_mean"].ci95 == (0.0, 0.0)


def test_needs_eight_series():
    with pytest.raises(InsufficientData):
        disjoint_mc_sigma(DemandMeanModel(), [make_table(24)] * 7)


def test_disjoint_order_invariant_and_parallel(synth38):
    _, tab = synth38
    years = split_years(tab)[:12]
    a = disjoint_mc_sigma(DemandMeanModel(), years, seed=2)
    b = disjoint_mc_sigma(DemandMeanModel(), years[::-1], seed=2)
    c = disjoint_mc_sigma(DemandMeanModel(), years, seed=2, jobs=2)
    for n in a:
        assert a[n].sigma == b[n].sigma == c[n].sigma
        assert a[n].ci95 == b[n].ci95 == c[n].ci95


def test_38_years_sigma_matches_analytic(synth38):
    cfg, tab = synth38
    years = split_years(tab)
    assert len(years) == 38
    d = disjoint_mc_sigma(DemandMeanModel(), years, seed=0)["demand_mean"]
    lo, hi = d.ci95
    assert lo <= cfg.sigma_mean_demand() <= hi


def test_bootstrap_inside_disjoint_interval(synth38):
    _, tab = synth38
    d = disjoint_mc_sigma(DemandMeanModel(), split_years(tab), seed=0)
    rep = run_bootstrap(DemandMeanModel(), tab, SampleScheme("weeks", 12, 5, 300))
    rows = {r["name"]: r for r in compare_to_disjoint(rep, d)}
    assert rows["demand_mean"]["inside"]
    assert rows["demand_mean"]["sigma_bootstrap"] == pytest.approx(rep.sigma_at("demand_mean", HOURS_PER_YEAR))
