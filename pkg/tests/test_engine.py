from __future__ import annotations

import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from buq.engine import (BootstrapReport, DemandMeanModel, extrapolate_sigma, point_estimate,
                        required_sample_length, run_bootstrap, sample_variance)
from buq.errors import DegenerateInput, EmptyStratum, SolverError, TooManyFailures
from buq.psm import OutputSet
from buq.resampler import SampleScheme, draw_plans
from buq.timeseries import HOURS_PER_YEAR

from conftest import make_table

YEAR = HOURS_PER_YEAR


# -- estimators --------------------------------------------------------------

def test_sample_variance_examples():
    assert sample_variance([1, 2, 3]) == 1.0
    assert sample_variance([5.5] * 7) == 0.0
    assert sample_variance([0, 2]) == 2.0
    with pytest.raises(DegenerateInput):
        sample_variance([1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=50), st.randoms())
def test_sample_variance_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert sample_variance(values) == sample_variance(shuffled)
    assert sample_variance(values) == pytest.approx(float(np.var(values, ddof=1)), rel=1e-9, abs=1e-6)


def test_extrapolate_sigma_examples():
    assert extrapolate_sigma(9.0, 100, 100) == 3.0
    assert extrapolate_sigma(4.0, YEAR, 4 * YEAR) == 1.0
    assert extrapolate_sigma(0.0, 168, YEAR) == 0.0
    with pytest.raises(ValueError):
        extrapolate_sigma(-1.0, 1, 1)


def test_required_sample_length_examples():
    n = required_sample_length(11.0 ** 2, YEAR, 5.0)
    assert n.years == Fraction(121, 25)
    assert float(n.years) == 4.84 and n.years_ceiling == 5
    same = required_sample_length(36.0, 2 * YEAR, 6.0)
    assert same.hours == 2 * YEAR
    zero = required_sample_length(0.0, YEAR, 1.0)
    assert zero.hours == 0 and zero.years_ceiling == 0
    with pytest.raises(ValueError):
        required_sample_length(1.0, YEAR, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e6), st.integers(1, 10 * YEAR), st.floats(1e-3, 1e3))
def test_planner_inverts_extrapolation(var_s, n_s, target):
    n_o = required_sample_length(var_s, n_s, target).hours
    if n_o > 0:
        assert extrapolate_sigma(var_s, n_s, float(n_o)) == pytest.approx(target, rel=1e-12)


# -- bootstrap ---------------------------------------------------------------

def test_identical_pools_give_zero_sigma():
    t = make_table(YEAR, demand=np.linspace(50, 150, YEAR))
    rep = run_bootstrap(DemandMeanModel(), t, SampleScheme("months", 1, 0, 2))
    assert rep.sigma == {"demand_mean": 0.0, "demand_peak": 0.0}
    assert rep.interval("demand_mean") == (rep.point["demand_mean"],) * 2


def test_interval_is_point_plus_minus_two_sigma(synth2):
    rep = run_bootstrap(DemandMeanModel(), synth2, SampleScheme("weeks", 8, 1, 30))
    for r in rep.rows():
        assert r["lo"] == r["point_estimate"] - 2 * r["sigma_hat"]
        assert r["hi"] == r["point_estimate"] + 2 * r["sigma_hat"]
        assert r["lo_clamped"] == max(r["lo"], 0.0)
    assert rep.point == point_estimate(DemandMeanModel(), synth2).values


def test_report_fields_and_round_trip(synth2):
    rep = run_bootstrap(DemandMeanModel(), synth2, SampleScheme("weeks", 4, 2, 12))
    assert rep.K == rep.k_used == 12 and rep.samples.shape == (12, 2)
    assert rep.n_s_hours == 4 * 168 and rep.n_o_hours == 2 * YEAR
    assert rep.scheme["kind"] == "weeks"
    back = BootstrapReport.from_json(rep.to_json())
    assert back.to_json() == rep.to_json()
    assert rep.to_csv().splitlines()[0] == "name,point_estimate,sigma_hat,lo,hi,lo_clamped,units"


def test_seeded_determinism(synth2):
    s = SampleScheme("months", 1, 99, 20)
    assert run_bootstrap(DemandMeanModel(), synth2, s).to_json() == \
        run_bootstrap(DemandMeanModel(), synth2, s).to_json()


def test_parallel_matches_serial(synth2):
    s = SampleScheme("weeks", 8, 4, 24)
    a = run_bootstrap(DemandMeanModel(), synth2, s, jobs=1)
    b = run_bootstrap(DemandMeanModel(), synth2, s, jobs=2)
    assert a.to_json() == b.to_json()


def test_permutation_of_samples_leaves_report_unchanged(synth2):
    s = SampleScheme("weeks", 4, 8, 40)
    plans = draw_plans(synth2, s)
    a = run_bootstrap(DemandMeanModel(), synth2, s, plans=plans)
    perm = np.random.default_rng(0).permutation(len(plans))
    b = run_bootstrap(DemandMeanModel(), synth2, s, plans=[plans[i] for i in perm])
    assert a.var_s == b.var_s and a.sigma == b.sigma


def test_empty_stratum_propagates():
    with pytest.raises(EmptyStratum):
        run_bootstrap(DemandMeanModel(), make_table(1000), SampleScheme("months", 1, 0, 5))


def test_warns_when_sample_longer_than_series(synth2):
    with pytest.warns(UserWarning, match="longer than the series"):
        run_bootstrap(DemandMeanModel(), synth2, SampleScheme("months", 3, 0, 3))


class FlakyModel:
    """Fails on the samples whose first bus-2 demand value lies in a chosen set."""

    def __init__(self, bad_every: int):
        self.bad_every = bad_every

    def __call__(self, table):
        key = int(table.demand[1, 0] * 1e6) % self.bad_every
        if key == 0:
            raise SolverError("synthetic failure")
        return DemandMeanModel()(table)

    def describe(self):
        return {"model": "flaky"}


def test_failure_policy(synth2):
    s = SampleScheme("weeks", 4, 6, 200)
    point = point_estimate(DemandMeanModel(), synth2)
    flaky = FlakyModel(7)
    expected = [p.index for p in draw_plans(synth2, s)
                if int(synth2.demand[1, p.blocks[0].start_index] * 1e6) % 7 == 0]
    assert len(expected) > 2
    with pytest.raises(TooManyFailures):
        run_bootstrap(flaky, synth2, s, point=point)
    rep = run_bootstrap(flaky, synth2, s, point=point, max_failure_fraction=0.5)
    assert rep.failures == expected
    assert rep.k_used == 200 - len(expected)
    assert set(rep.failures).isdisjoint(rep.sample_ids)


def test_failures_within_threshold_are_excluded(synth2):
    s = SampleScheme("weeks", 4, 6, 200)
    plans = draw_plans(synth2, s)
    first = plans[17].blocks[0].start_index
    target = float(synth2.demand[1, first])

    def model(table):
        if table.demand[1, 0] == target:
            raise SolverError("bad sample")
        return DemandMeanModel()(table)

    hits = sum(p.blocks[0].start_index == first for p in plans)
    rep = run_bootstrap(model, synth2, s, point=point_estimate(DemandMeanModel(), synth2), plans=plans,
                        max_failure_fraction=hits / 200)
    assert len(rep.failures) == hits and 17 in rep.failures


def test_annualised_output_invariant_to_repetition(synth2):
    year = synth2.slice(0, YEAR)
    from buq.timeseries import concat

    m = DemandMeanModel()
    assert m(concat([year, year]))["demand_mean"] == pytest.approx(m(year)["demand_mean"], rel=1e-12)


def test_scaling_law_for_demand_mean(synth10):
    # var_S * n_S roughly constant over 13 wk, 26 wk and 52 wk.
    m = DemandMeanModel()
    prods = []
    for scheme in (SampleScheme("weeks", 13, 1, 500), SampleScheme("weeks", 26, 2, 500),
                   SampleScheme("weeks", 52, 3, 500)):
        rep = run_bootstrap(m, synth10, scheme)
        prods.append(rep.var_s["demand_mean"] * rep.n_s_hours)
    assert max(prods) / min(prods) - 1 <= 0.25
