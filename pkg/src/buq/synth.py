"""Synthetic hourly demand and wind series with known moments.

Demand at bus ``b`` and hour ``t``::

    d[b, t] = base[b] * (1 + A_s cos(2 pi doy / 365) + A_d cos(2 pi (hour - 18) / 24) + s z[b, t])

where ``z`` is a stationary AR(1) with unit variance and coefficient
``phi``. Innovations share a common factor so that ``corr(z[b], z[b'])
= rho`` for ``b != b'``. Over any whole year the two cosine terms
average to exactly zero, so the yearly mean of total demand is
``sum(base)`` and its variance has the closed form in
:meth:`SynthConfig.var_mean_demand`.

Wind capacity factors are a Beta inverse-CDF transform of a Gaussian
AR(1) latent, with a seasonal mean; they lie in [0, 1] by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, special, stats

from buq.timeseries import HOURS_PER_YEAR, TimeSeriesTable, noleap_hours

SIX_BUS_DEMAND = {"1": 0.0, "2": 55_000.0, "3": 0.0, "4": 50_000.0, "5": 35_000.0, "6": 0.0}
SIX_BUS_WIND = {"1": 0.0, "2": 0.25, "3": 0.0, "4": 0.0, "5": 0.33, "6": 0.22}


@dataclass(frozen=True)
class SynthConfig:
    years: int = 10
    seed: int = 0
    base_demand: dict = field(default_factory=lambda: dict(SIX_BUS_DEMAND))
    wind_mean: dict = field(default_factory=lambda: dict(SIX_BUS_WIND))
    seasonal_amplitude: float = 0.10
    diurnal_amplitude: float = 0.08
    ar_coef: float = 0.95
    noise_sd: float = 0.15
    bus_correlation: float = 0.5
    wind_seasonal_amplitude: float = 0.3
    wind_ar_coef: float = 0.97
    wind_concentration: float = 4.0
    start_year: int = 1980

    def __post_init__(self) -> None:
        if self.years < 1:
            raise ValueError("years must be >= 1")
        if set(self.base_demand) != set(self.wind_mean):
            raise ValueError("base_demand and wind_mean must name the same buses")
        if not -1 < self.ar_coef < 1 or not -1 < self.wind_ar_coef < 1:
            raise ValueError("AR coefficients must lie in (-1, 1)")
        if not 0 <= self.bus_correlation <= 1:
            raise ValueError("bus_correlation must lie in [0, 1]")
        if any(v < 0 for v in self.base_demand.values()):
            raise ValueError("negative base demand")
        for m in self.wind_mean.values():
            if m and not 0 < m * (1 + abs(self.wind_seasonal_amplitude)) < 1:
                raise ValueError("seasonal wind mean must stay inside (0, 1)")
        if self.wind_concentration <= 0:
            raise ValueError("wind_concentration must be positive")

    @property
    def buses(self) -> tuple[str, ...]:
        return tuple(self.base_demand)

    @property
    def n_hours(self) -> int:
        return self.years * HOURS_PER_YEAR

    def mean_demand(self) -> float:
        """Expected mean of total (all-bus) demand over any whole year, MW."""
        return float(sum(self.base_demand.values()))

    def var_mean_demand(self, n_hours: int) -> float:
        """Variance of the mean over ``n_hours`` consecutive hours of total demand's noise.

        Equals the variance of the yearly mean total demand when
        ``n_hours`` is a whole number of years.
        """
        base = np.array(list(self.base_demand.values()))
        rho = self.bus_correlation
        s = (1 - rho) * float(base @ base) + rho * float(base.sum()) ** 2
        return (self.noise_sd ** 2) * s * ar1_mean_factor(self.ar_coef, n_hours) / n_hours

    def sigma_mean_demand(self, n_hours: int = HOURS_PER_YEAR) -> float:
        return math.sqrt(self.var_mean_demand(n_hours))


def ar1_mean_factor(phi: float, n: int) -> float:
    """``n * Var(mean of n AR(1) values)`` for a unit-variance stationary AR(1)."""
    if phi == 0:
        return 1.0
    return (1 + phi) / (1 - phi) - 2 * phi * (1 - phi ** n) / (n * (1 - phi) ** 2)


def _ar1(rng: np.random.Generator, phi: float, shocks: np.ndarray) -> np.ndarray:
    """Unit-variance stationary AR(1) driven by standard-normal ``shocks`` (last axis is time)."""
    z0 = rng.standard_normal(shocks.shape[:-1])
    scale = math.sqrt(1 - phi * phi)
    out = np.empty_like(shocks)
    for i in np.ndindex(shocks.shape[:-1]):
        out[i] = signal.lfilter([scale], [1.0, -phi], shocks[i], zi=[phi * z0[i]])[0]
    return out


def synth_generate(config: SynthConfig) -> TimeSeriesTable:
    """Reproducible synthetic table; identical configs give identical tables."""
    rng = np.random.default_rng(config.seed)
    T = config.n_hours
    buses = config.buses
    t = np.arange(T)
    doy = (t // 24) % 365
    hour = t % 24
    seasonal = np.cos(2 * np.pi * doy / 365)
    diurnal = np.cos(2 * np.pi * (hour - 18) / 24)

    rho = config.bus_correlation
    common = rng.standard_normal(T)
    own = rng.standard_normal((len(buses), T))
    z = _ar1(rng, config.ar_coef, math.sqrt(rho) * common + math.sqrt(1 - rho) * own)
    base = np.array([config.base_demand[b] for b in buses])[:, None]
    shape = 1 + config.seasonal_amplitude * seasonal + config.diurnal_amplitude * diurnal
    demand = np.maximum(base * (shape + config.noise_sd * z), 0.0)

    latent = _ar1(rng, config.wind_ar_coef, rng.standard_normal((len(buses), T)))
    u = special.ndtr(latent)
    wind = np.zeros((len(buses), T))
    k = config.wind_concentration
    for i, b in enumerate(buses):
        m0 = config.wind_mean[b]
        if m0 == 0:
            continue
        m = m0 * (1 + config.wind_seasonal_amplitude * seasonal)
        wind[i] = np.clip(stats.beta.ppf(u[i], m * k, (1 - m) * k), 0.0, 1.0)

    ts = noleap_hours(f"{config.start_year:04d}-01-01T00", T)
    return TimeSeriesTable(ts, tuple(buses), demand, wind)
