"""Stratified block resampling (*months* and *weeks* schemes).

A *months* plan of ``Y`` years is ``[Jan][Feb]...[Dec]`` repeated ``Y``
times, each block a whole calendar month drawn uniformly with replacement
from the matching month of the source table. A *weeks* plan of ``W`` weeks
cycles DJF, MAM, JJA, SON, each block a 168 h season-week tile.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from buq.errors import EmptyStratum, SchemeError
from buq.timeseries import (HOURS_PER_WEEK, HOURS_PER_YEAR, SEASONS, BlockIndex, CalendarBlock,
                            TimeSeriesTable, block_from_dict, extract, index_blocks, noleap_hours)

DEFAULT_K = 1000
SYNTHETIC_START = "2001-01-01T00"


@dataclass(frozen=True)
class SampleScheme:
    """How bootstrap samples are built.

    ``length`` counts years for ``months`` and weeks for ``weeks``.
    """

    kind: Literal["months", "weeks"]
    length: int
    seed: int
    K: int = DEFAULT_K

    def __post_init__(self) -> None:
        if self.kind not in ("months", "weeks"):
            raise SchemeError(f"unknown scheme kind {self.kind!r}")
        if int(self.length) != self.length or self.length < 1:
            raise SchemeError(f"scheme length must be a positive integer, got {self.length!r}")
        if self.K < 2:
            raise SchemeError("K must be at least 2")
        if not 0 <= int(self.seed) < 2**64:
            raise SchemeError("seed must be a 64-bit unsigned integer")

    @property
    def n_hours(self) -> int:
        if self.kind == "months":
            return self.length * HOURS_PER_YEAR
        return self.length * HOURS_PER_WEEK

    @classmethod
    def for_hours(cls, hours: int, seed: int, K: int = DEFAULT_K) -> SampleScheme:
        """Weeks below one year, months from one year up (whole years only)."""
        if hours >= HOURS_PER_YEAR and hours % HOURS_PER_YEAR == 0:
            return cls("months", hours // HOURS_PER_YEAR, seed, K)
        if hours % HOURS_PER_WEEK == 0:
            return cls("weeks", hours // HOURS_PER_WEEK, seed, K)
        raise SchemeError(f"{hours} h is neither whole weeks nor whole years")

    def describe(self) -> dict:
        return {"kind": self.kind, "length": self.length, "n_hours": self.n_hours,
                "seed": int(self.seed), "K": self.K}


@dataclass(frozen=True)
class SamplePlan:
    index: int
    blocks: tuple[CalendarBlock, ...]
    seed: int = 0
    table_fingerprint: str = ""
    scheme: dict = field(default_factory=dict)

    @property
    def n_hours(self) -> int:
        return sum(b.length_hours for b in self.blocks)

    def to_dict(self) -> dict:
        return {"index": self.index, "seed": self.seed, "table_fingerprint": self.table_fingerprint,
                "scheme": self.scheme, "n_hours": self.n_hours,
                "blocks": [b.to_dict() for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> SamplePlan:
        return cls(int(d["index"]), tuple(block_from_dict(b) for b in d["blocks"]),
                   int(d.get("seed", 0)), d.get("table_fingerprint", ""), d.get("scheme", {}))


def strata_sequence(scheme: SampleScheme) -> list:
    if scheme.kind == "months":
        return [m for _ in range(scheme.length) for m in range(1, 13)]
    return [SEASONS[j % 4] for j in range(scheme.length)]


def _pools(index: BlockIndex, scheme: SampleScheme) -> dict:
    pools = index.months if scheme.kind == "months" else index.weeks
    needed = set(strata_sequence(scheme))
    empty = sorted(str(s) for s in needed if not pools[s])
    if empty:
        raise EmptyStratum(f"{scheme.kind} scheme: no candidate blocks for strata {empty}")
    return pools


def sample_rngs(seed: int, K: int) -> list[np.random.Generator]:
    """Independent per-sample generators split from one master seed."""
    children = np.random.SeedSequence(int(seed)).spawn(K)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def draw_plans(table: TimeSeriesTable, scheme: SampleScheme,
               index: BlockIndex | None = None) -> list[SamplePlan]:
    """Draw ``scheme.K`` plans, uniformly with replacement within each stratum."""
    index = index_blocks(table) if index is None else index
    pools = _pools(index, scheme)
    strata = strata_sequence(scheme)
    fingerprint = table.fingerprint()
    desc = scheme.describe()
    plans = []
    for k, rng in enumerate(sample_rngs(scheme.seed, scheme.K)):
        picks = [pools[s][int(rng.integers(len(pools[s])))] for s in strata]
        plans.append(SamplePlan(k, tuple(picks), int(scheme.seed), fingerprint, desc))
    return plans


def assemble(table: TimeSeriesTable, plan: SamplePlan) -> TimeSeriesTable:
    """Concatenate the plan's blocks under synthetic consecutive timestamps."""
    for b in plan.blocks:
        if b.start_index < 0 or b.start_index + b.length_hours > len(table):
            extract(table, b)  # raises OutOfRange
    rows = np.concatenate([np.arange(b.start_index, b.start_index + b.length_hours) for b in plan.blocks])
    return TimeSeriesTable(noleap_hours(SYNTHETIC_START, rows.size), table.bus_ids,
                           table.demand[:, rows], table.wind_cf[:, rows])


def plans_to_json(plans: list[SamplePlan]) -> str:
    return json.dumps([p.to_dict() for p in plans], indent=1)


def plans_from_json(text: str) -> list[SamplePlan]:
    return [SamplePlan.from_dict(d) for d in json.loads(text)]
