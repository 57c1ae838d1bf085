"""Seeded price paths and investor fill policies.

Agents only ever see the pool limit, the minimum fill and their own budget.
Other investors' fills stay behind their commitments, so a policy cannot
condition on them.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, HorizonExceededError
from .money import Amount, Currency, to_fraction

PRICE_GENERATOR = "numpy.random.PCG64"
AGENT_GENERATOR = "random.Random (MT19937)"


@dataclass(frozen=True)
class DeterministicPath:
    """Price table; ticks between entries hold the last listed price."""

    points: tuple[tuple[int, float], ...]
    horizon: int = -1

    def __post_init__(self):
        pts = tuple(sorted((int(t), float(p)) for t, p in self.points))
        if not pts:
            raise DomainError("a deterministic path needs at least one point")
        if pts[0][0] != 0:
            raise DomainError("a deterministic path must start at tick 0")
        if len({t for t, _ in pts}) != len(pts):
            raise DomainError("duplicate ticks in price table")
        if any(not (math.isfinite(p) and p > 0) for _, p in pts):
            raise DomainError("prices must be positive and finite")
        object.__setattr__(self, "points", pts)
        if self.horizon < 0:
            object.__setattr__(self, "horizon", pts[-1][0])
        elif self.horizon < pts[-1][0]:
            raise DomainError("horizon ends before the last price point")


@dataclass(frozen=True)
class GBMPath:
    """Geometric Brownian motion stepped once per tick.

    ``drift`` is the per-tick mean of the log return, so with zero
    volatility the price is exactly ``start * exp(drift * tick)``.
    """

    start: float
    drift: float
    volatility: float
    seed: int
    horizon: int

    def __post_init__(self):
        if not (math.isfinite(self.start) and self.start > 0):
            raise DomainError("start price must be positive")
        if not math.isfinite(self.drift):
            raise DomainError("drift must be finite")
        if not (math.isfinite(self.volatility) and self.volatility >= 0):
            raise DomainError("volatility must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.horizon < 0:
            raise DomainError("horizon must be non-negative")

    @cached_property
    def prices(self) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(self.seed))
        shocks = rng.standard_normal(self.horizon)
        log_steps = self.drift + self.volatility * shocks
        log_path = np.concatenate(([0.0], np.cumsum(log_steps)))
        if self.volatility == 0.0:
            # avoid cumulative-sum rounding in the degenerate case
            log_path = self.drift * np.arange(self.horizon + 1, dtype=float)
        return self.start * np.exp(log_path)


PricePath = Union[DeterministicPath, GBMPath]


def next_price(path: PricePath, tick: int) -> float:
    if not 0 <= tick <= path.horizon:
        raise HorizonExceededError(f"tick {tick} outside horizon [0, {path.horizon}]")
    if isinstance(path, GBMPath):
        price = float(path.prices[tick])
        if not price > 0:
            raise DomainError(f"price underflowed at tick {tick}")
        return price
    ticks = [t for t, _ in path.points]
    return path.points[bisect.bisect_right(ticks, tick) - 1][1]


def price_series(path: PricePath) -> list[float]:
    return [next_price(path, t) for t in range(path.horizon + 1)]


@dataclass(frozen=True)
class MaxFill:
    budget: Amount


@dataclass(frozen=True)
class FixedFraction:
    budget: Amount
    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise DomainError("fraction must lie in (0, 1]")


@dataclass(frozen=True)
class UniformRandom:
    budget: Amount
    seed: int = field(default=0)


AgentPolicy = Union[MaxFill, FixedFraction, UniformRandom]


def decide_fill(policy: AgentPolicy, remaining_capacity: Amount, min_fill: Amount) -> Amount:
    """ETH the agent commits; zero means it abstains."""
    for a in (policy.budget, remaining_capacity, min_fill):
        if a.currency is not Currency.ETH:
            raise DomainError("fill policy amounts must be ETH")
    ceiling = min(policy.budget.base_units, remaining_capacity.base_units)
    floor_ = min_fill.base_units
    if ceiling < floor_:
        return Amount.zero(Currency.ETH)
    if isinstance(policy, MaxFill):
        units = ceiling
    elif isinstance(policy, FixedFraction):
        target = math.floor(policy.budget.base_units * to_fraction(policy.fraction))
        units = min(max(target, floor_), ceiling)
    elif isinstance(policy, UniformRandom):
        units = random.Random(policy.seed).randint(floor_, ceiling)
    else:
        raise DomainError(f"unknown policy {policy!r}")
    return Amount(units, Currency.ETH)


def gbm_log_returns(start: float, drift: float, volatility: float, horizon: int, seeds: Sequence[int]) -> np.ndarray:
    """log(price_end / price_start) for one path per seed."""
    return np.array(
        [math.log(next_price(GBMPath(start, drift, volatility, s, horizon), horizon) / start) for s in seeds]
    )
