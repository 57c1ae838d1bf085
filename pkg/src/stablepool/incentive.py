"""Exponential incentive distribution and the pool-vs-hold threshold solver.

Each investor's raw incentive is ``exp(filled - T) / filled``; the margin
``A`` is split in proportion to the raw incentives. The common factor
``exp(-T)`` cancels in the ratio, so fractions are evaluated from
``filled - ln(filled)`` with a max-shift before exponentiating. That keeps
the split finite for realistic pool sizes, where every raw incentive
underflows to zero in double precision.

All functions here are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

from .errors import DomainError, ExponentOverflowError, NotFoundError, UnderflowError

# exp() overflows a double just above 709.78
MAX_EXPONENT = 700.0

GRID_POINTS = 256
MAX_BISECTIONS = 200
CROSSING_ATOL = 1e-9


def _check_positive(name: str, x: float) -> float:
    x = float(x)
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"{name} must be a positive finite number, got {x!r}")
    return x


@dataclass(frozen=True)
class DistributionInput:
    """Fills (investor id, ETH), the pool's total limit T, and the margin A."""

    fills: tuple[tuple[str, float], ...]
    total_limit: float
    cumulated_amount: float

    def __post_init__(self):
        fills = tuple((str(i), float(f)) for i, f in self.fills)
        object.__setattr__(self, "fills", fills)
        if not fills:
            raise DomainError("fills must be non-empty")
        for investor, f in fills:
            _check_positive(f"fill of {investor!r}", f)
        t = _check_positive("total_limit", self.total_limit)
        if not math.isfinite(self.cumulated_amount):
            raise DomainError("cumulated_amount must be finite")
        if math.fsum(f for _, f in fills) > t * (1 + 1e-12):
            raise DomainError("sum of fills exceeds total_limit")

    @classmethod
    def from_fills(cls, fills: Sequence[float], total_limit: float, amount: float) -> "DistributionInput":
        """Convenience constructor that names investors by position."""
        return cls(tuple((f"i{k}", f) for k, f in enumerate(fills)), total_limit, amount)


@dataclass(frozen=True)
class InvestorShare:
    investor_id: str
    filled: float
    raw_incentive: float
    fraction: float
    final_incentive: float


@dataclass(frozen=True)
class DistributionResult:
    per_investor: tuple[InvestorShare, ...]
    lsum: float

    @property
    def fractions(self) -> list[float]:
        return [s.fraction for s in self.per_investor]

    @property
    def final_incentives(self) -> list[float]:
        return [s.final_incentive for s in self.per_investor]

    def share(self, investor_id: str) -> InvestorShare:
        for s in self.per_investor:
            if s.investor_id == investor_id:
                return s
        raise NotFoundError(f"investor {investor_id!r} not in distribution")


def compute_incentive(filled: float, total_limit: float) -> float:
    """Raw incentive ``exp(filled - total_limit) / filled``."""
    f = _check_positive("filled", filled)
    t = _check_positive("total_limit", total_limit)
    if f - t > MAX_EXPONENT:
        raise ExponentOverflowError(f"exponent {f - t} exceeds {MAX_EXPONENT}")
    return math.exp(f - t) / f


def log_weights(fills: Sequence[float]) -> list[float]:
    """``filled - ln(filled)``: log raw incentive up to the shared ``-T``."""
    return [f - math.log(f) for f in fills]


def normalized_fractions(fills: Sequence[float]) -> list[float]:
    z = log_weights(fills)
    top = max(z)
    w = [math.exp(v - top) for v in z]
    s = math.fsum(w)
    return [x / s for x in w]


def _naive_fractions(fills: Sequence[float], total_limit: float) -> list[float]:
    raw = [compute_incentive(f, total_limit) for f in fills]
    lsum = math.fsum(raw)
    if lsum == 0.0:
        raise UnderflowError("every raw incentive underflowed to zero")
    return [r / lsum for r in raw]


def compute_distribution(inp: DistributionInput, *, naive: bool = False) -> DistributionResult:
    """Split ``inp.cumulated_amount`` over the fills.

    ``naive=True`` evaluates the ratio directly from the raw incentives; it
    exists for diagnostics and raises UnderflowError once they all vanish.
    """
    ids = [i for i, _ in inp.fills]
    fills = [f for _, f in inp.fills]
    t = float(inp.total_limit)
    raw = [compute_incentive(f, t) for f in fills]
    fractions = _naive_fractions(fills, t) if naive else normalized_fractions(fills)
    a = float(inp.cumulated_amount)
    shares = tuple(
        InvestorShare(i, f, r, q, q * a) for i, f, r, q in zip(ids, fills, raw, fractions)
    )
    return DistributionResult(shares, math.fsum(raw))


def pool_return(investor: Union[str, float], inp: DistributionInput) -> float:
    """P&L of one investor (principal excluded), in value units.

    ``investor`` is an investor id, or a fill amount matched against the
    fills (first match wins).
    """
    result = compute_distribution(inp)
    if isinstance(investor, str):
        return result.share(investor).final_incentive
    for s in result.per_investor:
        if s.filled == float(investor):
            return s.final_incentive
    raise NotFoundError(f"no fill equal to {investor!r}")


def hold_baseline(invested: float, price_start: float, price_end: float) -> float:
    """P&L of holding ``invested`` ETH from ``price_start`` to ``price_end``."""
    x = _check_positive("invested", invested)
    p0 = _check_positive("price_start", price_start)
    p1 = _check_positive("price_end", price_end)
    return x * (p1 - p0)


def find_crossing(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    grid_points: int = GRID_POINTS,
    max_iter: int = MAX_BISECTIONS,
    atol: float = CROSSING_ATOL,
) -> Optional[float]:
    """Smallest sign change of ``func`` on [lo, hi], or None if there is none.

    Scans a uniform grid for the first bracket, then bisects it. Exact zeros
    only count when the function changes sign across them, so a difference
    that is identically zero has no crossing.
    """
    if not lo < hi:
        raise DomainError(f"empty search interval [{lo}, {hi}]")
    xs = [lo + (hi - lo) * k / (grid_points - 1) for k in range(grid_points)]
    xs[-1] = hi
    last_x, last_y = None, 0.0
    first_zero = None
    for x in xs:
        y = func(x)
        if y == 0.0:
            if first_zero is None and last_x is not None:
                first_zero = x
            continue
        if last_x is not None and (y > 0) != (last_y > 0):
            if first_zero is not None:
                return first_zero
            return _bisect(func, last_x, last_y, x, max_iter, atol)
        last_x, last_y, first_zero = x, y, None
    return None


def _bisect(func, a: float, fa: float, b: float, max_iter: int, atol: float) -> float:
    mid = 0.5 * (a + b)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = func(mid)
        if abs(fm) <= atol:
            return mid
        if mid <= a or mid >= b:
            # interval is down to adjacent doubles
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return mid


@dataclass(frozen=True)
class ThresholdQuery:
    """A marginal investor joining ``background_fills`` in a pool of size T."""

    background_fills: tuple[float, ...]
    total_limit: float
    price_start: float
    price_end: float
    margin: float
    search_domain: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "background_fills", tuple(float(f) for f in self.background_fills))
        for f in self.background_fills:
            _check_positive("background fill", f)
        t = _check_positive("total_limit", self.total_limit)
        _check_positive("price_start", self.price_start)
        _check_positive("price_end", self.price_end)
        if not math.isfinite(self.margin):
            raise DomainError("margin must be finite")
        lo, hi = (float(v) for v in self.search_domain)
        object.__setattr__(self, "search_domain", (lo, hi))
        capacity = t - math.fsum(self.background_fills)
        if lo < 1.0:
            raise DomainError(f"search must start at a fill of at least 1 ETH, got {lo}")
        if not lo < hi:
            raise DomainError(f"empty search domain ({lo}, {hi})")
        if hi > capacity * (1 + 1e-12):
            raise DomainError(f"search domain end {hi} exceeds remaining capacity {capacity}")

    def advantage(self, fill: float) -> float:
        """Marginal investor's pool P&L minus its hold P&L at ``fill``."""
        fills = list(self.background_fills) + [fill]
        share = normalized_fractions(fills)[-1]
        return share * self.margin - hold_baseline(fill, self.price_start, self.price_end)


def find_threshold(query: ThresholdQuery) -> Optional[float]:
    """Fill at which the marginal investor's pool P&L equals holding.

    Returns the smallest crossing in the search domain, or None when the
    pool-minus-hold difference keeps one sign throughout.
    """
    lo, hi = query.search_domain
    return find_crossing(query.advantage, lo, hi)


def curve_threshold(fills: Sequence[float], margin: float, price_start: float, price_end: float) -> Optional[float]:
    """Crossing of a settled pool's return curve with the hold line.

    With the pool's incentive total held fixed, every participant's P&L sits
    on one curve ``margin * w(x) / sum(w)``; this finds where it meets
    ``x * (price_end - price_start)`` between the smallest and largest fill.
    None for fewer than two distinct fills or no crossing.
    """
    lo, hi = min(fills), max(fills)
    if not lo < hi:
        return None
    z = log_weights(fills)
    top = max(z)
    norm = math.fsum(math.exp(v - top) for v in z)
    dp = price_end - price_start

    def diff(x: float) -> float:
        return margin * math.exp(x - math.log(x) - top) / norm - x * dp

    return find_crossing(diff, lo, hi)
