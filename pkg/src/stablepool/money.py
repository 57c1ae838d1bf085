"""Exact integer money: currency-tagged base-unit amounts and apportionment."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Sequence, Union

from .errors import CurrencyMismatchError, DomainError

AMOUNT_BOUND = 2**128

Number = Union[int, float, str, Decimal, Fraction]


class Currency(enum.Enum):
    ETH = "ETH"
    STABLE = "STABLE"
    VALUE = "VALUE"

    @property
    def decimals(self) -> int:
        return 18 if self is Currency.ETH else 6

    @property
    def scale(self) -> int:
        return 10**self.decimals


def to_fraction(x: Number) -> Fraction:
    """Exact rational for a price or quantity.

    Floats go through their shortest repr so ``1.1`` means 11/10, not the
    nearest binary double.
    """
    if isinstance(x, bool):
        raise DomainError(f"not a number: {x!r}")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise DomainError(f"non-finite number: {x!r}")
        return Fraction(repr(x))
    try:
        return Fraction(Decimal(str(x)))
    except (InvalidOperation, ValueError) as exc:
        raise DomainError(f"not a number: {x!r}") from exc


@dataclass(frozen=True, order=False)
class Amount:
    """Signed integer count of base units in one currency.

    ETH base units are wei (1e-18); STABLE and VALUE use 1e-6.
    """

    base_units: int
    currency: Currency

    def __post_init__(self):
        if not isinstance(self.base_units, int) or isinstance(self.base_units, bool):
            raise DomainError(f"base_units must be int, got {self.base_units!r}")
        if abs(self.base_units) >= AMOUNT_BOUND:
            raise DomainError(f"amount exceeds 128-bit range: {self.base_units}")

    @classmethod
    def of(cls, units: Number, currency: Currency) -> "Amount":
        """Build from whole units (e.g. ``Amount.of("1.5", Currency.ETH)``).

        Raises DomainError if the quantity is finer than one base unit.
        """
        exact = to_fraction(units) * currency.scale
        if exact.denominator != 1:
            raise DomainError(f"{units} {currency.name} is not a whole number of base units")
        return cls(int(exact), currency)

    @classmethod
    def zero(cls, currency: Currency) -> "Amount":
        return cls(0, currency)

    def to_fraction(self) -> Fraction:
        return Fraction(self.base_units, self.currency.scale)

    def to_decimal(self) -> Decimal:
        return Decimal(self.base_units).scaleb(-self.currency.decimals)

    def __float__(self) -> float:
        return self.base_units / self.currency.scale

    def __str__(self) -> str:
        return f"{self.to_decimal():.{self.currency.decimals}f} {self.currency.name}"

    def _check(self, other: "Amount") -> None:
        if not isinstance(other, Amount):
            raise TypeError(f"expected Amount, got {type(other).__name__}")
        if other.currency is not self.currency:
            raise CurrencyMismatchError(
                f"cannot combine {self.currency.name} with {other.currency.name}"
            )

    def __add__(self, other: "Amount") -> "Amount":
        self._check(other)
        return Amount(self.base_units + other.base_units, self.currency)

    def __sub__(self, other: "Amount") -> "Amount":
        self._check(other)
        return Amount(self.base_units - other.base_units, self.currency)

    def __neg__(self) -> "Amount":
        return Amount(-self.base_units, self.currency)

    def __abs__(self) -> "Amount":
        return Amount(abs(self.base_units), self.currency)

    def __lt__(self, other: "Amount") -> bool:
        self._check(other)
        return self.base_units < other.base_units

    def __le__(self, other: "Amount") -> bool:
        self._check(other)
        return self.base_units <= other.base_units

    def __gt__(self, other: "Amount") -> bool:
        self._check(other)
        return self.base_units > other.base_units

    def __ge__(self, other: "Amount") -> bool:
        self._check(other)
        return self.base_units >= other.base_units

    def __bool__(self) -> bool:
        return self.base_units != 0

    def is_negative(self) -> bool:
        return self.base_units < 0


def eth(units: Number) -> Amount:
    return Amount.of(units, Currency.ETH)


def value(units: Number) -> Amount:
    return Amount.of(units, Currency.VALUE)


def stable(units: Number) -> Amount:
    return Amount.of(units, Currency.STABLE)


def _positive_price(price: Number) -> Fraction:
    p = to_fraction(price)
    if p <= 0:
        raise DomainError(f"price must be positive, got {price!r}")
    return p


def eth_to(amount: Amount, price: Number, currency: Currency) -> Amount:
    """Value an ETH amount at ``price`` (per ETH), floored to base units."""
    if amount.currency is not Currency.ETH:
        raise CurrencyMismatchError(f"expected ETH, got {amount.currency.name}")
    if currency is Currency.ETH:
        raise DomainError("target currency must not be ETH")
    exact = Fraction(amount.base_units) * _positive_price(price) * currency.scale / Currency.ETH.scale
    return Amount(math.floor(exact), currency)


def to_eth(amount: Amount, price: Number) -> Amount:
    """ETH bought by a STABLE/VALUE amount at ``price``, floored to wei."""
    if amount.currency is Currency.ETH:
        raise DomainError("amount is already ETH")
    exact = Fraction(amount.base_units) * Currency.ETH.scale / amount.currency.scale / _positive_price(price)
    return Amount(math.floor(exact), Currency.ETH)


def to_eth_ceil(amount: Amount, price: Number) -> Amount:
    if amount.currency is Currency.ETH:
        raise DomainError("amount is already ETH")
    exact = Fraction(amount.base_units) * Currency.ETH.scale / amount.currency.scale / _positive_price(price)
    return Amount(math.ceil(exact), Currency.ETH)


def apportion(total: int, weights: Sequence[float], keys: Sequence[str]) -> list[int]:
    """Largest-remainder split of a non-negative integer by real weights.

    Quotas are computed with exact rationals over the normalised weights, so
    the parts sum to ``total`` exactly. Ties in the remainder go to the
    smallest key, which keeps the result independent of input order.
    """
    if total < 0:
        raise DomainError("apportion total must be non-negative")
    if len(weights) != len(keys):
        raise DomainError("weights and keys differ in length")
    if not weights:
        if total:
            raise DomainError("cannot apportion a non-zero total over no parts")
        return []
    exact = [Fraction(w) for w in weights]
    if any(w < 0 for w in exact):
        raise DomainError("weights must be non-negative")
    norm = sum(exact)
    if norm == 0:
        raise DomainError("weights sum to zero")
    quotas = [total * w / norm for w in exact]
    parts = [math.floor(q) for q in quotas]
    left = total - sum(parts)
    order = sorted(range(len(parts)), key=lambda i: (-(quotas[i] - parts[i]), keys[i]))
    for i in order[:left]:
        parts[i] += 1
    return parts


def apportion_capped(
    total: int, weights: Sequence[float], caps: Sequence[int], keys: Sequence[str]
) -> tuple[list[int], int]:
    """Apportion ``total`` with per-part ceilings.

    Parts whose share would exceed their cap are pinned at the cap and the
    excess is re-split over the remaining parts by their weights. Returns
    the allocation and the residual that no part could absorb.
    """
    n = len(weights)
    alloc = [0] * n
    active = [i for i in range(n) if caps[i] > 0]
    remaining = total
    while remaining > 0 and active:
        w = [weights[i] for i in active]
        if not any(w):
            # only weight-underflowed parts left; they still hold principal
            w = [1.0] * len(active)
        shares = apportion(remaining, w, [keys[i] for i in active])
        over = [i for i, s in zip(active, shares) if s > caps[i]]
        if not over:
            for i, s in zip(active, shares):
                alloc[i] = s
            remaining = 0
            break
        for i in over:
            alloc[i] = caps[i]
            remaining -= caps[i]
        active = [i for i in active if i not in over]
    return alloc, remaining
