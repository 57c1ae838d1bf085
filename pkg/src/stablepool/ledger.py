"""Stablecoin issuance and redemption at 1:1 collateralization.

A user locks ETH and receives its full value in stablecoins; no extra
collateral is demanded because an active pool round stands behind the
batch. At redemption the user gets face value back in ETH and the batch's
margin (collateral value minus face) is settled against the pool.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import pool as pool_protocol
from .errors import (
    DomainError,
    DustError,
    InactivePoolError,
    InsufficientBackingError,
    RedeemedBatchError,
    UnknownBatchError,
)
from .money import Amount, Currency, Number, eth_to, to_eth, to_fraction
from .pool import PoolPhase, PoolState

EVENT_COLUMNS = (
    "tick",
    "event_type",
    "batch_id",
    "user_id",
    "eth_base_units",
    "stable_base_units",
    "price",
    "margin_value_units",
    "peg_held",
)


class BatchStatus(enum.Enum):
    OUTSTANDING = "outstanding"
    REDEEMED = "redeemed"


@dataclass(frozen=True)
class IssuanceBatch:
    batch_id: str
    user_id: str
    collateral_eth: Amount
    stable_issued: Amount
    price_at_mint: float
    backing_pool: PoolState = field(repr=False)
    status: BatchStatus = BatchStatus.OUTSTANDING


@dataclass(frozen=True)
class LedgerEvent:
    tick: int
    event_type: str
    batch_id: str
    user_id: str
    eth_base_units: int
    stable_base_units: int
    price: float
    margin_value_units: Optional[int]
    peg_held: Optional[bool]


@dataclass(frozen=True)
class PegEvent:
    tick: int
    batch_id: str
    shortfall: Amount


@dataclass(frozen=True)
class Redemption:
    user_receives: Amount
    margin: Amount
    peg_held: bool
    pool: PoolState
    shortfall: Amount


@dataclass(frozen=True)
class LedgerState:
    batches: tuple[IssuanceBatch, ...] = ()
    total_outstanding: Amount = Amount(0, Currency.STABLE)
    total_collateral: Amount = Amount(0, Currency.ETH)
    peg_events: tuple[PegEvent, ...] = ()
    events: tuple[LedgerEvent, ...] = ()
    backing_ratio: float = 1.0
    # sub-base-unit remainders dropped by floor rounding
    dust_stable: Fraction = Fraction(0)
    dust_eth: Fraction = Fraction(0)

    def __post_init__(self):
        if not self.backing_ratio > 0:
            raise DomainError("backing_ratio must be positive")

    def batch(self, batch_id: str) -> IssuanceBatch:
        for b in self.batches:
            if b.batch_id == batch_id:
                return b
        raise UnknownBatchError(f"no batch {batch_id!r}")

    def _put(self, batch: IssuanceBatch) -> tuple[IssuanceBatch, ...]:
        out = tuple(batch if b.batch_id == batch.batch_id else b for b in self.batches)
        if batch.batch_id not in {b.batch_id for b in self.batches}:
            out += (batch,)
        return out


def new_ledger(backing_ratio: float = 1.0) -> LedgerState:
    return LedgerState(backing_ratio=backing_ratio)


def mint(
    ledger: LedgerState,
    user_id: str,
    collateral_eth: Amount,
    price: Number,
    pool: PoolState,
    *,
    tick: int = 0,
) -> tuple[LedgerState, IssuanceBatch]:
    """Issue ``collateral_eth * price`` stablecoins (floored) against an active pool."""
    if collateral_eth.currency is not Currency.ETH or collateral_eth.base_units <= 0:
        raise DomainError("collateral must be a positive ETH amount")
    p = to_fraction(price)
    if p <= 0:
        raise DomainError("price must be positive")
    if pool.phase is not PoolPhase.ACTIVE:
        raise InactivePoolError(f"pool {pool.pool_id!r} is {pool.phase.name}, not ACTIVE")
    for b in ledger.batches:
        if b.status is BatchStatus.OUTSTANDING and b.backing_pool.pool_id == pool.pool_id:
            raise InactivePoolError(f"pool {pool.pool_id!r} already backs batch {b.batch_id!r}")
    needed = Fraction(collateral_eth.base_units) * to_fraction(ledger.backing_ratio)
    if pool.revealed_total.base_units < needed:
        raise InsufficientBackingError(
            f"pool holds {pool.revealed_total}, batch needs {ledger.backing_ratio} x {collateral_eth}"
        )
    issued = eth_to(collateral_eth, p, Currency.STABLE)
    if issued.base_units <= 0:
        raise DustError(f"{collateral_eth} at {price} issues no stablecoin")
    exact = Fraction(collateral_eth.base_units) * p * Currency.STABLE.scale / Currency.ETH.scale

    batch = IssuanceBatch(
        batch_id=f"batch-{len(ledger.batches)}",
        user_id=user_id,
        collateral_eth=collateral_eth,
        stable_issued=issued,
        price_at_mint=float(p),
        backing_pool=pool,
    )
    event = LedgerEvent(
        tick, "mint", batch.batch_id, user_id, collateral_eth.base_units, issued.base_units, float(p), None, None
    )
    updated = replace(
        ledger,
        batches=ledger._put(batch),
        total_outstanding=ledger.total_outstanding + issued,
        total_collateral=ledger.total_collateral + collateral_eth,
        events=ledger.events + (event,),
        dust_stable=ledger.dust_stable + (exact - issued.base_units),
    )
    return updated, batch


def compute_margin(batch: IssuanceBatch, current_price: Number) -> Amount:
    """Collateral value at ``current_price`` minus stablecoin face, in VALUE."""
    if batch.status is not BatchStatus.OUTSTANDING:
        raise RedeemedBatchError(f"batch {batch.batch_id!r} is already redeemed")
    worth = eth_to(batch.collateral_eth, current_price, Currency.VALUE)
    return Amount(worth.base_units - batch.stable_issued.base_units, Currency.VALUE)


def redeem(
    ledger: LedgerState, batch_id: str, current_price: Number, *, tick: int = 0
) -> tuple[LedgerState, Redemption]:
    """Pay the user face value in ETH and settle the backing pool.

    When the margin is a loss larger than the pool's principal value, the
    user gets the batch collateral plus every slashed principal and the
    uncovered remainder is logged as a peg event.
    """
    batch = ledger.batch(batch_id)
    if batch.status is not BatchStatus.OUTSTANDING:
        raise RedeemedBatchError(f"batch {batch_id!r} is already redeemed")
    p = to_fraction(current_price)
    if p <= 0:
        raise DomainError("price must be positive")
    margin = compute_margin(batch, p)
    face_eth = to_eth(batch.stable_issued, p)
    eth_delta = batch.collateral_eth - face_eth

    settled = pool_protocol.settle(batch.backing_pool, margin, p, eth_delta=eth_delta)
    report = settled.settlement
    if report.insolvent:
        user_eth = batch.collateral_eth + report.eth_slashed
    else:
        user_eth = face_eth
    peg_held = not report.insolvent

    exact_face = Fraction(batch.stable_issued.base_units) * Currency.ETH.scale / Currency.STABLE.scale / p
    redeemed = replace(batch, status=BatchStatus.REDEEMED, backing_pool=settled)
    peg_events = ledger.peg_events
    if not peg_held:
        peg_events += (PegEvent(tick, batch_id, report.shortfall),)
    event = LedgerEvent(
        tick,
        "redeem",
        batch_id,
        batch.user_id,
        user_eth.base_units,
        batch.stable_issued.base_units,
        float(p),
        margin.base_units,
        peg_held,
    )
    updated = replace(
        ledger,
        batches=ledger._put(redeemed),
        total_outstanding=ledger.total_outstanding - batch.stable_issued,
        total_collateral=ledger.total_collateral - batch.collateral_eth,
        peg_events=peg_events,
        events=ledger.events + (event,),
        dust_eth=ledger.dust_eth + (exact_face - face_eth.base_units),
    )
    return updated, Redemption(user_eth, margin, peg_held, settled, report.shortfall)


def export_events(ledger: LedgerState, path) -> Path:
    """Write the ledger event log as CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENT_COLUMNS)
        for e in ledger.events:
            writer.writerow(
                [
                    e.tick,
                    e.event_type,
                    e.batch_id,
                    e.user_id,
                    e.eth_base_units,
                    e.stable_base_units,
                    repr(e.price),
                    "" if e.margin_value_units is None else e.margin_value_units,
                    "" if e.peg_held is None else str(e.peg_held).lower(),
                ]
            )
    return path
