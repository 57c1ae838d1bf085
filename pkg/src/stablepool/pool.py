"""One collateral-pool round as an immutable state machine.

Investors first commit a SHA-256 digest of their contribution, so fills
stay hidden while the pool is filling. Once commits close they reveal
``(amount, nonce)``; only verified reveals back the issuance batch. At
settlement the margin is split by the incentive engine: gains are paid
out, losses are slashed from principal up to each investor's principal
value, and anything beyond that is recorded as an insolvency shortfall.

Every operation returns a new ``PoolState``; nothing mutates in place.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional

from . import incentive
from .errors import (
    BelowMinFillError,
    DigestMismatchError,
    DomainError,
    DuplicateCommitError,
    EmptyPoolError,
    NoRevealsError,
    OverfillError,
    UnknownInvestorError,
    WrongPhaseError,
)
from .money import (
    Amount,
    Currency,
    Number,
    apportion,
    apportion_capped,
    eth_to,
    to_eth,
    to_eth_ceil,
    to_fraction,
)

NONCE_BYTES = 32
AMOUNT_BYTES = 16


class PoolPhase(enum.IntEnum):
    OPEN = 0
    COMMITTING = 1
    REVEALING = 2
    ACTIVE = 3
    SETTLED = 4


def commitment_preimage(amount: Amount, nonce: bytes, investor_id: str) -> bytes:
    """16-byte big-endian amount || 32-byte nonce || UTF-8 investor id."""
    if amount.currency is not Currency.ETH:
        raise DomainError("commitments are over ETH amounts")
    if amount.base_units < 0:
        raise DomainError("committed amount must be non-negative")
    if len(nonce) != NONCE_BYTES:
        raise DomainError(f"nonce must be {NONCE_BYTES} bytes, got {len(nonce)}")
    return amount.base_units.to_bytes(AMOUNT_BYTES, "big") + bytes(nonce) + investor_id.encode("utf-8")


def commitment_digest(amount: Amount, nonce: bytes, investor_id: str) -> bytes:
    return hashlib.sha256(commitment_preimage(amount, nonce, investor_id)).digest()


@dataclass(frozen=True)
class CommitRecord:
    investor_id: str
    digest: bytes
    amount: Optional[Amount] = field(default=None, repr=False)
    nonce: Optional[bytes] = field(default=None, repr=False)
    voided: bool = False

    @property
    def revealed(self) -> bool:
        return self.amount is not None


@dataclass(frozen=True)
class SettlementRow:
    investor_id: str
    principal: Amount
    fraction: float
    principal_returned: Amount
    slashed_eth: Amount
    reward_eth: Amount
    reward_or_loss: Amount
    slashed: bool


@dataclass(frozen=True)
class SettlementReport:
    margin: Amount
    settlement_price: float
    per_investor: tuple[SettlementRow, ...]
    insolvent: bool
    shortfall: Amount

    def row(self, investor_id: str) -> SettlementRow:
        for r in self.per_investor:
            if r.investor_id == investor_id:
                return r
        raise UnknownInvestorError(investor_id)

    @property
    def eth_returned(self) -> Amount:
        """Principal handed back, excluding rewards."""
        total = Amount.zero(Currency.ETH)
        for r in self.per_investor:
            total = total + r.principal_returned
        return total

    @property
    def eth_slashed(self) -> Amount:
        total = Amount.zero(Currency.ETH)
        for r in self.per_investor:
            total = total + r.slashed_eth
        return total

    @property
    def eth_rewarded(self) -> Amount:
        total = Amount.zero(Currency.ETH)
        for r in self.per_investor:
            total = total + r.reward_eth
        return total


@dataclass(frozen=True)
class PoolState:
    pool_id: str
    phase: PoolPhase
    total_limit: Amount
    min_fill: Amount
    commits: tuple[CommitRecord, ...] = ()
    revealed_total: Amount = Amount(0, Currency.ETH)
    tick: int = 0
    phase_ticks: tuple[tuple[PoolPhase, int], ...] = ()
    settlement: Optional[SettlementReport] = None

    def record(self, investor_id: str) -> CommitRecord:
        for c in self.commits:
            if c.investor_id == investor_id:
                return c
        raise UnknownInvestorError(f"investor {investor_id!r} has not committed")

    @property
    def commit_map(self) -> dict[str, CommitRecord]:
        return {c.investor_id: c for c in self.commits}

    @property
    def participants(self) -> list[tuple[str, Amount]]:
        """Revealed, non-voided contributions in commit order."""
        return [(c.investor_id, c.amount) for c in self.commits if c.revealed and not c.voided]

    def _require(self, phase: PoolPhase, op: str) -> None:
        if self.phase is not phase:
            raise WrongPhaseError(f"{op} needs phase {phase.name}, pool is {self.phase.name}")

    def _advance(self, phase: PoolPhase, **changes) -> "PoolState":
        if phase != self.phase + 1:
            raise WrongPhaseError(f"cannot move from {self.phase.name} to {phase.name}")
        tick = self.tick + 1
        return replace(self, phase=phase, tick=tick, phase_ticks=self.phase_ticks + ((phase, tick),), **changes)

    def _step(self, **changes) -> "PoolState":
        return replace(self, tick=self.tick + 1, **changes)


def open_pool(total_limit: Amount, min_fill: Amount, pool_id: str = "pool") -> PoolState:
    """New pool, already accepting commitments."""
    for name, a in (("total_limit", total_limit), ("min_fill", min_fill)):
        if a.currency is not Currency.ETH:
            raise DomainError(f"{name} must be ETH")
    if total_limit.base_units <= 0:
        raise DomainError("total_limit must be positive")
    if not 0 < min_fill.base_units <= total_limit.base_units:
        raise DomainError("min_fill must be positive and not exceed total_limit")
    state = PoolState(
        pool_id=pool_id,
        phase=PoolPhase.OPEN,
        total_limit=total_limit,
        min_fill=min_fill,
        phase_ticks=((PoolPhase.OPEN, 0),),
    )
    return state._advance(PoolPhase.COMMITTING)


def commit(state: PoolState, investor_id: str, digest: bytes) -> PoolState:
    state._require(PoolPhase.COMMITTING, "commit")
    if len(digest) != 32:
        raise DomainError("digest must be 32 bytes")
    if any(c.investor_id == investor_id for c in state.commits):
        raise DuplicateCommitError(f"investor {investor_id!r} already committed")
    return state._step(commits=state.commits + (CommitRecord(investor_id, bytes(digest)),))


def close_commits(state: PoolState) -> PoolState:
    state._require(PoolPhase.COMMITTING, "close_commits")
    if not state.commits:
        raise EmptyPoolError("no commitments to close over")
    return state._advance(PoolPhase.REVEALING)


def reveal(state: PoolState, investor_id: str, amount: Amount, nonce: bytes) -> PoolState:
    """Open a commitment.

    A digest mismatch voids the commitment for good; the voided state is
    attached to the raised DigestMismatchError.
    """
    state._require(PoolPhase.REVEALING, "reveal")
    rec = state.record(investor_id)
    if rec.voided:
        raise DigestMismatchError(f"commitment of {investor_id!r} was voided", state)
    if rec.revealed:
        raise DuplicateCommitError(f"investor {investor_id!r} already revealed")
    if amount.currency is not Currency.ETH:
        raise DomainError("revealed amount must be ETH")
    if len(nonce) != NONCE_BYTES or amount.base_units < 0 or commitment_digest(amount, nonce, investor_id) != rec.digest:
        voided = _replace_record(state, replace(rec, voided=True))
        raise DigestMismatchError(f"reveal of {investor_id!r} does not match its commitment", voided)
    if amount < state.min_fill:
        raise BelowMinFillError(f"{amount} is below the minimum fill {state.min_fill}")
    if state.revealed_total + amount > state.total_limit:
        raise OverfillError(f"revealing {amount} would exceed the pool limit {state.total_limit}")
    updated = replace(rec, amount=amount, nonce=bytes(nonce))
    return replace(
        _replace_record(state, updated),
        revealed_total=state.revealed_total + amount,
    )


def _replace_record(state: PoolState, rec: CommitRecord) -> PoolState:
    commits = tuple(rec if c.investor_id == rec.investor_id else c for c in state.commits)
    return state._step(commits=commits)


def activate(state: PoolState) -> PoolState:
    """Start the backing period; unrevealed and voided commitments drop out."""
    state._require(PoolPhase.REVEALING, "activate")
    kept = tuple(c for c in state.commits if c.revealed and not c.voided)
    if not kept:
        raise NoRevealsError("no valid reveals")
    return state._advance(PoolPhase.ACTIVE, commits=kept)


def settle(
    state: PoolState,
    margin: Amount,
    settlement_price: Number,
    *,
    eth_delta: Optional[Amount] = None,
) -> PoolState:
    """Distribute ``margin`` (VALUE) over the revealed fills and close the round.

    ``eth_delta`` is the ETH the pool gains (positive) or must hand over
    (negative) alongside the margin. The ledger passes it exactly; when it is
    omitted it is derived from the margin at ``settlement_price``.
    """
    state._require(PoolPhase.ACTIVE, "settle")
    if margin.currency is not Currency.VALUE:
        raise DomainError("margin must be a VALUE amount")
    price = to_fraction(settlement_price)
    if price <= 0:
        raise DomainError("settlement price must be positive")
    if eth_delta is None:
        if margin.base_units >= 0:
            eth_delta = to_eth(margin, price)
        else:
            eth_delta = -to_eth_ceil(-margin, price)
    elif eth_delta.currency is not Currency.ETH:
        raise DomainError("eth_delta must be ETH")

    parts = state.participants
    ids = [i for i, _ in parts]
    principals = [a for _, a in parts]
    dist = incentive.compute_distribution(
        incentive.DistributionInput(
            tuple((i, float(a)) for i, a in parts),
            float(state.total_limit),
            float(margin),
        )
    )
    fractions = dist.fractions
    zero_eth = Amount.zero(Currency.ETH)
    n = len(parts)

    shortfall = 0
    if margin.base_units >= 0:
        value_parts = apportion(margin.base_units, fractions, ids)
        slashed = [False] * n
    else:
        caps = [eth_to(p, price, Currency.VALUE).base_units for p in principals]
        losses, shortfall = apportion_capped(-margin.base_units, fractions, caps, ids)
        value_parts = [-x for x in losses]
        slashed = [loss == cap for loss, cap in zip(losses, caps)]
    insolvent = shortfall > 0

    if eth_delta.base_units >= 0:
        reward_eth = apportion(eth_delta.base_units, fractions, ids)
        slash_eth = [0] * n
    elif insolvent:
        reward_eth = [0] * n
        slash_eth = [p.base_units for p in principals]
    else:
        reward_eth = [0] * n
        slash_eth, eth_left = apportion_capped(
            -eth_delta.base_units, fractions, [p.base_units for p in principals], ids
        )
        if eth_left:
            # value coverage implies ETH coverage at the same price
            raise AssertionError(f"ETH deficit not covered by principal: {eth_left} wei left")

    rows = tuple(
        SettlementRow(
            investor_id=ids[k],
            principal=principals[k],
            fraction=fractions[k],
            principal_returned=principals[k] - Amount(slash_eth[k], Currency.ETH),
            slashed_eth=Amount(slash_eth[k], Currency.ETH),
            reward_eth=Amount(reward_eth[k], Currency.ETH) if reward_eth[k] else zero_eth,
            reward_or_loss=Amount(value_parts[k], Currency.VALUE),
            slashed=slashed[k],
        )
        for k in range(n)
    )
    report = SettlementReport(
        margin=margin,
        settlement_price=float(price),
        per_investor=rows,
        insolvent=insolvent,
        shortfall=Amount(shortfall, Currency.VALUE),
    )
    return state._advance(PoolPhase.SETTLED, settlement=report)
