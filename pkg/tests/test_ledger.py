import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablepool import ledger as L
from stablepool import pool as P
from stablepool.errors import (
    DomainError,
    DustError,
    InactivePoolError,
    InsufficientBackingError,
    RedeemedBatchError,
    UnknownBatchError,
)
from stablepool.money import Amount, Currency, eth, stable, value


def backing_pool(fills: dict, limit=None, pool_id="p"):
    limit = limit or sum(fills.values())
    s = P.open_pool(eth(limit), eth(1), pool_id=pool_id)
    for k, (who, amt) in enumerate(fills.items()):
        s = P.commit(s, who, P.commitment_digest(eth(amt), k.to_bytes(32, "big"), who))
    s = P.close_commits(s)
    for k, (who, amt) in enumerate(fills.items()):
        s = P.reveal(s, who, eth(amt), k.to_bytes(32, "big"))
    return P.activate(s)


def minted(collateral=2, price=100, fills=None):
    pool = backing_pool(fills or {"a": 2})
    return L.mint(L.new_ledger(), "u", eth(collateral), price, pool)


class TestMint:
    def test_one_to_one(self):
        book, batch = minted(2, 100)
        assert batch.stable_issued == stable(200)
        assert book.total_outstanding == stable(200)
        assert book.total_collateral == eth(2)

    def test_dust(self):
        pool = backing_pool({"a": 2})
        with pytest.raises(DustError):
            L.mint(L.new_ledger(), "u", Amount(1, Currency.ETH), 100, pool)

    def test_settled_pool(self):
        pool = P.settle(backing_pool({"a": 2}), value(0), 100)
        with pytest.raises(InactivePoolError):
            L.mint(L.new_ledger(), "u", eth(2), 100, pool)

    def test_insufficient_backing(self):
        with pytest.raises(InsufficientBackingError):
            minted(3, 100, {"a": 2})
        pool = backing_pool({"a": 2})
        with pytest.raises(InsufficientBackingError):
            L.mint(L.new_ledger(backing_ratio=1.5), "u", eth(2), 100, pool)

    def test_pool_backs_one_batch(self):
        pool = backing_pool({"a": 4})
        book, _ = L.mint(L.new_ledger(), "u", eth(1), 100, pool)
        with pytest.raises(InactivePoolError):
            L.mint(book, "v", eth(1), 100, pool)

    @pytest.mark.parametrize("collateral,price", [(0, 100), (1, 0), (1, -5)])
    def test_domain(self, collateral, price):
        with pytest.raises(DomainError):
            L.mint(L.new_ledger(), "u", eth(collateral), price, backing_pool({"a": 2}))


class TestMargin:
    @pytest.mark.parametrize("price,expected", [(100, 0), (150, 100), (60, -80)])
    def test_values(self, price, expected):
        _, batch = minted(2, 100)
        assert L.compute_margin(batch, price) == value(expected)

    def test_redeemed(self):
        book, batch = minted(2, 100)
        book, _ = L.redeem(book, batch.batch_id, 100)
        with pytest.raises(RedeemedBatchError):
            L.compute_margin(book.batch(batch.batch_id), 100)


class TestRedeem:
    def test_price_up(self):
        book, batch = minted(2, 100)
        book, r = L.redeem(book, batch.batch_id, 150)
        assert r.user_receives == Amount(1_333_333_333_333_333_333, Currency.ETH)
        assert r.margin == value(100)
        assert r.peg_held
        assert r.pool.settlement.eth_rewarded == eth(2) - r.user_receives
        assert book.total_outstanding == stable(0)

    def test_round_trip(self):
        book, batch = minted(2, 100)
        book, r = L.redeem(book, batch.batch_id, 100)
        assert r.user_receives == eth(2)
        assert r.margin == value(0)
        assert r.peg_held

    def test_peg_break(self):
        book, batch = minted(2, 100, {"a": 2})
        book, r = L.redeem(book, batch.batch_id, 40, tick=9)
        assert r.margin == value(-120)
        assert not r.peg_held
        assert r.shortfall == value(40)
        assert r.user_receives == eth(4)
        assert book.peg_events == (L.PegEvent(9, batch.batch_id, value(40)),)

    def test_errors(self):
        book, batch = minted(2, 100)
        with pytest.raises(UnknownBatchError):
            L.redeem(book, "nope", 100)
        book, _ = L.redeem(book, batch.batch_id, 100)
        with pytest.raises(RedeemedBatchError):
            L.redeem(book, batch.batch_id, 100)

    def test_event_log_csv(self, tmp_path):
        book, batch = minted(2, 100)
        book, _ = L.redeem(book, batch.batch_id, 150, tick=3)
        path = L.export_events(book, tmp_path / "events.csv")
        rows = list(csv.reader(path.open()))
        assert tuple(rows[0]) == L.EVENT_COLUMNS
        assert rows[1][:2] == ["0", "mint"]
        assert rows[2] == ["3", "redeem", "batch-0", "u", "1333333333333333333", "200000000", "150.0", "100000000", "true"]


@settings(max_examples=80, deadline=None)
@given(
    collateral=st.integers(1, 10**20),
    extra=st.lists(st.integers(10**18, 10**19), min_size=1, max_size=4),
    p0=st.integers(1, 10**5),
    p1=st.integers(1, 10**5),
)
def test_conservation_and_peg(collateral, extra, p0, p1):
    fills = {f"i{k}": Amount(x, Currency.ETH) for k, x in enumerate(extra)}
    principal = sum(extra)
    if principal < collateral:
        return
    s = P.open_pool(Amount(principal, Currency.ETH), Amount(1, Currency.ETH))
    for who, amt in fills.items():
        s = P.commit(s, who, P.commitment_digest(amt, bytes(32), who))
    s = P.close_commits(s)
    for who, amt in fills.items():
        s = P.reveal(s, who, amt, bytes(32))
    s = P.activate(s)
    try:
        book, batch = L.mint(L.new_ledger(), "u", Amount(collateral, Currency.ETH), p0, s)
    except DustError:
        return
    book, r = L.redeem(book, batch.batch_id, p1)
    rep = r.pool.settlement
    assert collateral + principal == (
        r.user_receives.base_units + rep.eth_returned.base_units + rep.eth_rewarded.base_units
    )
    if r.peg_held:
        # payout valued at p1 is within one STABLE base unit of face
        payout_value = r.user_receives.base_units * p1 / 10**12
        assert abs(payout_value - batch.stable_issued.base_units) <= 1
    else:
        assert r.shortfall.base_units == -r.margin.base_units - sum(
            x * p1 // 10**12 for x in extra
        )
    assert book.dust_stable < 1 and book.dust_eth < 1
