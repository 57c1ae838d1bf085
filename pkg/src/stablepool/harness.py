"""Scenario files, end-to-end episodes, fill sweeps and report export.

An episode runs one pool round through its whole life: agents commit and
reveal, the pool backs a user's mint, the price moves, the user redeems
and the pool settles. A sweep then asks what a newcomer with fill ``x``
would have earned against the same pool, next to simply holding ``x`` ETH.

Scenario JSON::

    {
      "name": "rising",
      "seed": 7,
      "pool": {"total_limit": "5", "min_fill": "1"},
      "agents": [
        {"id": "a", "policy": "max_fill", "budget": "2"},
        {"id": "b", "policy": "fixed_fraction", "budget": "4", "fraction": 0.5},
        {"id": "c", "policy": "uniform_random", "budget": "3", "seed": 11}
      ],
      "user": {"id": "user", "collateral_eth": "5", "mint_tick": 0, "redeem_tick": 1},
      "price": {"kind": "deterministic", "points": [[0, 100], [1, 110]]},
      "sweep": {"fill_lo": 1, "fill_hi": 8, "steps": 701},
      "backing_ratio": 1.0
    }

ETH quantities may be JSON numbers or decimal strings. A GBM price block is
``{"kind": "gbm", "start": 100, "drift": 0, "volatility": 0.05,
"horizon": 30, "seed": 3}``. Omitted generator seeds derive from the
scenario seed.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__, incentive, ledger as ledger_mod, market, pool as pool_mod
from .errors import (
    EpisodeError,
    NoSweepError,
    OverfillError,
    ReportIOError,
    ScenarioError,
    StablepoolError,
)
from .money import Amount, Currency

NONCE_GENERATOR = "random.Random (MT19937)"
EPISODE_COLUMNS = ("investor_id", "filled", "fraction", "pool_pnl", "hold_pnl", "advantage", "slashed")
CURVE_COLUMNS = ("fill", "pool_pnl", "hold_pnl")
SEED_MASK = 2**64 - 1


@dataclass(frozen=True)
class PoolConfig:
    total_limit: Amount
    min_fill: Amount


@dataclass(frozen=True)
class AgentSpec:
    investor_id: str
    policy: market.AgentPolicy


@dataclass(frozen=True)
class UserConfig:
    user_id: str
    collateral_eth: Amount
    mint_tick: int
    redeem_tick: int


@dataclass(frozen=True)
class SweepConfig:
    fill_lo: float
    fill_hi: float
    steps: int


@dataclass(frozen=True)
class Scenario:
    name: str
    pool: PoolConfig
    agents: tuple[AgentSpec, ...]
    user: UserConfig
    price: market.PricePath
    seed: int
    sweep: Optional[SweepConfig] = None
    backing_ratio: float = 1.0

    def __post_init__(self):
        if not 0 <= self.seed <= SEED_MASK:
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        if not self.agents:
            raise ScenarioError("scenario needs at least one agent")
        ids = [a.investor_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioError("agent ids must be unique")
        u = self.user
        if not 0 <= u.mint_tick < u.redeem_tick <= self.price.horizon:
            raise ScenarioError(
                f"need 0 <= mint_tick < redeem_tick <= horizon ({self.price.horizon}), "
                f"got {u.mint_tick}, {u.redeem_tick}"
            )
        if self.sweep is not None:
            s = self.sweep
            if s.fill_lo < float(self.pool.min_fill) or s.fill_lo < 1.0:
                raise ScenarioError("sweep fill_lo must be at least min_fill and 1 ETH")
            if not s.fill_lo < s.fill_hi:
                raise ScenarioError("sweep fill_lo must be below fill_hi")
            if s.steps < 2:
                raise ScenarioError("sweep needs at least 2 steps")

    @classmethod
    def from_dict(cls, data: dict, seed: Optional[int] = None) -> "Scenario":
        """Parse a scenario mapping; ``seed`` overrides the file's seed."""
        try:
            return _parse_scenario(data, seed)
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError, StablepoolError) as exc:
            raise ScenarioError(f"invalid scenario: {exc!r}") from exc

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "seed": self.seed,
            "pool": {
                "total_limit": _eth_str(self.pool.total_limit),
                "min_fill": _eth_str(self.pool.min_fill),
            },
            "agents": [_agent_dict(a) for a in self.agents],
            "user": {
                "id": self.user.user_id,
                "collateral_eth": _eth_str(self.user.collateral_eth),
                "mint_tick": self.user.mint_tick,
                "redeem_tick": self.user.redeem_tick,
            },
            "price": _price_dict(self.price),
            "backing_ratio": self.backing_ratio,
        }
        if self.sweep is not None:
            out["sweep"] = {"fill_lo": self.sweep.fill_lo, "fill_hi": self.sweep.fill_hi, "steps": self.sweep.steps}
        return out


def _eth(x) -> Amount:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ScenarioError(f"not an ETH quantity: {x!r}")
    return Amount.of(x, Currency.ETH)


def _eth_str(a: Amount) -> str:
    return format(a.to_decimal().normalize(), "f")


def _derived_seed(seed: int, k: int) -> int:
    return (seed + k) & SEED_MASK


def _parse_policy(d: dict, seed: int, k: int) -> market.AgentPolicy:
    kind = d["policy"]
    budget = _eth(d["budget"])
    if kind == "max_fill":
        return market.MaxFill(budget)
    if kind == "fixed_fraction":
        return market.FixedFraction(budget, float(d["fraction"]))
    if kind == "uniform_random":
        return market.UniformRandom(budget, int(d.get("seed", _derived_seed(seed, 1 + k))))
    raise ScenarioError(f"unknown agent policy {kind!r}")


def _agent_dict(a: AgentSpec) -> dict:
    p = a.policy
    d: dict[str, Any] = {"id": a.investor_id, "budget": _eth_str(p.budget)}
    if isinstance(p, market.MaxFill):
        d["policy"] = "max_fill"
    elif isinstance(p, market.FixedFraction):
        d["policy"] = "fixed_fraction"
        d["fraction"] = p.fraction
    else:
        d["policy"] = "uniform_random"
        d["seed"] = p.seed
    return d


def _parse_price(d: dict, seed: int) -> market.PricePath:
    kind = d.get("kind", "deterministic")
    if kind == "deterministic":
        pts = tuple((int(t), float(p)) for t, p in d["points"])
        return market.DeterministicPath(pts, int(d.get("horizon", -1)))
    if kind == "gbm":
        return market.GBMPath(
            float(d["start"]),
            float(d.get("drift", 0.0)),
            float(d["volatility"]),
            int(d.get("seed", _derived_seed(seed, 0))),
            int(d["horizon"]),
        )
    raise ScenarioError(f"unknown price kind {kind!r}")


def _price_dict(p: market.PricePath) -> dict:
    if isinstance(p, market.GBMPath):
        return {
            "kind": "gbm",
            "start": p.start,
            "drift": p.drift,
            "volatility": p.volatility,
            "seed": p.seed,
            "horizon": p.horizon,
        }
    return {"kind": "deterministic", "points": [[t, v] for t, v in p.points], "horizon": p.horizon}


def _parse_scenario(data: dict, seed: Optional[int]) -> Scenario:
    seed = int(data.get("seed", 0) if seed is None else seed)
    if not 0 <= seed <= SEED_MASK:
        raise ScenarioError("seed must be an unsigned 64-bit integer")
    agents = tuple(
        AgentSpec(str(a.get("id", f"agent-{k:02d}")), _parse_policy(a, seed, k))
        for k, a in enumerate(data["agents"])
    )
    u = data["user"]
    sweep = data.get("sweep")
    return Scenario(
        name=str(data["name"]),
        pool=PoolConfig(_eth(data["pool"]["total_limit"]), _eth(data["pool"]["min_fill"])),
        agents=agents,
        user=UserConfig(
            str(u.get("id", "user")),
            _eth(u["collateral_eth"]),
            int(u["mint_tick"]),
            int(u["redeem_tick"]),
        ),
        price=_parse_price(data["price"], seed),
        seed=seed,
        sweep=None
        if sweep is None
        else SweepConfig(float(sweep["fill_lo"]), float(sweep["fill_hi"]), int(sweep["steps"])),
        backing_ratio=float(data.get("backing_ratio", 1.0)),
    )


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ReportIOError(f"cannot read scenario {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    return Scenario.from_dict(data, seed)


@dataclass(frozen=True)
class InvestorRow:
    investor_id: str
    filled: float
    fraction: float
    pool_pnl: float
    hold_pnl: float
    advantage: float
    slashed: bool


@dataclass(frozen=True)
class CurvePoint:
    fill: float
    pool_pnl: float
    hold_pnl: float


@dataclass(frozen=True)
class EthFlows:
    """ETH base units in and out of one episode."""

    user_collateral: int
    investor_principal: int
    user_payout: int
    investor_returned: int
    investor_rewards: int

    @property
    def balanced(self) -> bool:
        inflow = self.user_collateral + self.investor_principal
        return inflow == self.user_payout + self.investor_returned + self.investor_rewards


@dataclass(frozen=True)
class EpisodeReport:
    scenario: Scenario
    price_start: float
    price_end: float
    margin: float
    rows: tuple[InvestorRow, ...]
    peg_held: bool
    threshold: Optional[float]
    shortfall: Optional[float]
    excluded: tuple[str, ...] = ()
    eth: Optional[EthFlows] = None
    user_receives: Optional[Amount] = None
    stable_issued: Optional[Amount] = None
    curve: Optional[tuple[CurvePoint, ...]] = None
    sweep_threshold: Optional[float] = None
    pool: Optional[pool_mod.PoolState] = field(default=None, repr=False, compare=False)
    ledger: Optional[ledger_mod.LedgerState] = field(default=None, repr=False, compare=False)

    def row(self, investor_id: str) -> InvestorRow:
        for r in self.rows:
            if r.investor_id == investor_id:
                return r
        raise KeyError(investor_id)


class _Steps:
    """Tags any module error with the episode step that raised it."""

    def __init__(self):
        self.step = "start"

    def __call__(self, step: str) -> "_Steps":
        self.step = step
        return self

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, StablepoolError) and not isinstance(exc, EpisodeError):
            raise EpisodeError(self.step, exc) from exc
        return False


def run_episode(scenario: Scenario) -> EpisodeReport:
    """pool round -> mint -> price moves -> redeem + settle, fully seeded."""
    step = _Steps()
    cfg = scenario.pool
    nonces = random.Random(scenario.seed)

    with step("open_pool"):
        state = pool_mod.open_pool(cfg.total_limit, cfg.min_fill, pool_id=f"{scenario.name}/pool")

    secrets: list[tuple[str, Amount, bytes]] = []
    with step("commit"):
        for agent in scenario.agents:
            # agents never see other fills: capacity is the whole pool
            fill = market.decide_fill(agent.policy, cfg.total_limit, cfg.min_fill)
            if not fill:
                continue
            nonce = nonces.randbytes(pool_mod.NONCE_BYTES)
            state = pool_mod.commit(state, agent.investor_id, pool_mod.commitment_digest(fill, nonce, agent.investor_id))
            secrets.append((agent.investor_id, fill, nonce))

    with step("close_commits"):
        state = pool_mod.close_commits(state)

    excluded = [a.investor_id for a in scenario.agents if a.investor_id not in {s[0] for s in secrets}]
    with step("reveal"):
        for investor_id, fill, nonce in secrets:
            try:
                state = pool_mod.reveal(state, investor_id, fill, nonce)
            except OverfillError:
                excluded.append(investor_id)

    with step("activate"):
        state = pool_mod.activate(state)

    with step("mint"):
        p0 = market.next_price(scenario.price, scenario.user.mint_tick)
        book = ledger_mod.new_ledger(scenario.backing_ratio)
        book, batch = ledger_mod.mint(
            book, scenario.user.user_id, scenario.user.collateral_eth, p0, state, tick=scenario.user.mint_tick
        )

    with step("redeem"):
        p1 = market.next_price(scenario.price, scenario.user.redeem_tick)
        book, redemption = ledger_mod.redeem(book, batch.batch_id, p1, tick=scenario.user.redeem_tick)

    settled = redemption.pool
    report = settled.settlement
    flows = EthFlows(
        user_collateral=batch.collateral_eth.base_units,
        investor_principal=settled.revealed_total.base_units,
        user_payout=redemption.user_receives.base_units,
        investor_returned=report.eth_returned.base_units,
        investor_rewards=report.eth_rewarded.base_units,
    )
    if not flows.balanced:
        raise EpisodeError("conservation", AssertionError(f"ETH not conserved: {flows}"))

    margin = float(redemption.margin)
    rows = []
    for r in report.per_investor:
        filled = float(r.principal)
        pool_pnl = float(r.reward_or_loss)
        hold_pnl = incentive.hold_baseline(filled, p0, p1)
        rows.append(InvestorRow(r.investor_id, filled, r.fraction, pool_pnl, hold_pnl, pool_pnl - hold_pnl, r.slashed))
    rows.sort(key=lambda r: r.investor_id)
    fills = [r.filled for r in rows]

    return EpisodeReport(
        scenario=scenario,
        price_start=p0,
        price_end=p1,
        margin=margin,
        rows=tuple(rows),
        peg_held=redemption.peg_held,
        threshold=incentive.curve_threshold(fills, margin, p0, p1) if margin else None,
        shortfall=float(redemption.shortfall) if report.insolvent else None,
        excluded=tuple(sorted(excluded)),
        eth=flows,
        user_receives=redemption.user_receives,
        stable_issued=batch.stable_issued,
        pool=settled,
        ledger=book,
    )


def sweep_curve(
    background: list[float], total_limit: float, margin: float, price_start: float, price_end: float, fills
) -> list[CurvePoint]:
    bg = [(f"bg{k}", f) for k, f in enumerate(background)]
    out = []
    for x in fills:
        x = float(x)
        inp = incentive.DistributionInput(tuple(bg) + (("marginal", x),), total_limit, margin)
        out.append(CurvePoint(x, incentive.pool_return("marginal", inp), incentive.hold_baseline(x, price_start, price_end)))
    return out


def run_sweep(scenario: Scenario) -> EpisodeReport:
    """Episode plus the newcomer curve and its hold-crossing threshold."""
    if scenario.sweep is None:
        raise NoSweepError(f"scenario {scenario.name!r} has no sweep configured")
    report = run_episode(scenario)
    background = [r.filled for r in report.rows]
    total_limit = float(scenario.pool.total_limit)
    capacity = total_limit - math.fsum(background)
    lo = scenario.sweep.fill_lo
    hi = min(scenario.sweep.fill_hi, capacity)
    if not lo < hi:
        raise EpisodeError(
            "sweep", ScenarioError(f"pool has {capacity} ETH left, sweep starts at {lo}")
        )
    grid = np.linspace(lo, hi, scenario.sweep.steps)
    curve = sweep_curve(background, total_limit, report.margin, report.price_start, report.price_end, grid)
    query = incentive.ThresholdQuery(
        tuple(background), total_limit, report.price_start, report.price_end, report.margin, (lo, hi)
    )
    return replace(report, curve=tuple(curve), sweep_threshold=incentive.find_threshold(query))


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def manifest(report: EpisodeReport) -> dict:
    return {
        "artifact": "stablepool",
        "version": __version__,
        "seed": report.scenario.seed,
        "generators": {
            "price": market.PRICE_GENERATOR,
            "agents": market.AGENT_GENERATOR,
            "nonces": NONCE_GENERATOR,
        },
        "scenario": report.scenario.to_dict(),
        "summary": {
            "price_start": report.price_start,
            "price_end": report.price_end,
            "margin": report.margin,
            "peg_held": report.peg_held,
            "threshold": report.threshold,
            "sweep_threshold": report.sweep_threshold,
            "shortfall": report.shortfall,
            "excluded": list(report.excluded),
            "user_receives_wei": None if report.user_receives is None else report.user_receives.base_units,
            "stable_issued_base_units": None if report.stable_issued is None else report.stable_issued.base_units,
        },
    }


def export_report(report: EpisodeReport, directory) -> list[Path]:
    """Write episode.csv, curve.csv (sweeps only) and manifest.json."""
    directory = Path(directory)
    written = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "episode.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EPISODE_COLUMNS)
            for r in report.rows:
                w.writerow(
                    [r.investor_id, _fmt(r.filled), _fmt(r.fraction), _fmt(r.pool_pnl), _fmt(r.hold_pnl),
                     _fmt(r.advantage), str(r.slashed).lower()]
                )
        written.append(path)
        if report.curve is not None:
            path = directory / "curve.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CURVE_COLUMNS)
                for c in report.curve:
                    w.writerow([_fmt(c.fill), _fmt(c.pool_pnl), _fmt(c.hold_pnl)])
            written.append(path)
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest(report), indent=2, sort_keys=True) + "\n")
        written.append(path)
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {directory}: {exc.strerror or exc}") from exc
    return written
