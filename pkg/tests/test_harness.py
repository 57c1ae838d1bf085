import csv
import json
import os
from pathlib import Path

import pytest

from stablepool import harness
from stablepool.errors import EpisodeError, NoSweepError, ReportIOError, ScenarioError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

# 50-digit oracle fractions for fills {2, 3} times margin 50
POOL_A, POOL_B = 17.779750867759775, 32.220249132240225


def load(name, seed=None):
    return harness.load_scenario(SCENARIOS / f"{name}.json", seed)


def flat_scenario():
    data = json.loads((SCENARIOS / "rising.json").read_text())
    data["price"] = {"kind": "deterministic", "points": [[0, 100], [3, 100]]}
    data["user"]["redeem_tick"] = 3
    return harness.Scenario.from_dict(data)


class TestEpisode:
    def test_flat_price(self):
        rep = harness.run_episode(flat_scenario())
        assert rep.peg_held
        assert rep.margin == 0
        assert all(r.pool_pnl == 0 and r.hold_pnl == 0 for r in rep.rows)
        assert rep.threshold is None

    def test_rising(self):
        rep = harness.run_episode(load("rising"))
        a, b = rep.row("a"), rep.row("b")
        assert rep.margin == 50
        assert a.pool_pnl == pytest.approx(POOL_A, abs=1e-6)
        assert b.pool_pnl == pytest.approx(POOL_B, abs=1e-6)
        assert (a.hold_pnl, b.hold_pnl) == (20, 30)
        assert a.advantage < 0 < b.advantage
        assert 2 < rep.threshold < 3
        assert rep.eth.balanced

    def test_falling(self):
        rep = harness.run_episode(load("falling"))
        a = rep.row("a")
        assert rep.margin == -50
        assert a.pool_pnl == pytest.approx(-POOL_A, abs=1e-6)
        assert abs(a.pool_pnl) < abs(a.hold_pnl)
        assert rep.peg_held

    def test_rows_sorted_and_advantage_exact(self):
        rep = harness.run_episode(load("gbm_mixed"))
        ids = [r.investor_id for r in rep.rows]
        assert ids == sorted(ids)
        for r in rep.rows:
            assert r.advantage == r.pool_pnl - r.hold_pnl

    def test_error_names_step(self):
        data = json.loads((SCENARIOS / "rising.json").read_text())
        data["user"]["collateral_eth"] = "50"
        with pytest.raises(EpisodeError) as info:
            harness.run_episode(harness.Scenario.from_dict(data))
        assert info.value.step == "mint"
        assert info.value.category == "insufficient_backing"

    def test_overfilling_agent_excluded(self):
        data = json.loads((SCENARIOS / "rising.json").read_text())
        data["agents"].append({"id": "c", "policy": "max_fill", "budget": "4"})
        rep = harness.run_episode(harness.Scenario.from_dict(data))
        assert rep.excluded == ("c",)
        assert [r.investor_id for r in rep.rows] == ["a", "b"]

    def test_insolvent_episode(self):
        data = json.loads((SCENARIOS / "rising.json").read_text())
        data["price"]["points"] = [[0, 100], [1, 40]]
        rep = harness.run_episode(harness.Scenario.from_dict(data))
        # margin -300, coverage 5 ETH * 40 = 200
        assert not rep.peg_held
        assert rep.shortfall == pytest.approx(100.0)
        assert all(r.slashed for r in rep.rows)
        assert rep.eth.balanced


class TestSweep:
    def test_requires_sweep(self):
        with pytest.raises(NoSweepError):
            harness.run_sweep(load("rising"))

    def test_curve(self):
        rep = harness.run_sweep(load("sweep"))
        dp = rep.price_end - rep.price_start
        for c in rep.curve:
            assert c.hold_pnl == pytest.approx(c.fill * dp, rel=1e-15)
        signs = [c.pool_pnl > c.hold_pnl for c in rep.curve]
        flips = [k for k in range(1, len(signs)) if signs[k] != signs[k - 1]]
        assert len(flips) == 1
        k = flips[0]
        assert rep.curve[k - 1].fill < rep.sweep_threshold <= rep.curve[k].fill

    def test_zero_margin_sweep(self):
        data = json.loads((SCENARIOS / "sweep.json").read_text())
        data["price"]["points"] = [[0, 100], [1, 100]]
        rep = harness.run_sweep(harness.Scenario.from_dict(data))
        assert rep.sweep_threshold is None
        assert all(c.pool_pnl == 0 for c in rep.curve)


class TestScenario:
    def test_round_trip(self):
        sc = load("gbm_mixed")
        again = harness.Scenario.from_dict(sc.to_dict())
        assert again == sc

    def test_seed_override(self):
        a, b = load("gbm_mixed"), load("gbm_mixed", seed=5)
        assert b.seed == 5
        assert a.price.seed != b.price.seed

    @pytest.mark.parametrize(
        "patch",
        [
            {"user": {"collateral_eth": "1", "mint_tick": 1, "redeem_tick": 1}},
            {"user": {"collateral_eth": "1", "mint_tick": 0, "redeem_tick": 9}},
            {"agents": []},
            {"pool": {"total_limit": "5"}},
            {"sweep": {"fill_lo": 0.5, "fill_hi": 2, "steps": 10}},
            {"price": {"kind": "bogus"}},
        ],
    )
    def test_invalid(self, patch):
        data = json.loads((SCENARIOS / "rising.json").read_text())
        data.update(patch)
        with pytest.raises(ScenarioError):
            harness.Scenario.from_dict(data)


class TestExport:
    def test_files(self, tmp_path):
        rep = harness.run_episode(load("rising"))
        paths = harness.export_report(rep, tmp_path)
        assert sorted(p.name for p in paths) == ["episode.csv", "manifest.json"]
        rows = list(csv.DictReader((tmp_path / "episode.csv").open()))
        assert tuple(rows[0]) == harness.EPISODE_COLUMNS
        for r in rows:
            assert float(r["advantage"]) == float(r["pool_pnl"]) - float(r["hold_pnl"])
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["seed"] == 7 and m["generators"]["price"]
        assert m["scenario"]["name"] == "rising"

    def test_sweep_files(self, tmp_path):
        paths = harness.export_report(harness.run_sweep(load("sweep")), tmp_path)
        assert sorted(p.name for p in paths) == ["curve.csv", "episode.csv", "manifest.json"]
        head = (tmp_path / "curve.csv").read_text().splitlines()[0]
        assert head == "fill,pool_pnl,hold_pnl"

    def test_byte_identical(self, tmp_path):
        for d in ("one", "two"):
            harness.export_report(harness.run_sweep(load("sweep")), tmp_path / d)
            harness.export_report(harness.run_episode(load("gbm_mixed")), tmp_path / d / "gbm")
        for name in ("episode.csv", "curve.csv", "manifest.json", "gbm/episode.csv", "gbm/manifest.json"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    @pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
    def test_unwritable(self, tmp_path):
        locked = tmp_path / "locked"
        locked.mkdir()
        locked.chmod(0o500)
        with pytest.raises(ReportIOError, match="locked"):
            harness.export_report(harness.run_episode(load("rising")), locked)

    def test_path_is_a_file(self, tmp_path):
        target = tmp_path / "file"
        target.write_text("x")
        with pytest.raises(ReportIOError, match=str(target)):
            harness.export_report(harness.run_episode(load("rising")), target)
