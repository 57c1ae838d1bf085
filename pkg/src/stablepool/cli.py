"""Command line entry point.

Subcommands: ``simulate``, ``sweep``, ``distribute`` and ``hash-commit``.
On failure the exit status is non-zero and stderr carries one JSON line
``{"error": <category>, "message": ...}``.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from . import harness, incentive, pool
from .errors import DomainError, StablepoolError
from .money import Amount, Currency

EXIT_USAGE = 2
EXIT_FAILURE = 1


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _fill(text: str) -> tuple[Optional[str], float]:
    if "=" in text:
        name, _, amount = text.partition("=")
        return name, float(amount)
    return None, float(text)


def _print_episode(report: harness.EpisodeReport) -> None:
    print(f"scenario {report.scenario.name}: price {report.price_start!r} -> {report.price_end!r}, "
          f"margin {report.margin!r}, peg_held={str(report.peg_held).lower()}")
    for r in report.rows:
        print(f"  {r.investor_id}: filled={r.filled!r} fraction={r.fraction:.6f} "
              f"pool={r.pool_pnl:.6f} hold={r.hold_pnl:.6f} advantage={r.advantage:+.6f}"
              + (" slashed" if r.slashed else ""))
    if report.shortfall is not None:
        print(f"  insolvent: shortfall {report.shortfall!r}")
    if report.threshold is not None:
        print(f"  pool-curve threshold: {report.threshold!r}")
    if report.curve is not None:
        print(f"  sweep threshold: {report.sweep_threshold!r}")


def cmd_simulate(args) -> int:
    scenario = harness.load_scenario(args.scenario, args.seed)
    report = harness.run_episode(scenario)
    _print_episode(report)
    if args.out:
        for p in harness.export_report(report, args.out):
            print(f"wrote {p}")
    return 0


def cmd_sweep(args) -> int:
    scenario = harness.load_scenario(args.scenario, args.seed)
    report = harness.run_sweep(scenario)
    _print_episode(report)
    if args.out:
        for p in harness.export_report(report, args.out):
            print(f"wrote {p}")
    return 0


def cmd_distribute(args) -> int:
    fills = tuple((name or f"i{k}", amount) for k, (name, amount) in enumerate(args.fill))
    inp = incentive.DistributionInput(fills, args.limit, args.amount)
    result = incentive.compute_distribution(inp)
    out = {
        "lsum": result.lsum,
        "per_investor": [
            {
                "investor_id": s.investor_id,
                "filled": s.filled,
                "raw_incentive": s.raw_incentive,
                "fraction": s.fraction,
                "final_incentive": s.final_incentive,
            }
            for s in result.per_investor
        ],
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_hash_commit(args) -> int:
    if args.base_units:
        amount = Amount(int(args.amount), Currency.ETH)
    else:
        amount = Amount.of(args.amount, Currency.ETH)
    try:
        nonce = bytes.fromhex(args.nonce)
    except ValueError as exc:
        raise DomainError(f"nonce is not hex: {exc}") from exc
    print(pool.commitment_digest(amount, nonce, args.id).hex())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablepool", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (
        ("simulate", cmd_simulate, "run one episode from a scenario file"),
        ("sweep", cmd_sweep, "run an episode plus the pool-vs-hold fill sweep"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=_seed, default=None, help="override the scenario seed")
        p.add_argument("--out", default=None, help="directory for episode.csv / curve.csv / manifest.json")
        p.set_defaults(func=fn)

    p = sub.add_parser("distribute", help="split an amount over fills")
    p.add_argument("--fill", type=_fill, action="append", required=True,
                   help="fill in ETH, optionally named: --fill a=2")
    p.add_argument("--limit", type=float, required=True, help="pool total limit in ETH")
    p.add_argument("--amount", type=float, required=True, help="amount to distribute (may be negative)")
    p.set_defaults(func=cmd_distribute)

    p = sub.add_parser("hash-commit", help="print a commitment digest")
    p.add_argument("--amount", required=True, help="ETH amount (decimal), or wei with --base-units")
    p.add_argument("--base-units", action="store_true")
    p.add_argument("--nonce", default="00" * 32, help="32-byte nonce as hex")
    p.add_argument("--id", required=True, help="investor id")
    p.set_defaults(func=cmd_hash_commit)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StablepoolError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
