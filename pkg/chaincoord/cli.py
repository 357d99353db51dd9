"""
`chaincoord` command line.

    chaincoord run --scenario scenarios/quiet-default.scenario [--seed N] [--format json|csv] [--out PATH]
    chaincoord finality --q 0.1 --z 6 [--trials 100000]
    chaincoord strength --bits 256 [--truncate 160] --property preimage --model classical
    chaincoord compare --scenario scenarios/fifty-sidechains.scenario
    chaincoord table
    chaincoord cost [--pin-interval 3600] [--sidechains 1,10,50]

Exit status: 0 on success, 1 on invalid input, 2 on an internal invariant violation.
"""

import argparse
import logging
import sys
from typing import List, Optional

import pandas as pd

from chaincoord.config import get_settings
from chaincoord.errors import ChainCoordError, InvariantViolation
from chaincoord.finality import catchup_probability, finality_table
from chaincoord.gas import DEFAULT_GAS_SCHEDULE, GWEI, REFERENCE_ETH_PRICE, cost_table
from chaincoord.reports import ReportFormat, comparison_frame, emit, render
from chaincoord.scenario import load_scenario
from chaincoord.simulator import compare_strategies, run
from chaincoord.strength import Digest, Model, Property, Signature, StrengthQuery, phaseout_check, strength_bits, strength_table

logger = logging.getLogger("chaincoord")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INVARIANT = 2


class InvalidArguments(ChainCoordError):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors share the invalid-input exit status"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = _Parser(prog="chaincoord", description="Coordination-chain and sidechain simulator")
    parser.add_argument("--log-level", default=settings.log_level)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output_options(p):
        p.add_argument("--format", choices=[f.value for f in ReportFormat], default=settings.report_format)
        p.add_argument("--out", help="write the report to this file instead of standard output")

    p = sub.add_parser("run", help="run a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    output_options(p)

    p = sub.add_parser("finality", help="attacker catch-up probability, optionally checked by Monte Carlo")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--z", type=int, required=True)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    output_options(p)

    p = sub.add_parser("strength", help="security strength of one primitive")
    p.add_argument("--bits", type=int)
    p.add_argument("--truncate", type=int)
    p.add_argument("--scheme", help="signature scheme instead of a digest")
    p.add_argument("--property", required=True, choices=[e.value for e in Property])
    p.add_argument("--model", default=Model.CLASSICAL.value, choices=[e.value for e in Model])
    output_options(p)

    p = sub.add_parser("compare", help="direct versus hierarchical pinning")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    output_options(p)

    p = sub.add_parser("table", help="security-strength table of the default primitives")
    output_options(p)

    p = sub.add_parser("cost", help="yearly pinning cost table")
    p.add_argument("--pin-interval", type=float, action="append", dest="pin_intervals")
    p.add_argument("--sidechains", type=_int_list, default=[1, 10, 50])
    p.add_argument("--gas-price-gwei", type=float, default=5.95)
    p.add_argument("--eth-price", type=float, default=REFERENCE_ETH_PRICE)
    output_options(p)
    return parser


def _cmd_run(args) -> str:
    report = run(load_scenario(args.scenario), args.seed)
    return render(report, args.format)


def _cmd_finality(args) -> str:
    settings = get_settings()
    if args.trials > 0:
        frame = finality_table(
            [args.q], [args.z], args.trials, args.seed,
            settings.max_deficit, settings.monte_carlo_partitions, settings.monte_carlo_workers,
        )
    else:
        frame = pd.DataFrame([{"q": args.q, "z": args.z, "analytic_p": catchup_probability(args.q, args.z)}])
    return render(frame, args.format)


def _cmd_strength(args) -> str:
    if args.scheme:
        primitive = Signature(args.scheme)
    elif args.bits:
        primitive = Digest(args.bits, args.truncate)
    else:
        raise InvalidArguments("give --bits or --scheme")
    bits = strength_bits(StrengthQuery(primitive, Property(args.property), Model(args.model)))
    frame = pd.DataFrame([{
        "primitive": primitive.label,
        "property": args.property,
        "model": args.model,
        "bits": bits,
        "verdict": phaseout_check(bits).value,
    }])
    return render(frame, args.format)


def _cmd_compare(args) -> str:
    rows = compare_strategies(load_scenario(args.scenario), args.seed)
    return render(comparison_frame(rows) if args.format != "json" else rows, args.format)


def _cmd_table(args) -> str:
    return render(strength_table(), args.format)


def _cmd_cost(args) -> str:
    frame = cost_table(
        DEFAULT_GAS_SCHEDULE,
        pin_intervals=args.pin_intervals or [3600.0],
        sidechain_counts=args.sidechains,
        gas_price=args.gas_price_gwei * GWEI,
        eth_price=args.eth_price,
    )
    return render(frame, args.format)


COMMANDS = {
    "run": _cmd_run,
    "finality": _cmd_finality,
    "strength": _cmd_strength,
    "compare": _cmd_compare,
    "table": _cmd_table,
    "cost": _cmd_cost,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        text = COMMANDS[args.command](args)
    except InvariantViolation as e:
        logger.error(f"Invariant violation: {e}")
        return EXIT_INVARIANT
    except ChainCoordError as e:
        logger.error(str(e))
        return EXIT_INVALID
    emit(text, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
