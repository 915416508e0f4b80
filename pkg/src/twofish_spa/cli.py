"""Command line: ``twofish-spa {trace,attack,bench}`` and ``--dump-tables``."""

from __future__ import annotations

import argparse
import sys

from .attack import ExactAttackError, attack_exact, attack_multi, attack_noisy
from .bench import BenchConfig, emit_report, parse_sigmas, parse_taus, run_grid
from .schedule import SecretKey, dump_tables
from .tracesim import NoiseModel, TraceFormatError, read_trace, simulate_trace, write_trace

EXIT_FORMAT = 2


def _cmd_trace(args):
    if args.twofish_order:
        key = SecretKey.from_twofish_bytes(bytes.fromhex(args.key_hex))
    else:
        key = SecretKey.from_hex(args.key_hex)
    write_trace(simulate_trace(key, NoiseModel(args.sigma, args.seed)), args.out)
    return 0


def _cmd_attack(args):
    try:
        traces = [read_trace(args.trace)] + [read_trace(p) for p in args.multi or ()]
    except TraceFormatError as exc:
        print(f"trace format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    try:
        if args.exact:
            report = attack_exact(traces[0])
        elif len(traces) > 1:
            report = attack_multi(traces, args.tau, args.max_readings)
        else:
            report = attack_noisy(traces[0], args.tau)
    except ExactAttackError as exc:
        print(f"exact attack failed: {exc}", file=sys.stderr)
        return 1
    text = report.to_text()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_bench(args):
    config = BenchConfig(
        sigmas=parse_sigmas(args.sigmas),
        taus=parse_taus(args.taus),
        key_sizes=tuple(int(x) for x in args.key_sizes.split(",")),
        runs=1000 if args.full else args.runs,
        base_seed=args.seed,
        multi=args.multi,
        max_readings=args.max_readings,
    )

    def progress(cell):
        if not args.quiet:
            print(f"{cell.key_size:3d}-bit sigma={cell.sigma:<4g} tau={cell.tau} "
                  f"acc={100 * cell.accuracy:5.1f}% t={1e3 * cell.mean_runtime:.2f}ms", file=sys.stderr)

    result = run_grid(config, progress)
    emit_report(result, "csv", args.out)
    if args.markdown:
        emit_report(result, "markdown", args.markdown)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twofish-spa",
                                     description="Simple power analysis of the Twofish key schedule.")
    parser.add_argument("--dump-tables", action="store_true", help="print q0, q1 and P, then exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("trace", help="simulate a Hamming trace for a key")
    p.add_argument("--key-hex", required=True, help="key bytes m_0..m_{8R-1} in hex")
    p.add_argument("--twofish-order", action="store_true",
                   help="read --key-hex in standard Twofish byte order instead")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("attack", help="recover the key from trace file(s)")
    p.add_argument("--trace", required=True)
    p.add_argument("--tau", type=int, default=3, choices=range(9), metavar="{0..8}")
    p.add_argument("--multi", nargs="+", metavar="PATH", help="further readings of the same key")
    p.add_argument("--max-readings", type=int, default=5)
    p.add_argument("--exact", action="store_true", help="exhaustive search; trace must be noiseless")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("bench", help="accuracy/runtime sweep")
    p.add_argument("--sigmas", default="0:2:0.2")
    p.add_argument("--taus", default="0..8")
    p.add_argument("--key-sizes", default="128")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--full", action="store_true", help="1000 runs per cell")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multi", action="store_true")
    p.add_argument("--max-readings", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_tables:
        sys.stdout.write(dump_tables())
        return 0
    if args.command is None:
        parser.print_help()
        return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
