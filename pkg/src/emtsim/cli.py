"""
Command-line driver::

    emt-sim run circuit.net -o out.csv [--dt0 S] [--dt-min S] [--dt-max S]
                [--lte-tol X] [--nr-max-iter N] [--probe NAME,...]
                [--dump-matrix PREFIX] [--dc-only]

Exit codes: 0 success, 1 usage or netlist error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import List, Optional, Sequence

from .engine import Simulator, SolverConfig, SolverError, Waveforms
from .mna import write_matrix_market
from .netlist import NetlistError, parse_netlist, parse_value, validate

EXIT_OK = 0
EXIT_NETLIST = 1
EXIT_SOLVER = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _positive_float(text: str) -> float:
    try:
        value = parse_value(text)
    except NetlistError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emt-sim", description="Electromagnetic transient circuit simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="simulate a netlist and write CSV waveforms")
    run.add_argument("netlist", help="netlist file")
    run.add_argument("-o", "--output", help="CSV output path (default: stdout)")
    run.add_argument("--dt0", type=_positive_float, help="initial time step [s]")
    run.add_argument("--dt-min", type=_positive_float, help="smallest time step [s]")
    run.add_argument("--dt-max", type=_positive_float, help="largest time step [s]")
    run.add_argument("--lte-tol", type=_positive_float, help="local truncation error tolerance")
    run.add_argument("--nr-max-iter", type=_positive_int, help="Newton-Raphson iteration limit")
    run.add_argument("--probe", help="comma-separated output columns (unknowns or derived)")
    run.add_argument("--dump-matrix", metavar="PREFIX",
                     help="write the first-step Y and J as PREFIX_Y.mtx / PREFIX_J.mtx")
    run.add_argument("--dc-only", action="store_true", help="stop after the DC operating point")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def write_csv(stream, wf: Waveforms, columns: Sequence[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["time", *columns])
    data = wf.matrix(columns)
    for row in data:
        writer.writerow([format(float(v), ".17g") for v in row])


def _run(args) -> int:
    try:
        with open(args.netlist, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"emt-sim: cannot read {args.netlist}: {exc}", file=sys.stderr)
        return EXIT_NETLIST

    try:
        circuit = parse_netlist(text)
        overrides = {
            "dt0": args.dt0,
            "dt_min": args.dt_min,
            "dt_max": args.dt_max,
            "lte_tol": args.lte_tol,
        }
        changes = {k: v for k, v in overrides.items() if v is not None}
        if changes:
            circuit = circuit.with_tran(**changes)
        circuit = validate(circuit)
    except NetlistError as exc:
        print(f"emt-sim: {args.netlist}: {exc}", file=sys.stderr)
        return EXIT_NETLIST

    cfg_kw = {}
    if args.nr_max_iter is not None:
        if args.nr_max_iter < 2:
            print("emt-sim: --nr-max-iter must be at least 2", file=sys.stderr)
            return EXIT_NETLIST
        cfg_kw["nr_max_iter"] = args.nr_max_iter
    cfg = SolverConfig.from_circuit(circuit, **cfg_kw)
    sim = Simulator(circuit, cfg)
    wf = sim.new_waveforms()

    columns: List[str] = list(wf.names)
    if args.probe:
        columns = [c.strip() for c in args.probe.split(",") if c.strip()]
        unknown = [c for c in columns if c not in wf.columns]
        if unknown:
            print(f"emt-sim: unknown probe(s): {', '.join(unknown)}; available: {', '.join(wf.columns)}",
                  file=sys.stderr)
            return EXIT_NETLIST

    try:
        if args.dc_only or args.dump_matrix:
            state = sim.dc_operating_point()
            if args.dump_matrix:
                y, j = sim.system(state, cfg.dt0, state.x)
                write_matrix_market(args.dump_matrix, y, j)
        if args.dc_only:
            sim.record(wf, state, 0.0, 0, None)
        else:
            wf = sim.run()
    except SolverError as exc:
        when = getattr(exc, "time", 0.0)
        print(f"emt-sim: solver failure at t = {when!r} s: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_csv(fh, wf, columns)
    else:
        write_csv(sys.stdout, wf, columns)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NETLIST
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
