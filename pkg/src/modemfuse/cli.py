"""Command line entry point: ``modemfuse {sweep,classify,tables,plotdata}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .channel import load_iq_block
from .classifier import EM_HML, classify_em_hml, classify_mom
from .constellation import DEFAULT_FORMATS, parse_candidates
from .em import EmOptions
from .errors import ConfigurationError, InputError, NumericError
from .experiment import (
    ExperimentConfig,
    ExperimentFailure,
    plot_series,
    read_results,
    results_to_csv,
    run_experiment,
    write_results,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modemfuse", description="Multi-radio EM hybrid-ML modulation classification.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sweep = sub.add_parser("sweep", help="run a Monte Carlo sweep from a JSON config")
    sweep.add_argument("--config", required=True, help="JSON experiment config")
    sweep.add_argument("--seed", type=int, help="override master_seed")
    sweep.add_argument("--trials", type=int, help="override trials per cell")
    sweep.add_argument("--out", help="results path (default: config output_path, else stdout)")
    sweep.add_argument("--format", choices=("csv", "json", "both"), default="csv")
    sweep.add_argument("--threads", type=int, help="worker processes (overrides MODEMFUSE_THREADS)")

    classify = sub.add_parser("classify", help="classify one IQ block")
    classify.add_argument("--iq", required=True, help="IQ CSV file (sensor,n,re,im)")
    classify.add_argument("--candidates", default=",".join(DEFAULT_FORMATS))
    classify.add_argument("--method", choices=("em", "mom"), default="em")
    classify.add_argument("--delta", type=float, default=1e-4)

    tables = sub.add_parser("tables", help="iteration and Pc tables at 0 and 5 dB for two stop deltas")
    tables.add_argument("--trials", type=int, default=1000)
    tables.add_argument("--seed", type=int, default=0)
    tables.add_argument("--threads", type=int)
    tables.add_argument("--out", help="also write the underlying results CSV here")

    plot = sub.add_parser("plotdata", help="emit Pc-vs-SNR series from a results file")
    plot.add_argument("--results", required=True)
    return parser


def _cmd_sweep(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        config = replace(config, **overrides)
    out = args.out or config.output_path
    try:
        results = run_experiment(config, threads=args.threads, progress=args.verbose)
    except ExperimentFailure as exc:
        if out and exc.results:
            write_results(exc.results, out, args.format)
        print(f"modemfuse: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if out:
        for path in write_results(results, out, args.format):
            print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(results_to_csv(results))
    return EXIT_OK


def _cmd_classify(args) -> int:
    block = load_iq_block(args.iq)
    specs = parse_candidates(args.candidates)
    if args.method == "em":
        result = classify_em_hml(block, specs, EmOptions(stop_delta=args.delta))
    else:
        result = classify_mom(block, specs)
    print(f"sensors={block.sensor_count} samples={block.block_length} method={result.method_tag}")
    for index, (spec, llf) in enumerate(zip(specs, result.per_hypothesis_llf)):
        extra = ""
        if result.per_hypothesis_em is not None:
            em = result.per_hypothesis_em[index]
            extra = f" iterations={em.iterations}"
        print(f"{spec.format_id}\tllf={llf:.6f}{extra}")
    print(f"decision: {specs[result.decision_index].format_id}")
    return EXIT_OK


def _format_tables(results) -> str:
    lines = []
    sensor_counts = sorted({r.L for r in results})
    for snr in sorted({r.snr_db for r in results}):
        lines.append(f"SNR = {snr:g} dB")
        header = "delta     " + "".join(f"| L={L:<2d} Iter    Pc    " for L in sensor_counts)
        lines.append(header)
        lines.append("-" * len(header))
        for delta in sorted({r.delta for r in results}, reverse=True):
            row = f"{delta:<10.0e}"
            for L in sensor_counts:
                cell = next(r for r in results if (r.snr_db, r.L, r.delta) == (snr, L, delta))
                row += f"|     {cell.mean_iterations:5.0f} {cell.pc:6.3f}  "
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


def _cmd_tables(args) -> int:
    config = ExperimentConfig(snr_db_list=[0.0, 5.0], sensor_counts=[1, 2, 4], stop_deltas=[1e-4, 1e-3],
                              classifiers=[EM_HML], trials=args.trials, master_seed=args.seed)
    try:
        results = run_experiment(config, threads=args.threads)
    except ExperimentFailure as exc:
        print(f"modemfuse: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out:
        write_results(results, args.out)
    print(_format_tables(results))
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    sys.stdout.write(plot_series(read_results(args.results)))
    return EXIT_OK


COMMANDS = {"sweep": _cmd_sweep, "classify": _cmd_classify, "tables": _cmd_tables, "plotdata": _cmd_plotdata}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr, end="")
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, ConfigurationError) as exc:
        print(f"modemfuse: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"modemfuse: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
