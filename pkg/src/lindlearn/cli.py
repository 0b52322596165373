"""Command line: ``lindlearn {simulate, recover, shadows, figure}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from .experiment import (
    MissingTraceError,
    read_trace_files,
    recover_parameters,
    run_shadows,
    simulate_traces,
    write_fit_records,
    write_rows_csv,
    write_trace_files,
)
from .figures import MAX_EXACT_QUBITS, run_figure
from .interp import FitError
from .isolation import RecoveryError

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
MAX_DESK_QUBITS = 10

log = logging.getLogger("lindlearn")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config")
    common.add_argument("--seed", type=int, help="override master_seed")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--qubits", type=int, help="resize the model to N qubits")
    common.add_argument("--method", choices=("interp", "fd", "both"), default="both")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lindlearn", description="Lindbladian learning from time traces.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write one trace CSV per (observable, state) of the plan")
    rec = sub.add_parser("recover", parents=[common], help="fit traces and recover the planned parameters")
    rec.add_argument("--traces", type=Path, help="trace directory (default OUT/traces)")
    sub.add_parser("shadows", parents=[common], help="shadow estimates of Pauli overlaps of a channel")
    fig = sub.add_parser("figure", parents=[common], help="recovery-error data for fig2, fig3 or fig4")
    fig.add_argument("which", choices=("fig2", "fig3", "fig4"))
    fig.add_argument("--full-scale", action="store_true", help="allow 16 qubits (trajectory engine, hours)")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if overrides or args.qubits is not None:
        text = dump_config(cfg)
        cfg = parse_config(text, overrides)
    if args.qubits is not None:
        limit = 16 if getattr(args, "full_scale", False) else MAX_DESK_QUBITS
        if args.qubits > limit:
            raise ConfigError(f"--qubits {args.qubits} exceeds {limit}; pass --full-scale for the 16-qubit path")
        try:
            model = cfg.model.with_qubits(args.qubits)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cfg.model = model
        cfg.figure.qubits = [args.qubits]
        cfg = parse_config(dump_config(cfg))
    return cfg


def _cmd_simulate(cfg: ExperimentConfig, args) -> None:
    out = Path(cfg.output_dir) / "traces"
    traces = simulate_traces(cfg)
    paths = write_trace_files(traces, out)
    log.info("wrote %d trace files to %s", len(paths), out)


def _cmd_recover(cfg: ExperimentConfig, args) -> None:
    out = Path(cfg.output_dir)
    tdir = args.traces or out / "traces"
    if not tdir.is_dir():
        raise ConfigError(f"trace directory {tdir} does not exist")
    try:
        traces = read_trace_files(tdir, cfg.model.n)
    except ValueError as exc:
        raise ConfigError(f"cannot read traces in {tdir}: {exc}") from None
    reports, records = recover_parameters(cfg, traces, args.method)
    out.mkdir(parents=True, exist_ok=True)
    for method, rep in reports.items():
        rep.write_csv(out / f"recovery_{method}.csv")
        log.info("%s: max error %.3g over %d parameters", method, rep.max_error(), len(rep))
    if records:
        write_fit_records(records, out / "fits.jsonl")


def _cmd_shadows(cfg: ExperimentConfig, args) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    est = run_shadows(cfg, out / "overlaps.csv")
    log.info("wrote %d overlap estimates", len(est))


def _cmd_figure(cfg: ExperimentConfig, args) -> None:
    big = [n for n in cfg.figure.qubits if n > MAX_EXACT_QUBITS]
    if big and not args.full_scale:
        raise ConfigError(f"figure qubit counts {big} exceed {MAX_EXACT_QUBITS}; pass --full-scale")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = run_figure(args.which, cfg, progress=log.debug)
    write_rows_csv(res.rows, out / f"{res.name}.csv", res.columns)
    log.info("%s: %d rows in %.1f s", res.name, len(res.rows), res.seconds)


COMMANDS = {"simulate": _cmd_simulate, "recover": _cmd_recover, "shadows": _cmd_shadows, "figure": _cmd_figure}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, MissingTraceError) as exc:
        msg = exc.args[0] if isinstance(exc, MissingTraceError) else str(exc)
        print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, RecoveryError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
