"""Command-line front end: run, validate, and compare."""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .config import (
    PRESET_NAMES,
    RunManifest,
    ScenarioValidationError,
    parse_scenario,
    scenario_hash,
)
from .engine import SimulationAbort, compare_modes, run
from .report import write_run_outputs

_MODES = ("siso", "mimo-precoded", "uncoordinated-ffr")
_MODE_SHORTHAND = {"siso": "siso", "mimo": "mimo-precoded",
                   "mimo-precoded": "mimo-precoded",
                   "uncoordinated": "uncoordinated-ffr",
                   "uncoordinated-ffr": "uncoordinated-ffr"}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", required=True,
                        help=f"scenario YAML path or preset name ({', '.join(PRESET_NAMES)})")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--duration", type=float, default=None,
                        help="override the run duration [s]")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="allow writing into an existing non-empty directory")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satmimo",
        description="Multi-satellite MU-MIMO downlink precoding simulator",
    )
    parser.add_argument("--version", action="version", version=f"satmimo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one or more modes and write reports")
    _add_common(p_run)
    p_run.add_argument("--mode", default="siso,mimo-precoded",
                       help="comma list of modes: siso, mimo-precoded, uncoordinated-ffr")

    p_val = sub.add_parser("validate", help="check a scenario file and list all violations")
    p_val.add_argument("--scenario", required=True)

    p_cmp = sub.add_parser("compare",
                           help="run siso and mimo-precoded back to back and summarize")
    _add_common(p_cmp)
    return parser


def _load(args) -> tuple:
    scenario = parse_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.duration is not None:
        scenario.duration_s = args.duration
    return scenario, scenario_hash(scenario)


def _prepare_out(args) -> str:
    out = args.out
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise SystemExit(f"error: output directory {out!r} is not empty (use --force)")
    os.makedirs(out, exist_ok=True)
    return out


def _execute(args, modes) -> int:
    try:
        scenario, cfg_hash = _load(args)
    except ScenarioValidationError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = _prepare_out(args)
    manifest = RunManifest(
        scenario=str(args.scenario), modes=tuple(modes), seed=scenario.seed,
        out_dir=out, tool_version=__version__, config_hash=cfg_hash,
    )
    reports = {}
    diagnostics = []
    status = 0
    for mode in modes:
        try:
            reports[mode] = run(scenario, mode)
        except SimulationAbort as exc:
            diagnostics.append(f"{mode}: aborted: {exc}")
            status = 2
            break
    comparison = None
    if "siso" in reports and "mimo-precoded" in reports:
        comparison = compare_modes(reports["siso"], reports["mimo-precoded"])
    write_run_outputs(out, manifest, scenario, reports, comparison,
                      figures=not args.no_figures, diagnostics=diagnostics)
    _print_summary(reports, comparison, diagnostics)
    return status


def _print_summary(reports, comparison, diagnostics) -> None:
    for mode, report in reports.items():
        mers = ", ".join(f"UT-{k + 1} {m:.2f} dB" for k, m in enumerate(report.mer_db))
        print(f"[{mode}] MER: {mers}; sum rate {report.sum_rate:.2f} bit/s/Hz; "
              f"decode={report.decode_ok}")
        if report.residual is not None:
            print(f"[{mode}] residual phase std {report.residual.std_deg:.2f} deg "
                  f"over {report.residual.n} samples")
    if comparison is not None:
        deltas = ", ".join(f"{d:+.2f} dB" for d in comparison.mer_delta_db)
        print(f"[compare] MER deltas: {deltas}; rate ratio "
              f"{comparison.rate_ratio:.2f} (sum {comparison.mimo_sum_rate:.2f} vs "
              f"best SISO {comparison.siso_reference_rate:.2f})")
    for line in diagnostics:
        print(f"[abort] {line}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            parse_scenario(args.scenario)
        except ScenarioValidationError as exc:
            for line in exc.errors:
                print(f"error: {line}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print("scenario OK")
        return 0
    if args.command == "run":
        modes = []
        for raw in str(args.mode).split(","):
            raw = raw.strip()
            if raw not in _MODE_SHORTHAND:
                print(f"error: unknown mode {raw!r}", file=sys.stderr)
                return 1
            canonical = _MODE_SHORTHAND[raw]
            if canonical not in modes:
                modes.append(canonical)
        return _execute(args, modes)
    if args.command == "compare":
        return _execute(args, ["siso", "mimo-precoded"])
    return 1


if __name__ == "__main__":
    sys.exit(main())
