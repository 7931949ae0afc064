"""Batch front-end: single runs, protocol x load sweeps, scenario validation.

Exit codes: 0 success, 2 scenario/argument validation failure, 3 I/O
failure. Output directory defaults to $LEOSIM_OUT, then the working
directory. All files are written atomically (temp file + rename).
"""
from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

from . import engine, metrics
from .routing import ProtocolKind
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3

GRID_HEADER = ("protocol,load,seed,pdr_pct,peak_cpu_pct,avg_cpu_pct,"
               "avg_mem_bytes,overhead_pct")


def _load_or_default(path: str | None) -> Scenario:
    if path is None:
        sc = Scenario()
        violations = sc.validate()
        if violations:
            raise ScenarioError(violations)
        return sc
    if not os.path.exists(path):
        raise ScenarioError([f"scenario: no such file {path!r}"])
    return load_scenario(path)


def _parse_protocols(raw: str) -> list[ProtocolKind]:
    out = []
    for name in raw.split(","):
        name = name.strip()
        try:
            out.append(ProtocolKind(name))
        except ValueError:
            raise ScenarioError(
                [f"protocols: unknown protocol {name!r} "
                 f"(choose from {', '.join(p.value for p in ProtocolKind)})"])
    return out


def _parse_loads(raw: str) -> list[float]:
    parts = raw.split(":")
    if len(parts) != 3:
        raise ScenarioError(["loads: expected START:STOP:STEP"])
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ScenarioError([f"loads: cannot parse {raw!r}"])
    if step <= 0 or start <= 0 or stop < start:
        raise ScenarioError([f"loads: bad range {raw!r}"])
    loads = []
    k = 0
    while True:
        v = round(start + k * step, 10)
        if v > stop + 1e-9:
            break
        loads.append(min(v, 1.0))
        k += 1
    for v in loads:
        if not 0.0 < v <= 1.0:
            raise ScenarioError([f"loads: load {v} outside (0, 1]"])
    return loads


def _out_dir(arg: str | None) -> str:
    d = arg or os.environ.get("LEOSIM_OUT") or os.getcwd()
    os.makedirs(d, exist_ok=True)
    return d


def cmd_run(args) -> int:
    try:
        scenario = _load_or_default(args.scenario)
        protocol = ProtocolKind(args.protocol)
        result = engine.run(scenario, protocol, args.load, args.seed)
    except ScenarioError as e:
        for v in e.violations:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        out = _out_dir(args.out)
        metrics.export_summary(result.summary, os.path.join(out, "summary.v1"))
        metrics.export_series(result.samples, os.path.join(out, "series.csv"))
    except (metrics.IoFailure, OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {os.path.join(out, 'summary.v1')} and series.csv "
          f"(pdr {result.summary.pdr_pct:.2f}%)")
    return EXIT_OK


def _cell_name(protocol: str, load: float, seed: int) -> str:
    return f"summary_{protocol}_{load:.2f}_{seed}.v1"


def _run_cell(scenario: Scenario, protocol_value: str, load: float,
              seed: int) -> metrics.RunSummary:
    result = engine.run(scenario, ProtocolKind(protocol_value), load, seed)
    return result.summary


def grid_rows(summaries: list[metrics.RunSummary]) -> str:
    lines = [GRID_HEADER]
    ordered = sorted(summaries, key=lambda s: (s.protocol, s.load_fraction, s.seed))
    for s in ordered:
        lines.append(f"{s.protocol},{s.load_fraction:.2f},{s.seed},"
                     f"{s.pdr_pct:.2f},{s.peak_cpu_pct:.2f},{s.avg_cpu_pct:.2f},"
                     f"{s.avg_mem_bytes:.2f},{s.overhead_pct:.2f}")
    return "\n".join(lines) + "\n"


def run_grid(scenario: Scenario, protocols: list[ProtocolKind],
             loads: list[float], seeds: list[int], out: str,
             jobs: int = 0, resume: bool = False,
             progress=None) -> list[metrics.RunSummary]:
    """Run (or resume) a full sweep; returns all cell summaries."""
    cells = [(p.value, load, seed)
             for p in protocols for load in loads for seed in seeds]
    summaries: list[metrics.RunSummary] = []
    todo = []
    for proto, load, seed in cells:
        cell_path = os.path.join(out, _cell_name(proto, load, seed))
        if resume and os.path.exists(cell_path):
            try:
                summaries.append(metrics.load_summary(cell_path))
                continue
            except (ValueError, KeyError, OSError):
                pass
        todo.append((proto, load, seed))
    workers = jobs if jobs > 0 else (os.cpu_count() or 1)
    if len(todo) <= 1 or workers == 1:
        done_iter = (_run_cell(scenario, p, l, s) for p, l, s in todo)
        for summary in done_iter:
            metrics.export_summary(summary, os.path.join(
                out, _cell_name(summary.protocol, summary.load_fraction, summary.seed)))
            summaries.append(summary)
            if progress:
                progress(summary)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, scenario, p, l, s)
                       for p, l, s in todo]
            for fut in concurrent.futures.as_completed(futures):
                summary = fut.result()
                metrics.export_summary(summary, os.path.join(
                    out, _cell_name(summary.protocol, summary.load_fraction,
                                    summary.seed)))
                summaries.append(summary)
                if progress:
                    progress(summary)
    return summaries


def cmd_compare(args) -> int:
    try:
        scenario = _load_or_default(args.scenario)
        protocols = _parse_protocols(args.protocols)
        loads = _parse_loads(args.loads)
        if args.seeds < 1:
            raise ScenarioError(["seeds: must be >= 1"])
        seeds = list(range(1, args.seeds + 1))
    except ScenarioError as e:
        for v in e.violations:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        out = _out_dir(args.out)

        def progress(s: metrics.RunSummary) -> None:
            print(f"done {s.protocol} load={s.load_fraction:.2f} "
                  f"seed={s.seed} pdr={s.pdr_pct:.2f}", flush=True)

        summaries = run_grid(scenario, protocols, loads, seeds, out,
                             jobs=args.jobs, resume=args.resume,
                             progress=progress)
        metrics._atomic_write(os.path.join(out, "grid.csv"), grid_rows(summaries))
    except ScenarioError as e:
        for v in e.violations:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except (metrics.IoFailure, OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {os.path.join(out, 'grid.csv')} ({len(summaries)} cells)")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        if args.scenario is None:
            scenario, errors = Scenario(), []
        else:
            if not os.path.exists(args.scenario):
                print(f"error: scenario: no such file {args.scenario!r}",
                      file=sys.stderr)
                return EXIT_VALIDATION
            with open(args.scenario) as f:
                from .scenario import parse_scenario
                scenario, errors = parse_scenario(f.read())
        errors.extend(scenario.validate())
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    if errors:
        for v in errors:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    sys.stdout.write(scenario.effective_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leosim",
        description="Deterministic LEO constellation routing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one (protocol, load, seed) cell")
    p_run.add_argument("--scenario", default=None)
    p_run.add_argument("--protocol", required=True,
                       choices=[p.value for p in ProtocolKind])
    p_run.add_argument("--load", type=float, required=True)
    p_run.add_argument("--seed", type=int, default=1)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run a protocol x load x seed sweep")
    p_cmp.add_argument("--scenario", default=None)
    p_cmp.add_argument("--protocols",
                       default=",".join(p.value for p in ProtocolKind))
    p_cmp.add_argument("--loads", default="0.1:1.0:0.1")
    p_cmp.add_argument("--seeds", type=int, default=3)
    p_cmp.add_argument("--jobs", type=int, default=0,
                       help="parallel runs (default: CPU count)")
    p_cmp.add_argument("--resume", action="store_true",
                       help="skip cells with existing summaries")
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="validate and echo a scenario")
    p_val.add_argument("--scenario", default=None)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
