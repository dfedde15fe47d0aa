"""Command-line front end: validate, simulate, stability, plotdata.

Exit codes: 0 success, 2 usage or input error, 3 infeasible model,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .dispatch import (HorizonPolicy, NumericalFailure, WindowInfeasibleError,
                       dispatch_settings, fmt, read_schedule, run_simulation, write_schedule)
from .model import ScenarioFormatError, load_scenario, validate_scenario

log = logging.getLogger("gridforge")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}


class InputError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    scenario_path: str | None = None
    scenario_sha256: str | None = None
    tool_version: str = __version__
    settings: dict = field(default_factory=dict)
    horizon_policy: dict = field(default_factory=dict)
    arguments: dict = field(default_factory=dict)
    started: str = field(default_factory=_now)
    finished: str | None = None
    outcome: dict = field(default_factory=lambda: {"status": "running"})

    def write(self, out: Path) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        p = out / "manifest.json"
        p.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return p

    def finish(self, out: Path, status: str, exit_code: int, **extra) -> None:
        self.finished = _now()
        self.outcome = {"status": status, "exit_code": exit_code, **extra}
        self.write(out)


def _load(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"cannot read scenario file {path}")
    try:
        return load_scenario(p)
    except (ScenarioFormatError, json.JSONDecodeError, OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_valid(path: str):
    s = _load(path)
    report = validate_scenario(s)
    if not report.ok:
        for m in report.messages():
            print(m, file=sys.stderr)
        raise InputError(f"{path}: scenario has {len(report)} problem(s)")
    return s


# ----------------------------------------------------------------------

def cmd_validate(args) -> int:
    s = _load(args.scenario)
    report = validate_scenario(s)
    for m in report.messages():
        print(m)
    if report.ok:
        print(f"{args.scenario}: ok")
        return EXIT_OK
    return EXIT_INPUT


def cmd_simulate(args) -> int:
    try:
        hp = HorizonPolicy(args.window, args.overlap)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    s = _load_valid(args.scenario)
    overrides = {"gap_rel": args.gap}
    if args.backend:
        overrides["backend"] = args.backend
    try:
        settings = dispatch_settings(s, **overrides)
    except (TypeError, ValueError) as exc:
        raise InputError(f"solver settings: {exc}") from exc
    out = Path(args.out)
    man = RunManifest("simulate", str(Path(args.scenario).resolve()), file_sha256(args.scenario),
                      settings=asdict(settings),
                      horizon_policy={"window": hp.window, "overlap": hp.overlap, "step": hp.step},
                      arguments={"shed": args.shed, "hours": args.hours, "threads": args.threads})
    man.write(out)
    try:
        sched = run_simulation(s, hp, settings, shed=args.shed, hours=args.hours)
    except WindowInfeasibleError as exc:
        log.error("%s", exc)
        man.finish(out, "infeasible", EXIT_INFEASIBLE, window_index=exc.window_index,
                   window_start=exc.start, hint=exc.hint, message=str(exc))
        return EXIT_INFEASIBLE
    except NumericalFailure as exc:
        log.error("%s", exc)
        man.finish(out, "numerical_failure", EXIT_NUMERICAL, message=str(exc))
        return EXIT_NUMERICAL
    files = write_schedule(sched, s, out)
    man.finish(out, "ok", EXIT_OK, hours=len(sched), windows=len(sched.windows),
               window_runtime_s=[round(w["runtime_s"], 3) for w in sched.windows],
               total_cost=float(fmt(sched.total_cost)),
               files={p.name: file_sha256(p) for p in files})
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


def _require_dispatch(path: str) -> Path:
    d = Path(path)
    missing = [n for n in ("generators.csv", "aggregators.csv", "network.csv", "summary.json")
               if not (d / n).is_file()]
    if missing:
        raise InputError(f"dispatch directory {path} lacks {', '.join(missing)}")
    return d


def cmd_stability(args) -> int:
    from .stability.suite import load_patterns, run_stability_suite, write_report

    if args.top_k < 0:
        raise InputError("--top-k must be non-negative")
    d = _require_dispatch(args.dispatch)
    s = _load_valid(args.scenario)
    try:
        patterns = load_patterns(json.loads(Path(args.patterns).read_text()))
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"patterns file {args.patterns}: {exc}") from exc
    sched = read_schedule(d)
    missing = [h for h in sched.hours if h >= s.horizon]
    if missing:
        raise InputError("dispatch hours exceed the scenario horizon")
    out = Path(args.out)
    man = RunManifest("stability", str(Path(args.scenario).resolve()), file_sha256(args.scenario),
                      arguments={"dispatch": str(d.resolve()), "patterns": args.patterns,
                                 "top_k": args.top_k, "threads": args.threads})
    man.write(out)
    report = run_stability_suite(s, sched, patterns, args.top_k, args.threads)
    files = write_report(report, out)
    man.finish(out, "ok", EXIT_OK, unstable_hours=report.unstable_hours,
               files={p.name: file_sha256(p) for p in files})
    print(f"{len(report.hours)} hours analysed, {report.unstable_hours} non-convergent")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    d = _require_dispatch(args.dispatch)
    sched = read_schedule(d)
    labels = json.loads((d / "summary.json").read_text()).get("generator_labels", {})
    kinds = sorted(set(labels.values()) | {g for g in sched.gen_output if g not in labels})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def write(name, header, rows):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    gen_rows = []
    for r, h in enumerate(sched.hours):
        tot = dict.fromkeys(kinds, 0.0)
        for g, vals in sched.gen_output.items():
            tot[labels.get(g, g)] += vals[r]
        gen_rows.append([h, *[fmt(tot[k]) for k in kinds]])
    write("generation_by_kind.csv", ["hour", *kinds], gen_rows)
    write("flexible_demand.csv", ["hour", "p_flx"],
          [[h, fmt(sum(v[r] for v in sched.p_flx.values()))] for r, h in enumerate(sched.hours)])
    write("battery_power.csv", ["hour", "p_b"],
          [[h, fmt(sum(v[r] for v in sched.p_b.values()))] for r, h in enumerate(sched.hours)])
    print(f"wrote 3 files to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridforge", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="rolling-horizon market simulation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=72)
    p.add_argument("--overlap", type=int, default=48)
    p.add_argument("--gap", type=float, default=0.0, help="relative MIP gap")
    p.add_argument("--threads", type=int, default=1, help="accepted for symmetry; solves are single-threaded")
    p.add_argument("--backend", choices=("builtin", "highs"))
    p.add_argument("--hours", type=int, help="simulate only the first N hours")
    p.add_argument("--shed", action="store_true", help="allow load shedding at a penalty")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stability", help="power flow, N-1 margins and modal analysis")
    p.add_argument("--dispatch", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--patterns", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("plotdata", help="tidy CSVs for generation, flexible demand, battery power")
    p.add_argument("--dispatch", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plotdata)
    return ap


def configure_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("GRIDFORGE_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
