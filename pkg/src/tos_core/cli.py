"""Command line entry point.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .billing import load_tariffs
from .config import load_config
from .edifact import inspect
from .engine import restore, run_scenario, snapshot, write_outputs
from .errors import TosError, ValidationError
from .generator import generate_reference
from .reporting import (
    ArchivePolicy,
    compute_kpis,
    export_longterm,
    import_longterm,
    partition_archive,
)
from .scenario import load_scenario
from .security import Decision, authorize
from .util import parse_time, to_seconds

log = logging.getLogger("tos")


def _check(user: str | None, command: str, users: dict[str, str]) -> None:
    if user is None:
        return
    if authorize(user, command, users) is Decision.DENY:
        raise ValidationError(f"user {user} may not run {command}")


def cmd_run(args) -> int:
    config = load_config(args.layout)
    _check(args.user, "run", config.users)
    default, contracts = load_tariffs(Path(args.tariffs).read_text(encoding="utf-8"))
    scenario = load_scenario(args.scenario)
    stop = parse_time(args.snapshot_at) if args.snapshot_at else None
    engine = run_scenario(scenario, config, default, contracts, seed=args.seed, stop_at=stop)
    out = Path(args.out)
    if stop is not None and not engine.finished:
        out.mkdir(parents=True, exist_ok=True)
        (out / "engine.snapshot").write_bytes(snapshot(engine))
        log.info("snapshot after %d events written to %s", engine.cursor, out / "engine.snapshot")
        engine = run_scenario(scenario, config, default, contracts, seed=args.seed, engine=engine)
    write_outputs(engine.outputs(), out)
    (out / "engine.final.snapshot").write_bytes(snapshot(engine))
    print(f"{engine.cursor} events processed; outputs in {out}")
    return 0


def cmd_resume(args) -> int:
    engine = restore(Path(args.snapshot).read_bytes())
    scenario = load_scenario(args.scenario)
    engine = run_scenario(scenario, engine.cfg, engine.default_contract, engine.contracts, engine=engine)
    write_outputs(engine.outputs(), args.out)
    print(f"resumed; {engine.cursor} events processed; outputs in {args.out}")
    return 0


def cmd_validate_edi(args) -> int:
    report = inspect(Path(args.file).read_text(encoding="utf-8"))
    print(f"messages: {' '.join(report.message_types) or '-'}")
    print(f"segments: {report.segments}")
    print(f"records: {report.records}")
    for w in report.warnings:
        print(f"warning: {w}")
    return 0


def cmd_report(args) -> int:
    engine = restore(Path(args.snapshot).read_bytes())
    start_text, sep, end_text = args.period.partition("..")
    if not sep:
        raise ValidationError("period must look like START..END")
    start, end = to_seconds(parse_time(start_text)), to_seconds(parse_time(end_text))
    occupancy = {}
    from .yard import capacity_report
    for z in capacity_report(engine.yard, engine.layout):
        occupancy[z.zone] = (z.occupied, z.slots)
    history = engine.sim.history if engine.sim else []
    rtgs = [e.id for e in engine.cfg.equipment if e.kind.value == "Rtg"]
    sys.stdout.write(compute_kpis(history, occupancy, (start, end), rtgs).to_kv())
    return 0


def cmd_archive(args) -> int:
    now = parse_time(args.cutoff_now)
    records = import_longterm(Path(args.records).read_text(encoding="utf-8")) if args.records else []
    policy = ArchivePolicy(args.operational_years, args.longterm_years)
    parts = partition_archive(records, now, policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for tier in ("operational", "midterm", "longterm"):
        chosen = getattr(parts, tier)
        (out / f"{tier}.txt").write_text(export_longterm(chosen), encoding="utf-8", newline="\n")
        print(f"{tier}: {len(chosen)}")
    return 0


def cmd_generate(args) -> int:
    out = generate_reference(args.out, args.seed)
    print(f"reference scenario written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tos", description="Container terminal operations engine.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write the output directory")
    r.add_argument("--scenario", required=True, help="scenario event file")
    r.add_argument("--layout", required=True, help="terminal configuration file")
    r.add_argument("--tariffs", required=True, help="contracts and rates file")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=0, help="recorded only; planning is deterministic")
    r.add_argument("--snapshot-at", help="also write engine.snapshot after events up to this time")
    r.add_argument("--user", help="check that this configured user may run scenarios")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("resume", help="continue a run from a snapshot")
    s.add_argument("--snapshot", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_resume)

    v = sub.add_parser("validate-edi", help="parse an EDIFACT file and summarize it")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate_edi)

    k = sub.add_parser("report", help="KPIs for a period from a snapshot")
    k.add_argument("--snapshot", required=True)
    k.add_argument("--period", required=True, help="START..END, ISO-8601 UTC")
    k.set_defaults(func=cmd_report)

    a = sub.add_parser("archive", help="split archive records into retention tiers")
    a.add_argument("--cutoff-now", required=True, help="reference time for record ages")
    a.add_argument("--records", help="long-term format record file")
    a.add_argument("--out", default="archive", help="directory for the tier files")
    a.add_argument("--operational-years", type=int, default=3)
    a.add_argument("--longterm-years", type=int, default=10)
    a.set_defaults(func=cmd_archive)

    g = sub.add_parser("generate", help="write the seeded reference scenario")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=7)
    g.set_defaults(func=cmd_generate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TosError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
