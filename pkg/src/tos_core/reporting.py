"""KPIs, authority statistics and tiered archiving."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Sequence

from .dispatch import HistoryEntry
from .errors import EmptyPeriod, FutureTimestamp, ParseError
from .model import EquipmentKind
from .util import format_time, natural_key, parse_time, write_delimited


@dataclass(frozen=True)
class KpiReport:
    period: tuple[float, float]
    crane_moves_per_hour: Mapping[str, float]
    rtg_balance: int
    unproductive_ratio: float
    yard_occupancy_pct: Mapping[str, float]
    total_legs: int = 0
    quay_lifts: int = 0
    rehandle_legs: int = 0

    def to_kv(self) -> str:
        lines = [f"total_legs={self.total_legs}", f"quay_lifts={self.quay_lifts}",
                 f"rehandle_legs={self.rehandle_legs}", f"rtg_balance={self.rtg_balance}",
                 f"unproductive_ratio={self.unproductive_ratio:.6f}"]
        lines += [f"crane_moves_per_hour.{c}={v:.6f}" for c, v in self.crane_moves_per_hour.items()]
        lines += [f"yard_occupancy_pct.{z}={v:.6f}" for z, v in self.yard_occupancy_pct.items()]
        return "\n".join(lines) + "\n"


def compute_kpis(history: Sequence[HistoryEntry], occupancy: Mapping[str, tuple[int, int]],
                 period: tuple[float, float], rtgs: Iterable[str] = ()) -> KpiReport:
    """KPIs over legs finishing inside ``[start, end)``.

    ``occupancy`` maps zone -> (occupied slots, total slots).  A crane's rate
    is its quay moves divided by the hours between its first leg start and
    last leg end in the period.
    """
    start, end = period
    if end <= start:
        raise EmptyPeriod("period end must be after its start")
    legs = [h for h in history if start <= h.end < end]
    per_crane: dict[str, list[HistoryEntry]] = {}
    rtg_jobs: Counter = Counter({r: 0 for r in rtgs})
    unproductive = rehandles = 0
    for h in legs:
        if h.kind is EquipmentKind.QUAY_CRANE:
            per_crane.setdefault(h.equipment, []).append(h)
        elif h.kind is EquipmentKind.RTG:
            rtg_jobs[h.equipment] += 1
        if h.rehandle:
            rehandles += 1
        if h.rehandle or h.empty_m > 0:
            unproductive += 1
    rates = {}
    for crane in sorted(per_crane, key=natural_key):
        hs = per_crane[crane]
        hours = (max(h.end for h in hs) - min(h.start for h in hs)) / 3600
        rates[crane] = len(hs) / hours if hours > 0 else 0.0
    balance = max(rtg_jobs.values()) - min(rtg_jobs.values()) if rtg_jobs else 0
    occ = {z: (100.0 * o / s if s else 0.0) for z, (o, s) in occupancy.items()}
    return KpiReport(period, rates, balance, unproductive / len(legs) if legs else 0.0, occ,
                     len(legs), sum(len(v) for v in per_crane.values()), rehandles)


@dataclass(frozen=True)
class HandledMove:
    container: str
    length_ft: int
    imo_class: str | None
    time: datetime
    kind: str


def teu(length_ft: int) -> int:
    return 1 if length_ft == 20 else 2


@dataclass(frozen=True)
class AuthorityStats:
    boxes: int
    teu: int
    dangerous_materials: Mapping[str, int]
    productivity: float
    work_accidents: int = 0

    def render(self) -> str:
        rows = [("volumes", "boxes", self.boxes), ("volumes", "teu", self.teu),
                ("productivity", "moves_per_hour", f"{self.productivity:.4f}"),
                ("safety", "work_accidents", self.work_accidents)]
        rows += [("dangerous_materials", f"imo_{cls}", n) for cls, n in self.dangerous_materials.items()]
        return write_delimited(("section", "key", "value"), rows)


def authority_stats(moves: Iterable[HandledMove], period: tuple[datetime, datetime],
                    work_accidents: int = 0) -> AuthorityStats:
    start, end = period
    chosen = [m for m in moves if start <= m.time < end]
    imo = Counter(m.imo_class for m in chosen if m.imo_class)
    hours = (end - start).total_seconds() / 3600
    return AuthorityStats(len(chosen), sum(teu(m.length_ft) for m in chosen),
                          dict(sorted(imo.items(), key=lambda kv: natural_key(kv[0]))),
                          len(chosen) / hours if hours > 0 else 0.0, work_accidents)


# -- archiving ----------------------------------------------------------------

OPERATIONAL, MIDTERM, LONGTERM = "operational", "midterm", "longterm"


@dataclass(frozen=True)
class ArchiveRecord:
    record_id: str
    kind: str
    timestamp: datetime
    container: str = ""
    detail: str = ""


def years_before(now: datetime, years: int) -> datetime:
    try:
        return now.replace(year=now.year - years)
    except ValueError:          # 29 February
        return now.replace(year=now.year - years, day=28)


@dataclass(frozen=True)
class ArchivePolicy:
    operational_years: int = 3
    longterm_years: int = 10


def tier_of(ts: datetime, now: datetime, policy: ArchivePolicy = ArchivePolicy()) -> str:
    if ts > now:
        raise FutureTimestamp(f"record dated {format_time(ts)} is after {format_time(now)}")
    if ts <= years_before(now, policy.longterm_years):
        return LONGTERM
    if ts <= years_before(now, policy.operational_years):
        return MIDTERM
    return OPERATIONAL


@dataclass
class ArchivePartition:
    operational: list[ArchiveRecord] = field(default_factory=list)
    midterm: list[ArchiveRecord] = field(default_factory=list)
    longterm: list[ArchiveRecord] = field(default_factory=list)


def partition_archive(records: Iterable[ArchiveRecord], now: datetime,
                      policy: ArchivePolicy = ArchivePolicy()) -> ArchivePartition:
    """Split records by age: under 3 years, 3 up to 10, and 10 or more."""
    out = ArchivePartition()
    for r in records:
        getattr(out, tier_of(r.timestamp, now, policy)).append(r)
    return out


LONGTERM_HEADER = ("record_id:str", "kind:str", "timestamp:datetime", "container:str", "detail:str")


def export_longterm(records: Iterable[ArchiveRecord]) -> str:
    rows = [(r.record_id, r.kind, format_time(r.timestamp), r.container, r.detail)
            for r in sorted(records, key=lambda r: (r.timestamp, r.record_id))]
    return write_delimited(LONGTERM_HEADER, rows)


def import_longterm(text: str) -> list[ArchiveRecord]:
    first = text.split("\n", 1)[0]
    if tuple(first.split("|")) != LONGTERM_HEADER:
        raise ParseError(f"unexpected archive header {first!r}", 1)
    out = []
    for row in csv.DictReader(io.StringIO(text), delimiter="|"):
        out.append(ArchiveRecord(row["record_id:str"], row["kind:str"],
                                 parse_time(row["timestamp:datetime"]), row["container:str"],
                                 row["detail:str"]))
    return out
