"""Small shared helpers: pipe-delimited text files, timestamps, sort keys."""

from __future__ import annotations

import csv
import io
import re
from datetime import datetime, timezone
from typing import Iterable, Sequence

SEP = "|"


def _data_lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def read_delimited(text: str) -> list[dict[str, str]]:
    """Rows of a header-first ``|``-separated file; ``#`` lines are comments."""
    reader = csv.DictReader(_data_lines(text), delimiter=SEP, quoting=csv.QUOTE_NONE)
    return [{k: (v or "").strip() for k, v in row.items()} for row in reader]


def read_records(text: str) -> list[list[str]]:
    """Header-less records; the first field is usually a record type tag."""
    return [[f.strip() for f in ln.split(SEP)] for ln in _data_lines(text)]


def write_delimited(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=SEP, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def parse_time(text: str) -> datetime:
    """ISO-8601 timestamp; naive values are taken as UTC."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_time(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def to_seconds(dt: datetime) -> float:
    return dt.timestamp()


def from_seconds(t: float) -> datetime:
    return datetime.fromtimestamp(round(t, 6), tz=timezone.utc)


def format_seconds(t: float) -> str:
    return from_seconds(t).strftime("%Y-%m-%dT%H:%M:%S.%fZ")[:-4] + "Z"


_DIGITS = re.compile(r"(\d+)")


def natural_key(text: str) -> tuple:
    """Sort key treating digit runs numerically, so T2 < T10."""
    return tuple(int(p) if p.isdigit() else p for p in _DIGITS.split(text))
