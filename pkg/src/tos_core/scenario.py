"""Scenario files: one event per line, ``<ISO-8601 UTC> <KIND> key=value ...``."""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import MissingReferencedFile, ParseError, UnsortedEvents
from .util import format_time, parse_time

KINDS = ("VESSEL_ARRIVAL", "TRUCK_ARRIVAL", "ORDER", "HOLD", "LOCK", "REEFER", "ADVANCE", "ACCIDENT")
FILE_KEYS = ("baplie", "movins")


@dataclass(frozen=True)
class Event:
    line_no: int
    time: datetime
    kind: str
    params: dict = field(default_factory=dict, hash=False)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.params.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.params:
            raise ParseError(f"{self.kind} needs {key}=", self.line_no)
        return self.params[key]

    def render(self) -> str:
        parts = [format_time(self.time), self.kind]
        parts += [f"{k}={shlex.quote(v)}" for k, v in self.params.items()]
        return " ".join(parts)


@dataclass
class Scenario:
    events: list[Event]
    base_dir: Path

    def resolve(self, name: str) -> Path:
        return self.base_dir / name


def parse_scenario(text: str, base_dir: Path | str = ".", check_files: bool = True) -> Scenario:
    base_dir = Path(base_dir)
    events = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            parts = shlex.split(line)
        except ValueError as exc:
            raise ParseError(str(exc), n) from None
        if len(parts) < 2:
            raise ParseError("expected '<time> <KIND> key=value ...'", n)
        try:
            time = parse_time(parts[0])
        except ValueError:
            raise ParseError(f"bad timestamp {parts[0]!r}", n) from None
        kind = parts[1]
        if kind not in KINDS:
            raise ParseError(f"unknown event kind {kind!r}", n)
        params = {}
        for p in parts[2:]:
            key, sep, value = p.partition("=")
            if not sep or not key:
                raise ParseError(f"expected key=value, got {p!r}", n)
            if key in params:
                raise ParseError(f"duplicate key {key!r}", n)
            params[key] = value
        if events and time < events[-1].time:
            raise UnsortedEvents(f"line {n}: {parts[0]} is earlier than the previous event")
        if check_files:
            for key in FILE_KEYS:
                if key in params and not (base_dir / params[key]).is_file():
                    raise MissingReferencedFile(f"line {n}: {key} file {params[key]!r} not found")
        events.append(Event(n, time, kind, params))
    return Scenario(events, base_dir)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.parent)
