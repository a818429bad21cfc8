"""Contracts, service rating, invoicing and the billing feed.

All money is held as integer cents.  Discounted amounts are rounded half up
to the cent, per line.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    EmptyLines,
    ParseError,
    SequenceCorruption,
    UnknownServiceCode,
    UnknownTarget,
    ValidationFailed,
)
from .orders import Authority, Hold, HoldRegistry
from .util import format_time, read_records, write_delimited

DEFAULT_CLIENT = "*"


class Unit(str, enum.Enum):
    PER_MOVE = "PerMove"
    PER_DAY = "PerDay"
    FLAT = "Flat"


@dataclass(frozen=True)
class Rate:
    unit: Unit
    price_cents: int
    currency: str = "EUR"

    def __post_init__(self):
        if self.price_cents < 0:
            raise ValidationFailed("prices must be >= 0")


@dataclass(frozen=True)
class Contract:
    client: str
    valid_from: date
    valid_to: date
    rates: Mapping[str, Rate] = field(default_factory=dict)
    discounts: Mapping[str, Decimal] = field(default_factory=dict)
    free_storage_days: int = 0

    def __post_init__(self):
        if self.valid_from > self.valid_to:
            raise ValidationFailed(f"contract {self.client}: validity starts after it ends")
        if self.free_storage_days < 0:
            raise ValidationFailed(f"contract {self.client}: negative free storage days")
        for code, d in self.discounts.items():
            if not 0 <= d <= 100:
                raise ValidationFailed(f"contract {self.client}: discount on {code} outside 0..100")

    def valid_on(self, day: date) -> bool:
        return self.valid_from <= day <= self.valid_to


def parse_money(text: str) -> int:
    """Decimal currency text to integer cents."""
    try:
        value = Decimal(text)
    except Exception:
        raise ValidationFailed(f"bad amount {text!r}") from None
    cents = value * 100
    if cents != cents.to_integral_value():
        raise ValidationFailed(f"amount {text!r} has sub-cent precision")
    return int(cents)


def format_money(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    return f"{sign}{abs(cents) // 100}.{abs(cents) % 100:02d}"


def load_tariffs(text: str) -> tuple[Contract, list[Contract]]:
    """Read a tariffs file; returns (default contract, client contracts).

    Records::

        CONTRACT|client|valid_from|valid_to|free_storage_days
        RATE|client|service_code|unit|price|currency|discount_pct

    The client ``*`` is the default contract.
    """
    heads: dict[str, dict] = {}
    rates: dict[str, dict[str, Rate]] = {}
    discounts: dict[str, dict[str, Decimal]] = {}
    for n, rec in enumerate(read_records(text), 1):
        try:
            if rec[0] == "CONTRACT":
                _, client, start, end, free = rec
                heads[client] = dict(valid_from=date.fromisoformat(start),
                                     valid_to=date.fromisoformat(end), free_storage_days=int(free))
            elif rec[0] == "RATE":
                _, client, code, unit, price, currency, disc = rec
                rates.setdefault(client, {})[code] = Rate(Unit(unit), parse_money(price), currency)
                if disc and Decimal(disc) != 0:
                    discounts.setdefault(client, {})[code] = Decimal(disc)
            else:
                raise ParseError(f"unknown record type {rec[0]!r}", n)
        except ParseError:
            raise
        except (ValueError, ValidationFailed) as exc:
            raise ParseError(str(exc), n) from None
    for client in rates:
        if client not in heads:
            raise ParseError(f"rates for {client} without a CONTRACT record")
    if DEFAULT_CLIENT not in heads:
        raise ParseError("tariffs define no default contract (client '*')")
    contracts = {c: Contract(c, rates=rates.get(c, {}), discounts=discounts.get(c, {}), **h)
                 for c, h in heads.items()}
    default = contracts.pop(DEFAULT_CLIENT)
    return default, [contracts[c] for c in sorted(contracts)]


def resolve_contract(client: str, day: date | datetime, contracts: Iterable[Contract],
                     default: Contract) -> Contract:
    if isinstance(day, datetime):
        day = day.date()
    for c in contracts:
        if c.client == client and c.valid_on(day):
            return c
    return default


class Source(str, enum.Enum):
    TOS = "TOS"
    MANUAL = "Manual"


@dataclass(frozen=True)
class BillingEvent:
    event_id: str
    service_code: str
    client: str
    qty: int
    occurred_at: datetime
    container: str | None = None
    source: Source = Source.TOS

    def __post_init__(self):
        if self.qty <= 0:
            raise ValidationFailed(f"event {self.event_id}: qty must be > 0")


@dataclass(frozen=True)
class StorageInterval:
    container: str
    start: datetime
    end: datetime


def storage_days(start: datetime, end: datetime, free_days: int) -> int:
    hours = (end - start).total_seconds() / 3600
    return max(0, math.ceil(hours / 24) - free_days)


@dataclass(frozen=True)
class InvoiceLine:
    service_code: str
    qty: int
    unit_price: int
    discount: Decimal
    amount: int
    event_id: str = ""


def line_amount(qty: int, unit_price: int, discount: Decimal) -> int:
    raw = Decimal(qty) * Decimal(unit_price) * (Decimal(100) - discount) / Decimal(100)
    return int(raw.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def rate_events(events: Sequence[BillingEvent], contract: Contract,
                storage_intervals: Mapping[str, StorageInterval] | None = None,
                default: Contract | None = None) -> list[InvoiceLine]:
    """One line per event.

    A code the client contract lacks falls back to the default contract.
    PerDay events are storage: billable days come from the container's dwell
    interval.  Events whose code neither contract knows are collected and
    raised together as ``UnknownServiceCode``.
    """
    clients = {e.client for e in events}
    if len(clients) > 1:
        raise ValidationFailed(f"events span several clients: {', '.join(sorted(clients))}")
    storage_intervals = storage_intervals or {}
    lines, unknown = [], []
    for e in events:
        source = contract
        rate = contract.rates.get(e.service_code)
        if rate is None and default is not None:
            source = default
            rate = default.rates.get(e.service_code)
        if rate is None:
            unknown.append(e)
            continue
        qty = e.qty
        if rate.unit is Unit.PER_DAY:
            iv = storage_intervals.get(e.container or "")
            if iv is None:
                raise ValidationFailed(f"event {e.event_id}: no storage interval for {e.container}")
            qty = storage_days(iv.start, iv.end, contract.free_storage_days)
        discount = source.discounts.get(e.service_code, Decimal(0))
        lines.append(InvoiceLine(e.service_code, qty, rate.price_cents, discount,
                                 line_amount(qty, rate.price_cents, discount), e.event_id))
    if unknown:
        raise UnknownServiceCode(unknown, lines)
    return lines


@dataclass
class Advance:
    advance_id: str
    client: str
    amount: int
    received_at: datetime
    remaining: int | None = None

    def __post_init__(self):
        if self.amount <= 0:
            raise ValidationFailed(f"advance {self.advance_id}: amount must be > 0")
        if self.remaining is None:
            self.remaining = self.amount
        if not 0 <= self.remaining <= self.amount:
            raise ValidationFailed(f"advance {self.advance_id}: remaining outside 0..amount")


class InvoiceSequence:
    """Gap-free invoice numbers, optionally mirrored to a counter file.

    The file holds the last issued number.  If it disagrees with the
    in-memory counter when the next number is drawn, something else wrote to
    it and ``SequenceCorruption`` is raised.
    """

    def __init__(self, last: int = 0, path: str | Path | None = None):
        self.last = last
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            if self.path.exists():
                self.last = self._read()
            else:
                self._write()

    def _read(self) -> int:
        text = self.path.read_text().strip()
        if not text.isdigit():
            raise SequenceCorruption(f"{self.path}: unreadable counter {text!r}")
        return int(text)

    def _write(self) -> None:
        self.path.write_text(f"{self.last}\n")

    def next(self) -> int:
        if self.path is not None:
            stored = self._read()
            if stored != self.last:
                raise SequenceCorruption(f"{self.path}: counter is {stored}, expected {self.last}")
        self.last += 1
        if self.path is not None:
            self._write()
        return self.last

    def __getstate__(self):
        return {"last": self.last, "path": None}


@dataclass(frozen=True)
class Invoice:
    number: int
    client: str
    lines: tuple[InvoiceLine, ...]
    advances_applied: int
    total: int
    issued_at: datetime | None = None
    applied: tuple[tuple[str, int], ...] = ()

    @property
    def gross(self) -> int:
        return sum(l.amount for l in self.lines)


def create_invoice(client: str, lines: Sequence[InvoiceLine], advances: Sequence[Advance],
                   sequence: InvoiceSequence, issued_at: datetime | None = None) -> Invoice:
    if not lines:
        raise EmptyLines(f"invoice for {client} has no lines")
    gross = sum(l.amount for l in lines)
    due = gross
    applied = []
    for adv in sorted((a for a in advances if a.client == client),
                      key=lambda a: (a.received_at, a.advance_id)):
        if due == 0:
            break
        take = min(adv.remaining, due)
        if take:
            adv.remaining -= take
            due -= take
            applied.append((adv.advance_id, take))
    number = sequence.next()
    return Invoice(number, client, tuple(lines), gross - due, due, issued_at, tuple(applied))


def export_invoices(invoices: Sequence[Invoice]) -> str:
    rows = []
    for inv in invoices:
        rows.append(("INVOICE", inv.number, inv.client, "", "", "", format_money(inv.gross),
                     format_money(inv.advances_applied), format_money(inv.total)))
        for l in inv.lines:
            rows.append(("LINE", inv.number, inv.client, l.service_code, l.qty, format_money(l.unit_price),
                         format_money(l.amount), f"{l.discount:g}", l.event_id))
    return write_delimited(("record", "number", "client", "service_or_code", "qty", "unit_price",
                            "amount", "applied_or_discount", "total_or_event"), rows)


# -- billing feed -------------------------------------------------------------

FEED_HEADER = ("record_type", "event_id", "client", "service_code", "container", "qty", "unit",
               "timestamp")

_RECORD_TYPES = {
    "LOAD": "HANDLING", "DISCHARGE": "HANDLING", "GATE_IN": "HANDLING", "GATE_OUT": "HANDLING",
    "RESTOW": "HANDLING", "REPOSITION": "HANDLING",
    "STORAGE": "STORAGE", "REEFER_POWER": "STORAGE",
    "VESSEL_CALL": "VESSEL_SERVICE", "VESSEL_SERVICE": "VESSEL_SERVICE", "VISIT_CHANGE": "VESSEL_SERVICE",
}


def record_type(service_code: str) -> str:
    return _RECORD_TYPES.get(service_code, "SPECIAL_SERVICE")


def export_billing_feed(events: Iterable[BillingEvent], period: tuple[datetime, datetime],
                        units: Mapping[str, Unit] | None = None) -> str:
    """Feed lines for TOS events with ``start <= occurred_at < end``."""
    start, end = period
    units = units or {}
    chosen = sorted((e for e in events if e.source is Source.TOS and start <= e.occurred_at < end),
                    key=lambda e: (e.occurred_at, e.event_id))
    rows = [(record_type(e.service_code), e.event_id, e.client, e.service_code, e.container or "",
             e.qty, units.get(e.service_code, Unit.PER_MOVE).value, format_time(e.occurred_at))
            for e in chosen]
    return write_delimited(FEED_HEADER, rows)


# -- lock commands ------------------------------------------------------------

_LOCK = re.compile(r"^(LOCK|UNLOCK) (CLIENT|CONTAINER) (\S+)$")
LOCK_REASON = "billing lock"


@dataclass
class LockState:
    clients: set[str] = field(default_factory=set)
    containers: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class LockResult:
    kind: str
    target: str
    locked: bool
    changed: bool


def ingest_lock_command(line: str, locks: LockState, holds: HoldRegistry, *,
                        known_clients: Iterable[str], known_containers: Iterable[str],
                        line_no: int | None = None) -> LockResult:
    """Apply one ``(LOCK|UNLOCK) (CLIENT|CONTAINER) <id>`` command.

    A lock is mirrored as a Port Authority hold on the target so gate
    deliveries are blocked.  Repeating a command is a no-op.
    """
    m = _LOCK.match(line.strip())
    if not m:
        raise ParseError(f"bad lock command {line.strip()!r}", line_no)
    verb, kind, ident = m.groups()
    known = set(known_clients) if kind == "CLIENT" else set(known_containers)
    if ident not in known:
        raise UnknownTarget(f"{kind.lower()} {ident} is not known")
    pool = locks.clients if kind == "CLIENT" else locks.containers
    target = (kind.lower(), ident)
    want = verb == "LOCK"
    if (ident in pool) == want:
        return LockResult(kind, ident, want, False)
    if want:
        pool.add(ident)
        holds.apply_hold(target, Hold(Authority.PORT_AUTHORITY, LOCK_REASON))
    else:
        pool.discard(ident)
        holds.release_hold(target, Authority.PORT_AUTHORITY, reason=LOCK_REASON)
    return LockResult(kind, ident, want, True)


def revenue_by_client(invoices: Iterable[Invoice]) -> dict[str, int]:
    out: dict[str, int] = {}
    for inv in invoices:
        out[inv.client] = out.get(inv.client, 0) + inv.gross
    return dict(sorted(out.items()))
