import math
from datetime import date, timedelta
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tos_core.billing import (
    Advance,
    BillingEvent,
    Contract,
    InvoiceSequence,
    LockState,
    Rate,
    Source,
    StorageInterval,
    Unit,
    create_invoice,
    export_billing_feed,
    ingest_lock_command,
    line_amount,
    load_tariffs,
    parse_money,
    rate_events,
    resolve_contract,
    revenue_by_client,
    storage_days,
)
from tos_core.errors import (
    EmptyLines,
    ParseError,
    SequenceCorruption,
    UnknownServiceCode,
    UnknownTarget,
    ValidationFailed,
)
from tos_core.orders import Authority, HoldRegistry

from conftest import REFERENCE, utc

T0 = utc(2026, 3, 2, 6)
DEFAULT = Contract("*", date(2020, 1, 1), date(2099, 12, 31),
                   {"DISCHARGE": Rate(Unit.PER_MOVE, 5000), "STORAGE": Rate(Unit.PER_DAY, 1000),
                    "SURVEY": Rate(Unit.FLAT, 4000)}, free_storage_days=1)
ACME = Contract("ACME", date(2026, 1, 1), date(2026, 6, 30), {"DISCHARGE": Rate(Unit.PER_MOVE, 4000)},
                {"DISCHARGE": Decimal("12.5")}, free_storage_days=1)


def event(i, code="DISCHARGE", client="ACME", qty=1, container=None, when=T0, source=Source.TOS):
    return BillingEvent(f"E{i}", code, client, qty, when + timedelta(minutes=i), container, source)


def test_resolve_contract():
    assert resolve_contract("ACME", date(2026, 3, 1), [ACME], DEFAULT) is ACME
    assert resolve_contract("ACME", date(2026, 7, 1), [ACME], DEFAULT) is DEFAULT
    assert resolve_contract("NOBODY", T0, [ACME], DEFAULT) is DEFAULT


def test_rating_examples():
    lines = rate_events([event(1, client="X")], DEFAULT)
    assert lines[0].amount == 5000
    iv = {"C1": StorageInterval("C1", T0, T0 + timedelta(hours=49))}
    lines = rate_events([event(2, "STORAGE", client="X", container="C1")], DEFAULT, iv)
    assert (lines[0].qty, lines[0].amount) == (2, 2000)


def test_discount_and_fallback_to_default():
    lines = rate_events([event(1), event(2, "SURVEY")], ACME, default=DEFAULT)
    assert [l.amount for l in lines] == [3500, 4000]


def test_unknown_codes_are_collected():
    with pytest.raises(UnknownServiceCode) as info:
        rate_events([event(1), event(2, "CFS"), event(3, "MYSTERY")], ACME, default=DEFAULT)
    assert [e.event_id for e in info.value.events] == ["E2", "E3"]
    assert len(info.value.lines) == 1
    with pytest.raises(ValidationFailed):
        rate_events([event(1), event(2, client="OTHER")], ACME)


@settings(max_examples=300)
@given(st.integers(0, 24 * 60 * 40), st.integers(0, 10))
def test_storage_days_match_hour_count(minutes, free):
    start = T0
    end = start + timedelta(minutes=minutes)
    # count started 24 h periods one by one
    periods, t = 0, start
    while t < end:
        periods += 1
        t += timedelta(hours=24)
    assert storage_days(start, end, free) == max(0, periods - free)


@settings(max_examples=300)
@given(st.integers(1, 500), st.integers(0, 10 ** 6), st.decimals(0, 100, places=2))
def test_line_amount_rounding(qty, price, discount):
    exact = Decimal(qty * price) * (100 - discount) / 100
    got = line_amount(qty, price, discount)
    assert abs(Decimal(got) - exact) <= Decimal("0.5")
    assert got == math.floor(exact + Decimal("0.5"))


def line(amount):
    return rate_events([event(0, client="X", qty=1)], Contract("X", date(2020, 1, 1), date(2030, 1, 1),
                       {"DISCHARGE": Rate(Unit.PER_MOVE, amount)}))[0]


def test_invoice_with_advances():
    seq = InvoiceSequence()
    adv = Advance("A1", "X", 10000, T0)
    inv = create_invoice("X", [line(25000)], [adv], seq)
    assert (inv.total, inv.advances_applied, adv.remaining, inv.number) == (15000, 10000, 0, 1)
    big = Advance("A2", "X", 30000, T0)
    inv = create_invoice("X", [line(25000)], [big], seq)
    assert (inv.total, big.remaining, inv.number) == (0, 5000, 2)
    with pytest.raises(EmptyLines):
        create_invoice("X", [], [], seq)
    assert seq.last == 2


def test_advances_oldest_first():
    late = Advance("A9", "X", 5000, T0 + timedelta(days=2))
    early = Advance("A1", "X", 5000, T0)
    other = Advance("B1", "Y", 5000, T0 - timedelta(days=1))
    inv = create_invoice("X", [line(7000)], [late, early, other], InvoiceSequence())
    assert inv.applied == (("A1", 5000), ("A9", 2000))
    assert other.remaining == 5000 and late.remaining == 3000


def test_advance_validation():
    with pytest.raises(ValidationFailed):
        Advance("A", "X", 0, T0)
    with pytest.raises(ValidationFailed):
        Advance("A", "X", 100, T0, remaining=200)


def test_sequence_file_and_corruption(tmp_path):
    path = tmp_path / "seq.txt"
    seq = InvoiceSequence(path=path)
    assert [seq.next(), seq.next()] == [1, 2]
    assert InvoiceSequence(path=path).last == 2
    path.write_text("7\n")
    with pytest.raises(SequenceCorruption):
        seq.next()
    path.write_text("garbage")
    with pytest.raises(SequenceCorruption):
        seq.next()


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from("XY"), st.lists(st.integers(1, 50000), min_size=1, max_size=4)),
                min_size=1, max_size=12),
       st.lists(st.tuples(st.sampled_from("XY"), st.integers(1, 80000)), max_size=5))
def test_conservation_and_gap_free(invoices, advance_specs):
    advances = [Advance(f"A{i}", c, a, T0 + timedelta(hours=i)) for i, (c, a) in enumerate(advance_specs)]
    seq = InvoiceSequence(last=41)
    issued = [create_invoice(c, [line(a) for a in amounts], advances, seq) for c, amounts in invoices]
    assert [i.number for i in issued] == list(range(42, 42 + len(issued)))
    for client in "XY":
        rated = sum(a for c, amounts in invoices if c == client for a in amounts)
        mine = [i for i in issued if i.client == client]
        assert sum(i.total + i.advances_applied for i in mine) == rated
        assert all(i.total >= 0 for i in mine)
    assert revenue_by_client(issued) == {c: sum(a for cc, am in invoices if cc == c for a in am)
                                         for c in sorted({c for c, _ in invoices})}


def test_feed_lines_and_periods():
    events = [event(i, client="X") for i in range(5)] + [event(9, client="X", source=Source.MANUAL)]
    text = export_billing_feed(events, (T0, T0 + timedelta(hours=1)))
    rows = text.strip().split("\n")
    assert rows[0].startswith("record_type|event_id") and len(rows) == 6
    assert rows[1].split("|")[:4] == ["HANDLING", "E0", "X", "DISCHARGE"]
    assert export_billing_feed(events, (T0 - timedelta(days=1), T0)).strip().count("\n") == 0
    cut = T0 + timedelta(minutes=2, seconds=30)
    first = export_billing_feed(events, (T0, cut)).strip().split("\n")[1:]
    second = export_billing_feed(events, (cut, T0 + timedelta(days=1))).strip().split("\n")[1:]
    assert sorted(r.split("|")[1] for r in first + second) == [f"E{i}" for i in range(5)]


def test_lock_commands():
    locks, holds = LockState(), HoldRegistry()
    kw = dict(known_clients=["ACME"], known_containers=["MSKU1234565"])
    assert ingest_lock_command("LOCK CLIENT ACME", locks, holds, **kw).changed
    assert holds.active(("client", "ACME"))[0].authority is Authority.PORT_AUTHORITY
    assert not ingest_lock_command("LOCK CLIENT ACME", locks, holds, **kw).changed
    assert not ingest_lock_command("UNLOCK CONTAINER MSKU1234565", locks, holds, **kw).changed
    assert ingest_lock_command("UNLOCK CLIENT ACME", locks, holds, **kw).changed
    assert holds.active(("client", "ACME")) == [] and locks.clients == set()
    with pytest.raises(ParseError):
        ingest_lock_command("FREEZE CLIENT X", locks, holds, **kw)
    with pytest.raises(UnknownTarget):
        ingest_lock_command("LOCK CLIENT NOBODY", locks, holds, **kw)


def test_load_reference_tariffs():
    default, contracts = load_tariffs((REFERENCE / "tariffs.txt").read_text("utf-8"))
    assert default.client == "*" and default.rates["DISCHARGE"].price_cents == 8500
    assert all(c.client != "*" for c in contracts)
    assert parse_money("12.50") == 1250
    with pytest.raises(ValidationFailed):
        parse_money("1.005")
    with pytest.raises(ParseError):
        load_tariffs("RATE|X|LOAD|PerMove|1.00|EUR|0\nCONTRACT|*|2020-01-01|2030-01-01|0\n")
    with pytest.raises(ParseError):
        load_tariffs("CONTRACT|A|2020-01-01|2030-01-01|0\n")
