"""Seeded generator for the reference scenario: terminal config, tariffs,
EDI files and the event list.

Two vessel calls and 200 distinct containers.  V1 discharges 70 imports and
40 transshipment boxes.  V2 discharges 50 imports and loads the 40
transshipment boxes plus 40 exports.  Fifty trucks visit the gate: 18 drop
two exports each, 4 drop one export and pick one import, and 28 pick one
import.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .edifact import Cell, Instruction, MovinsInstruction, StowEntry, build_baplie, build_movins, serialize
from .model import ContainerId, decode_size_type
from .util import format_time

LOCAL_PORT = "FRMRS"
DAY0 = datetime(2026, 3, 2, tzinfo=timezone.utc)

TERMINAL = """\
TERMINAL|REFTERM|FRMRS|GATE
BLOCK|A1|ZA|Standard|8|6|4
BLOCK|B1|ZB|Standard|8|6|4
BLOCK|C1|ZC|Standard|8|6|4
BLOCK|D1|ZD|Standard|8|6|4
BLOCK|R1|ZR|Reefer|5|4|3
BLOCK|I1|ZI|Imo|10|6|2
EDGE|Q1|ZA|120
EDGE|Q1|ZB|180
EDGE|Q2|ZB|120
EDGE|Q2|ZC|160
EDGE|Q1|Q2|150
EDGE|ZA|ZB|80
EDGE|ZB|ZC|80
EDGE|ZC|ZD|80
EDGE|ZD|GATE|100
EDGE|ZA|GATE|250
EDGE|ZR|ZA|60
EDGE|ZI|ZD|60
QUAY_NODE|Q1
QUAY_NODE|Q2
QUAY|600|25|20
DEPTH|0|300|14
DEPTH|300|600|11
EQUIP|QC1|QuayCrane|1.0|1.0|Q1|90
EQUIP|QC2|QuayCrane|1.0|1.0|Q1|90
EQUIP|QC3|QuayCrane|1.0|1.0|Q2|90
EQUIP|RTG1|Rtg|2.0|1.5|ZA|60
EQUIP|RTG2|Rtg|2.0|1.5|ZB|60
EQUIP|RTG3|Rtg|2.0|1.5|ZC|60
EQUIP|RTG4|Rtg|2.0|1.5|ZD|60
EQUIP|TR1|Tractor|6.0|5.0|Q1|
EQUIP|TR2|Tractor|6.0|5.0|Q1|
EQUIP|TR3|Tractor|6.0|5.0|Q1|
EQUIP|TR4|Tractor|6.0|5.0|Q2|
EQUIP|TR5|Tractor|6.0|5.0|Q2|
EQUIP|TR6|Tractor|6.0|5.0|Q2|
PROFILE|FEEDER|180|10|12|8|5|120000|5
PROFILE|MAINLINE|260|12.5|16|10|6|150000|6
FILTER|TS|1|transaction=Transshipment
FILTER|EXP|2|transaction=Export
FILTER|IMP|3|transaction=Import
AREA|TS|ZB,ZC|Scattered
AREA|EXP|ZD|Grouped
AREA|IMP|ZA,ZB|Grouped
AREA|*|ZA,ZB,ZC,ZD|Grouped
IMO|3|3|0|2
IMO|3|8|0|3
IMO|8|8|0|2
IMO|1|3|1|0
IMO_CROSS_BLOCK|0
STACKING|weight:heavier_on_top|
PARTNER|LINEA|ShippingLine|Alpha Lines
PARTNER|LINEB|ShippingLine|Beta Shipping
PARTNER|ACME|Agent|Acme Forwarding
PARTNER|BOLT|Agent|Bolt Logistics
PARTNER|CARGA|Agent|Carga Transit
USER|system|Admin
USER|planner1|Planner
USER|gate1|GateClerk
USER|bill1|BillingClerk
SET|default_user|system
SET|reefer_tolerance|2.0
"""

TARIFFS = """\
# default contract
CONTRACT|*|2020-01-01|2099-12-31|3
RATE|*|DISCHARGE|PerMove|85.00|EUR|0
RATE|*|LOAD|PerMove|85.00|EUR|0
RATE|*|GATE_IN|PerMove|25.00|EUR|0
RATE|*|GATE_OUT|PerMove|25.00|EUR|0
RATE|*|STORAGE|PerDay|12.50|EUR|0
RATE|*|VESSEL_CALL|Flat|1500.00|EUR|0
RATE|*|SEAL_CHECK|Flat|15.00|EUR|0
RATE|*|SEAL_STORAGE|Flat|8.00|EUR|0
RATE|*|SURVEY|Flat|40.00|EUR|0
RATE|*|IMO_LABEL|Flat|30.00|EUR|0
RATE|*|PTI|Flat|60.00|EUR|0
RATE|*|INSPECTION|Flat|75.00|EUR|0
RATE|*|FUMIGATION|Flat|120.00|EUR|0
RATE|*|RESTOW|PerMove|95.00|EUR|0
RATE|*|REPOSITION|PerMove|50.00|EUR|0
RATE|*|VISIT_CHANGE|Flat|20.00|EUR|0
RATE|*|VESSEL_SERVICE|Flat|300.00|EUR|0
RATE|*|HOLD_ADMIN|Flat|10.00|EUR|0
# client contracts
CONTRACT|LINEA|2026-01-01|2026-12-31|5
RATE|LINEA|DISCHARGE|PerMove|80.00|EUR|5
RATE|LINEA|LOAD|PerMove|80.00|EUR|5
CONTRACT|ACME|2025-01-01|2025-12-31|2
RATE|ACME|GATE_OUT|PerMove|20.00|EUR|0
CONTRACT|BOLT|2026-01-01|2027-12-31|4
RATE|BOLT|GATE_IN|PerMove|22.50|EUR|10
RATE|BOLT|STORAGE|PerDay|11.00|EUR|0
"""


@dataclass
class Box:
    id: ContainerId
    size_type: str
    weight: int
    pol: str
    pod: str
    imo: str | None = None
    setpoint: float | None = None
    delivery: str | None = None


def _t(delta: timedelta) -> str:
    return format_time(DAY0 + delta)


class _Ids:
    def __init__(self, rng: random.Random):
        self.serials = rng.sample(range(100000, 999999), 400)
        self.i = 0

    def next(self, owner: str) -> ContainerId:
        self.i += 1
        return ContainerId.build(owner, self.serials[self.i - 1])


def _box(rng: random.Random, ids: _Ids, owner: str, pol: str, pod: str, *, imo=None,
         reefer=False, delivery=None) -> Box:
    if reefer:
        st = rng.choice(["22R1", "45R1"])
    elif imo:
        st = "22G1"
    else:
        st = rng.choices(["22G1", "42G1", "45G1"], weights=[6, 3, 1])[0]
    cap = decode_size_type(st).max_gross_kg
    weight = rng.randrange(4000, min(cap, 28000), 10)
    return Box(ids.next(owner), st, weight, pol, pod, imo,
               rng.choice([-18.0, -20.0, 2.0, 5.0]) if reefer else None, delivery)


def _stow(boxes: list[Box], bays: int, rows: int, tiers: int) -> list[StowEntry]:
    """Stack boxes of one length per stack, bottom up, at most ``tiers`` high."""
    by_len: dict[int, list[Box]] = {}
    for b in boxes:
        by_len.setdefault(decode_size_type(b.size_type).length, []).append(b)
    stacks = [(bay, row) for bay in range(1, bays + 1) for row in range(1, rows + 1)]
    out, si = [], 0
    for length in sorted(by_len):
        group = by_len[length]
        for i in range(0, len(group), tiers):
            bay, row = stacks[si]
            si += 1
            for tier, b in enumerate(group[i:i + tiers], 1):
                out.append(StowEntry(b.id, Cell(bay, row, tier), b.weight, b.pod, b.size_type, b.pol,
                                     b.imo, b.delivery, b.setpoint))
    return out


def generate_reference(out_dir: str | Path, seed: int = 7) -> Path:
    rng = random.Random(seed)
    ids = _Ids(rng)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    # V1: 70 imports (some IMO, some reefers) and 40 transshipment boxes
    v1_imports = [_box(rng, ids, "ALP", "ESVLC", LOCAL_PORT, imo=("3" if i < 4 else "8" if i < 6 else None),
                       reefer=6 <= i < 12) for i in range(70)]
    v1_ts = [_box(rng, ids, "ALP", "ESVLC", LOCAL_PORT, delivery="ITGOA") for _ in range(40)]
    v2_imports = [_box(rng, ids, "BET", "ITGOA", LOCAL_PORT, imo=("3" if i < 2 else None),
                       reefer=2 <= i < 5) for i in range(50)]
    exports = [_box(rng, ids, rng.choice(["ACM", "BOL", "CRG"]), LOCAL_PORT,
                    rng.choice(["ITGOA", "GRPIR"]), imo=("8" if i < 2 else None)) for i in range(40)]

    v1_order = v1_imports + v1_ts
    rng.shuffle(v1_order)
    v1_entries = _stow(v1_order, 12, 8, 3)
    v2_entries = _stow(v2_imports, 16, 10, 3)
    when1, when2 = DAY0 + timedelta(hours=5), DAY0 + timedelta(days=1, hours=5)
    (out / "v1_baplie.edi").write_text(serialize(build_baplie(v1_entries, visit_id="V1", when=when1,
                                                              control_ref="101")), "utf-8")
    (out / "v2_baplie.edi").write_text(serialize(build_baplie(v2_entries, visit_id="V2", when=when2,
                                                              control_ref="201")), "utf-8")
    loads = [MovinsInstruction(Instruction.LOAD, b.size_type, b.id, pod=b.pod) for b in v1_ts + exports]
    (out / "v2_movins.edi").write_text(serialize(build_movins(
        loads, visit_id="V2", when=when2, preferences={"42G1": 5, "45G1": 6}, control_ref="202")), "utf-8")
    (out / "terminal.txt").write_text(TERMINAL, "utf-8")
    (out / "tariffs.txt").write_text(TARIFFS, "utf-8")

    ev: list[tuple[timedelta, str]] = []

    def add(delta: timedelta, text: str) -> None:
        ev.append((delta, text))

    h = lambda x: timedelta(hours=x)  # noqa: E731
    m = lambda x: timedelta(minutes=x)  # noqa: E731
    add(h(5) + m(30), "ADVANCE client=ACME amount=200.00 id=ADV1 user=bill1")
    add(h(5) + m(31), "ADVANCE client=BOLT amount=5000.00 id=ADV2 user=bill1")
    add(h(5) + m(32), "ADVANCE client=CARGA amount=50.00 id=ADV3 user=gate1")   # denied
    add(h(6), "VESSEL_ARRIVAL visit=V1 profile=FEEDER etd=2026-03-02T12:00:00Z "
              "baplie=v1_baplie.edi line=LINEA user=planner1")
    held = v1_imports[20].id
    add(h(7), f"HOLD target=container:{held} authority=Customs reason='duty unpaid'")
    released = v1_imports[21].id
    add(h(7) + m(1), f"HOLD target=container:{released} authority=Line reason='freight due'")

    # service orders on V1 imports
    reefers = [b for b in v1_imports if b.setpoint is not None]
    add(h(9), f"ORDER id=S1 type=8 client=ACME container={v1_imports[30].id} seals=SL1001")
    add(h(9) + m(1), f"ORDER id=S2 type=9 client=ACME container={v1_imports[30].id} seals=SL1001")
    add(h(9) + m(2), f"ORDER id=S3 type=10 client=BOLT container={v1_imports[31].id}")
    add(h(9) + m(3), f"ORDER id=S4 type=12 client=CARGA")
    add(h(9) + m(4), f"ORDER id=S5 type=18 client=BOLT container={reefers[0].id}")
    add(h(9) + m(5), f"ORDER id=S6 type=16 client=ACME container={v1_imports[32].id}")
    for i, r in enumerate(reefers[:3]):
        add(h(10) + m(i), f"REEFER container={r.id} temp={r.setpoint + (0.5 if i else 3.5):g} user=gate1")
        add(h(11) + m(i), f"REEFER container={r.id} temp={r.setpoint - 0.5:g} user=gate1")
    add(h(11) + m(30), "ACCIDENT count=1")

    # export drops: 18 trucks x 2, then 4 combined trucks with 1 export + 1 import pickup
    clients = ["ACME", "BOLT", "CARGA"]
    t = h(13)
    oid = 0
    truck = 0

    def export_order(b: Box, at: timedelta) -> str:
        nonlocal oid
        oid += 1
        client = {"ACM": "ACME", "BOL": "BOLT", "CRG": "CARGA"}[b.id.owner_code]
        extra = f" imo={b.imo}" if b.imo else ""
        add(at, f"ORDER id=X{oid:03d} type=1 client={client} container={b.id} size={b.size_type} "
                f"weight={b.weight} pod={b.pod} visit=V2 seals=S{oid:04d}{extra}")
        return f"X{oid:03d}"

    def import_order(b: Box, client: str, at: timedelta) -> str:
        nonlocal oid
        oid += 1
        extra = f" imo={b.imo}" if b.imo else ""
        add(at, f"ORDER id=D{oid:03d} type=3 client={client} container={b.id}{extra}")
        return f"D{oid:03d}"

    for k in range(18):
        a = export_order(exports[2 * k], t - m(30))
        b = export_order(exports[2 * k + 1], t - m(30))
        truck += 1
        add(t, f"TRUCK_ARRIVAL id=T{truck:02d} plate=TR-{truck:03d} orders={a},{b} user=gate1")
        t += m(10)
    pick = [b for b in v1_imports if b.id not in (held,)]
    pick_iter = iter(pick[22:])
    for k in range(4):
        a = export_order(exports[36 + k], t - m(30))
        box = next(pick_iter)
        d = import_order(box, clients[k % 3], t - m(20))
        truck += 1
        add(t, f"TRUCK_ARRIVAL id=T{truck:02d} plate=TR-{truck:03d} orders={a},{d} user=gate1")
        t += m(10)
    # change the outbound visit of one export order to the same call (type 15)
    add(t, "ORDER id=S7 type=15 client=ACME visit=V2 target=X001")

    add(h(20), f"HOLD target=container:{released} authority=Line action=release")
    add(h(20) + m(5), "LOCK command='LOCK CLIENT CARGA' user=bill1")

    add(h(24 + 6), "VESSEL_ARRIVAL visit=V2 profile=MAINLINE etd=2026-03-03T14:00:00Z "
                   "baplie=v2_baplie.edi movins=v2_movins.edi line=LINEB user=planner1")
    # 28 import pickups on day 1
    t = h(24 + 8)
    picks = [held, released] + [next(pick_iter).id for _ in range(26)]
    boxes = {b.id: b for b in v1_imports}
    for k, cid in enumerate(picks):
        client = clients[k % 3]
        d = import_order(boxes[cid], client, t - m(15))
        truck += 1
        customs = "no" if k == 5 else "yes"
        mismatch = " mismatch=seals" if k == 7 else ""
        add(t, f"TRUCK_ARRIVAL id=T{truck:02d} plate=TR-{truck:03d} orders={d} customs={customs}"
               f"{mismatch} user=gate1")
        t += m(12)
        if k == 12:
            add(t, "LOCK command='UNLOCK CLIENT CARGA' user=bill1")
            t += m(1)
    ev.sort(key=lambda x: x[0])
    lines = [f"{_t(d)} {text}" for d, text in ev]
    (out / "scenario.txt").write_text(
        f"# reference scenario, seed {seed}\n" + "\n".join(lines) + "\n", "utf-8")
    return out
