"""Master-data kernel: container identity, ISO types, terminal geometry and the
reference-checked master store shared by every other module."""

from __future__ import annotations

import enum
import re
import string
from dataclasses import dataclass, field, fields, replace
from datetime import datetime
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

import networkx as nx

from .errors import (
    BadCharacters,
    BadLength,
    CheckDigitMismatch,
    DanglingReference,
    DuplicateId,
    UnknownCode,
    UnknownNode,
    ValidationFailed,
)
from .util import read_delimited

# ISO 6346 letter values: consecutive from 10, skipping multiples of 11.
LETTER_VALUES: dict[str, int] = {}
_v = 10
for _ch in string.ascii_uppercase:
    if _v % 11 == 0:
        _v += 1
    LETTER_VALUES[_ch] = _v
    _v += 1
del _v, _ch

CATEGORY_IDENTIFIERS = frozenset("UJZ")


def check_digit(prefix: str) -> int:
    """Check digit for the first ten characters of a container number."""
    total = 0
    for i, ch in enumerate(prefix):
        value = LETTER_VALUES[ch] if ch.isalpha() else int(ch)
        total += value << i
    return total % 11 % 10


@dataclass(frozen=True, order=True)
class ContainerId:
    owner_code: str
    category: str
    serial: str
    check_digit: int

    def __str__(self) -> str:
        return f"{self.owner_code}{self.category}{self.serial}{self.check_digit}"

    @classmethod
    def build(cls, owner_code: str, serial: int | str, category: str = "U") -> "ContainerId":
        """Make a valid id by computing the check digit."""
        serial = f"{int(serial):06d}"
        return cls(owner_code, category, serial, check_digit(owner_code + category + serial))


def validate_container_id(text: str) -> ContainerId:
    if len(text) != 11:
        raise BadLength(f"container id must have 11 characters, got {len(text)}: {text!r}")
    owner, category, serial, digit = text[:3], text[3], text[4:10], text[10]
    if not (all(c in string.ascii_uppercase for c in owner)
            and category in CATEGORY_IDENTIFIERS
            and all(c in string.digits for c in serial)
            and digit in string.digits):
        raise BadCharacters(f"malformed container id {text!r}")
    expected = check_digit(text[:10])
    if int(digit) != expected:
        raise CheckDigitMismatch(f"{text}: check digit {digit}, expected {expected}")
    return ContainerId(owner, category, serial, int(digit))


_PORT_RE = re.compile(r"^[A-Z]{2}[A-Z2-9]{3}$")


def validate_port_code(code: str) -> str:
    """Port codes are UN/LOCODE-shaped; only the shape is checked."""
    if not _PORT_RE.match(code):
        raise ValidationFailed(f"bad port code {code!r}")
    return code


# -- ISO size/type ------------------------------------------------------------

class Height(str, enum.Enum):
    STANDARD = "Standard"
    HIGH_CUBE = "HighCube"


class TypeGroup(str, enum.Enum):
    GENERAL = "General"
    REEFER = "Reefer"
    OPEN_TOP = "OpenTop"
    TANK = "Tank"
    FLAT = "Flat"


@dataclass(frozen=True)
class IsoSizeType:
    code: str
    length: int
    height: Height
    group: TypeGroup
    max_gross_kg: int

    @property
    def teu(self) -> int:
        return 1 if self.length == 20 else 2

    @property
    def is_reefer(self) -> bool:
        return self.group is TypeGroup.REEFER


class SizeTypeTable:
    """Lookup over an editable ISO size/type code table."""

    def __init__(self, entries: Iterable[IsoSizeType]):
        self._by_code = {e.code: e for e in entries}

    @classmethod
    def from_file(cls, path: str | Path) -> "SizeTypeTable":
        return cls(_parse_size_row(row) for row in read_delimited(Path(path).read_text("utf-8")))

    def __contains__(self, code: str) -> bool:
        return code in self._by_code

    def __iter__(self) -> Iterator[IsoSizeType]:
        return iter(self._by_code.values())

    def decode(self, code: str) -> IsoSizeType:
        try:
            return self._by_code[code]
        except KeyError:
            raise UnknownCode(f"unknown ISO size/type code {code!r}") from None


def _parse_size_row(row: dict[str, str]) -> IsoSizeType:
    length = int(row["length_ft"])
    if length not in (20, 40, 45):
        raise ValidationFailed(f"bad length {length} for {row['code']}")
    return IsoSizeType(row["code"], length, Height(row["height"]),
                       TypeGroup(row["group"]), int(row["max_gross_kg"]))


@lru_cache(maxsize=None)
def default_size_types() -> SizeTypeTable:
    text = resources.files("tos_core").joinpath("data/iso_size_types.txt").read_text("utf-8")
    return SizeTypeTable(_parse_size_row(r) for r in read_delimited(text))


def decode_size_type(code: str, table: SizeTypeTable | None = None) -> IsoSizeType:
    return (table or default_size_types()).decode(code)


# -- containers ---------------------------------------------------------------

class FullEmpty(str, enum.Enum):
    FULL = "Full"
    EMPTY = "Empty"


class Transaction(str, enum.Enum):
    IMPORT = "Import"
    EXPORT = "Export"
    TRANSSHIPMENT = "Transshipment"


@dataclass(frozen=True)
class Reefer:
    setpoint: float


@dataclass(frozen=True)
class Container:
    id: ContainerId
    size_type: IsoSizeType
    gross_weight: int
    pol: str
    pod: str
    transaction: Transaction = Transaction.IMPORT
    status: FullEmpty = FullEmpty.FULL
    imo_class: str | None = None
    reefer: Reefer | None = None
    seal_numbers: tuple[str, ...] = ()
    outbound_visit: str | None = None

    def __post_init__(self):
        if self.gross_weight <= 0:
            raise ValidationFailed(f"{self.id}: weight must be positive")
        if self.gross_weight > self.size_type.max_gross_kg:
            raise ValidationFailed(
                f"{self.id}: {self.gross_weight} kg exceeds {self.size_type.max_gross_kg} kg "
                f"for {self.size_type.code}")
        if self.reefer is not None and not self.size_type.is_reefer:
            raise ValidationFailed(f"{self.id}: reefer settings on non-reefer type {self.size_type.code}")
        validate_port_code(self.pol)
        validate_port_code(self.pod)


# -- yard geometry ------------------------------------------------------------

class BlockKind(str, enum.Enum):
    STANDARD = "Standard"
    REEFER = "Reefer"
    IMO = "Imo"
    INTERCHANGE = "Interchange"


@dataclass(frozen=True, order=True)
class YardPosition:
    block: str
    bay: int
    row: int
    tier: int

    @property
    def stack(self) -> tuple[str, int, int]:
        return (self.block, self.bay, self.row)

    def __str__(self) -> str:
        return f"{self.block}-{self.bay:02d}-{self.row:02d}-{self.tier}"

    @classmethod
    def parse(cls, text: str) -> "YardPosition":
        block, bay, row, tier = text.rsplit("-", 3)
        return cls(block, int(bay), int(row), int(tier))


@dataclass(frozen=True)
class Block:
    id: str
    bays: int
    rows: int
    max_tier: int
    zone: str
    kind: BlockKind = BlockKind.STANDARD

    @property
    def slots(self) -> int:
        return self.bays * self.rows * self.max_tier

    def contains(self, pos: YardPosition) -> bool:
        return (pos.block == self.id and 1 <= pos.bay <= self.bays
                and 1 <= pos.row <= self.rows and 1 <= pos.tier <= self.max_tier)


@dataclass
class YardLayout:
    blocks: list[Block]
    edges: list[tuple[str, str, float]]
    quay_nodes: tuple[str, ...] = ()
    gate_node: str = "GATE"
    unavailable_zones: frozenset[str] = frozenset()
    name: str = "terminal"
    graph: nx.Graph = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = nx.Graph()
        for a, b, w in self.edges:
            if w <= 0:
                raise ValidationFailed(f"edge {a}-{b} has non-positive weight {w}")
            g.add_edge(a, b, weight=float(w))
        for b in self.blocks:
            g.add_node(b.zone)
        g.add_nodes_from(self.quay_nodes)
        g.add_node(self.gate_node)
        if not nx.is_connected(g):
            raise ValidationFailed("zone graph is not connected")
        ids = [b.id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise ValidationFailed("duplicate block ids")
        self.graph = g
        self._blocks = {b.id: b for b in self.blocks}
        self._dist: dict[str, dict[str, float]] = {}

    @property
    def key(self) -> str:
        return self.name

    def block(self, block_id: str) -> Block:
        try:
            return self._blocks[block_id]
        except KeyError:
            raise UnknownNode(f"unknown block {block_id!r}") from None

    def zones(self) -> list[str]:
        seen: dict[str, None] = {}
        for b in self.blocks:
            seen.setdefault(b.zone)
        return list(seen)

    def blocks_in_zone(self, zone: str) -> list[Block]:
        return [b for b in self.blocks if b.zone == zone]

    def zone_of(self, pos: YardPosition) -> str:
        return self.block(pos.block).zone

    def contains(self, pos: YardPosition) -> bool:
        return pos.block in self._blocks and self._blocks[pos.block].contains(pos)

    def total_slots(self) -> int:
        return sum(b.slots for b in self.blocks)

    def distances_from(self, node: str) -> dict[str, float]:
        if node not in self.graph:
            raise UnknownNode(f"unknown node {node!r}")
        if node not in self._dist:
            self._dist[node] = nx.single_source_dijkstra_path_length(self.graph, node)
        return self._dist[node]

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_dist"] = {}
        return state


def yard_distance(layout: YardLayout, a: str, b: str) -> float:
    """Shortest travel distance in meters between two graph nodes."""
    if b not in layout.graph:
        raise UnknownNode(f"unknown node {b!r}")
    return layout.distances_from(a)[b]


# -- vessels, equipment, partners --------------------------------------------

@dataclass(frozen=True)
class VesselProfile:
    name: str
    loa: float
    draft: float
    bays: int
    rows: int
    tiers: int
    max_stack_weight: int
    max_stack_height: int

    def __post_init__(self):
        for f in fields(self)[1:]:
            if getattr(self, f.name) <= 0:
                raise ValidationFailed(f"vessel {self.name}: {f.name} must be > 0")

    @property
    def key(self) -> str:
        return self.name

    @property
    def stack_height_limit(self) -> int:
        return min(self.tiers, self.max_stack_height)


class VisitStatus(enum.IntEnum):
    ANNOUNCED = 0
    BERTHED = 1
    WORKING = 2
    CLOSED = 3


@dataclass(frozen=True)
class VesselVisit:
    visit_id: str
    profile_id: str
    eta: datetime
    etd: datetime
    service: str | None = None
    status: VisitStatus = VisitStatus.ANNOUNCED

    def __post_init__(self):
        if not self.eta < self.etd:
            raise ValidationFailed(f"visit {self.visit_id}: eta must precede etd")

    @property
    def key(self) -> str:
        return self.visit_id

    def refs(self):
        yield Category.TRANSPORT, VesselProfile, self.profile_id
        if self.service:
            yield Category.SERVICE, Service, self.service

    def advanced(self, status: VisitStatus) -> "VesselVisit":
        if status < self.status:
            raise ValidationFailed(
                f"visit {self.visit_id}: cannot move from {self.status.name} back to {status.name}")
        return replace(self, status=status)


class EquipmentKind(str, enum.Enum):
    QUAY_CRANE = "QuayCrane"
    RTG = "Rtg"
    REACH_STACKER = "ReachStacker"
    TRACTOR = "Tractor"
    CHASSIS = "Chassis"


LIFTING_KINDS = frozenset({EquipmentKind.QUAY_CRANE, EquipmentKind.RTG, EquipmentKind.REACH_STACKER})


@dataclass(frozen=True)
class EquipmentSpec:
    id: str
    kind: EquipmentKind
    speed_empty: float
    speed_laden: float
    home_zone: str
    handling_time: float = 0.0
    max_stack_height: int | None = None

    def __post_init__(self):
        if self.speed_empty <= 0 or self.speed_laden <= 0:
            raise ValidationFailed(f"equipment {self.id}: speeds must be > 0")
        if self.kind not in LIFTING_KINDS and self.handling_time:
            raise ValidationFailed(f"equipment {self.id}: {self.kind.value} does not lift")

    @property
    def key(self) -> str:
        return self.id


class PartnerKind(str, enum.Enum):
    SHIPPING_LINE = "ShippingLine"
    AGENT = "Agent"
    TRUCKING_COMPANY = "TruckingCompany"
    NVOCC = "Nvocc"
    AUTHORITY = "Authority"


@dataclass(frozen=True)
class Partner:
    id: str
    kind: PartnerKind
    name: str
    billing_lock: bool = False

    @property
    def key(self) -> str:
        return self.id


@dataclass(frozen=True)
class Port:
    code: str
    name: str

    def __post_init__(self):
        validate_port_code(self.code)

    @property
    def key(self) -> str:
        return self.code


@dataclass(frozen=True)
class Service:
    """A liner service and its port rotation."""
    id: str
    line: str
    rotation: tuple[str, ...] = ()

    @property
    def key(self) -> str:
        return self.id

    def refs(self):
        yield Category.PARTNER, Partner, self.line
        for code in self.rotation:
            yield Category.PORT, Port, code


@dataclass(frozen=True)
class Truck:
    plate: str
    company: str

    @property
    def key(self) -> str:
        return self.plate

    def refs(self):
        yield Category.PARTNER, Partner, self.company


@dataclass(frozen=True)
class TerminalOperator:
    id: str
    name: str

    @property
    def key(self) -> str:
        return self.id


@dataclass(frozen=True)
class WorkShift:
    id: str
    start: str
    end: str
    overtime: bool = False

    @property
    def key(self) -> str:
        return self.id


@dataclass(frozen=True)
class StaffMember:
    id: str
    name: str
    shift: str | None = None

    @property
    def key(self) -> str:
        return self.id

    def refs(self):
        if self.shift:
            yield Category.SHIFT, WorkShift, self.shift


@dataclass(frozen=True)
class SystemUser:
    user: str
    role: str
    staff: str | None = None

    @property
    def key(self) -> str:
        return self.user

    def refs(self):
        if self.staff:
            yield Category.STAFF, StaffMember, self.staff


@dataclass(frozen=True)
class ConfigEntry:
    key: str
    value: str


class Category(enum.Enum):
    PARTNER = 1
    TRANSPORT = 2
    SERVICE = 3
    PORT = 4
    ISO_TYPE = 5
    OPERATOR = 6
    SHIFT = 7
    EQUIPMENT = 8
    STAFF = 9
    USER = 10
    CONFIG = 11
    TERMINAL = 12


RECORD_CATEGORIES: dict[type, Category] = {
    Partner: Category.PARTNER,
    VesselProfile: Category.TRANSPORT,
    VesselVisit: Category.TRANSPORT,
    Truck: Category.TRANSPORT,
    Service: Category.SERVICE,
    Port: Category.PORT,
    IsoSizeType: Category.ISO_TYPE,
    TerminalOperator: Category.OPERATOR,
    WorkShift: Category.SHIFT,
    EquipmentSpec: Category.EQUIPMENT,
    StaffMember: Category.STAFF,
    SystemUser: Category.USER,
    ConfigEntry: Category.CONFIG,
    YardLayout: Category.TERMINAL,
}


def record_key(record) -> str:
    if isinstance(record, IsoSizeType):
        return record.code
    return record.key


def record_refs(record):
    refs = getattr(record, "refs", None)
    return list(refs()) if refs else []


class MasterStore:
    """Single-writer store for the twelve kernel data categories.

    Records are keyed by (record type, key).  Insertion and deletion both keep
    the store free of dangling references.
    """

    def __init__(self):
        self._records: dict[type, dict[str, object]] = {t: {} for t in RECORD_CATEGORIES}

    def upsert_master(self, record, replace_existing: bool = False):
        rtype = type(record)
        if rtype not in RECORD_CATEGORIES:
            raise ValidationFailed(f"{rtype.__name__} is not a master-data record")
        key = record_key(record)
        if not key:
            raise ValidationFailed(f"{rtype.__name__} record without id")
        table = self._records[rtype]
        if key in table and not replace_existing:
            raise DuplicateId(f"{rtype.__name__} {key!r} already exists")
        for _cat, ref_type, ref_key in record_refs(record):
            if ref_key not in self._records[ref_type]:
                raise DanglingReference(
                    f"{rtype.__name__} {key!r} references missing {ref_type.__name__} {ref_key!r}")
        table[key] = record
        return record

    def get(self, rtype: type, key: str):
        try:
            return self._records[rtype][key]
        except KeyError:
            raise KeyError(f"no {rtype.__name__} {key!r}") from None

    def find(self, rtype: type, key: str):
        return self._records[rtype].get(key)

    def all(self, rtype: type) -> list:
        return [self._records[rtype][k] for k in sorted(self._records[rtype])]

    def by_category(self, category: Category) -> list:
        out = []
        for rtype, cat in RECORD_CATEGORIES.items():
            if cat is category:
                out.extend(self.all(rtype))
        return out

    def delete(self, rtype: type, key: str) -> None:
        if key not in self._records[rtype]:
            raise KeyError(f"no {rtype.__name__} {key!r}")
        for other in self.iter_records():
            for _cat, ref_type, ref_key in record_refs(other):
                if ref_type is rtype and ref_key == key:
                    raise DanglingReference(
                        f"{rtype.__name__} {key!r} still referenced by "
                        f"{type(other).__name__} {record_key(other)!r}")
        del self._records[rtype][key]

    def iter_records(self):
        for rtype in RECORD_CATEGORIES:
            for key in sorted(self._records[rtype]):
                yield self._records[rtype][key]

    def dangling(self) -> list[tuple[object, type, str]]:
        """Every (record, missing type, missing key) triple; empty when consistent."""
        out = []
        for rec in self.iter_records():
            for _cat, ref_type, ref_key in record_refs(rec):
                if ref_key not in self._records[ref_type]:
                    out.append((rec, ref_type, ref_key))
        return out

    def __len__(self) -> int:
        return sum(len(t) for t in self._records.values())
