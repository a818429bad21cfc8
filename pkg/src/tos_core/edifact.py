"""UN/EDIFACT tokenizer and serializer, plus bounded models for BAPLIE, MOVINS,
COARRI and CODECO.

The segment subset read for each message type lives in
``data/edifact_subset.txt``.  Segments outside that subset are skipped and
reported through the optional ``warnings`` list the parsers accept.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .errors import (
    BadSegmentTag,
    ContainerIdError,
    DanglingRelease,
    EdifactError,
    EmptyInput,
    EmptyMoveList,
    EnvelopeMismatch,
    InvalidContainerId,
    MalformedCell,
    MalformedInstruction,
    NotBaplie,
    NotMovins,
    UnterminatedSegment,
    ValidationFailed,
    VisitNotWorking,
)
from .model import ContainerId, VesselVisit, VisitStatus, validate_container_id
from .util import read_delimited

log = logging.getLogger(__name__)

_WHITESPACE = " \t\r\n"
_TAG_RE = re.compile(r"^[A-Z0-9]{3}$")
ENVELOPE_TAGS = frozenset({"UNA", "UNB", "UNG", "UNH", "UNT", "UNE", "UNZ"})


@dataclass(frozen=True)
class ServiceChars:
    component_sep: str = ":"
    element_sep: str = "+"
    decimal_mark: str = "."
    release_char: str = "?"
    segment_term: str = "'"

    def __post_init__(self):
        chars = self.as_tuple()
        if any(len(c) != 1 for c in chars):
            raise ValidationFailed("service characters must be single characters")
        if len(set(chars)) != 5:
            raise ValidationFailed(f"service characters must be distinct: {chars!r}")
        if any(c.isalnum() or c in _WHITESPACE for c in chars):
            raise ValidationFailed(f"service characters must be punctuation: {chars!r}")

    def as_tuple(self) -> tuple[str, str, str, str, str]:
        return (self.component_sep, self.element_sep, self.decimal_mark,
                self.release_char, self.segment_term)

    @property
    def specials(self) -> frozenset[str]:
        """Characters that must be released inside data."""
        return frozenset((self.component_sep, self.element_sep,
                          self.release_char, self.segment_term))

    def una(self) -> str:
        return ("UNA" + self.component_sep + self.element_sep + self.decimal_mark
                + self.release_char + " " + self.segment_term)


DEFAULT_CHARS = ServiceChars()


@dataclass(frozen=True)
class Segment:
    tag: str
    elements: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        if not _TAG_RE.match(self.tag):
            raise BadSegmentTag(f"bad segment tag {self.tag!r}")
        # an empty composite cannot be told apart from a single empty component
        object.__setattr__(self, "elements",
                           tuple(tuple(c) if len(c) else ("",) for c in self.elements))

    def get(self, element: int, component: int = 0, default: str = "") -> str:
        try:
            return self.elements[element][component]
        except IndexError:
            return default

    @property
    def qualifier(self) -> str:
        return self.get(0)


def seg(tag: str, *elements: str | Sequence[str]) -> Segment:
    """Build a segment; each element is a string or a sequence of components."""
    return Segment(tag, tuple((e,) if isinstance(e, str) else tuple(e) for e in elements))


@dataclass(frozen=True)
class EdifactDocument:
    segments: tuple[Segment, ...]
    service_chars: ServiceChars = DEFAULT_CHARS

    def messages(self) -> list[list[Segment]]:
        """Segments of each UNH..UNT message, inclusive."""
        out, current = [], None
        for s in self.segments:
            if s.tag == "UNH":
                current = [s]
            elif current is not None:
                current.append(s)
                if s.tag == "UNT":
                    out.append(current)
                    current = None
        return out

    def message_types(self) -> list[str]:
        return [m[0].get(1, 0) for m in self.messages()]


# -- tokenizer ----------------------------------------------------------------

def tokenize(text: str) -> EdifactDocument:
    if not text or not text.strip(_WHITESPACE):
        raise EmptyInput("empty EDIFACT input")
    chars = DEFAULT_CHARS
    pos = 0
    stripped = text.lstrip(_WHITESPACE)
    if stripped.startswith("UNA"):
        start = len(text) - len(stripped)
        if len(stripped) < 9:
            raise UnterminatedSegment("truncated UNA service string advice")
        una = stripped[3:9]
        chars = ServiceChars(una[0], una[1], una[2], una[3], una[5])
        pos = start + 9

    comp, elem, rel, term = chars.component_sep, chars.element_sep, chars.release_char, chars.segment_term
    segments: list[Segment] = []
    n = len(text)
    while True:
        while pos < n and text[pos] in _WHITESPACE:
            pos += 1
        if pos >= n:
            break
        seg_start = pos
        elements: list[list[str]] = [[]]
        buf: list[str] = []
        terminated = False
        while pos < n:
            ch = text[pos]
            if ch == rel:
                if pos + 1 >= n:
                    raise DanglingRelease(f"release character at end of input (offset {pos})")
                buf.append(text[pos + 1])
                pos += 2
                continue
            pos += 1
            if ch == term:
                elements[-1].append("".join(buf))
                terminated = True
                break
            if ch == elem:
                elements[-1].append("".join(buf))
                elements.append([])
                buf = []
            elif ch == comp:
                elements[-1].append("".join(buf))
                buf = []
            else:
                buf.append(ch)
        if not terminated:
            raise UnterminatedSegment(f"segment at offset {seg_start} has no terminator: "
                                      f"{text[seg_start:seg_start + 20]!r}")
        head = elements[0]
        if len(head) != 1:
            raise BadSegmentTag(f"composite segment tag at offset {seg_start}")
        segments.append(Segment(head[0], tuple(tuple(e) for e in elements[1:])))

    doc = EdifactDocument(tuple(segments), chars)
    check_envelope(doc)
    return doc


def check_envelope(doc: EdifactDocument) -> None:
    segs = doc.segments
    if not segs or segs[0].tag != "UNB" or segs[-1].tag != "UNZ":
        raise EnvelopeMismatch("interchange must start with UNB and end with UNZ")
    open_msg: Segment | None = None
    count = 0
    messages = 0
    for s in segs[1:-1]:
        if s.tag in ("UNB", "UNZ"):
            raise EnvelopeMismatch(f"nested {s.tag}")
        if s.tag == "UNH":
            if open_msg is not None:
                raise EnvelopeMismatch("UNH inside an open message")
            open_msg, count = s, 1
        elif open_msg is not None:
            count += 1
            if s.tag == "UNT":
                if s.get(0) != str(count):
                    raise EnvelopeMismatch(f"UNT counts {s.get(0)} segments, actual {count}")
                if s.get(1) != open_msg.get(0):
                    raise EnvelopeMismatch(
                        f"UNT reference {s.get(1)!r} does not match UNH {open_msg.get(0)!r}")
                open_msg = None
                messages += 1
        elif s.tag not in ("UNG", "UNE"):
            raise EnvelopeMismatch(f"{s.tag} segment outside a message")
    if open_msg is not None:
        raise EnvelopeMismatch(f"message {open_msg.get(0)!r} has no UNT")
    unz = segs[-1]
    if unz.get(0) != str(messages):
        raise EnvelopeMismatch(f"UNZ counts {unz.get(0)} messages, actual {messages}")
    if unz.get(1) != segs[0].get(4):
        raise EnvelopeMismatch("UNZ control reference does not match UNB")


# -- serializer ---------------------------------------------------------------

def _escape(value: str, chars: ServiceChars) -> str:
    specials = chars.specials
    if not any(c in specials for c in value):
        return value
    return "".join(chars.release_char + c if c in specials else c for c in value)


def serialize(doc: EdifactDocument) -> str:
    chars = doc.service_chars
    parts = [] if chars == DEFAULT_CHARS else [chars.una()]
    for s in doc.segments:
        parts.append(s.tag)
        for element in s.elements:
            parts.append(chars.element_sep)
            parts.append(chars.component_sep.join(_escape(c, chars) for c in element))
        parts.append(chars.segment_term)
    return "".join(parts)


# -- envelope building --------------------------------------------------------

def _stamp(when: datetime) -> tuple[str, str]:
    return when.strftime("%y%m%d"), when.strftime("%H%M")


def build_interchange(messages: Sequence[tuple[str, Sequence[Segment]]], *, sender: str,
                      recipient: str, control_ref: str, when: datetime,
                      chars: ServiceChars = DEFAULT_CHARS) -> EdifactDocument:
    """Wrap message bodies in UNB/UNH/UNT/UNZ with correct counters.

    ``messages`` holds (message identifier composite such as
    ``BAPLIE:D:95B:UN:SMDG22``, body segments) pairs.
    """
    date, time = _stamp(when)
    segs = [seg("UNB", ["UNOA", "2"], sender, recipient, [date, time], control_ref)]
    for i, (ident, body) in enumerate(messages, start=1):
        ref = str(i)
        segs.append(seg("UNH", ref, ident.split(":")))
        segs.extend(body)
        segs.append(seg("UNT", str(len(body) + 2), ref))
    segs.append(seg("UNZ", str(len(messages)), control_ref))
    doc = EdifactDocument(tuple(segs), chars)
    check_envelope(doc)
    return doc


def _edi_time(when: datetime) -> str:
    return when.strftime("%Y%m%d%H%M")


def _parse_edi_time(text: str) -> datetime:
    return datetime.strptime(text, "%Y%m%d%H%M").replace(tzinfo=timezone.utc)


# -- subset mapping -----------------------------------------------------------

@dataclass(frozen=True)
class SubsetMapping:
    version: str
    rules: dict[tuple[str, str, str], str]

    def target(self, message: str, s: Segment) -> str | None:
        if s.tag in ENVELOPE_TAGS:
            return "-"
        hit = self.rules.get((message, s.tag, s.qualifier))
        if hit is None:
            hit = self.rules.get((message, s.tag, "*"))
        return hit


def load_subset(text: str) -> SubsetMapping:
    m = re.search(r"#\s*subset-version:\s*(\S+)", text)
    rules = {(r["message"], r["tag"], r["qualifier"]): r["target"] for r in read_delimited(text)}
    return SubsetMapping(m.group(1) if m else "0", rules)


@lru_cache(maxsize=None)
def default_subset() -> SubsetMapping:
    return load_subset(resources.files("tos_core").joinpath("data/edifact_subset.txt").read_text("utf-8"))


def _walk(doc: EdifactDocument, message: str, accepted: Iterable[str],
          mapping: SubsetMapping | None, warnings: list[str] | None, error: type[EdifactError]):
    """Yield (target, segment) for every mapped body segment."""
    mapping = mapping or default_subset()
    types = doc.message_types()
    accepted = set(accepted)
    if not types or any(t not in accepted for t in types):
        raise error(f"expected {message} message, got {', '.join(types) or 'none'}")
    for msg in doc.messages():
        for s in msg:
            target = mapping.target(message, s)
            if target is None:
                note = f"{message}: skipped unmapped segment {s.tag}+{s.qualifier}"
                log.warning(note)
                if warnings is not None:
                    warnings.append(note)
                continue
            if target != "-":
                yield target, s


# -- cells and stow entries ---------------------------------------------------

@dataclass(frozen=True, order=True)
class Cell:
    bay: int
    row: int
    tier: int

    @property
    def stack(self) -> tuple[int, int]:
        return (self.bay, self.row)

    def code(self) -> str:
        return f"{self.bay:03d}{self.row:02d}{self.tier:02d}"

    @classmethod
    def parse(cls, text: str) -> "Cell":
        if len(text) != 7 or not text.isdigit():
            raise MalformedCell(f"stowage cell must be 7 digits BBBRRTT, got {text!r}")
        cell = cls(int(text[:3]), int(text[3:5]), int(text[5:]))
        if min(cell.bay, cell.row, cell.tier) < 1:
            raise MalformedCell(f"stowage cell indices start at 1: {text!r}")
        return cell

    def __str__(self) -> str:
        return self.code()


@dataclass(frozen=True)
class StowEntry:
    container: ContainerId
    cell: Cell
    weight: int
    pod: str
    size_type: str = "22G1"
    pol: str | None = None
    imo_class: str | None = None
    delivery: str | None = None
    setpoint: float | None = None


def _container(text: str) -> ContainerId:
    try:
        return validate_container_id(text)
    except ContainerIdError as exc:
        raise InvalidContainerId(str(exc)) from exc


def _number(text: str, chars: ServiceChars) -> Decimal:
    return Decimal(text.replace(chars.decimal_mark, "."))


def parse_baplie(doc: EdifactDocument, *, mapping: SubsetMapping | None = None,
                 warnings: list[str] | None = None) -> list[StowEntry]:
    entries: list[StowEntry] = []
    group: dict | None = None

    def close():
        if group is None or "container" not in group:
            return
        if "pod" not in group:
            raise EdifactError(f"BAPLIE group for {group['container']} has no discharge port")
        entries.append(StowEntry(**group))

    chars = doc.service_chars
    for target, s in _walk(doc, "BAPLIE", ("BAPLIE",), mapping, warnings, NotBaplie):
        if target == "cell":
            close()
            group = {"cell": Cell.parse(s.get(1)), "weight": 0}
            continue
        if group is None:
            if warnings is not None:
                warnings.append(f"BAPLIE: {s.tag} before first stowage cell ignored")
            continue
        if target == "container":
            group["container"] = _container(s.get(1))
            if s.get(2):
                group["size_type"] = s.get(2)
        elif target == "weight":
            group["weight"] = int(_number(s.get(2, 1) or "0", chars))
        elif target in ("pod", "pol", "delivery"):
            group[target] = s.get(1)
        elif target == "imo_class":
            group["imo_class"] = s.get(1)
        elif target == "setpoint":
            group["setpoint"] = float(_number(s.get(1), chars))
    close()
    return entries


def build_baplie(entries: Iterable[StowEntry], *, visit_id: str, when: datetime,
                 sender: str = "LINE", recipient: str = "TERMINAL",
                 control_ref: str = "1") -> EdifactDocument:
    body = [seg("BGM", "", visit_id, "9"), seg("DTM", ["137", _edi_time(when), "201"]),
            seg("TDT", "20", visit_id)]
    for e in entries:
        body.append(seg("LOC", "147", [e.cell.code(), "", "5"]))
        body.append(seg("MEA", "WT", "", ["KGM", str(e.weight)]))
        if e.setpoint is not None:
            body.append(seg("TMP", "2", [f"{e.setpoint:g}", "CEL"]))
        if e.pol:
            body.append(seg("LOC", "9", e.pol))
        body.append(seg("LOC", "11", e.pod))
        if e.delivery:
            body.append(seg("LOC", "83", e.delivery))
        body.append(seg("EQD", "CN", str(e.container), e.size_type, "", "", "5"))
        if e.imo_class:
            body.append(seg("DGS", "IMD", e.imo_class))
    return build_interchange([("BAPLIE:D:95B:UN:SMDG22", body)], sender=sender,
                             recipient=recipient, control_ref=control_ref, when=when)


# -- MOVINS -------------------------------------------------------------------

class Instruction(str, enum.Enum):
    LOAD = "LOA"
    DISCHARGE = "DIS"
    RESTOW = "RES"


@dataclass(frozen=True)
class MovinsInstruction:
    kind: Instruction
    size_type: str
    container: ContainerId | None = None
    cell: Cell | None = None
    pod: str | None = None
    bay_preference: int | None = None


def parse_movins(doc: EdifactDocument, *, mapping: SubsetMapping | None = None,
                 warnings: list[str] | None = None) -> list[MovinsInstruction]:
    """Instructions in message order; ``PRESTOW`` messages are read the same way."""
    raw: list[dict] = []
    preferences: dict[str, int] = {}
    for target, s in _walk(doc, "MOVINS", ("MOVINS", "PRESTOW"), mapping, warnings, NotMovins):
        if target == "bay_preference":
            bay, size_type = s.get(1), s.get(2)
            if not bay.isdigit() or not size_type:
                raise MalformedInstruction(f"bad bay preference {s}")
            preferences[size_type] = int(bay)
        elif target == "instruction":
            try:
                kind = Instruction(s.get(0))
            except ValueError:
                raise MalformedInstruction(f"unknown handling instruction {s.get(0)!r}") from None
            raw.append({"kind": kind})
        else:
            if not raw:
                raise MalformedInstruction(f"{s.tag} before any HAN instruction")
            current = raw[-1]
            if target == "container":
                if s.get(1):
                    current["container"] = _container(s.get(1))
                current["size_type"] = s.get(2)
            elif target == "cell":
                current["cell"] = Cell.parse(s.get(1))
            elif target == "pod":
                current["pod"] = s.get(1)
    out = []
    for item in raw:
        if "size_type" not in item:
            raise MalformedInstruction(f"{item['kind'].name} instruction without EQD")
        if not item["size_type"] and "container" not in item:
            raise MalformedInstruction("EQD carries neither container nor size/type")
        out.append(MovinsInstruction(bay_preference=preferences.get(item["size_type"]), **item))
    return out


def build_movins(instructions: Iterable[MovinsInstruction], *, visit_id: str, when: datetime,
                 preferences: dict[str, int] | None = None, sender: str = "LINE",
                 recipient: str = "TERMINAL", control_ref: str = "1") -> EdifactDocument:
    body = [seg("BGM", "", visit_id, "9"), seg("DTM", ["137", _edi_time(when), "201"]),
            seg("TDT", "20", visit_id)]
    for size_type, bay in sorted((preferences or {}).items()):
        body.append(seg("LOC", "ZZZ", f"{bay:03d}", size_type))
    for ins in instructions:
        body.append(seg("HAN", ins.kind.value))
        body.append(seg("EQD", "CN", str(ins.container) if ins.container else "", ins.size_type))
        if ins.cell:
            body.append(seg("LOC", "147", [ins.cell.code(), "", "5"]))
        if ins.pod:
            body.append(seg("LOC", "11", ins.pod))
    return build_interchange([("MOVINS:D:95B:UN:SMDG20", body)], sender=sender,
                             recipient=recipient, control_ref=control_ref, when=when)


# -- COARRI / CODECO ----------------------------------------------------------

@dataclass(frozen=True)
class ConfirmedMove:
    container: ContainerId
    size_type: str
    kind: Instruction
    cell: Cell
    time: datetime


def emit_coarri(visit: VesselVisit, confirmed_moves: Sequence[ConfirmedMove], *,
                control_ref: str = "1", sender: str = "TERMINAL",
                recipient: str = "LINE") -> EdifactDocument:
    if visit.status < VisitStatus.WORKING:
        raise VisitNotWorking(f"visit {visit.visit_id} is {visit.status.name}")
    if not confirmed_moves:
        raise EmptyMoveList(f"no confirmed moves for visit {visit.visit_id}")
    body = [seg("BGM", "270", visit.visit_id, "9"), seg("TDT", "20", visit.visit_id)]
    for m in confirmed_moves:
        body += [seg("EQD", "CN", str(m.container), m.size_type),
                 seg("HAN", m.kind.value),
                 seg("LOC", "147", [m.cell.code(), "", "5"]),
                 seg("DTM", ["203", _edi_time(m.time), "203"])]
    when = max(m.time for m in confirmed_moves)
    return build_interchange([("COARRI:D:95B:UN:ITG14", body)], sender=sender,
                             recipient=recipient, control_ref=control_ref, when=when)


def parse_coarri(doc: EdifactDocument, *, mapping: SubsetMapping | None = None,
                 warnings: list[str] | None = None) -> list[ConfirmedMove]:
    groups: list[dict] = []
    for target, s in _walk(doc, "COARRI", ("COARRI",), mapping, warnings, EdifactError):
        if target == "container":
            groups.append({"container": _container(s.get(1)), "size_type": s.get(2)})
        elif target == "visit":
            continue
        elif not groups:
            raise EdifactError(f"COARRI {s.tag} before EQD")
        elif target == "instruction":
            groups[-1]["kind"] = Instruction(s.get(0))
        elif target == "cell":
            groups[-1]["cell"] = Cell.parse(s.get(1))
        elif target == "time":
            groups[-1]["time"] = _parse_edi_time(s.get(0, 1))
    return [ConfirmedMove(**g) for g in groups]


class GateDirection(str, enum.Enum):
    IN = "GIN"
    OUT = "GOU"


@dataclass(frozen=True)
class GateEvent:
    container: ContainerId
    size_type: str
    direction: GateDirection
    plate: str
    time: datetime
    full: bool = True


def emit_codeco(gate_events: Sequence[GateEvent], *, control_ref: str = "1",
                sender: str = "TERMINAL", recipient: str = "LINE") -> EdifactDocument:
    if not gate_events:
        raise EmptyMoveList("no gate events to report")
    body = [seg("BGM", "36", control_ref, "9")]
    for e in gate_events:
        body += [seg("EQD", "CN", str(e.container), e.size_type, "", "", "5" if e.full else "4"),
                 seg("HAN", e.direction.value),
                 seg("TPL", e.plate),
                 seg("DTM", ["7", _edi_time(e.time), "203"])]
    when = max(e.time for e in gate_events)
    return build_interchange([("CODECO:D:95B:UN:ITG14", body)], sender=sender,
                             recipient=recipient, control_ref=control_ref, when=when)


def parse_codeco(doc: EdifactDocument, *, mapping: SubsetMapping | None = None,
                 warnings: list[str] | None = None) -> list[GateEvent]:
    groups: list[dict] = []
    for target, s in _walk(doc, "CODECO", ("CODECO",), mapping, warnings, EdifactError):
        if target == "container":
            groups.append({"container": _container(s.get(1)), "size_type": s.get(2),
                           "full": s.get(5) != "4"})
        elif not groups:
            raise EdifactError(f"CODECO {s.tag} before EQD")
        elif target == "instruction":
            groups[-1]["direction"] = GateDirection(s.get(0))
        elif target == "plate":
            groups[-1]["plate"] = s.get(0)
        elif target == "time":
            groups[-1]["time"] = _parse_edi_time(s.get(0, 1))
    return [GateEvent(**g) for g in groups]


@dataclass
class EdiReport:
    """Outcome of ``validate-edi``: message types and per-type counts."""
    message_types: list[str]
    segments: int
    records: int
    warnings: list[str] = field(default_factory=list)


def inspect(text: str) -> EdiReport:
    doc = tokenize(text)
    types = doc.message_types()
    warnings: list[str] = []
    records = 0
    parsers = {"BAPLIE": parse_baplie, "MOVINS": parse_movins, "PRESTOW": parse_movins,
               "COARRI": parse_coarri, "CODECO": parse_codeco}
    if types and len(set(types)) == 1 and types[0] in parsers:
        records = len(parsers[types[0]](doc, warnings=warnings))
    return EdiReport(types, len(doc.segments), records, warnings)
