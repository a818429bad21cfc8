import random
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tos_core.edifact import (
    Cell,
    ConfirmedMove,
    GateDirection,
    GateEvent,
    Instruction,
    MovinsInstruction,
    ServiceChars,
    StowEntry,
    build_baplie,
    build_interchange,
    build_movins,
    emit_coarri,
    emit_codeco,
    inspect,
    parse_baplie,
    parse_coarri,
    parse_codeco,
    parse_movins,
    seg,
    serialize,
    tokenize,
)
from tos_core.errors import (
    DanglingRelease,
    EmptyInput,
    EmptyMoveList,
    EnvelopeMismatch,
    InvalidContainerId,
    MalformedCell,
    NotBaplie,
    NotMovins,
    UnterminatedSegment,
    ValidationFailed,
    VisitNotWorking,
)
from tos_core.model import ContainerId, VesselVisit, VisitStatus

from conftest import utc
from gen import PUNCT, random_document, stow_entries

T0 = utc(2026, 3, 2, 6)


def test_minimal_interchange():
    doc = tokenize("UNB+UNOA:2+A+B+240101:1200+1'UNH+1+X'UNT+2+1'UNZ+1+1'")
    assert [s.tag for s in doc.segments] == ["UNB", "UNH", "UNT", "UNZ"]
    assert doc.message_types() == ["X"]


def test_release_character_decoding():
    doc = tokenize("UNB+UNOA:2+A+B+240101:1200+1'UNH+1+X'FTX+?+1:a?:b?'c??'UNT+3+1'UNZ+1+1'")
    ftx = doc.segments[2]
    assert ftx.elements == (("+1", "a:b'c?"),)


def test_una_and_whitespace_between_segments():
    text = "UNA|*.! ~\nUNB*UNOA|2*A*B*240101|1200*7~\r\nUNZ*0*7~\n"
    doc = tokenize(text)
    assert doc.service_chars == ServiceChars("|", "*", ".", "!", "~")
    assert len(doc.segments) == 2
    assert serialize(doc) == "UNA|*.! ~UNB*UNOA|2*A*B*240101|1200*7~UNZ*0*7~"


@pytest.mark.parametrize("text, error", [
    ("", EmptyInput),
    ("  \n", EmptyInput),
    ("UNB+UNOA:2+A+B+240101:1200+1'UNZ+0+1", UnterminatedSegment),
    ("UNB+UNOA:2+A+B+240101:1200+1'UNZ+0+1?", DanglingRelease),
    ("UNB+UNOA:2+A+B+240101:1200+1'UNH+1+X'UNT+5+1'UNZ+1+1'", EnvelopeMismatch),
    ("UNB+UNOA:2+A+B+240101:1200+1'UNZ+0+2'", EnvelopeMismatch),
    ("UNH+1+X'UNT+2+1'", EnvelopeMismatch),
])
def test_tokenize_errors(text, error):
    with pytest.raises(error):
        tokenize(text)


def test_service_chars_must_be_distinct():
    with pytest.raises(ValidationFailed):
        ServiceChars("+", "+", ".", "?", "'")


def test_quote_in_component_is_released():
    doc = build_interchange([("X", [seg("FTX", "it's")])], sender="A", recipient="B", control_ref="1",
                            when=T0)
    assert "FTX+it?'s'" in serialize(doc)


def test_empty_interchange_is_two_segments():
    doc = build_interchange([], sender="A", recipient="B", control_ref="9", when=T0)
    text = serialize(doc)
    assert text.count("'") == 2 and text.startswith("UNB") and "UNZ+0+9'" in text


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_round_trip_random_documents(rng):
    doc = random_document(rng)
    text = serialize(doc)
    assert tokenize(text) == doc
    assert serialize(tokenize(text)) == text


@given(st.lists(st.text(alphabet=PUNCT[:10] + "ab ", max_size=8), min_size=1, max_size=4))
def test_component_round_trip(components):
    doc = build_interchange([("X", [seg("FTX", components)])], sender="A", recipient="B",
                            control_ref="1", when=T0)
    back = tokenize(serialize(doc))
    assert list(back.segments[2].elements[0]) == components


def _fixture_entries():
    return [
        StowEntry(ContainerId.build("ABC", 1), Cell(1, 1, 1), 12000, "FRMRS", "22G1", "CNSHA"),
        StowEntry(ContainerId.build("ABC", 2), Cell(1, 2, 1), 8000, "ITGOA", "45G1", None, "3"),
        StowEntry(ContainerId.build("ABC", 3), Cell(3, 1, 2), 9500, "FRMRS", "45R1", setpoint=-18.0),
    ]


def test_baplie_fixture_three_groups():
    doc = build_baplie(_fixture_entries(), visit_id="V1", when=T0)
    tags = [s.tag for s in doc.segments]
    assert tags.count("EQD") == 3 and tags.count("LOC") == 3 + 3 + 1
    assert parse_baplie(tokenize(serialize(doc))) == _fixture_entries()


def test_baplie_zero_groups():
    assert parse_baplie(build_baplie([], visit_id="V1", when=T0)) == []


def test_baplie_round_trip_random():
    rng = random.Random(5)
    entries = stow_entries(rng, 60)
    assert parse_baplie(tokenize(serialize(build_baplie(entries, visit_id="V9", when=T0)))) == entries


def test_baplie_unknown_segment_warns():
    body = [seg("LOC", "147", ["0010101", "", "5"]), seg("XYZ", "1"), seg("LOC", "11", "FRMRS"),
            seg("EQD", "CN", str(ContainerId.build("ABC", 4)), "22G1")]
    doc = build_interchange([("BAPLIE:D:95B:UN", body)], sender="A", recipient="B", control_ref="1",
                            when=T0)
    warnings = []
    entries = parse_baplie(doc, warnings=warnings)
    assert len(entries) == 1 and any("XYZ" in w for w in warnings)


def test_baplie_errors():
    with pytest.raises(NotBaplie):
        parse_baplie(build_movins([], visit_id="V", when=T0))
    bad_cell = [seg("LOC", "147", ["01A0101"]), seg("LOC", "11", "FRMRS")]
    with pytest.raises(MalformedCell):
        parse_baplie(build_interchange([("BAPLIE", bad_cell)], sender="A", recipient="B",
                                       control_ref="1", when=T0))
    bad_id = [seg("LOC", "147", ["0010101"]), seg("LOC", "11", "FRMRS"), seg("EQD", "CN", "ABCU0000002")]
    with pytest.raises(InvalidContainerId):
        parse_baplie(build_interchange([("BAPLIE", bad_id)], sender="A", recipient="B",
                                       control_ref="1", when=T0))


def test_movins_order_and_preferences():
    ins = [MovinsInstruction(Instruction.LOAD, "22G1", ContainerId.build("ABC", 5), pod="ITGOA"),
           MovinsInstruction(Instruction.LOAD, "45G1", None, Cell(4, 1, 1), "ITGOA"),
           MovinsInstruction(Instruction.RESTOW, "22G1", ContainerId.build("ABC", 6), Cell(2, 2, 2))]
    doc = build_movins(ins, visit_id="V2", when=T0, preferences={"22G1": 3})
    back = parse_movins(tokenize(serialize(doc)))
    assert [i.kind for i in back] == [Instruction.LOAD, Instruction.LOAD, Instruction.RESTOW]
    assert back[0].bay_preference == 3 and back[1].bay_preference is None
    assert back[2].container == ins[2].container and back[2].cell == Cell(2, 2, 2)
    assert parse_movins(build_movins([], visit_id="V2", when=T0)) == []
    with pytest.raises(NotMovins):
        parse_movins(build_baplie([], visit_id="V", when=T0))


def test_prestow_alias():
    doc = build_interchange([("PRESTOW:D:95B:UN", [seg("HAN", "LOA"), seg("EQD", "CN", "", "22G1")])],
                            sender="A", recipient="B", control_ref="1", when=T0)
    assert len(parse_movins(doc)) == 1


def test_coarri_and_codeco():
    visit = VesselVisit("V1", "P", T0, T0 + timedelta(hours=6), status=VisitStatus.WORKING)
    moves = [ConfirmedMove(ContainerId.build("ABC", i), "22G1", Instruction.DISCHARGE, Cell(1, 1, i),
                           T0 + timedelta(minutes=i)) for i in (1, 2)]
    doc = emit_coarri(visit, moves)
    assert [s.tag for s in doc.segments].count("EQD") == 2
    assert parse_coarri(tokenize(serialize(doc))) == moves
    with pytest.raises(EmptyMoveList):
        emit_coarri(visit, [])
    with pytest.raises(VisitNotWorking):
        emit_coarri(VesselVisit("V0", "P", T0, T0 + timedelta(hours=1)), moves)

    events = [GateEvent(ContainerId.build("ABC", 7), "22G1", GateDirection.IN, "TR-1", T0),
              GateEvent(ContainerId.build("ABC", 8), "45G1", GateDirection.OUT, "TR-2", T0, full=False)]
    doc = emit_codeco(events)
    assert parse_codeco(tokenize(serialize(doc))) == events
    with pytest.raises(EmptyMoveList):
        emit_codeco([])


def test_inspect_report():
    text = serialize(build_baplie(_fixture_entries(), visit_id="V1", when=T0))
    report = inspect(text)
    assert report.message_types == ["BAPLIE"] and report.records == 3 and not report.warnings
