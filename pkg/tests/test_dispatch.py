import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tos_core.dispatch import (
    EquipmentState,
    LegAction,
    LegStatus,
    SimClock,
    Simulation,
    advance_clock,
    dispatch_next,
    expand_move,
    idle_report,
    leg_duration,
    record_confirmation,
)
from tos_core.errors import EmptyQueue, NotRunning, UnknownNode, ValidationFailed
from tos_core.model import Block, EquipmentKind, EquipmentSpec, YardLayout

from conftest import four_zone_layout
from oracles import best_assignment

R, T, Q = EquipmentKind.RTG, EquipmentKind.TRACTOR, EquipmentKind.QUAY_CRANE
NODES = ("GATE", "Z1", "Z2", "Z3", "Z4", "Q1", "Q2")


def spec(eid, kind=T, home="Z1", handling=0.0, empty=5.0, laden=5.0):
    return EquipmentSpec(eid, kind, empty, laden, home, handling if kind in (R, Q) else 0.0)


def state(eid, kind, pos):
    return EquipmentState(spec(eid, kind, pos), pos)


def line_layout():
    edges = [("Z1", "A", 10), ("A", "B", 40), ("Z1", "Q1", 300), ("GATE", "Z1", 20)]
    return YardLayout([Block("B1", 2, 2, 2, "Z1")], edges, quay_nodes=("Q1",))


def test_expand_yard_to_quay_chain():
    chain = expand_move("M1", "Z2", "Q1", four_zone_layout(), crane="QC1")
    assert [(l.kind, l.action, l.from_node, l.to_node) for l in chain.legs] == [
        (R, LegAction.LIFT, "Z2", "Z2"), (T, LegAction.HAUL, "Z2", "Q1"), (Q, LegAction.SET, "Q1", "Q1")]
    assert chain.legs[2].required_equipment == "QC1"


def test_expand_other_shapes():
    layout = four_zone_layout()
    back = expand_move("M2", "Q2", "Z4", layout)
    assert [l.kind for l in back.legs] == [Q, T, R]
    assert len(expand_move("M3", "Z1", "Z1", layout).legs) == 1
    assert len(expand_move("M4", "Z1", "GATE", layout).legs) == 1
    assert [l.kind for l in expand_move("M5", "Z1", "Z3", layout).legs] == [R, T, R]
    with pytest.raises(UnknownNode):
        expand_move("M6", "Z9", "Q1", layout)
    with pytest.raises(ValidationFailed):
        expand_move("M7", "Q1", "Q2", layout)


def test_chain_legs_are_connected():
    layout = four_zone_layout()
    for src, dst in itertools.product(("Z1", "Z2", "Z3", "Z4"), ("Q1", "Q2")):
        for a, b in ((src, dst), (dst, src)):
            legs = expand_move("M", a, b, layout).legs
            assert legs[0].from_node == a and legs[-1].to_node == b
            assert all(x.to_node == y.from_node for x, y in zip(legs, legs[1:]))


def haul_chain(move_id="H1"):
    chain = expand_move(move_id, "Z1", "Q1", line_layout())
    chain.legs[0].status = LegStatus.DONE
    return chain


def test_nearer_tractor_wins():
    fleet = {"T1": state("T1", T, "B"), "T2": state("T2", T, "A")}
    out = dispatch_next([haul_chain()], fleet, SimClock(), line_layout())
    assert [(a.equipment, a.empty_m) for a in out] == [("T2", 10.0)]
    assert fleet["T2"].current_leg == "H1.2" and fleet["T1"].current_leg is None


def test_equidistant_lower_id():
    fleet = {"T5": state("T5", T, "A"), "T2": state("T2", T, "A")}
    out = dispatch_next([haul_chain()], fleet, SimClock(), line_layout())
    assert out[0].equipment == "T2"


def test_no_idle_tractor_stays_pending():
    fleet = {"T1": state("T1", T, "A")}
    fleet["T1"].busy_until = 100.0
    chain = haul_chain()
    assert dispatch_next([chain], fleet, SimClock(), line_layout()) == []
    assert chain.legs[1].status is LegStatus.PENDING
    assert idle_report(fleet, SimClock()) == []


def test_required_crane_is_respected():
    layout = four_zone_layout()
    chain = expand_move("M", "Q2", "Z4", layout, crane="QC2")
    fleet = {"QC1": state("QC1", Q, "Q2"), "QC2": state("QC2", Q, "Q1")}
    out = dispatch_next([chain], fleet, SimClock(), layout)
    assert out[0].equipment == "QC2" and out[0].empty_m == 300.0


def random_dispatch_case(rng):
    layout = four_zone_layout()
    fleet = {}
    for i in range(rng.randint(1, 5)):
        kind = rng.choice((R, T, T))
        eid = f"{'R' if kind is R else 'T'}{i + 1}"
        fleet[eid] = state(eid, kind, rng.choice(NODES))
        if rng.random() < 0.2:
            fleet[eid].busy_until = 10.0
    chains = []
    for i in range(rng.randint(1, 8)):
        zone = rng.choice(("Z1", "Z2", "Z3", "Z4"))
        quay = rng.choice(("Q1", "Q2"))
        chain = expand_move(f"M{i}", *((zone, quay) if rng.random() < 0.5 else (quay, zone)), layout)
        for leg in chain.legs[:rng.randint(0, 1)]:
            leg.status = LegStatus.DONE
        chains.append(chain)
    return layout, fleet, chains


def test_dispatch_matches_brute_force_assignment():
    rng = random.Random(10)
    for _ in range(400):
        layout, fleet, chains = random_dispatch_case(rng)
        clock = SimClock()
        ready = [c.ready_leg() for c in chains if c.ready_leg() is not None]
        idle = [e for e in fleet.values() if e.is_idle(clock.now)]
        expected = best_assignment(ready, idle, layout)
        out = dispatch_next(chains, fleet, clock, layout)
        assert (len(out), round(sum(a.empty_m for a in out), 6)) == (expected[0], round(expected[1], 6))
        assert len({a.equipment for a in out}) == len(out)
        for a in out:
            assert fleet[a.equipment].current_leg == a.leg


def test_handling_and_haul_durations():
    assert leg_duration(spec("T1", T, empty=5, laden=5), 0, 300) == 60.0
    assert leg_duration(spec("R1", R, handling=90), 0, 0) == 90.0


def test_clock_ties_and_errors():
    clock = SimClock()
    a = clock.schedule(5.0, "a")
    b = clock.schedule(5.0, "b")
    clock.schedule(1.0, "c")
    assert [clock.pop().kind for _ in range(3)] == ["c", "a", "b"]
    assert a.seq < b.seq and clock.now == 5.0
    with pytest.raises(EmptyQueue):
        clock.pop()
    with pytest.raises(ValidationFailed):
        clock.schedule(1.0, "late")


def small_sim():
    layout = line_layout()
    equipment = [spec("R1", R, "Z1", handling=90), spec("T1", T, "Z1"), spec("QC1", Q, "Q1", handling=60)]
    return Simulation(layout, equipment)


def test_chain_runs_in_order_and_confirms():
    sim = small_sim()
    sim.submit(expand_move("M1", "Z1", "Q1", sim.layout, crane="QC1"))
    sim.dispatch()
    assert sim.legs["M1.1"].status is LegStatus.RUNNING
    assert sim.legs["M1.2"].status is LegStatus.PENDING
    sim.step()
    assert sim.clock.now == 90.0 and sim.chains["M1"].ready_leg() is sim.legs["M1.2"]
    with pytest.raises(NotRunning):
        record_confirmation(sim, "M1.1")
    sim.dispatch()
    sim.step()
    assert sim.clock.now == 150.0  # 300 m laden at 5 m/s
    sim.dispatch()
    sim.step()
    assert sim.clock.now == 210.0 and sim.completed_moves == 1 and sim.idle()
    assert [h.leg for h in sim.history] == ["M1.1", "M1.2", "M1.3"]


def test_idle_report_durations():
    fleet = {"T1": state("T1", T, "A"), "T2": state("T2", T, "A")}
    fleet["T2"].busy_until = 500.0
    clock = SimClock(120.0)
    report = idle_report(fleet, clock)
    assert [(r.equipment, r.idle_seconds) for r in report] == [("T1", 120.0)]
    assert len(report) == sum(1 for e in fleet.values() if e.current_leg is None and e.busy_until <= clock.now)


@settings(max_examples=40, deadline=None)
@given(st.randoms(use_true_random=False))
def test_simulation_invariants(rng):
    layout = four_zone_layout()
    equipment = [spec("R1", R, "Z1", handling=60), spec("R2", R, "Z3", handling=60), spec("T1", T, "Z2"),
                 spec("T2", T, "Q1"), spec("QC1", Q, "Q1", handling=45), spec("QC2", Q, "Q2", handling=45)]
    sim = Simulation(layout, equipment)
    for i in range(rng.randint(1, 10)):
        zone = rng.choice(("Z1", "Z2", "Z3", "Z4"))
        quay = rng.choice(("Q1", "Q2"))
        sim.submit(expand_move(f"M{i}", *((zone, quay) if rng.random() < 0.5 else (quay, zone)), layout))
    while True:
        sim.dispatch()
        busy = [e.current_leg for e in sim.fleet.values() if e.current_leg]
        assert len(busy) == len(set(busy))
        if not len(sim.clock):
            break
        advance_clock(sim)
    assert sim.idle() and sim.completed_moves == len(sim.chains)
    for chain in sim.chains.values():
        for a, b in zip(chain.legs, chain.legs[1:]):
            assert a.start <= a.end <= b.start <= b.end
    per = {}
    for h in sim.history:
        assert h.kind is sim.fleet[h.equipment].spec.kind and h.end >= h.start
        per.setdefault(h.equipment, []).append(h)
    for hs in per.values():
        assert all(x.end <= y.start for x, y in zip(hs, hs[1:]))
        assert sum(h.end - h.start for h in hs) <= sim.clock.now + 1e-9
