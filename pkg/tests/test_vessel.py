import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tos_core.edifact import Cell, Instruction, MovinsInstruction, StowEntry
from tos_core.errors import NoFeasibleCell, StackWeightExceeded
from tos_core.model import ContainerId, VesselProfile, YardPosition
from tos_core.vessel import (
    StowagePlan,
    StowRejection,
    WorkKind,
    assign_stow_positions,
    build_discharge_list,
    build_load_list,
    detect_restows,
    plan_from_entries,
    restow_pairs,
    sequence_loading,
    split_bays,
)
from tos_core.yard import YardState

from conftest import box

PROFILE = VesselProfile("P", 200, 10, 6, 4, 4, 60000, 4)


def entry(serial, bay, row, tier, pod="FRMRS", weight=10000):
    return StowEntry(ContainerId.build("VSL", serial), Cell(bay, row, tier), weight, pod)


def test_discharge_list_filter_and_order():
    plan = plan_from_entries("V", PROFILE, [entry(1, 1, 1, 2), entry(2, 1, 1, 3, pod="ITGOA"),
                                            entry(3, 1, 1, 1), entry(4, 2, 1, 1)])
    out = build_discharge_list(plan, "FRMRS")
    assert [e.cell for e in out] == [Cell(1, 1, 2), Cell(1, 1, 1), Cell(2, 1, 1)]
    assert build_discharge_list(StowagePlan("V", PROFILE), "FRMRS") == []


def test_load_list_split_and_duplicates():
    yard = YardState()
    a, b = box(1), box(2)
    yard.place(a, YardPosition("B1", 1, 1, 1))
    ins = [MovinsInstruction(Instruction.LOAD, "22G1", a.id), MovinsInstruction(Instruction.LOAD, "22G1", b.id),
           MovinsInstruction(Instruction.LOAD, "22G1", a.id, bay_preference=3)]
    ll = build_load_list(ins, yard)
    assert [c.id for c in ll.loadable] == [a.id]
    assert ll.missing == [b.id] and ll.duplicates == [a.id]
    assert ll.preferences == {}


def test_stow_preference_and_weight_limit():
    delta = assign_stow_positions([box(1, weight=20000)], PROFILE, {"22G1": 3})
    assert list(delta.entries) == [Cell(3, 1, 1)]

    profile = VesselProfile("W", 100, 8, 2, 1, 4, 40000, 4)
    onboard = plan_from_entries("V", profile, [entry(1, 1, 1, 1, weight=35000)])
    rejections = []
    delta = assign_stow_positions([box(2, weight=10000)], profile, onboard=onboard, rejections=rejections)
    assert list(delta.entries) == [Cell(2, 1, 1)]
    assert rejections == [StowRejection(box(2).id, (1, 1), StackWeightExceeded)]

    heavy = plan_from_entries("V", profile, [entry(1, 1, 1, 1, weight=35000), entry(2, 2, 1, 1, weight=35000)])
    with pytest.raises(StackWeightExceeded):
        assign_stow_positions([box(3, weight=10000)], profile, onboard=heavy)


def test_full_vessel():
    tiny = VesselProfile("T", 50, 5, 1, 1, 1, 50000, 1)
    with pytest.raises(NoFeasibleCell):
        assign_stow_positions([box(1), box(2)], tiny)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(2, 30), st.sampled_from(["22G1", "45G1"])), min_size=1, max_size=60))
def test_stowage_invariants_hold(items):
    cs = [box(i, weight=w * 1000, size=s) for i, (w, s) in enumerate(items)]
    try:
        delta = assign_stow_positions(cs, PROFILE)
    except (NoFeasibleCell, StackWeightExceeded):
        return
    assert delta.check_invariants() == []
    assert len(delta.entries) == len(cs)


def _oracle_split(loads, k):
    """Best max load over all contiguous partitions into at most k non-empty groups."""
    n = len(loads)
    best = None
    for groups in range(1, min(k, n) + 1):
        for cuts in itertools.combinations(range(1, n), groups - 1):
            bounds = (0, *cuts, n)
            worst = max(sum(loads[a:b]) for a, b in zip(bounds, bounds[1:]))
            best = worst if best is None else min(best, worst)
    return best


def test_split_examples():
    assert split_bays([4, 4], 2) == [1, 1]
    assert split_bays([5, 3], 2) == [1, 1]
    assert split_bays([3], 2) == [1, 0]
    assert split_bays([1, 0], 2) == [1, 1]


@settings(max_examples=200)
@given(st.lists(st.integers(0, 12), min_size=1, max_size=8), st.integers(1, 4))
def test_split_matches_partition_brute_force(loads, cranes):
    sizes = split_bays(loads, cranes)
    assert len(sizes) == cranes and sum(sizes) == len(loads)
    bounds = list(itertools.accumulate([0] + sizes))
    worst = max(sum(loads[a:b]) for a, b in zip(bounds, bounds[1:]))
    assert worst == _oracle_split(loads, cranes)


def test_sequence_bottom_first_and_partition():
    cs = [box(i, weight=10000) for i in range(3)]
    delta = assign_stow_positions(cs, VesselProfile("S", 100, 8, 1, 1, 3, 90000, 3))
    seq = sequence_loading(delta, YardState(), ["QC1"])
    assert [m.cell.tier for m in seq.queues[0].moves] == [1, 2, 3]

    rng = random.Random(1)
    cs = [box(i, weight=rng.randint(3, 14) * 1000) for i in range(40)]
    delta = assign_stow_positions(cs, PROFILE)
    seq = sequence_loading(delta, YardState(), ["QC2", "QC1"])
    moved = [m.container for q in seq.queues for m in q.moves]
    assert sorted(moved) == sorted(c.id for c in cs)
    assert [q.crane_id for q in seq.queues] == ["QC1", "QC2"]
    assert max(seq.queues[0].bays) < min(seq.queues[1].bays)


def test_discharges_precede_loads_within_bay():
    onboard = [entry(1, 1, 1, 1), entry(2, 1, 1, 2)]
    delta = assign_stow_positions([box(5)], VesselProfile("S", 100, 8, 1, 2, 3, 90000, 3))
    seq = sequence_loading(delta, YardState(), ["QC1"], discharges=onboard)
    kinds = [m.kind for m in seq.queues[0].moves]
    assert kinds == [WorkKind.DISCHARGE, WorkKind.DISCHARGE, WorkKind.LOAD]
    assert [m.cell.tier for m in seq.queues[0].moves[:2]] == [2, 1]


def test_restow_pairs():
    onboard = plan_from_entries("V", PROFILE, [entry(1, 1, 1, 1)])
    ins = [MovinsInstruction(Instruction.RESTOW, "22G1", ContainerId.build("VSL", 1), Cell(2, 1, 1)),
           MovinsInstruction(Instruction.RESTOW, "22G1", ContainerId.build("VSL", 9), Cell(2, 1, 1))]
    pairs = restow_pairs(ins, onboard)
    assert len(pairs) == 1 and pairs[0][1] == Cell(2, 1, 1)


def test_detect_restows_single_container():
    yard = YardState()
    c = box(1)
    yard.place(c, YardPosition("B1", 1, 1, 1))
    delta = assign_stow_positions([c], PROFILE)
    assert detect_restows(sequence_loading(delta, yard, ["QC1"]).queues, yard) == 0
