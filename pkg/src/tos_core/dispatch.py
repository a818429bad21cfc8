"""Equipment dispatch: container moves expanded into chained equipment legs,
minimum empty-travel assignment to idle machines, and a next-event simulation clock."""

from __future__ import annotations

import enum
import heapq
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .errors import EmptyQueue, NotRunning, UnknownNode, ValidationFailed
from .model import LIFTING_KINDS, ContainerId, EquipmentKind, EquipmentSpec, YardLayout
from .util import format_seconds, natural_key, write_delimited


class LegAction(str, enum.Enum):
    LIFT = "Lift"
    HAUL = "Haul"
    SET = "Set"


class LegStatus(str, enum.Enum):
    PENDING = "Pending"
    ASSIGNED = "Assigned"
    RUNNING = "Running"
    DONE = "Done"


@dataclass
class Leg:
    id: str
    chain_id: str
    index: int
    kind: EquipmentKind
    action: LegAction
    from_node: str
    to_node: str
    required_equipment: str | None = None
    status: LegStatus = LegStatus.PENDING
    equipment: str | None = None
    start: float | None = None
    end: float | None = None
    empty_m: float = 0.0
    laden_m: float = 0.0
    # a leg that must be Done first, e.g. the previous move of the same quay crane
    after: str | None = None


@dataclass
class JobChain:
    move_id: str
    legs: list[Leg]
    container: ContainerId | None = None
    rehandle: bool = False
    tag: str = ""

    @property
    def done(self) -> bool:
        return all(l.status is LegStatus.DONE for l in self.legs)

    def ready_leg(self, legs: dict[str, Leg] | None = None) -> Leg | None:
        for leg in self.legs:
            if leg.status is LegStatus.DONE:
                continue
            if leg.status is not LegStatus.PENDING:
                return None
            if leg.after is not None and legs is not None and legs[leg.after].status is not LegStatus.DONE:
                return None
            return leg
        return None


@dataclass
class EquipmentState:
    spec: EquipmentSpec
    position: str
    busy_until: float = 0.0
    current_leg: str | None = None
    idle_since: float = 0.0
    jobs: int = 0

    @property
    def id(self) -> str:
        return self.spec.id

    def is_idle(self, now: float) -> bool:
        return self.current_leg is None and self.busy_until <= now


@dataclass(frozen=True)
class HistoryEntry:
    equipment: str
    kind: EquipmentKind
    leg: str
    action: LegAction
    start: float
    end: float
    empty_m: float
    laden_m: float
    from_node: str
    to_node: str
    rehandle: bool = False


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    seq: int
    kind: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


class SimClock:
    """Next-event clock; ties at one instant pop in scheduling order."""

    def __init__(self, now: float = 0.0):
        self.now = now
        self._queue: list[SimEvent] = []
        self._seq = 0

    def schedule(self, time: float, kind: str, payload: Any = None) -> SimEvent:
        if time < self.now:
            raise ValidationFailed(f"cannot schedule {kind} in the past ({time} < {self.now})")
        self._seq += 1
        ev = SimEvent(time, self._seq, kind, payload)
        heapq.heappush(self._queue, ev)
        return ev

    def peek(self) -> SimEvent | None:
        return self._queue[0] if self._queue else None

    def pop(self) -> SimEvent:
        if not self._queue:
            raise EmptyQueue("no pending events")
        ev = heapq.heappop(self._queue)
        self.now = max(self.now, ev.time)
        return ev

    def advance_to(self, time: float) -> None:
        if time > self.now:
            self.now = time

    def __len__(self) -> int:
        return len(self._queue)


# -- chain expansion ----------------------------------------------------------

def _node_kind(layout: YardLayout, node: str) -> str:
    if node in layout.quay_nodes:
        return "quay"
    if node == layout.gate_node:
        return "gate"
    if node in layout.zones():
        return "yard"
    raise UnknownNode(f"unknown node {node!r}")


def expand_move(move_id: str, src: str, dst: str, layout: YardLayout, *,
                crane: str | None = None, container: ContainerId | None = None,
                rehandle: bool = False) -> JobChain:
    """Legs needed to carry one container from ``src`` to ``dst``.

    Yard to quay is yard-crane lift, tractor haul, quay-crane set; quay to yard
    is the reverse.  A move inside one zone, or between a zone and the gate
    (external truck served at the stack), is a single yard-crane leg.
    """
    a, b = _node_kind(layout, src), _node_kind(layout, dst)
    R, T, Q = EquipmentKind.RTG, EquipmentKind.TRACTOR, EquipmentKind.QUAY_CRANE
    if a == "yard" and b == "quay":
        spec = [(R, LegAction.LIFT, src, src, None), (T, LegAction.HAUL, src, dst, None),
                (Q, LegAction.SET, dst, dst, crane)]
    elif a == "quay" and b == "yard":
        spec = [(Q, LegAction.LIFT, src, src, crane), (T, LegAction.HAUL, src, dst, None),
                (R, LegAction.SET, dst, dst, None)]
    elif a == "yard" and b == "yard" and src == dst:
        spec = [(R, LegAction.LIFT, src, dst, None)]
    elif a == "yard" and b == "yard":
        spec = [(R, LegAction.LIFT, src, src, None), (T, LegAction.HAUL, src, dst, None),
                (R, LegAction.SET, dst, dst, None)]
    elif a == "yard" and b == "gate":
        spec = [(R, LegAction.LIFT, src, src, None)]
    elif a == "gate" and b == "yard":
        spec = [(R, LegAction.SET, dst, dst, None)]
    else:
        raise ValidationFailed(f"no equipment chain from {a} {src!r} to {b} {dst!r}")
    legs = [Leg(f"{move_id}.{i + 1}", move_id, i, kind, action, f, t, req)
            for i, (kind, action, f, t, req) in enumerate(spec)]
    return JobChain(move_id, legs, container, rehandle)


# -- dispatch -----------------------------------------------------------------

@dataclass(frozen=True)
class Assignment:
    leg: str
    equipment: str
    empty_m: float


def _best_matching(legs: list[Leg], machines: list[EquipmentState], dist: list[dict[str, float]]):
    """Exact assignment of ``legs`` to distinct ``machines`` by DP over used-machine masks.

    Ranks solutions by (more legs assigned, less total empty travel, fewer RTG jobs
    on the chosen machines, lexicographically smaller machine ids in leg order).
    """
    m = len(machines)  # sorted by natural id, so index order is id order

    @lru_cache(maxsize=None)
    def best(i: int, mask: int):
        if i == len(legs):
            return (0, 0.0, 0, ()), ()
        leg = legs[i]
        rest_key, rest_pick = best(i + 1, mask)
        top = ((rest_key[0], rest_key[1], rest_key[2], (m,) + rest_key[3]), (None,) + rest_pick)
        for j, eq in enumerate(machines):
            if mask & (1 << j) or eq.spec.kind is not leg.kind:
                continue
            if leg.required_equipment and eq.id != leg.required_equipment:
                continue
            d = dist[i][eq.position]
            balance = eq.jobs if leg.kind is EquipmentKind.RTG else 0
            sub_key, sub_pick = best(i + 1, mask | (1 << j))
            key = (sub_key[0] - 1, round(sub_key[1] + d, 6), sub_key[2] + balance, (j,) + sub_key[3])
            if key < top[0]:
                top = (key, (j,) + sub_pick)
        return top

    if m > 20:
        raise ValidationFailed("fleet too large for exact dispatch of one equipment kind")
    return best(0, 0)[1]


def dispatch_next(pending: Iterable[JobChain], fleet: dict[str, EquipmentState], clock: SimClock,
                  layout: YardLayout, legs: dict[str, Leg] | None = None) -> list[Assignment]:
    """Assign ready legs to idle machines of the required kind so that as many
    legs as possible start and total empty travel is minimal.  Ties go to fewer
    running RTG jobs, then lower equipment ids.  Legs left over stay Pending.
    """
    ready = [leg for chain in pending if (leg := chain.ready_leg(legs)) is not None]
    idle = sorted((e for e in fleet.values() if e.is_idle(clock.now)), key=lambda e: natural_key(e.id))
    out = []
    # kinds are independent, so solve each one on its own
    for kind in sorted({leg.kind for leg in ready}, key=lambda k: k.value):
        kind_legs = [leg for leg in ready if leg.kind is kind]
        machines = [e for e in idle if e.spec.kind is kind]
        if not machines:
            continue
        dist = [layout.distances_from(leg.from_node) for leg in kind_legs]
        picks = _best_matching(kind_legs, machines, dist)
        for leg, d, j in zip(kind_legs, dist, picks):
            if j is None:
                continue
            eq = machines[j]
            if eq.spec.kind is not leg.kind or eq.current_leg is not None:
                raise AssertionError(f"{eq.id} cannot serve leg {leg.id}")
            leg.status = LegStatus.ASSIGNED
            leg.equipment = eq.id
            eq.current_leg = leg.id
            out.append(Assignment(leg.id, eq.id, d[eq.position]))
    order = {leg.id: i for i, leg in enumerate(ready)}
    out.sort(key=lambda a: order[a.leg])
    return out


def leg_duration(spec: EquipmentSpec, empty_m: float, laden_m: float) -> float:
    t = empty_m / spec.speed_empty + laden_m / spec.speed_laden
    if spec.kind in LIFTING_KINDS:
        t += spec.handling_time
    return t


# -- simulation ---------------------------------------------------------------

class Simulation:
    """Owns the fleet, the job chains, the clock and the move history."""

    def __init__(self, layout: YardLayout, equipment: Sequence[EquipmentSpec], start: float = 0.0):
        self.layout = layout
        self.clock = SimClock(start)
        self.fleet: dict[str, EquipmentState] = {}
        for spec in sorted(equipment, key=lambda s: natural_key(s.id)):
            if spec.home_zone not in layout.graph:
                raise UnknownNode(f"{spec.id}: home {spec.home_zone!r} is not a layout node")
            self.fleet[spec.id] = EquipmentState(spec, spec.home_zone, start, None, start)
        self.chains: dict[str, JobChain] = {}
        self.legs: dict[str, Leg] = {}
        self.history: list[HistoryEntry] = []
        self.completed_moves = 0

    def submit(self, chain: JobChain) -> None:
        if chain.move_id in self.chains:
            raise ValidationFailed(f"duplicate move id {chain.move_id}")
        self.chains[chain.move_id] = chain
        for leg in chain.legs:
            self.legs[leg.id] = leg

    def active_chains(self) -> list[JobChain]:
        return [c for c in self.chains.values() if not c.done]

    def dispatch(self) -> list[Assignment]:
        assignments = dispatch_next(self.active_chains(), self.fleet, self.clock, self.layout, self.legs)
        for a in assignments:
            self._start(self.legs[a.leg], a.empty_m)
        return assignments

    def _start(self, leg: Leg, empty_m: float) -> None:
        eq = self.fleet[leg.equipment]
        leg.status = LegStatus.RUNNING
        leg.start = self.clock.now
        leg.empty_m = empty_m
        leg.laden_m = yard_hops(self.layout, leg.from_node, leg.to_node)
        leg.end = leg.start + leg_duration(eq.spec, leg.empty_m, leg.laden_m)
        eq.busy_until = leg.end
        eq.jobs += 1
        self.clock.schedule(leg.end, "leg_done", leg.id)

    def schedule(self, time: float, kind: str, payload: Any = None) -> SimEvent:
        return self.clock.schedule(time, kind, payload)

    def step(self) -> list[SimEvent]:
        return advance_clock(self)

    def idle(self) -> bool:
        return not self.active_chains()


def yard_hops(layout: YardLayout, a: str, b: str) -> float:
    return 0.0 if a == b else layout.distances_from(a)[b]


def advance_clock(sim: Simulation) -> list[SimEvent]:
    """Pop the earliest event; leg completions are confirmed on the spot."""
    ev = sim.clock.pop()
    if ev.kind == "leg_done":
        record_confirmation(sim, ev.payload)
    return [ev]


def record_confirmation(sim: Simulation, leg_id: str) -> JobChain:
    leg = sim.legs[leg_id]
    if leg.status is not LegStatus.RUNNING:
        raise NotRunning(f"leg {leg_id} is {leg.status.value}")
    eq = sim.fleet[leg.equipment]
    leg.status = LegStatus.DONE
    eq.current_leg = None
    eq.position = leg.to_node
    eq.busy_until = sim.clock.now
    eq.idle_since = sim.clock.now
    chain = sim.chains[leg.chain_id]
    sim.history.append(HistoryEntry(eq.id, eq.spec.kind, leg.id, leg.action, leg.start, sim.clock.now,
                                    leg.empty_m, leg.laden_m, leg.from_node, leg.to_node, chain.rehandle))
    if chain.done:
        sim.completed_moves += 1
    return chain


@dataclass(frozen=True)
class IdleEquipment:
    equipment: str
    kind: EquipmentKind
    idle_seconds: float


def idle_report(fleet: dict[str, EquipmentState], clock: SimClock) -> list[IdleEquipment]:
    return [IdleEquipment(e.id, e.spec.kind, clock.now - e.idle_since)
            for e in sorted(fleet.values(), key=lambda e: natural_key(e.id)) if e.is_idle(clock.now)]


def export_history(history: Sequence[HistoryEntry]) -> str:
    rows = [(h.equipment, h.kind.value, h.leg, h.action.value, format_seconds(h.start),
             format_seconds(h.end), f"{h.empty_m:.1f}", f"{h.laden_m:.1f}", h.from_node, h.to_node,
             "Y" if h.rehandle else "N") for h in history]
    return write_delimited(("equipment", "kind", "leg", "action", "start", "end", "empty_m",
                            "laden_m", "from", "to", "rehandle"), rows)
