"""Yard planning: collection filters, grouped and scattered area strategies,
stacking policies, IMO segregation, rehandle estimation and capacity."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    ImoProhibited,
    NoFeasibleSlot,
    NotAPermutation,
    SlotOccupied,
    UnknownContainer,
    ValidationFailed,
    WouldFloat,
)
from .model import Block, BlockKind, Container, ContainerId, Transaction, YardLayout, YardPosition
from .util import write_delimited

UNMATCHED = None


# -- collections --------------------------------------------------------------

@dataclass(frozen=True)
class CollectionFilter:
    id: str
    priority: int
    size: int | None = None
    weight_min: int | None = None
    weight_max: int | None = None
    service: str | None = None
    pol: str | None = None
    pod: str | None = None
    transaction: Transaction | None = None
    visit: str | None = None

    def __post_init__(self):
        if all(v is None for v in (self.size, self.weight_min, self.weight_max, self.service,
                                   self.pol, self.pod, self.transaction, self.visit)):
            raise ValidationFailed(f"filter {self.id} has no predicate")

    def matches(self, c: Container, service: str | None = None) -> bool:
        return ((self.size is None or c.size_type.length == self.size)
                and (self.weight_min is None or c.gross_weight >= self.weight_min)
                and (self.weight_max is None or c.gross_weight < self.weight_max)
                and (self.service is None or service == self.service)
                and (self.pol is None or c.pol == self.pol)
                and (self.pod is None or c.pod == self.pod)
                and (self.transaction is None or c.transaction == self.transaction)
                and (self.visit is None or c.outbound_visit == self.visit))


def classify_container(c: Container, filters: Sequence[CollectionFilter],
                       service: str | None = None) -> str | None:
    """Id of the matching filter with the lowest priority number, or None.

    None means the container goes to the manual-planning queue.
    """
    prios = [f.priority for f in filters]
    if len(prios) != len(set(prios)):
        raise ValidationFailed("filter priorities must be unique")
    for f in sorted(filters, key=lambda f: f.priority):
        if f.matches(c, service):
            return f.id
    return UNMATCHED


class Strategy(str, enum.Enum):
    GROUPED = "Grouped"
    SCATTERED = "Scattered"


def default_strategy(transaction: Transaction) -> Strategy:
    return Strategy.SCATTERED if transaction is Transaction.TRANSSHIPMENT else Strategy.GROUPED


@dataclass(frozen=True)
class AreaAssignment:
    filter_id: str
    zones: tuple[str, ...]
    strategy: Strategy = Strategy.GROUPED

    def __post_init__(self):
        if not self.zones:
            raise ValidationFailed(f"assignment for {self.filter_id} has no zones")


# -- stacking policy ----------------------------------------------------------

class StackKey(str, enum.Enum):
    WEIGHT = "weight"
    POD = "pod"
    VESSEL = "vessel"
    LOAD_ORDER = "load_order"


class Direction(str, enum.Enum):
    HEAVIER_ON_TOP = "heavier_on_top"
    LIGHTER_ON_TOP = "lighter_on_top"
    SAME = "same"
    EARLIER_ON_TOP = "earlier_on_top"


_VALID_DIRECTIONS = {
    StackKey.WEIGHT: {Direction.HEAVIER_ON_TOP, Direction.LIGHTER_ON_TOP},
    StackKey.POD: {Direction.SAME},
    StackKey.VESSEL: {Direction.SAME},
    StackKey.LOAD_ORDER: {Direction.EARLIER_ON_TOP},
}


@dataclass(frozen=True)
class StackingPolicy:
    """Rules for putting a container on top of another.

    The default follows the operating rule of stacking heavier containers over
    lighter ones; flip the weight direction for the opposite convention.
    """
    keys: tuple[tuple[StackKey, Direction], ...] = ((StackKey.WEIGHT, Direction.HEAVIER_ON_TOP),)
    max_tier: int | None = None

    def __post_init__(self):
        if not self.keys:
            raise ValidationFailed("stacking policy needs at least one key")
        for key, direction in self.keys:
            if direction not in _VALID_DIRECTIONS[key]:
                raise ValidationFailed(f"direction {direction.value} not valid for {key.value}")

    def allows(self, top: Container, new: Container,
               ranks: Mapping[ContainerId, int] | None = None) -> bool:
        if top.size_type.length != new.size_type.length:
            return False
        for key, direction in self.keys:
            if key is StackKey.WEIGHT:
                if direction is Direction.HEAVIER_ON_TOP and new.gross_weight < top.gross_weight:
                    return False
                if direction is Direction.LIGHTER_ON_TOP and new.gross_weight > top.gross_weight:
                    return False
            elif key is StackKey.POD:
                if new.pod != top.pod:
                    return False
            elif key is StackKey.VESSEL:
                if new.outbound_visit != top.outbound_visit:
                    return False
            elif key is StackKey.LOAD_ORDER:
                ranks = ranks or {}
                r_new, r_top = ranks.get(new.id), ranks.get(top.id)
                if r_new is None or r_top is None or r_new > r_top:
                    return False
        return True


# -- IMO segregation ----------------------------------------------------------

@dataclass(frozen=True)
class ImoRule:
    prohibited: bool = False
    min_distance: int = 0


class ImoRuleTable:
    """Symmetric (class, class) -> rule map.

    Distances are Chebyshev over (bay, row) inside one block.  Pairs in
    different blocks are unconstrained unless ``cross_block_prohibited`` is set,
    in which case Prohibited pairs may not share the terminal.
    """

    def __init__(self, rules: Iterable[tuple[str, str, ImoRule]] = (),
                 cross_block_prohibited: bool = False):
        self._rules: dict[tuple[str, str], ImoRule] = {}
        self.cross_block_prohibited = cross_block_prohibited
        for a, b, rule in rules:
            key = tuple(sorted((a, b)))
            if key in self._rules and self._rules[key] != rule:
                raise ValidationFailed(f"IMO rule for {a}/{b} is not symmetric")
            if rule.min_distance < 0:
                raise ValidationFailed("IMO min distance must be >= 0")
            self._rules[key] = rule

    def rule(self, a: str, b: str) -> ImoRule | None:
        return self._rules.get(tuple(sorted((a, b))))

    def items(self):
        return sorted(self._rules.items())

    def __eq__(self, other):
        return (isinstance(other, ImoRuleTable) and self._rules == other._rules
                and self.cross_block_prohibited == other.cross_block_prohibited)


@dataclass(frozen=True)
class ImoViolation:
    position: YardPosition
    other_pos: YardPosition
    classes: tuple[str, str]
    reason: str


# -- yard state ---------------------------------------------------------------

class MoveKind(str, enum.Enum):
    PLAN = "Plan"
    MANUAL = "Manual"
    REHANDLE = "Rehandle"
    RETRIEVE = "Retrieve"


@dataclass(frozen=True)
class YardMove:
    seq: int
    container: ContainerId
    src: YardPosition | None
    dst: YardPosition | None
    kind: MoveKind


@dataclass
class YardState:
    occupancy: dict[YardPosition, ContainerId] = field(default_factory=dict)
    positions: dict[ContainerId, YardPosition] = field(default_factory=dict)
    containers: dict[ContainerId, Container] = field(default_factory=dict)
    collections: dict[ContainerId, str | None] = field(default_factory=dict)
    heights: dict[tuple[str, int, int], int] = field(default_factory=dict)
    log: list[YardMove] = field(default_factory=list)

    def __contains__(self, cid: ContainerId) -> bool:
        return cid in self.positions

    def __len__(self) -> int:
        return len(self.positions)

    def height(self, stack: tuple[str, int, int]) -> int:
        return self.heights.get(stack, 0)

    def top(self, stack: tuple[str, int, int]) -> ContainerId | None:
        h = self.height(stack)
        return self.occupancy[YardPosition(*stack, h)] if h else None

    def stack_contents(self, stack: tuple[str, int, int]) -> list[ContainerId]:
        return [self.occupancy[YardPosition(*stack, t)] for t in range(1, self.height(stack) + 1)]

    def stacks(self) -> list[tuple[str, int, int]]:
        return sorted(s for s, h in self.heights.items() if h)

    def is_top(self, cid: ContainerId) -> bool:
        pos = self.positions[cid]
        return pos.tier == self.height(pos.stack)

    def _record(self, cid, src, dst, kind):
        self.log.append(YardMove(len(self.log) + 1, cid, src, dst, kind))

    def place(self, container: Container, pos: YardPosition, collection: str | None = None,
              kind: MoveKind = MoveKind.PLAN) -> None:
        if container.id in self.positions:
            raise ValidationFailed(f"{container.id} is already in the yard")
        if pos in self.occupancy:
            raise SlotOccupied(f"{pos} holds {self.occupancy[pos]}")
        if pos.tier != self.height(pos.stack) + 1:
            raise WouldFloat(f"{pos}: stack height is {self.height(pos.stack)}")
        self.occupancy[pos] = container.id
        self.positions[container.id] = pos
        self.containers[container.id] = container
        self.collections[container.id] = collection
        self.heights[pos.stack] = pos.tier
        self._record(container.id, None, pos, kind)

    def remove(self, cid: ContainerId, kind: MoveKind = MoveKind.RETRIEVE) -> Container:
        if cid not in self.positions:
            raise UnknownContainer(f"{cid} is not in the yard")
        if not self.is_top(cid):
            raise WouldFloat(f"{cid} is under {self.top(self.positions[cid].stack)}")
        pos = self.positions.pop(cid)
        del self.occupancy[pos]
        self.collections.pop(cid, None)
        self.heights[pos.stack] = pos.tier - 1
        self._record(cid, pos, None, kind)
        return self.containers.pop(cid)

    def relocate(self, cid: ContainerId, new_pos: YardPosition, kind: MoveKind) -> None:
        if cid not in self.positions:
            raise UnknownContainer(f"{cid} is not in the yard")
        if new_pos in self.occupancy:
            raise SlotOccupied(f"{new_pos} holds {self.occupancy[new_pos]}")
        if not self.is_top(cid):
            raise WouldFloat(f"{cid} is under {self.top(self.positions[cid].stack)}")
        old = self.positions[cid]
        target_height = self.height(new_pos.stack) - (1 if new_pos.stack == old.stack else 0)
        if new_pos.tier != target_height + 1:
            raise WouldFloat(f"{new_pos}: stack height would be {target_height}")
        del self.occupancy[old]
        self.heights[old.stack] = old.tier - 1
        self.occupancy[new_pos] = cid
        self.positions[cid] = new_pos
        self.heights[new_pos.stack] = new_pos.tier
        self._record(cid, old, new_pos, kind)

    def zone_counts(self, layout: YardLayout, collection: str | None = None) -> Counter:
        counts: Counter = Counter()
        for cid, pos in self.positions.items():
            if collection is None or self.collections.get(cid) == collection:
                counts[layout.zone_of(pos)] += 1
        return counts

    def check_invariants(self, layout: YardLayout) -> list[str]:
        """Bijection, bounds and no-floating problems; empty when healthy."""
        problems = []
        if len(self.occupancy) != len(self.positions):
            problems.append("occupancy and position maps differ in size")
        for cid, pos in self.positions.items():
            if self.occupancy.get(pos) != cid:
                problems.append(f"{cid}: reverse index points at {pos}")
            if not layout.contains(pos):
                problems.append(f"{cid}: {pos} outside layout")
        for pos in self.occupancy:
            for t in range(1, pos.tier):
                if YardPosition(pos.block, pos.bay, pos.row, t) not in self.occupancy:
                    problems.append(f"{pos} floats over empty tier {t}")
            if self.height(pos.stack) < pos.tier:
                problems.append(f"{pos} above recorded stack height")
        return problems


# -- slot planning ------------------------------------------------------------

def block_accepts(block: Block, c: Container) -> bool:
    if block.kind is BlockKind.INTERCHANGE:
        return False
    if c.imo_class:
        return block.kind is BlockKind.IMO
    if c.reefer is not None:
        return block.kind is BlockKind.REEFER
    return block.kind is BlockKind.STANDARD


def check_imo_placement(state: YardState, layout: YardLayout, pos: YardPosition, imo_class: str,
                        table: ImoRuleTable) -> ImoViolation | None:
    """First stored IMO container the placement would conflict with, or None."""
    if not layout.contains(pos):
        raise ValidationFailed(f"{pos} outside layout")
    for other_pos in sorted(state.occupancy):
        if other_pos == pos:
            continue
        other = state.containers[state.occupancy[other_pos]]
        if not other.imo_class:
            continue
        rule = table.rule(imo_class, other.imo_class)
        if rule is None:
            continue
        classes = (imo_class, other.imo_class)
        if other_pos.block != pos.block:
            if rule.prohibited and table.cross_block_prohibited:
                return ImoViolation(pos, other_pos, classes, "prohibited in terminal")
            continue
        if rule.prohibited:
            return ImoViolation(pos, other_pos, classes, "prohibited in block")
        distance = max(abs(pos.bay - other_pos.bay), abs(pos.row - other_pos.row))
        if distance < rule.min_distance:
            return ImoViolation(pos, other_pos, classes,
                                f"distance {distance} < {rule.min_distance}")
    return None


def candidate_slots(c: Container, zone: str, state: YardState, layout: YardLayout,
                    policy: StackingPolicy, ranks: Mapping[ContainerId, int] | None = None):
    """Feasible slots in a zone, in canonical (block, bay, row) order, ignoring IMO."""
    for block in layout.blocks_in_zone(zone):
        if not block_accepts(block, c):
            continue
        limit = block.max_tier if policy.max_tier is None else min(block.max_tier, policy.max_tier)
        for bay in range(1, block.bays + 1):
            for row in range(1, block.rows + 1):
                stack = (block.id, bay, row)
                tier = state.height(stack) + 1
                if tier > limit:
                    continue
                top = state.top(stack)
                if top is not None and not policy.allows(state.containers[top], c, ranks):
                    continue
                yield YardPosition(block.id, bay, row, tier)


def plan_slot(c: Container, assignment: AreaAssignment, state: YardState, layout: YardLayout,
              imo: ImoRuleTable, policy: StackingPolicy,
              ranks: Mapping[ContainerId, int] | None = None) -> YardPosition:
    zones = [z for z in assignment.zones if z not in layout.unavailable_zones]
    known = set(layout.zones())
    for z in zones:
        if z not in known:
            raise ValidationFailed(f"assignment {assignment.filter_id} names unknown zone {z!r}")
    if assignment.strategy is Strategy.SCATTERED:
        counts = state.zone_counts(layout, assignment.filter_id)
        zones = sorted(zones, key=lambda z: (counts[z], zones.index(z)))
    imo_blocked = False
    for zone in zones:
        for pos in candidate_slots(c, zone, state, layout, policy, ranks):
            if c.imo_class and check_imo_placement(state, layout, pos, c.imo_class, imo):
                imo_blocked = True
                continue
            return pos
    if imo_blocked:
        raise ImoProhibited(f"{c.id} (IMO {c.imo_class}): every free slot violates segregation")
    raise NoFeasibleSlot(f"{c.id}: no feasible slot in zones {', '.join(zones) or '-'}")


# -- rehandles ----------------------------------------------------------------

def simulate_retrievals(stack: Sequence, retrievals: Sequence, aux_stacks: int = 1) -> int:
    """Greedy retrieval of ``retrievals`` from a bottom-to-top ``stack``.

    Blockers go to the lowest-indexed auxiliary stack other than their own
    (the original stack when that is the only other choice).  Every relocation
    counts, including repeat relocations of the same container.
    """
    if aux_stacks < 1:
        raise ValidationFailed("need at least one auxiliary stack")
    stacks = [list(stack)] + [[] for _ in range(aux_stacks)]
    where = {item: 0 for item in stack}
    moves = 0
    for target in retrievals:
        src = where[target]
        pile = stacks[src]
        while pile[-1] != target:
            blocker = pile.pop()
            dst = next((i for i in range(1, len(stacks)) if i != src), 0)
            stacks[dst].append(blocker)
            where[blocker] = dst
            moves += 1
        pile.pop()
        del where[target]
    return moves


def estimate_rehandles(stack: Sequence, retrieval_order: Sequence, aux_stacks: int = 1) -> int:
    if sorted(map(str, stack)) != sorted(map(str, retrieval_order)) or len(set(stack)) != len(stack):
        raise NotAPermutation("retrieval order must be a permutation of the stack")
    return simulate_retrievals(stack, retrieval_order, aux_stacks)


# -- reporting and manual moves -----------------------------------------------

@dataclass(frozen=True)
class ZoneCapacity:
    zone: str
    slots: int
    occupied: int

    @property
    def free(self) -> int:
        return self.slots - self.occupied

    @property
    def pct(self) -> float:
        return 100.0 * self.occupied / self.slots if self.slots else 0.0


def capacity_report(state: YardState, layout: YardLayout) -> list[ZoneCapacity]:
    counts = state.zone_counts(layout)
    return [ZoneCapacity(z, sum(b.slots for b in layout.blocks_in_zone(z)), counts[z])
            for z in layout.zones()]


def manual_override(state: YardState, layout: YardLayout, container: ContainerId,
                    new_pos: YardPosition) -> YardState:
    if container not in state.positions:
        raise UnknownContainer(f"{container} is not in the yard")
    if not layout.contains(new_pos):
        raise ValidationFailed(f"{new_pos} outside layout")
    if new_pos in state.occupancy:
        raise SlotOccupied(f"{new_pos} holds {state.occupancy[new_pos]}")
    state.relocate(container, new_pos, MoveKind.MANUAL)
    return state


def export_snapshot(state: YardState) -> str:
    rows = []
    for pos in sorted(state.occupancy):
        cid = state.occupancy[pos]
        c = state.containers[cid]
        rows.append((str(cid), str(pos), state.collections.get(cid) or "", c.size_type.code,
                     c.gross_weight, c.pod, c.imo_class or ""))
    return write_delimited(("container", "position", "collection", "size_type", "weight_kg",
                            "pod", "imo"), rows)
