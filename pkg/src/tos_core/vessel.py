"""Vessel planning: discharge and load lists, stow assignment under stack
limits, crane work sequencing and yard restow detection."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .edifact import Cell, Instruction, MovinsInstruction, StowEntry
from .errors import NoFeasibleCell, StackWeightExceeded, ValidationFailed
from .model import Container, ContainerId, VesselProfile, YardPosition, default_size_types
from .util import natural_key, write_delimited
from .yard import YardState, simulate_retrievals


@dataclass
class StowagePlan:
    visit_id: str
    profile: VesselProfile
    entries: dict[Cell, StowEntry] = field(default_factory=dict)

    def height(self, stack: tuple[int, int]) -> int:
        h = 0
        while Cell(stack[0], stack[1], h + 1) in self.entries:
            h += 1
        return h

    def stack_weight(self, stack: tuple[int, int]) -> int:
        return sum(e.weight for c, e in self.entries.items() if c.stack == stack)

    def add(self, entry: StowEntry) -> None:
        if entry.cell in self.entries:
            raise ValidationFailed(f"cell {entry.cell} already holds {self.entries[entry.cell].container}")
        self.entries[entry.cell] = entry

    def remove(self, container: ContainerId) -> StowEntry:
        for cell, e in self.entries.items():
            if e.container == container:
                return self.entries.pop(cell)
        raise KeyError(str(container))

    def merged(self, other: "StowagePlan") -> "StowagePlan":
        out = StowagePlan(self.visit_id, self.profile, dict(self.entries))
        for e in other.entries.values():
            out.add(e)
        return out

    def check_invariants(self) -> list[str]:
        p = self.profile
        problems = []
        seen: set[ContainerId] = set()
        stacks = sorted({c.stack for c in self.entries})
        for cell, e in self.entries.items():
            if e.container in seen:
                problems.append(f"{e.container} stowed twice")
            seen.add(e.container)
            if not (1 <= cell.bay <= p.bays and 1 <= cell.row <= p.rows and 1 <= cell.tier <= p.tiers):
                problems.append(f"{cell} outside vessel {p.name}")
        for stack in stacks:
            tiers = sorted(c.tier for c in self.entries if c.stack == stack)
            if tiers != list(range(1, len(tiers) + 1)):
                problems.append(f"stack {stack} has floating containers: tiers {tiers}")
            if len(tiers) > p.max_stack_height:
                problems.append(f"stack {stack} height {len(tiers)} > {p.max_stack_height}")
            w = self.stack_weight(stack)
            if w > p.max_stack_weight:
                problems.append(f"stack {stack} weight {w} > {p.max_stack_weight}")
        return problems


def plan_from_entries(visit_id: str, profile: VesselProfile, entries: Iterable[StowEntry]) -> StowagePlan:
    plan = StowagePlan(visit_id, profile)
    for e in entries:
        plan.add(e)
    return plan


def build_discharge_list(plan: StowagePlan, local_port: str) -> list[StowEntry]:
    """Entries for the local port, top tier first within each stack."""
    out = [e for e in plan.entries.values() if e.pod == local_port]
    return sorted(out, key=lambda e: (e.cell.bay, e.cell.row, -e.cell.tier))


@dataclass
class LoadList:
    loadable: list[Container] = field(default_factory=list)
    missing: list[ContainerId] = field(default_factory=list)
    duplicates: list[ContainerId] = field(default_factory=list)
    unresolved: list[MovinsInstruction] = field(default_factory=list)
    preferences: dict[ContainerId, int] = field(default_factory=dict)


def build_load_list(instructions: Sequence[MovinsInstruction], yard: YardState) -> LoadList:
    """Split load instructions into containers present in the yard and missing ones.

    A container instructed twice is kept at its first position and the repeat
    is recorded in ``duplicates``.  Slot-only instructions go to ``unresolved``.
    """
    out = LoadList()
    seen: set[ContainerId] = set()
    for ins in instructions:
        if ins.kind is not Instruction.LOAD:
            continue
        if ins.container is None:
            out.unresolved.append(ins)
            continue
        if ins.container in seen:
            out.duplicates.append(ins.container)
            continue
        seen.add(ins.container)
        if ins.container in yard:
            out.loadable.append(yard.containers[ins.container])
            if ins.bay_preference is not None:
                out.preferences[ins.container] = ins.bay_preference
        else:
            out.missing.append(ins.container)
    return out


def restow_pairs(instructions: Sequence[MovinsInstruction], onboard: StowagePlan
                 ) -> list[tuple[StowEntry, Cell | None]]:
    """Restows become a discharge of the current entry plus a reload.

    Returns (current entry, requested new cell) pairs for restow instructions
    whose container is on board.
    """
    by_container = {e.container: e for e in onboard.entries.values()}
    return [(by_container[ins.container], ins.cell) for ins in instructions
            if ins.kind is Instruction.RESTOW and ins.container in by_container]


@dataclass(frozen=True)
class StowRejection:
    container: ContainerId
    stack: tuple[int, int]
    reason: type


def assign_stow_positions(loadable: Sequence[Container], profile: VesselProfile,
                          preferences: Mapping[ContainerId | str, int] | None = None,
                          onboard: StowagePlan | None = None, visit_id: str = "",
                          rejections: list[StowRejection] | None = None) -> StowagePlan:
    """Stow each container in its preferred bay when possible, otherwise in the
    first feasible cell in canonical (bay, row, tier) order.

    Stacks skipped only because of the weight limit are reported through
    ``rejections`` as ``StackWeightExceeded``.
    """
    if not loadable:
        raise ValidationFailed("nothing to stow")
    preferences = preferences or {}
    size_types = default_size_types()
    base = onboard or StowagePlan(visit_id, profile)
    delta = StowagePlan(visit_id or base.visit_id, profile)
    heights: dict[tuple[int, int], int] = {}
    weights: dict[tuple[int, int], int] = {}
    lengths: dict[tuple[int, int], int] = {}
    for cell, e in base.entries.items():
        heights[cell.stack] = max(heights.get(cell.stack, 0), cell.tier)
        weights[cell.stack] = weights.get(cell.stack, 0) + e.weight
        if e.size_type in size_types:
            lengths.setdefault(cell.stack, size_types.decode(e.size_type).length)
    all_stacks = [(b, r) for b in range(1, profile.bays + 1) for r in range(1, profile.rows + 1)]
    limit = profile.stack_height_limit

    for c in loadable:
        bay = preferences.get(c.id, preferences.get(c.size_type.code))
        order = all_stacks
        if bay is not None:
            order = [s for s in all_stacks if s[0] == bay] + [s for s in all_stacks if s[0] != bay]
        weight_only = False
        chosen = None
        for stack in order:
            h = heights.get(stack, 0)
            if h + 1 > limit:
                continue
            if stack in lengths and lengths[stack] != c.size_type.length:
                continue
            if weights.get(stack, 0) + c.gross_weight > profile.max_stack_weight:
                weight_only = True
                if rejections is not None:
                    rejections.append(StowRejection(c.id, stack, StackWeightExceeded))
                continue
            chosen = Cell(stack[0], stack[1], h + 1)
            break
        if chosen is None:
            if weight_only:
                raise StackWeightExceeded(f"{c.id}: every open stack would exceed "
                                          f"{profile.max_stack_weight} kg")
            raise NoFeasibleCell(f"{c.id}: vessel {profile.name} has no free cell")
        heights[chosen.stack] = chosen.tier
        weights[chosen.stack] = weights.get(chosen.stack, 0) + c.gross_weight
        lengths.setdefault(chosen.stack, c.size_type.length)
        delta.add(StowEntry(c.id, chosen, c.gross_weight, c.pod, c.size_type.code, c.pol,
                            c.imo_class, None, c.reefer.setpoint if c.reefer else None))
    return delta


# -- crane sequencing ---------------------------------------------------------

class WorkKind(str, enum.Enum):
    LOAD = "Load"
    DISCHARGE = "Discharge"
    RESTOW = "Restow"


@dataclass(frozen=True)
class MoveInstruction:
    container: ContainerId
    kind: WorkKind
    cell: Cell
    yard_pos: YardPosition | None = None


@dataclass
class WorkQueue:
    crane_id: str
    moves: list[MoveInstruction] = field(default_factory=list)

    @property
    def bays(self) -> list[int]:
        return sorted({m.cell.bay for m in self.moves})


@dataclass
class LoadSequence:
    queues: list[WorkQueue]
    retrieval_order: list[ContainerId]


def split_bays(loads: Sequence[int], cranes: int) -> list[int]:
    """Cut points splitting per-bay move counts into contiguous crane ranges.

    Minimizes the busiest crane's move count; ties take the earliest cuts.
    Returns group sizes (number of bays per crane), one per crane.
    """
    n = len(loads)
    k = min(cranes, n)
    if k == 0:
        return [0] * cranes
    prefix = [0]
    for x in loads:
        prefix.append(prefix[-1] + x)
    inf = float("inf")
    # suffix[j][i]: best max load splitting loads[i:] into j groups
    suffix = [[inf] * (n + 1) for _ in range(k + 1)]
    suffix[0][n] = 0
    for j in range(1, k + 1):
        for i in range(n - j, -1, -1):
            best = inf
            for c in range(i + 1, n - j + 2):
                best = min(best, max(prefix[c] - prefix[i], suffix[j - 1][c]))
            suffix[j][i] = best
    target = suffix[k][0]
    sizes, i = [], 0
    for j in range(k, 0, -1):
        for c in range(i + 1, n - j + 2):
            if max(prefix[c] - prefix[i], suffix[j - 1][c]) <= target:
                sizes.append(c - i)
                i = c
                break
    return sizes + [0] * (cranes - k)


def interleave(queues: Sequence[WorkQueue], kind: WorkKind = WorkKind.LOAD) -> list[ContainerId]:
    """Global retrieval order: round-robin over the cranes' queues."""
    lanes = [[m.container for m in q.moves if m.kind is kind] for q in queues]
    out = []
    for i in range(max((len(l) for l in lanes), default=0)):
        out.extend(lane[i] for lane in lanes if i < len(lane))
    return out


def sequence_loading(delta: StowagePlan, yard: YardState, cranes: Sequence[str],
                     discharges: Sequence[StowEntry] = ()) -> LoadSequence:
    if not cranes:
        raise ValidationFailed("sequencing needs at least one crane")
    per_bay: dict[int, list[MoveInstruction]] = {}
    for e in sorted(discharges, key=lambda e: (e.cell.bay, -e.cell.tier, e.cell.row)):
        per_bay.setdefault(e.cell.bay, []).append(MoveInstruction(e.container, WorkKind.DISCHARGE, e.cell))
    for cell in sorted(delta.entries, key=lambda c: (c.bay, c.tier, c.row)):
        e = delta.entries[cell]
        per_bay.setdefault(cell.bay, []).append(
            MoveInstruction(e.container, WorkKind.LOAD, cell, yard.positions.get(e.container)))
    bays = sorted(per_bay)
    sizes = split_bays([len(per_bay[b]) for b in bays], len(cranes))
    queues, i = [], 0
    for crane, size in zip(sorted(cranes, key=natural_key), sizes):
        q = WorkQueue(crane)
        for b in bays[i:i + size]:
            q.moves.extend(per_bay[b])
        i += size
        queues.append(q)
    return LoadSequence(queues, interleave(queues))


def detect_restows(queues: Sequence[WorkQueue], yard: YardState, aux_stacks: int = 1) -> int:
    """Yard rehandles induced by retrieving loads in the queues' global order."""
    order = [cid for cid in interleave(queues) if cid in yard]
    by_stack: dict[tuple, list[ContainerId]] = {}
    for cid in order:
        by_stack.setdefault(yard.positions[cid].stack, []).append(cid)
    return sum(simulate_retrievals(yard.stack_contents(stack), targets, aux_stacks)
               for stack, targets in sorted(by_stack.items()))


def export_list(entries: Iterable[StowEntry]) -> str:
    return write_delimited(("container", "cell", "size_type", "weight_kg", "pod", "imo"),
                           ((str(e.container), e.cell.code(), e.size_type, e.weight, e.pod,
                             e.imo_class or "") for e in entries))
