"""Berth planning on a quay-position x time grid.

Space and time are continuous.  Allocation is first-feasible: the earliest
start at or after ETA, then the lowest quay position.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field, replace
from datetime import datetime

from .errors import (
    DraftExceedsDepth,
    DuplicateId,
    NoFeasibleWindow,
    UnknownVisit,
    ValidationFailed,
    VesselTooLong,
)
from .model import VesselProfile, VesselVisit
from .util import format_time, natural_key, write_delimited


@dataclass(frozen=True)
class DepthSegment:
    from_m: float
    to_m: float
    depth_m: float


@dataclass(frozen=True)
class Quay:
    length: float
    depth_profile: tuple[DepthSegment, ...]
    crane_pool: tuple[str, ...] = ()
    min_crane_spacing: float = 25.0

    def __post_init__(self):
        if self.length <= 0:
            raise ValidationFailed("quay length must be positive")
        edge = 0.0
        for s in self.depth_profile:
            if s.from_m != edge or s.to_m <= s.from_m:
                raise ValidationFailed(f"depth segments must tile the quay; gap or overlap at {edge} m")
            edge = s.to_m
        if edge != self.length:
            raise ValidationFailed(f"depth segments end at {edge} m, quay is {self.length} m")

    @property
    def max_depth(self) -> float:
        return max(s.depth_m for s in self.depth_profile)

    def depth_ok(self, start: float, end: float, draft: float) -> bool:
        return all(s.depth_m >= draft for s in self.depth_profile
                   if s.from_m < end and start < s.to_m)


@dataclass(frozen=True)
class BerthWindow:
    visit_id: str
    start_m: float
    end_m: float
    start: datetime
    end: datetime
    cranes: tuple[str, ...] = ()

    def overlaps(self, other: "BerthWindow") -> bool:
        return (self.start_m < other.end_m and other.start_m < self.end_m
                and self.start < other.end and other.start < self.end)


@dataclass
class BerthPlan:
    quay: Quay
    horizon_start: datetime
    horizon_end: datetime
    windows: dict[str, BerthWindow] = field(default_factory=dict)

    def sorted_windows(self) -> list[BerthWindow]:
        return sorted(self.windows.values(), key=lambda w: (w.start, w.start_m, w.visit_id))

    def state_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.quay, self.horizon_start, self.horizon_end)).encode())
        for w in self.sorted_windows():
            h.update(repr(w).encode())
        return h.hexdigest()

    def conflicts(self) -> list[tuple[str, str]]:
        ws = self.sorted_windows()
        return [(a.visit_id, b.visit_id) for i, a in enumerate(ws) for b in ws[i + 1:] if a.overlaps(b)]


def _find_window(plan: BerthPlan, visit: VesselVisit, profile: VesselProfile,
                 clearance: float) -> BerthWindow:
    quay = plan.quay
    span = profile.loa + clearance
    if span > quay.length:
        raise VesselTooLong(f"{visit.visit_id}: needs {span} m, quay is {quay.length} m")
    if profile.draft > quay.max_depth:
        raise DraftExceedsDepth(
            f"{visit.visit_id}: draft {profile.draft} m exceeds max depth {quay.max_depth} m")
    duration = visit.etd - visit.eta
    windows = list(plan.windows.values())
    times = sorted({visit.eta} | {w.end for w in windows if w.end > visit.eta})
    positions = sorted({0.0} | {w.end_m for w in windows} | {s.from_m for s in quay.depth_profile})
    positions = [p for p in positions if p + span <= quay.length and quay.depth_ok(p, p + span, profile.draft)]
    for start in times:
        end = start + duration
        if end > plan.horizon_end:
            break
        busy = [w for w in windows if w.start < end and start < w.end]
        for p in positions:
            if all(not (p < w.end_m and w.start_m < p + span) for w in busy):
                return BerthWindow(visit.visit_id, p, p + span, start, end)
    raise NoFeasibleWindow(f"{visit.visit_id}: no berth before horizon end {format_time(plan.horizon_end)}")


def allocate_berth(plan: BerthPlan, visit: VesselVisit, profile: VesselProfile,
                   clearance: float = 0.0) -> BerthWindow:
    if visit.visit_id in plan.windows:
        raise DuplicateId(f"visit {visit.visit_id} already has a berth window")
    window = _find_window(plan, visit, profile, clearance)
    plan.windows[visit.visit_id] = window
    return window


@dataclass(frozen=True)
class WhatIf:
    earliest_start: datetime
    position: float


@dataclass(frozen=True)
class Infeasible:
    reason: str


def whatif_capacity(plan: BerthPlan, hypothetical: VesselVisit, profile: VesselProfile,
                    clearance: float = 0.0) -> WhatIf | Infeasible:
    """Where and when the vessel would berth, without touching ``plan``."""
    scratch = copy.deepcopy(plan)
    scratch.windows.pop(hypothetical.visit_id, None)
    try:
        w = allocate_berth(scratch, hypothetical, profile, clearance)
    except (NoFeasibleWindow, DraftExceedsDepth, VesselTooLong) as exc:
        return Infeasible(str(exc))
    return WhatIf(w.start, w.start_m)


@dataclass(frozen=True)
class CraneAssignment:
    count: int
    crane_ids: tuple[str, ...]
    required: int
    cap: int
    infeasible: bool


def assign_cranes(visit: VesselVisit, profile: VesselProfile, move_count: int, rate: float,
                  quay: Quay, busy: frozenset[str] | set[str] = frozenset()) -> CraneAssignment:
    """Cranes needed to finish ``move_count`` moves between ETA and ETD.

    The count is capped by how many cranes fit along the hull and by the free
    pool; ``infeasible`` is set when the cap falls short of the requirement.
    """
    if move_count < 0 or rate <= 0:
        raise ValidationFailed("move_count must be >= 0 and rate > 0")
    hours = (visit.etd - visit.eta).total_seconds() / 3600
    required = 0 if move_count == 0 else max(1, math.ceil(move_count / (rate * hours)))
    free = [c for c in sorted(quay.crane_pool, key=natural_key) if c not in busy]
    cap = min(math.floor(profile.loa / quay.min_crane_spacing), len(free))
    count = min(required, cap)
    return CraneAssignment(count, tuple(free[:count]), required, cap, required > cap)


def set_cranes(plan: BerthPlan, visit_id: str, cranes: tuple[str, ...]) -> BerthWindow:
    if visit_id not in plan.windows:
        raise UnknownVisit(visit_id)
    plan.windows[visit_id] = replace(plan.windows[visit_id], cranes=tuple(cranes))
    return plan.windows[visit_id]


def busy_cranes(plan: BerthPlan, start: datetime, end: datetime) -> set[str]:
    return {c for w in plan.windows.values() if w.start < end and start < w.end for c in w.cranes}


def release_window(plan: BerthPlan, visit_id: str) -> BerthPlan:
    if visit_id not in plan.windows:
        raise UnknownVisit(f"no berth window for visit {visit_id}")
    del plan.windows[visit_id]
    return plan


def export_plan(plan: BerthPlan) -> str:
    rows = [(w.visit_id, f"{w.start_m:g}", f"{w.end_m:g}", format_time(w.start), format_time(w.end),
             " ".join(w.cranes)) for w in plan.sorted_windows()]
    return write_delimited(("visit", "start_m", "end_m", "start", "end", "cranes"), rows)

