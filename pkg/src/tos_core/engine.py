"""Simulation driver: feeds scenario events through berth, vessel, yard,
dispatch, gate and billing, and renders the output files.

The engine reserves yard slots and performs rehandles in the yard state at
planning time.  The dispatch simulation then times the equipment legs that
carry those moves out.
"""

from __future__ import annotations

import hashlib
import pickle
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path

from . import __version__
from .berth import BerthPlan, allocate_berth, assign_cranes, busy_cranes, export_plan, set_cranes
from .billing import (
    Advance,
    BillingEvent,
    Contract,
    InvoiceSequence,
    LockState,
    Source,
    StorageInterval,
    create_invoice,
    export_billing_feed,
    export_invoices,
    ingest_lock_command,
    parse_money,
    rate_events,
    resolve_contract,
)
from .config import TerminalConfig
from .dispatch import Simulation, export_history, expand_move, record_confirmation
from .edifact import (
    ConfirmedMove,
    GateDirection,
    GateEvent,
    Instruction,
    StowEntry,
    emit_codeco,
    emit_coarri,
    parse_baplie,
    parse_movins,
    serialize,
    tokenize,
)
from .errors import (
    CorruptSnapshot,
    CustomsUnpaid,
    HoldActive,
    NoFeasibleSlot,
    OrderNotValidated,
    TosError,
    UnknownContainer,
    UnknownServiceCode,
    ValidationFailed,
    VersionMismatch,
)
from .model import (
    BlockKind,
    Container,
    ContainerId,
    EquipmentKind,
    MasterStore,
    Reefer,
    SystemUser,
    Transaction,
    VesselVisit,
    VisitStatus,
    YardPosition,
    decode_size_type,
    validate_container_id,
)
from .orders import (
    DELIVERIES,
    RECEIPTS,
    SERVICE_CODES,
    Action,
    Authority,
    GateState,
    GateTransaction,
    Hold,
    HoldRegistry,
    InstructionDocument,
    Observed,
    OrderBook,
    OrderStatus,
    OrderType,
    ReeferLog,
    gate_advance,
    physical_check,
    record_reefer,
)
from .reporting import HandledMove, authority_stats, compute_kpis
from .scenario import Event, Scenario
from .security import AuditLog, Decision, authorize
from .util import format_time, from_seconds, natural_key, parse_time, to_seconds, write_delimited
from .vessel import (
    StowagePlan,
    WorkKind,
    assign_stow_positions,
    build_discharge_list,
    build_load_list,
    export_list,
    plan_from_entries,
    sequence_loading,
)
from .yard import (
    AreaAssignment,
    MoveKind,
    Strategy,
    candidate_slots,
    check_imo_placement,
    classify_container,
    capacity_report,
    export_snapshot,
    plan_slot,
    YardState,
)

GATE_STEP = 60.0          # seconds between gate states
HORIZON = timedelta(days=60)

EVENT_COMMANDS = {
    "VESSEL_ARRIVAL": "vessel.arrival",
    "TRUCK_ARRIVAL": "gate.process",
    "ORDER": "order.create",
    "HOLD": "hold.manage",
    "LOCK": "billing.lock",
    "REEFER": "yard.reefer",
    "ADVANCE": "billing.advance",
    "ACCIDENT": "safety.accident",
}

# order types executed as soon as they are validated
VESSEL_TYPES = frozenset({OrderType.LOAD_VESSEL, OrderType.DISCHARGE_VESSEL, OrderType.VESSEL_CALL})


@dataclass
class MoveInfo:
    kind: str               # discharge | load | rehandle | receipt | delivery
    container: ContainerId
    owner: str              # visit id or gate transaction id
    cell: object = None
    client: str = ""


@dataclass
class VisitRun:
    visit: VesselVisit
    line: str
    entries: list[StowEntry]
    instructions: list
    discharges: list[StowEntry] = field(default_factory=list)
    cranes: tuple[str, ...] = ()
    crane_infeasible: bool = False
    onboard: StowagePlan | None = None
    delta: StowagePlan | None = None
    pending: set[str] = field(default_factory=set)
    confirmed: list[ConfirmedMove] = field(default_factory=list)
    missing: list[ContainerId] = field(default_factory=list)
    held: list[ContainerId] = field(default_factory=list)
    started: bool = False


@dataclass
class GateRun:
    txn: GateTransaction
    observed_mismatch: tuple[str, ...] = ()
    pending: set[str] = field(default_factory=set)
    outcome: str = "open"


@dataclass(frozen=True)
class YardSnapshot:
    time: float
    occupancy: dict
    containers: dict
    stows: dict


class Engine:
    def __init__(self, config: TerminalConfig, default_contract: Contract,
                 contracts: list[Contract] = (), *, record_snapshots: bool = False):
        self.cfg = config
        self.layout = config.layout
        self.default_contract = default_contract
        self.contracts = list(contracts)
        self.record_snapshots = record_snapshots
        self.master = MasterStore()
        for p in config.partners:
            self.master.upsert_master(p)
        for prof in config.profiles.values():
            self.master.upsert_master(prof)
        for e in config.equipment:
            self.master.upsert_master(e)
        for user, role in sorted(config.users.items()):
            self.master.upsert_master(SystemUser(user, role))
        self.berth: BerthPlan | None = None
        self.sim: Simulation | None = None
        self.start_time: float | None = None
        self.yard = YardState()
        self.orders = OrderBook()
        self.holds = HoldRegistry()
        self.locks = LockState()
        self.order_cargo: dict[str, Container] = {}
        self.visits: dict[str, VisitRun] = {}
        self.gates: dict[str, GateRun] = {}
        self.moves: dict[str, MoveInfo] = {}
        self.billing: list[BillingEvent] = []
        self.intervals: dict[str, StorageInterval] = {}
        self.advances: list[Advance] = []
        self.sequence = InvoiceSequence()
        self.yard_in: dict[ContainerId, float] = {}
        self.reefers: dict[ContainerId, ReeferLog] = {}
        self.alarms: list = []
        self.instructions: list[InstructionDocument] = []
        self.gate_events: list[GateEvent] = []
        self.handled: list[HandledMove] = []
        self.audit = AuditLog()
        self.counters: Counter = Counter()
        self.accidents = 0
        self.cursor = 0
        self.snapshots: list[YardSnapshot] = []
        self.rejections: list[tuple[str, str]] = []
        self._ids: Counter = Counter()
        self.finished = False

    # -- plumbing -------------------------------------------------------------

    def _next_id(self, prefix: str) -> str:
        self._ids[prefix] += 1
        return f"{prefix}{self._ids[prefix]:05d}"

    def now_dt(self) -> datetime:
        return from_seconds(self.sim.clock.now)

    def _init(self, t: datetime) -> None:
        self.start_time = to_seconds(t)
        self.berth = BerthPlan(self.cfg.quay, t, t + HORIZON)
        self.sim = Simulation(self.layout, self.cfg.equipment, self.start_time)

    def _bill(self, code: str, client: str, time: float, container: ContainerId | None = None,
              qty: int = 1, source: Source = Source.TOS) -> BillingEvent:
        ev = BillingEvent(self._next_id("E"), code, client, qty, from_seconds(time),
                          str(container) if container else None, source)
        self.billing.append(ev)
        return ev

    def _submit(self, chain, info: MoveInfo) -> None:
        self.sim.submit(chain)
        self.moves[chain.move_id] = info

    def _process(self, ev) -> None:
        if ev.kind == "leg_done":
            chain = record_confirmation(self.sim, ev.payload)
            if chain.done:
                self._chain_done(chain)
        elif ev.kind == "vessel_start":
            self._start_vessel(ev.payload)
        elif ev.kind == "gate":
            self._gate_step(ev.payload)
        else:
            raise ValidationFailed(f"unknown simulation event {ev.kind}")

    def _advance_to(self, t: float) -> None:
        clock = self.sim.clock
        while clock.peek() is not None and clock.peek().time <= t:
            self._process(clock.pop())
            self.sim.dispatch()
        clock.advance_to(t)

    def _snap(self) -> None:
        if not self.record_snapshots:
            return
        stows = {}
        for vid, run in self.visits.items():
            if run.onboard is not None:
                plan = run.onboard.merged(run.delta) if run.delta else run.onboard
                stows[vid] = plan
        self.snapshots.append(YardSnapshot(self.sim.clock.now, dict(self.yard.occupancy),
                                           dict(self.yard.containers), stows))

    # -- public driving API ---------------------------------------------------

    def feed(self, event: Event, scenario: Scenario) -> None:
        if self.finished:
            raise ValidationFailed("engine already finished")
        if self.sim is None:
            self._init(event.time)
        self._advance_to(to_seconds(event.time))
        user = event.get("user", self.cfg.default_user)
        command = EVENT_COMMANDS[event.kind]
        if event.kind == "ORDER" and event.get("action", "create") != "create":
            command = "order.edit"
        if authorize(user, command, self.cfg.users, self.audit, event.time) is Decision.DENY:
            self.rejections.append((f"line {event.line_no}", f"{user} denied {command}"))
        else:
            try:
                outcome = getattr(self, "_on_" + event.kind.lower())(event, scenario) or "ok"
            except TosError as exc:
                exc.args = (f"scenario line {event.line_no} ({event.kind}): {exc}",)
                raise
            self.audit.append(event.time, user, command, outcome)
            self.sim.dispatch()
        self._snap()
        self.cursor += 1

    def drain(self) -> None:
        if self.sim is None:
            return
        clock = self.sim.clock
        while clock.peek() is not None:
            self._process(clock.pop())
            self.sim.dispatch()
        self._snap()

    # -- vessels --------------------------------------------------------------

    def _on_vessel_arrival(self, event: Event, scenario: Scenario) -> str:
        vid = event.require("visit")
        profile = self.cfg.profiles.get(event.require("profile"))
        if profile is None:
            raise ValidationFailed(f"unknown vessel profile {event.get('profile')!r}")
        visit = VesselVisit(vid, profile.name, event.time, parse_time(event.require("etd")))
        self.master.upsert_master(visit)
        entries = parse_baplie(tokenize(scenario.resolve(event.require("baplie")).read_text("utf-8")))
        instructions = []
        if event.get("movins"):
            instructions = parse_movins(tokenize(scenario.resolve(event.get("movins")).read_text("utf-8")))
        run = VisitRun(visit, event.get("line", "LINE"), entries, instructions)
        onboard = plan_from_entries(vid, profile, entries)
        run.discharges = build_discharge_list(onboard, self.cfg.local_port)
        window = allocate_berth(self.berth, visit, profile)
        loads = sum(1 for i in instructions if i.kind is Instruction.LOAD)
        ca = assign_cranes(visit, profile, len(run.discharges) + loads, self.cfg.crane_rate, self.cfg.quay,
                           busy_cranes(self.berth, window.start, window.end))
        if ca.count == 0 and len(run.discharges) + loads:
            raise ValidationFailed(f"visit {vid}: no quay crane available")
        run.cranes = ca.crane_ids
        run.crane_infeasible = ca.infeasible
        set_cranes(self.berth, vid, ca.crane_ids)
        self.visits[vid] = run
        self.sim.schedule(max(to_seconds(window.start), self.sim.clock.now), "vessel_start", vid)
        return f"berth {window.start_m:g}m {format_time(window.start)} cranes {len(ca.crane_ids)}"

    def _container_from_entry(self, e: StowEntry) -> Container:
        local = self.cfg.local_port
        trans = Transaction.TRANSSHIPMENT if e.delivery and e.delivery != local else Transaction.IMPORT
        return Container(e.container, decode_size_type(e.size_type), e.weight, e.pol or "XXXXX", e.pod,
                         trans, imo_class=e.imo_class,
                         reefer=Reefer(e.setpoint) if e.setpoint is not None else None)

    def _start_vessel(self, vid: str) -> None:
        run = self.visits[vid]
        run.visit = run.visit.advanced(VisitStatus.BERTHED).advanced(VisitStatus.WORKING)
        run.started = True
        now = self.sim.clock.now
        profile = self.cfg.profiles[run.visit.profile_id]
        self._bill("VESSEL_CALL", run.line, now)
        local = self.cfg.local_port
        run.onboard = plan_from_entries(vid, profile, [e for e in run.entries if e.pod != local])
        containers = {e.container: self._container_from_entry(e) for e in run.discharges}

        ll = build_load_list(run.instructions, self.yard)
        run.missing = list(ll.missing)
        loadable = []
        for c in ll.loadable:
            if self.holds.container_blocked(c.id):
                run.held.append(c.id)
            else:
                loadable.append(c)
        if loadable:
            run.delta = assign_stow_positions(loadable, profile, ll.preferences, run.onboard, vid)
        else:
            run.delta = StowagePlan(vid, profile)
        if not run.cranes:
            return
        seq = sequence_loading(run.delta, self.yard, run.cranes, run.discharges)
        quay_of = {e.id: e.home_zone for e in self.cfg.equipment}
        last_qc: dict[str, str | None] = {q.crane_id: None for q in seq.queues}
        depth = max((len(q.moves) for q in seq.queues), default=0)
        for i in range(depth):
            for q in seq.queues:
                if i >= len(q.moves):
                    continue
                m = q.moves[i]
                quay = quay_of[q.crane_id]
                mid = self._next_id("M")
                if m.kind is WorkKind.DISCHARGE:
                    c = containers[m.container]
                    pos = self._plan_and_place(c)
                    chain = expand_move(mid, quay, self.layout.zone_of(pos), self.layout,
                                        crane=q.crane_id, container=c.id)
                    qc_leg = chain.legs[0]
                    self.counters["discharged"] += 1
                    info = MoveInfo("discharge", c.id, vid, m.cell, run.line)
                else:
                    after = self._clear_blockers(m.container, f"visit:{vid}", vid)
                    pos = self.yard.positions[m.container]
                    self.yard.remove(m.container)
                    chain = expand_move(mid, self.layout.zone_of(pos), quay, self.layout,
                                        crane=q.crane_id, container=m.container)
                    chain.legs[0].after = after
                    qc_leg = chain.legs[-1]
                    self.counters["loaded"] += 1
                    info = MoveInfo("load", m.container, vid, m.cell, run.line)
                qc_leg.after = last_qc[q.crane_id]
                last_qc[q.crane_id] = qc_leg.id
                chain.tag = f"visit:{vid}"
                run.pending.add(mid)
                self._submit(chain, info)

    # -- yard helpers ---------------------------------------------------------

    def _zones_with(self, kind: BlockKind) -> tuple[str, ...]:
        return tuple(z for z in self.layout.zones()
                     if any(b.kind is kind for b in self.layout.blocks_in_zone(z)))

    def _assignment(self, c: Container) -> AreaAssignment:
        if c.imo_class:
            return AreaAssignment("imo", self._zones_with(BlockKind.IMO), Strategy.GROUPED)
        if c.reefer is not None:
            return AreaAssignment("reefer", self._zones_with(BlockKind.REEFER), Strategy.GROUPED)
        fid = classify_container(c, self.cfg.filters)
        area = self.cfg.areas.get(fid) if fid else None
        if area is None:
            area = self.cfg.fallback_area
        if area is None:
            raise NoFeasibleSlot(f"{c.id} matches no collection and no fallback area is configured")
        return area

    def _plan_and_place(self, c: Container) -> YardPosition:
        area = self._assignment(c)
        pos = plan_slot(c, area, self.yard, self.layout, self.cfg.imo, self.cfg.policy)
        self.yard.place(c, pos, area.filter_id)
        return pos

    def _clear_blockers(self, cid: ContainerId, tag: str, owner: str) -> str | None:
        """Relocate everything stacked on ``cid``; returns the last rehandle leg id."""
        if cid not in self.yard:
            raise UnknownContainer(f"{cid} is not in the yard")
        stack = self.yard.positions[cid].stack
        last = None
        while self.yard.top(stack) != cid:
            blocker = self.yard.top(stack)
            c = self.yard.containers[blocker]
            old = self.yard.positions[blocker]
            collection = self.yard.collections.get(blocker)
            self.yard.remove(blocker, MoveKind.REHANDLE)
            home = self.layout.zone_of(old)
            zones = [home] + [z for z in self.layout.zones() if z != home]
            target = None
            for z in zones:
                for pos in candidate_slots(c, z, self.yard, self.layout, self.cfg.policy):
                    if pos.stack == stack:
                        continue
                    if c.imo_class and check_imo_placement(self.yard, self.layout, pos, c.imo_class,
                                                           self.cfg.imo):
                        continue
                    target = pos
                    break
                if target:
                    break
            if target is None:
                raise NoFeasibleSlot(f"no slot to rehandle {blocker} off {cid}")
            self.yard.place(c, target, collection, MoveKind.REHANDLE)
            mid = self._next_id("M")
            chain = expand_move(mid, home, self.layout.zone_of(target), self.layout,
                                container=blocker, rehandle=True)
            chain.tag = tag
            self.counters["rehandles"] += 1
            self._submit(chain, MoveInfo("rehandle", blocker, owner))
            last = chain.legs[-1].id
        return last

    # -- chain completion -----------------------------------------------------

    def _storage(self, cid: ContainerId, client: str, now: float) -> None:
        start = self.yard_in.pop(cid, None)
        if start is None:
            return
        key = str(cid)
        self.intervals[key] = StorageInterval(key, from_seconds(start), from_seconds(now))
        self._bill("STORAGE", client, now, cid)

    def _chain_done(self, chain) -> None:
        info = self.moves[chain.move_id]
        now = self.sim.clock.now
        when = from_seconds(now)
        if info.kind == "discharge":
            c = self.yard.containers.get(info.container)
            self.yard_in[info.container] = now
            run = self.visits[info.owner]
            entry = next(e for e in run.discharges if e.container == info.container)
            run.confirmed.append(ConfirmedMove(info.container, entry.size_type, Instruction.DISCHARGE,
                                               info.cell, when))
            self._bill("DISCHARGE", run.line, now, info.container)
            self._handled(info.container, entry.size_type, entry.imo_class, now, "discharge")
            if c is not None and c.reefer is not None:
                self._plug(c)
        elif info.kind == "load":
            run = self.visits[info.owner]
            entry = run.delta.entries[info.cell]
            run.confirmed.append(ConfirmedMove(info.container, entry.size_type, Instruction.LOAD,
                                               info.cell, when))
            self._bill("LOAD", run.line, now, info.container)
            self._storage(info.container, run.line, now)
            self.reefers.pop(info.container, None)
            self._handled(info.container, entry.size_type, entry.imo_class, now, "load")
        elif info.kind == "receipt":
            self.yard_in[info.container] = now
            c = self.yard.containers.get(info.container)
            if c is not None and c.reefer is not None:
                self._plug(c)
        elif info.kind == "delivery":
            self._storage(info.container, info.client, now)
            self.reefers.pop(info.container, None)
        if info.owner in self.visits:
            run = self.visits[info.owner]
            run.pending.discard(chain.move_id)
            if not run.pending and run.started:
                run.visit = run.visit.advanced(VisitStatus.CLOSED)
        elif info.owner in self.gates:
            g = self.gates[info.owner]
            g.pending.discard(chain.move_id)
            if not g.pending and g.txn.state is GateState.AT_INTERCHANGE:
                self.sim.schedule(now + GATE_STEP, "gate", info.owner)

    def _handled(self, cid, size_type: str, imo: str | None, now: float, kind: str) -> None:
        self.handled.append(HandledMove(str(cid), decode_size_type(size_type).length, imo,
                                        from_seconds(now), kind))

    def _plug(self, c: Container) -> None:
        pos = self.yard.positions.get(c.id)
        connected = pos is not None and self.layout.block(pos.block).kind is BlockKind.REEFER
        self.reefers[c.id] = ReeferLog(c.id, connected=connected)

    # -- orders, holds, billing commands --------------------------------------

    def _on_order(self, event: Event, scenario: Scenario) -> str:
        action = event.get("action", "create")
        if action == "cancel":
            o = self.orders.manage_order(Action.CANCEL, {"order_id": event.require("id"),
                                                         "reason": event.get("reason", "")})
            return f"cancelled {o.order_id}"
        if action == "amend":
            payload = {k: v for k, v in event.params.items() if k not in ("action", "user", "id")}
            payload["order_id"] = event.require("id")
            if "seals" in payload:
                payload["seals"] = tuple(filter(None, payload["seals"].split(",")))
            o = self.orders.manage_order(Action.AMEND, payload)
            return f"amended {o.order_id}"
        otype = OrderType(int(event.require("type")))
        cid = validate_container_id(event.get("container")) if event.get("container") else None
        payload = {"order_id": event.get("id"), "type": otype, "client": event.require("client"),
                   "created_at": event.time, "container": cid, "visit": event.get("visit"),
                   "seals": tuple(filter(None, event.get("seals", "").split(","))),
                   "imo_class": event.get("imo")}
        order = self.orders.manage_order(Action.CREATE, payload)
        if otype in RECEIPTS:
            size = decode_size_type(event.require("size"))
            setpoint = event.get("setpoint")
            self.order_cargo[order.order_id] = Container(
                cid, size, int(event.require("weight")), event.get("pol", self.cfg.local_port),
                event.require("pod"), Transaction.EXPORT, imo_class=event.get("imo"),
                reefer=Reefer(float(setpoint)) if setpoint else None,
                seal_numbers=order.seals, outbound_visit=event.get("visit"))
        if event.get("validate", "yes") == "yes":
            self.orders.validate(order.order_id)
            if otype not in RECEIPTS | DELIVERIES | VESSEL_TYPES:
                self._execute_service(order.order_id, event)
        return f"order {order.order_id} {self.orders[order.order_id].status.value}"

    def _execute_service(self, order_id: str, event: Event) -> None:
        order = self.orders[order_id]
        if order.type is OrderType.VISIT_CHANGE and event.get("target"):
            target = self.orders[event.get("target")]
            if target.status in (OrderStatus.COMPLETED, OrderStatus.CANCELLED):
                # order already closed: re-bind the box itself when it sits in the yard
                if target.container in self.yard:
                    c = self.yard.containers[target.container]
                    self.yard.containers[target.container] = replace(c, outbound_visit=order.visit)
            else:
                self.orders.manage_order(Action.AMEND, {"order_id": target.order_id, "visit": order.visit})
        self.orders.advance(order_id, OrderStatus.IN_PROGRESS)
        self.orders.advance(order_id, OrderStatus.COMPLETED)
        source = Source.MANUAL if event.get("source") == "manual" else Source.TOS
        self._bill(SERVICE_CODES[order.type], order.client, self.sim.clock.now, order.container,
                   source=source)

    def _on_hold(self, event: Event, scenario: Scenario) -> str:
        kind, _, ident = event.require("target").partition(":")
        if kind not in ("order", "container", "client") or not ident:
            raise ValidationFailed(f"bad hold target {event.get('target')!r}")
        authority = Authority(event.require("authority"))
        if event.get("action", "apply") == "apply":
            self.holds.apply_hold((kind, ident), Hold(authority, event.get("reason", "")))
            return f"hold {kind} {ident}"
        self.holds.release_hold((kind, ident), authority)
        return f"release {kind} {ident}"

    def _known_clients(self) -> set[str]:
        return {p.id for p in self.cfg.partners} | {o.client for o in self.orders.orders.values()}

    def _known_containers(self) -> set[str]:
        out = {str(c) for c in self.yard.positions}
        out |= {str(o.container) for o in self.orders.orders.values() if o.container}
        for run in self.visits.values():
            out |= {str(e.container) for e in run.entries}
        return out

    def _on_lock(self, event: Event, scenario: Scenario) -> str:
        r = ingest_lock_command(event.require("command"), self.locks, self.holds,
                                known_clients=self._known_clients(),
                                known_containers=self._known_containers(), line_no=event.line_no)
        return f"{'lock' if r.locked else 'unlock'} {r.kind.lower()} {r.target}{'' if r.changed else ' (no-op)'}"

    def _on_advance(self, event: Event, scenario: Scenario) -> str:
        adv = Advance(event.get("id") or self._next_id("A"), event.require("client"),
                      parse_money(event.require("amount")), event.time)
        self.advances.append(adv)
        return f"advance {adv.advance_id}"

    def _on_reefer(self, event: Event, scenario: Scenario) -> str:
        cid = validate_container_id(event.require("container"))
        if cid not in self.yard.containers:
            raise UnknownContainer(f"{cid} is not in the yard")
        c = self.yard.containers[cid]
        log = self.reefers.get(cid) or ReeferLog(cid, connected=False)
        alarm = record_reefer(log, c, event.time, float(event.require("temp")), self.cfg.reefer_tolerance)
        self.reefers[cid] = log
        if alarm:
            self.alarms.append(alarm)
            return "alarm"
        return "reading"

    def _on_accident(self, event: Event, scenario: Scenario) -> str:
        self.accidents += int(event.get("count", "1"))
        return "recorded"

    # -- gate -----------------------------------------------------------------

    def _on_truck_arrival(self, event: Event, scenario: Scenario) -> str:
        tid = event.get("id") or self._next_id("T")
        txn = GateTransaction(tid, event.require("plate"), tuple(event.require("orders").split(",")),
                              customs_cleared=event.get("customs", "yes") == "yes")
        txn.timestamps.append((GateState.ARRIVED_PRE_GATE, event.time))
        mismatch = tuple(filter(None, event.get("mismatch", "").split(",")))
        self.gates[tid] = GateRun(txn, mismatch)
        self.sim.schedule(self.sim.clock.now + GATE_STEP, "gate", tid)
        return f"truck {tid}"

    def _observe(self, run: GateRun, order) -> Observed:
        seals = order.seals
        if "seals" in run.observed_mismatch:
            seals = tuple(s + "X" for s in seals) or ("UNKNOWN",)
        container = order.container
        if "container" in run.observed_mismatch:
            container = None
        plate = run.txn.plate + ("X" if "plate" in run.observed_mismatch else "")
        return Observed(container, plate, seals, order.imo_class)

    def _reject(self, run: GateRun, reason: str) -> None:
        run.outcome = f"rejected: {reason}"
        run.txn.rejected = reason
        self.rejections.append((run.txn.txn_id, reason))

    def _gate_step(self, tid: str) -> None:
        run = self.gates[tid]
        txn = run.txn
        now = self.now_dt()
        if txn.state is GateState.INSTRUCTION_ISSUED:
            for oid in txn.orders:
                result = physical_check(txn, self.orders[oid], self._observe(run, self.orders[oid]))
                if not result.passed:
                    self._reject(run, f"physical check failed on {oid}: {', '.join(result.mismatches)}")
                    return
        try:
            state = gate_advance(txn, self.orders, self.holds, now, on_interchange=self._interchange)
        except (HoldActive, OrderNotValidated, CustomsUnpaid) as exc:
            self._reject(run, str(exc))
            return
        if state is GateState.ADMIN_CHECKED:
            self.instructions.append(txn.document)
        if state is GateState.AT_INTERCHANGE and run.pending:
            return
        if state is GateState.COMPLETED:
            self._gate_completed(run)
        if state is GateState.EXITED:
            run.outcome = "exited"
            return
        self.sim.schedule(self.sim.clock.now + GATE_STEP, "gate", tid)

    def _interchange(self, txn: GateTransaction, orders) -> None:
        run = self.gates[txn.txn_id]
        gate = self.layout.gate_node
        receipts = [o for o in orders if o.type in RECEIPTS]
        deliveries = [o for o in orders if o.type in DELIVERIES]
        for o in receipts:
            c = self.order_cargo[o.order_id]
            pos = self._plan_and_place(c)
            mid = self._next_id("M")
            chain = expand_move(mid, gate, self.layout.zone_of(pos), self.layout, container=c.id)
            chain.tag = f"gate:{txn.txn_id}"
            run.pending.add(mid)
            self.counters["received"] += 1
            self._submit(chain, MoveInfo("receipt", c.id, txn.txn_id, client=o.client))
        for o in deliveries:
            after = self._clear_blockers(o.container, f"gate:{txn.txn_id}", txn.txn_id)
            pos = self.yard.positions[o.container]
            self.yard.remove(o.container)
            mid = self._next_id("M")
            chain = expand_move(mid, self.layout.zone_of(pos), gate, self.layout, container=o.container)
            chain.legs[0].after = after
            chain.tag = f"gate:{txn.txn_id}"
            run.pending.add(mid)
            self.counters["delivered"] += 1
            self._submit(chain, MoveInfo("delivery", o.container, txn.txn_id, client=o.client))

    def _gate_completed(self, run: GateRun) -> None:
        now = self.sim.clock.now
        for oid in run.txn.orders:
            o = self.orders[oid]
            if o.type in RECEIPTS:
                c = self.order_cargo[oid]
                direction, code, full = GateDirection.IN, "GATE_IN", o.type is OrderType.RECEIVE_FULL
                size_type, imo = c.size_type.code, c.imo_class
            elif o.type in DELIVERIES:
                direction, code, full = GateDirection.OUT, "GATE_OUT", o.type is OrderType.DELIVER_FULL
                size_type, imo = self._size_type_of(o.container), o.imo_class
            else:
                continue
            self.gate_events.append(GateEvent(o.container, size_type, direction, run.txn.plate,
                                              from_seconds(now), full))
            self._bill(code, o.client, now, o.container)
            self._handled(o.container, size_type, imo, now, code.lower())

    def _size_type_of(self, cid: ContainerId) -> str:
        for run in self.visits.values():
            for e in run.entries:
                if e.container == cid:
                    return e.size_type
        for c in self.order_cargo.values():
            if c.id == cid:
                return c.size_type.code
        return "22G1"

    # -- results --------------------------------------------------------------

    def conservation(self) -> tuple[int, int]:
        c = self.counters
        flow = c["discharged"] + c["received"] - c["loaded"] - c["delivered"]
        return flow, len(self.yard)

    def invoices(self):
        by_client: dict[str, list[BillingEvent]] = {}
        for ev in sorted(self.billing, key=lambda e: (e.occurred_at, e.event_id)):
            by_client.setdefault(ev.client, []).append(ev)
        invoices, errors = [], []
        issued = self.now_dt() if self.sim else None
        sequence = InvoiceSequence(self.sequence.last)
        advances = [Advance(a.advance_id, a.client, a.amount, a.received_at, a.remaining)
                    for a in self.advances]
        for client in sorted(by_client, key=natural_key):
            lines = []
            groups: dict[str, tuple[Contract, list[BillingEvent]]] = {}
            for ev in by_client[client]:
                contract = resolve_contract(client, ev.occurred_at, self.contracts, self.default_contract)
                key = f"{contract.client}:{contract.valid_from}"
                groups.setdefault(key, (contract, []))[1].append(ev)
            for key in groups:
                contract, evs = groups[key]
                try:
                    lines += rate_events(evs, contract, self.intervals, self.default_contract)
                except UnknownServiceCode as exc:
                    lines += exc.lines
                    errors += [(e.event_id, e.client, e.service_code) for e in exc.events]
            if lines:
                invoices.append(create_invoice(client, lines, advances, sequence, issued))
        return invoices, errors, advances

    def outputs(self) -> dict[str, str]:
        out: dict[str, str] = {}
        if self.sim is None:
            out["summary.txt"] = "events=0\ninvoices=0\n"
            return out
        start, end = self.start_time, self.sim.clock.now + 1
        out["berth_plan.txt"] = export_plan(self.berth)
        out["yard_snapshot.txt"] = export_snapshot(self.yard)
        out["equipment_history.txt"] = export_history(self.sim.history)
        ref = 0
        for vid in sorted(self.visits, key=natural_key):
            run = self.visits[vid]
            out[f"discharge_{vid}.txt"] = export_list(run.discharges)
            if run.delta is not None:
                out[f"load_{vid}.txt"] = export_list(run.delta.entries[c] for c in sorted(run.delta.entries))
            if run.confirmed:
                ref += 1
                moves = sorted(run.confirmed, key=lambda m: (m.time, str(m.container)))
                out[f"coarri_{vid}.edi"] = serialize(emit_coarri(run.visit, moves, control_ref=str(ref)))
        if self.gate_events:
            ref += 1
            events = sorted(self.gate_events, key=lambda e: (e.time, str(e.container)))
            out["codeco.edi"] = serialize(emit_codeco(events, control_ref=str(ref)))
        units = {code: r.unit for code, r in self.default_contract.rates.items()}
        out["billing_feed.txt"] = export_billing_feed(self.billing, (from_seconds(start), from_seconds(end)),
                                                      units)
        invoices, errors, _ = self.invoices()
        out["invoices.txt"] = export_invoices(invoices)
        if errors:
            out["billing_errors.txt"] = write_delimited(("event_id", "client", "service_code"), errors)
        occupancy = {z.zone: (z.occupied, z.slots) for z in capacity_report(self.yard, self.layout)}
        rtgs = [e.id for e in self.cfg.equipment if e.kind is EquipmentKind.RTG]
        out["kpi.txt"] = compute_kpis(self.sim.history, occupancy, (start, end), rtgs).to_kv()
        out["authority_stats.txt"] = authority_stats(
            self.handled, (from_seconds(start), from_seconds(end)), self.accidents).render()
        out["gate_log.txt"] = write_delimited(
            ("txn", "plate", "orders", "final_state", "outcome", "timestamps"),
            ((g.txn.txn_id, g.txn.plate, ",".join(g.txn.orders), g.txn.state.name, g.outcome,
              " ".join(f"{s.name}@{format_time(t)}" for s, t in g.txn.timestamps))
             for g in sorted(self.gates.values(), key=lambda g: natural_key(g.txn.txn_id))))
        out["instructions.txt"] = "".join(d.render() + "\n" for d in self.instructions)
        out["reefer_alarms.txt"] = write_delimited(
            ("container", "time", "reading", "setpoint", "deviation"),
            ((str(a.container), format_time(a.time), f"{a.reading:g}", f"{a.setpoint:g}",
              f"{a.deviation:+.2f}") for a in self.alarms))
        out["audit.log"] = self.audit.render()
        flow, occupied = self.conservation()
        c = self.counters
        summary = [f"events={self.cursor}", f"discharged={c['discharged']}", f"received={c['received']}",
                   f"loaded={c['loaded']}", f"delivered={c['delivered']}", f"rehandles={c['rehandles']}",
                   f"yard_occupancy={occupied}",
                   f"conservation={'ok' if flow == occupied else 'broken'}",
                   f"invoices={len(invoices)}", f"gate_rejections={sum(1 for g in self.gates.values() if g.txn.rejected)}",
                   f"audit_chain={'ok' if self.audit.verify() else 'broken'}"]
        for vid in sorted(self.visits, key=natural_key):
            run = self.visits[vid]
            summary += [f"visit.{vid}.status={run.visit.status.name}",
                        f"visit.{vid}.cranes={' '.join(run.cranes)}",
                        f"visit.{vid}.crane_shortfall={'yes' if run.crane_infeasible else 'no'}",
                        f"visit.{vid}.missing={' '.join(map(str, run.missing))}",
                        f"visit.{vid}.held={' '.join(map(str, run.held))}"]
        out["summary.txt"] = "\n".join(summary) + "\n"
        return out


# -- running and snapshots ----------------------------------------------------

def run_scenario(scenario: Scenario, config: TerminalConfig, default_contract: Contract,
                 contracts: list[Contract] = (), *, seed: int = 0, stop_at: datetime | None = None,
                 engine: Engine | None = None, record_snapshots: bool = False) -> Engine:
    """Feed events (from ``engine.cursor`` when resuming) and drain the clock.

    With ``stop_at`` the run pauses before the first event later than it,
    without draining, so the engine can be snapshotted.  The seed plays no
    part in planning; it is accepted for symmetry with the generator.
    """
    if engine is None:
        engine = Engine(config, default_contract, contracts, record_snapshots=record_snapshots)
    for event in scenario.events[engine.cursor:]:
        if stop_at is not None and event.time > stop_at:
            return engine
        engine.feed(event, scenario)
    engine.drain()
    engine.finished = True
    flow, occupied = engine.conservation()
    if flow != occupied:
        raise ValidationFailed(f"container conservation broken: flow {flow} vs yard {occupied}")
    return engine


def write_outputs(outputs: dict[str, str], out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(outputs):
        (out_dir / name).write_text(outputs[name], encoding="utf-8", newline="\n")


SNAPSHOT_MAGIC = b"TOSSNAP"
SNAPSHOT_VERSION = 1


def snapshot(engine: Engine) -> bytes:
    payload = pickle.dumps(engine, protocol=4)
    digest = hashlib.sha256(payload).hexdigest()
    header = b"%s %d %s %s\n" % (SNAPSHOT_MAGIC, SNAPSHOT_VERSION, digest.encode(), __version__.encode())
    return header + payload


def restore(data: bytes) -> Engine:
    head, sep, payload = data.partition(b"\n")
    parts = head.split(b" ")
    if not sep or len(parts) != 4 or parts[0] != SNAPSHOT_MAGIC:
        raise CorruptSnapshot("not an engine snapshot")
    try:
        version = int(parts[1])
    except ValueError:
        raise CorruptSnapshot("unreadable snapshot version") from None
    if version != SNAPSHOT_VERSION:
        raise VersionMismatch(f"snapshot format {version}, this build reads {SNAPSHOT_VERSION}")
    if hashlib.sha256(payload).hexdigest().encode() != parts[2]:
        raise CorruptSnapshot("snapshot checksum mismatch")
    try:
        engine = pickle.loads(payload)
    except Exception as exc:
        raise CorruptSnapshot(f"snapshot payload unreadable: {exc}") from None
    if not isinstance(engine, Engine):
        raise CorruptSnapshot("snapshot does not hold an engine")
    return engine
