"""Service orders, holds, the truck gate state machine and reefer monitoring."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Callable, Iterable

from .errors import (
    AuthorityMismatch,
    CustomsUnpaid,
    HoldActive,
    ImmutableField,
    InvalidTransition,
    MissingContainer,
    NonMonotonicTime,
    NoSuchHold,
    NotConnected,
    NotReefer,
    OrderNotValidated,
    OutOfOrderTransition,
    TerminalStatus,
    UnknownOrder,
    ValidationFailed,
    WrongState,
)
from .model import Container, ContainerId
from .util import format_time


class OrderType(enum.IntEnum):
    RECEIVE_FULL = 1
    DELIVER_EMPTY = 2
    DELIVER_FULL = 3
    RECEIVE_EMPTY = 4
    LOAD_VESSEL = 5
    DISCHARGE_VESSEL = 6
    VESSEL_CALL = 7
    SEAL_VERIFICATION = 8
    SEAL_STORAGE = 9
    CONDITION_SURVEY = 10
    IMO_LABEL_CONTROL = 11
    CFS_OPERATION = 12
    FUMIGATION_CLEANING = 13
    EQUIPMENT_REPOSITIONING = 14
    VISIT_CHANGE = 15
    CUSTOMS_INSPECTION = 16
    VESSEL_SERVICE = 17
    REEFER_PRETRIP = 18
    RESTOW = 19
    AUTHORITY_HOLD = 20


CONTAINER_BOUND = frozenset({
    OrderType.RECEIVE_FULL, OrderType.DELIVER_FULL, OrderType.RECEIVE_EMPTY,
    OrderType.LOAD_VESSEL, OrderType.DISCHARGE_VESSEL, OrderType.SEAL_VERIFICATION,
    OrderType.SEAL_STORAGE, OrderType.CONDITION_SURVEY, OrderType.IMO_LABEL_CONTROL,
    OrderType.FUMIGATION_CLEANING, OrderType.CUSTOMS_INSPECTION, OrderType.REEFER_PRETRIP,
    OrderType.RESTOW,
})
RECEIPTS = frozenset({OrderType.RECEIVE_FULL, OrderType.RECEIVE_EMPTY})
DELIVERIES = frozenset({OrderType.DELIVER_FULL, OrderType.DELIVER_EMPTY})

# billable service code per order type
SERVICE_CODES = {
    OrderType.RECEIVE_FULL: "GATE_IN", OrderType.RECEIVE_EMPTY: "GATE_IN",
    OrderType.DELIVER_FULL: "GATE_OUT", OrderType.DELIVER_EMPTY: "GATE_OUT",
    OrderType.LOAD_VESSEL: "LOAD", OrderType.DISCHARGE_VESSEL: "DISCHARGE",
    OrderType.VESSEL_CALL: "VESSEL_CALL", OrderType.SEAL_VERIFICATION: "SEAL_CHECK",
    OrderType.SEAL_STORAGE: "SEAL_STORAGE", OrderType.CONDITION_SURVEY: "SURVEY",
    OrderType.IMO_LABEL_CONTROL: "IMO_LABEL", OrderType.CFS_OPERATION: "CFS",
    OrderType.FUMIGATION_CLEANING: "FUMIGATION", OrderType.EQUIPMENT_REPOSITIONING: "REPOSITION",
    OrderType.VISIT_CHANGE: "VISIT_CHANGE", OrderType.CUSTOMS_INSPECTION: "INSPECTION",
    OrderType.VESSEL_SERVICE: "VESSEL_SERVICE", OrderType.REEFER_PRETRIP: "PTI",
    OrderType.RESTOW: "RESTOW", OrderType.AUTHORITY_HOLD: "HOLD_ADMIN",
}


class OrderStatus(str, enum.Enum):
    CREATED = "Created"
    VALIDATED = "Validated"
    IN_PROGRESS = "InProgress"
    COMPLETED = "Completed"
    CANCELLED = "Cancelled"


TERMINAL_STATUSES = frozenset({OrderStatus.COMPLETED, OrderStatus.CANCELLED})
_FORWARD = {
    OrderStatus.CREATED: OrderStatus.VALIDATED,
    OrderStatus.VALIDATED: OrderStatus.IN_PROGRESS,
    OrderStatus.IN_PROGRESS: OrderStatus.COMPLETED,
}


class Authority(str, enum.Enum):
    CUSTOMS = "Customs"
    PORT_AUTHORITY = "PortAuthority"
    LINE = "Line"


@dataclass(frozen=True)
class Hold:
    authority: Authority
    reason: str
    active: bool = True


@dataclass(frozen=True)
class ServiceOrder:
    order_id: str
    type: OrderType
    client: str
    created_at: datetime
    container: ContainerId | None = None
    visit: str | None = None
    status: OrderStatus = OrderStatus.CREATED
    seals: tuple[str, ...] = ()
    imo_class: str | None = None
    note: str = ""
    cancel_reason: str = ""


IDENTITY_FIELDS = frozenset({"order_id", "type", "client", "container", "created_at"})
AMENDABLE_FIELDS = frozenset({"visit", "seals", "imo_class", "note"})


class Action(str, enum.Enum):
    CREATE = "Create"
    AMEND = "Amend"
    CANCEL = "Cancel"


class OrderBook:
    def __init__(self):
        self.orders: dict[str, ServiceOrder] = {}
        self.transitions: list[tuple[str, OrderStatus, OrderStatus]] = []
        self._next = 1

    def __getitem__(self, order_id: str) -> ServiceOrder:
        try:
            return self.orders[order_id]
        except KeyError:
            raise UnknownOrder(f"no order {order_id!r}") from None

    def __contains__(self, order_id: str) -> bool:
        return order_id in self.orders

    def manage_order(self, action: Action, payload: dict) -> ServiceOrder:
        if action is Action.CREATE:
            return self._create(payload)
        order = self[payload["order_id"]]
        if order.status in TERMINAL_STATUSES:
            raise TerminalStatus(f"order {order.order_id} is {order.status.value}")
        if action is Action.AMEND:
            changes = {k: v for k, v in payload.items() if k != "order_id"}
            blocked = sorted(set(changes) & IDENTITY_FIELDS)
            if blocked:
                raise ImmutableField(f"order {order.order_id}: cannot amend {', '.join(blocked)}")
            unknown = sorted(set(changes) - AMENDABLE_FIELDS)
            if unknown:
                raise ValidationFailed(f"order {order.order_id}: unknown fields {', '.join(unknown)}")
            if "seals" in changes:
                changes["seals"] = tuple(changes["seals"])
            updated = replace(order, **changes)
        else:
            updated = replace(order, status=OrderStatus.CANCELLED,
                              cancel_reason=payload.get("reason", ""))
            self.transitions.append((order.order_id, order.status, OrderStatus.CANCELLED))
        self.orders[order.order_id] = updated
        return updated

    def _create(self, payload: dict) -> ServiceOrder:
        data = dict(payload)
        order_id = data.pop("order_id", None) or f"O{self._next:06d}"
        if order_id in self.orders:
            raise ValidationFailed(f"order {order_id} already exists")
        otype = OrderType(int(data.pop("type")))
        if otype in CONTAINER_BOUND and data.get("container") is None:
            raise MissingContainer(f"order type {otype.value} ({otype.name}) needs a container")
        if "seals" in data:
            data["seals"] = tuple(data["seals"])
        order = ServiceOrder(order_id, otype, **data)
        self.orders[order_id] = order
        self._next += 1
        return order

    def advance(self, order_id: str, to: OrderStatus) -> ServiceOrder:
        order = self[order_id]
        if order.status in TERMINAL_STATUSES:
            raise TerminalStatus(f"order {order_id} is {order.status.value}")
        if _FORWARD.get(order.status) is not to:
            raise InvalidTransition(f"order {order_id}: {order.status.value} -> {to.value}")
        self.transitions.append((order_id, order.status, to))
        self.orders[order_id] = replace(order, status=to)
        return self.orders[order_id]

    def validate(self, order_id: str) -> ServiceOrder:
        return self.advance(order_id, OrderStatus.VALIDATED)

    def by_container(self, cid: ContainerId) -> list[ServiceOrder]:
        return [o for o in self.orders.values() if o.container == cid]


# -- holds --------------------------------------------------------------------

HoldTarget = tuple[str, str]   # ("order" | "container" | "client", id)


class HoldRegistry:
    def __init__(self):
        self.holds: dict[HoldTarget, list[Hold]] = {}
        self.log: list[tuple[str, HoldTarget, Hold]] = []

    def apply_hold(self, target: HoldTarget, hold: Hold) -> list[Hold]:
        self.holds.setdefault(target, []).append(replace(hold, active=True))
        self.log.append(("apply", target, hold))
        return self.holds[target]

    def release_hold(self, target: HoldTarget, authority: Authority,
                     reason: str | None = None) -> list[Hold]:
        """Release the active holds the given authority put on ``target``,
        optionally only those with a matching reason."""
        active = [h for h in self.holds.get(target, [])
                  if h.active and (reason is None or h.reason == reason)]
        if not active:
            raise NoSuchHold(f"no active hold on {target[0]} {target[1]}")
        mine = [h for h in active if h.authority is authority]
        if not mine:
            others = ", ".join(sorted({h.authority.value for h in active}))
            raise AuthorityMismatch(f"{authority.value} cannot release holds imposed by {others}")
        self.holds[target] = [replace(h, active=False) if h in mine and h.active else h
                              for h in self.holds[target]]
        for h in mine:
            self.log.append(("release", target, h))
        return self.holds[target]

    def active(self, target: HoldTarget) -> list[Hold]:
        return [h for h in self.holds.get(target, []) if h.active]

    def blocking(self, order: ServiceOrder) -> list[tuple[HoldTarget, Hold]]:
        targets = [("order", order.order_id), ("client", order.client)]
        if order.container:
            targets.append(("container", str(order.container)))
        return [(t, h) for t in targets for h in self.active(t)]

    def container_blocked(self, cid: ContainerId) -> bool:
        return bool(self.active(("container", str(cid))))


def apply_hold(registry: HoldRegistry, target: HoldTarget, hold: Hold) -> list[Hold]:
    return registry.apply_hold(target, hold)


def release_hold(registry: HoldRegistry, target: HoldTarget, hold: Hold) -> list[Hold]:
    return registry.release_hold(target, hold.authority)


# -- gate ---------------------------------------------------------------------

class GateState(enum.IntEnum):
    ARRIVED_PRE_GATE = 0
    ADMIN_CHECKED = 1
    INSTRUCTION_ISSUED = 2
    PHYSICAL_CHECKED = 3
    AT_INTERCHANGE = 4
    COMPLETED = 5
    EXITED = 6


@dataclass(frozen=True)
class InstructionDocument:
    plate: str
    orders: tuple[str, ...]
    interchange: str
    issued_at: datetime

    def render(self) -> str:
        return f"{format_time(self.issued_at)}|{self.plate}|{','.join(self.orders)}|{self.interchange}"


@dataclass
class GateTransaction:
    txn_id: str
    plate: str
    orders: tuple[str, ...]
    customs_cleared: bool = True
    state: GateState = GateState.ARRIVED_PRE_GATE
    timestamps: list[tuple[GateState, datetime]] = field(default_factory=list)
    document: InstructionDocument | None = None
    rejected: str = ""

    def __post_init__(self):
        if not self.orders:
            raise ValidationFailed(f"gate transaction {self.txn_id} carries no order")


def gate_advance(txn: GateTransaction, orders: OrderBook, holds: HoldRegistry, now: datetime, *,
                 interchange: str = "INTERCHANGE",
                 on_interchange: Callable[[GateTransaction, list[ServiceOrder]], None] | None = None,
                 to: GateState | None = None) -> GateState:
    """Move the transaction exactly one state along the gate chain."""
    nxt = GateState(txn.state + 1) if txn.state < GateState.EXITED else None
    if nxt is None or (to is not None and to is not nxt):
        target = to or nxt
        raise OutOfOrderTransition(f"{txn.txn_id}: cannot go from {txn.state.name} to "
                                   f"{target.name if target is not None else 'beyond EXITED'}")
    if txn.timestamps and now <= txn.timestamps[-1][1]:
        raise NonMonotonicTime(f"{txn.txn_id}: {format_time(now)} is not after the previous step")
    if not txn.timestamps:
        txn.timestamps.append((txn.state, now))
    the_orders = [orders[o] for o in txn.orders]
    if nxt <= GateState.AT_INTERCHANGE:
        for o in the_orders:
            blocking = holds.blocking(o)
            if blocking:
                (kind, ident), hold = blocking[0]
                raise HoldActive(f"{o.order_id}: {hold.authority.value} hold on {kind} {ident} ({hold.reason})")
    if nxt is GateState.ADMIN_CHECKED:
        for o in the_orders:
            if o.status is not OrderStatus.VALIDATED:
                raise OrderNotValidated(f"order {o.order_id} is {o.status.value}")
        if not txn.customs_cleared:
            raise CustomsUnpaid(f"{txn.txn_id}: customs clearance not paid")
        for o in the_orders:
            orders.advance(o.order_id, OrderStatus.IN_PROGRESS)
        txn.document = InstructionDocument(txn.plate, txn.orders, interchange, now)
    elif nxt is GateState.AT_INTERCHANGE and on_interchange is not None:
        on_interchange(txn, the_orders)
    elif nxt is GateState.COMPLETED:
        for o in the_orders:
            orders.advance(o.order_id, OrderStatus.COMPLETED)
    txn.state = nxt
    txn.timestamps.append((nxt, now))
    return nxt


@dataclass(frozen=True)
class Observed:
    container: ContainerId | None
    plate: str
    seals: tuple[str, ...] = ()
    imo_labels: str | None = None


@dataclass(frozen=True)
class CheckResult:
    mismatches: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.mismatches


def physical_check(txn: GateTransaction, order: ServiceOrder, observed: Observed) -> CheckResult:
    """Compare what the gate clerk sees against one order of the transaction."""
    if txn.state is not GateState.INSTRUCTION_ISSUED:
        raise WrongState(f"{txn.txn_id} is {txn.state.name}, physical check needs INSTRUCTION_ISSUED")
    mismatches = []
    if order.container is not None and observed.container != order.container:
        mismatches.append("container")
    if observed.plate != txn.plate:
        mismatches.append("plate")
    if sorted(observed.seals) != sorted(order.seals):
        mismatches.append("seals")
    if (observed.imo_labels or None) != (order.imo_class or None):
        mismatches.append("imo")
    return CheckResult(tuple(mismatches))


# -- reefers ------------------------------------------------------------------

@dataclass
class ReeferLog:
    container: ContainerId
    readings: list[tuple[datetime, float]] = field(default_factory=list)
    connected: bool = True


@dataclass(frozen=True)
class Alarm:
    container: ContainerId
    time: datetime
    reading: float
    setpoint: float
    deviation: float


def record_reefer(log: ReeferLog, container: Container, time: datetime, celsius: float,
                  tolerance: float = 2.0) -> Alarm | None:
    if container.reefer is None:
        raise NotReefer(f"{container.id} is not a running reefer")
    if not log.connected:
        raise NotConnected(f"{container.id} is not plugged in")
    if log.readings and time < log.readings[-1][0]:
        raise NonMonotonicTime(f"{container.id}: reading at {format_time(time)} precedes the last one")
    log.readings.append((time, celsius))
    deviation = celsius - container.reefer.setpoint
    if abs(deviation) > tolerance:
        return Alarm(container.id, time, celsius, container.reefer.setpoint, deviation)
    return None


def status_graph_edges(transitions: Iterable[tuple[str, OrderStatus, OrderStatus]]) -> set:
    return {(a, b) for _o, a, b in transitions}
