"""Role-based command authorization and the hash-chained audit log."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping

from .errors import UnknownUser, ValidationFailed
from .util import format_time, write_delimited


class Role(str, enum.Enum):
    PLANNER = "Planner"
    GATE_CLERK = "GateClerk"
    BILLING_CLERK = "BillingClerk"
    ADMIN = "Admin"


class Permission(str, enum.Enum):
    CREATE = "create"
    EDIT = "edit"
    CONSULT = "consult"


# the permission each command exercises
COMMAND_PERMISSIONS: dict[str, Permission] = {
    "run": Permission.EDIT,
    "vessel.arrival": Permission.CREATE,
    "order.create": Permission.CREATE,
    "order.edit": Permission.EDIT,
    "gate.process": Permission.EDIT,
    "hold.manage": Permission.EDIT,
    "yard.reefer": Permission.CREATE,
    "safety.accident": Permission.CREATE,
    "billing.lock": Permission.EDIT,
    "billing.advance": Permission.CREATE,
    "billing.export": Permission.CONSULT,
    "report.view": Permission.CONSULT,
    "archive.run": Permission.EDIT,
    "edi.validate": Permission.CONSULT,
}

ROLE_COMMANDS: dict[Role, frozenset[str]] = {
    Role.PLANNER: frozenset({"run", "vessel.arrival", "order.create", "order.edit", "hold.manage",
                             "yard.reefer", "report.view", "edi.validate"}),
    Role.GATE_CLERK: frozenset({"gate.process", "order.create", "yard.reefer", "report.view",
                                "edi.validate"}),
    Role.BILLING_CLERK: frozenset({"billing.lock", "billing.advance", "billing.export", "report.view"}),
    Role.ADMIN: frozenset(COMMAND_PERMISSIONS),
}


def permissions(role: Role) -> dict[str, Permission]:
    return {c: COMMAND_PERMISSIONS[c] for c in sorted(ROLE_COMMANDS[role])}


class Decision(str, enum.Enum):
    ALLOW = "Allow"
    DENY = "Deny"


GENESIS = "0" * 64


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    time: datetime
    user: str
    command: str
    outcome: str
    prev_hash: str
    hash: str


def _digest(prev: str, seq: int, time: datetime, user: str, command: str, outcome: str) -> str:
    text = "|".join((prev, str(seq), format_time(time), user, command, outcome))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class AuditLog:
    records: list[AuditRecord] = field(default_factory=list)

    def append(self, time: datetime, user: str, command: str, outcome: str) -> AuditRecord:
        prev = self.records[-1].hash if self.records else GENESIS
        seq = len(self.records) + 1
        rec = AuditRecord(seq, time, user, command, outcome, prev,
                          _digest(prev, seq, time, user, command, outcome))
        self.records.append(rec)
        return rec

    def verify(self) -> bool:
        prev = GENESIS
        for i, r in enumerate(self.records, 1):
            if r.seq != i or r.prev_hash != prev:
                return False
            if r.hash != _digest(prev, r.seq, r.time, r.user, r.command, r.outcome):
                return False
            prev = r.hash
        return True

    def render(self) -> str:
        return write_delimited(("seq", "time", "user", "command", "outcome", "prev_hash", "hash"),
                               ((r.seq, format_time(r.time), r.user, r.command, r.outcome, r.prev_hash,
                                 r.hash) for r in self.records))


def authorize(user: str, command: str, users: Mapping[str, str], audit: AuditLog | None = None,
              time: datetime | None = None) -> Decision:
    """Allow when the user's role grants ``command``; denials are audited."""
    if user not in users:
        raise UnknownUser(f"unknown user {user!r}")
    if command not in COMMAND_PERMISSIONS:
        raise ValidationFailed(f"unknown command {command!r}")
    role = Role(users[user])
    decision = Decision.ALLOW if command in ROLE_COMMANDS[role] else Decision.DENY
    if decision is Decision.DENY and audit is not None:
        audit.append(time or datetime(1970, 1, 1, tzinfo=timezone.utc), user, command, "deny")
    return decision
