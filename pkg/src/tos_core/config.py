"""Terminal configuration file: layout, quay, fleet, vessel profiles, yard
rules and users, as ``|``-separated records tagged by their first field."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .berth import DepthSegment, Quay
from .errors import ParseError, TosError
from .model import (
    Block,
    BlockKind,
    EquipmentKind,
    EquipmentSpec,
    Partner,
    PartnerKind,
    Transaction,
    VesselProfile,
    YardLayout,
)
from .util import read_records
from .yard import (
    AreaAssignment,
    CollectionFilter,
    Direction,
    ImoRule,
    ImoRuleTable,
    StackingPolicy,
    StackKey,
    Strategy,
)


@dataclass
class TerminalConfig:
    name: str
    local_port: str
    layout: YardLayout
    quay: Quay
    equipment: list[EquipmentSpec]
    profiles: dict[str, VesselProfile]
    filters: list[CollectionFilter]
    areas: dict[str, AreaAssignment]
    imo: ImoRuleTable
    policy: StackingPolicy
    users: dict[str, str]
    partners: list[Partner]
    crane_rate: float = 25.0
    reefer_tolerance: float = 2.0
    default_user: str = "system"
    settings: dict[str, str] = field(default_factory=dict)

    @property
    def fallback_area(self) -> AreaAssignment | None:
        return self.areas.get("*")


_FILTER_FIELDS = {"size": int, "weight_min": int, "weight_max": int, "service": str, "pol": str,
                  "pod": str, "transaction": Transaction, "visit": str}


def _filter(fid: str, priority: str, spec: str) -> CollectionFilter:
    kwargs = {}
    for part in filter(None, spec.split(";")):
        key, _, value = part.partition("=")
        if key not in _FILTER_FIELDS:
            raise ValueError(f"unknown filter field {key!r}")
        kwargs[key] = _FILTER_FIELDS[key](value)
    return CollectionFilter(fid, int(priority), **kwargs)


def parse_config(text: str) -> TerminalConfig:
    """Records (one per line)::

        TERMINAL|name|local_port|gate_node
        BLOCK|id|zone|kind|bays|rows|max_tier
        EDGE|a|b|meters
        QUAY_NODE|node
        QUAY|length|min_crane_spacing|crane_moves_per_hour
        DEPTH|from_m|to_m|depth_m
        EQUIP|id|kind|speed_empty|speed_laden|home|handling_time
        PROFILE|id|loa|draft|bays|rows|tiers|max_stack_weight|max_stack_height
        FILTER|id|priority|field=value;field=value
        AREA|filter_id or *|zone,zone|Grouped or Scattered
        IMO|class_a|class_b|prohibited 0/1|min_distance
        IMO_CROSS_BLOCK|0/1
        STACKING|key:direction,key:direction|max_tier or empty
        PARTNER|id|kind|name
        USER|name|role
        SET|key|value
    """
    head = None
    blocks, edges, quay_nodes, depth, equipment = [], [], [], [], []
    profiles, filters, areas, imo_rules, partners = {}, [], {}, [], []
    users, settings = {}, {}
    quay_row = None
    cross = False
    policy = StackingPolicy()
    for n, rec in enumerate(read_records(text), 1):
        tag, args = rec[0], rec[1:]
        try:
            if tag == "TERMINAL":
                head = args
            elif tag == "BLOCK":
                bid, zone, kind, bays, rows, tiers = args
                blocks.append(Block(bid, int(bays), int(rows), int(tiers), zone, BlockKind(kind)))
            elif tag == "EDGE":
                edges.append((args[0], args[1], float(args[2])))
            elif tag == "QUAY_NODE":
                quay_nodes.append(args[0])
            elif tag == "QUAY":
                quay_row = args
            elif tag == "DEPTH":
                depth.append(DepthSegment(*map(float, args)))
            elif tag == "EQUIP":
                eid, kind, se, sl, home, handling = args
                equipment.append(EquipmentSpec(eid, EquipmentKind(kind), float(se), float(sl), home,
                                               float(handling or 0)))
            elif tag == "PROFILE":
                pid, loa, draft, *ints = args
                profiles[pid] = VesselProfile(pid, float(loa), float(draft), *map(int, ints))
            elif tag == "FILTER":
                filters.append(_filter(*args))
            elif tag == "AREA":
                fid, zones, strategy = args
                areas[fid] = AreaAssignment(fid, tuple(zones.split(",")), Strategy(strategy))
            elif tag == "IMO":
                a, b, prohibited, dist = args
                imo_rules.append((a, b, ImoRule(prohibited == "1", int(dist))))
            elif tag == "IMO_CROSS_BLOCK":
                cross = args[0] == "1"
            elif tag == "STACKING":
                keys = tuple((StackKey(k), Direction(d)) for k, d in
                             (item.split(":") for item in args[0].split(",")))
                policy = StackingPolicy(keys, int(args[1]) if len(args) > 1 and args[1] else None)
            elif tag == "PARTNER":
                partners.append(Partner(args[0], PartnerKind(args[1]), args[2]))
            elif tag == "USER":
                users[args[0]] = args[1]
            elif tag == "SET":
                settings[args[0]] = args[1]
            else:
                raise ParseError(f"unknown record {tag!r}", n)
        except ParseError:
            raise
        except (ValueError, TypeError, TosError) as exc:
            raise ParseError(f"{tag}: {exc}", n) from None
    if head is None:
        raise ParseError("missing TERMINAL record")
    if quay_row is None:
        raise ParseError("missing QUAY record")
    name, local_port, gate = head
    try:
        layout = YardLayout(blocks, edges, tuple(quay_nodes), gate, name=name)
        qc = tuple(e.id for e in equipment if e.kind is EquipmentKind.QUAY_CRANE)
        quay = Quay(float(quay_row[0]), tuple(depth), qc, float(quay_row[1]))
    except (ValueError, TosError) as exc:
        raise ParseError(str(exc)) from None
    for a in areas.values():
        for z in a.zones:
            if z not in layout.zones():
                raise ParseError(f"area {a.filter_id} names unknown zone {z!r}")
    return TerminalConfig(name, local_port, layout, quay, equipment, profiles, filters, areas,
                          ImoRuleTable(imo_rules, cross), policy, users, partners,
                          crane_rate=float(quay_row[2]),
                          reefer_tolerance=float(settings.get("reefer_tolerance", 2.0)),
                          default_user=settings.get("default_user", "system"), settings=settings)


def load_config(path: str | Path) -> TerminalConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
