"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.
"""

import math
import random
import subprocess
import sys
import time
from datetime import timedelta
from decimal import ROUND_HALF_UP, Decimal

from tos_core.billing import Unit
from tos_core.dispatch import Simulation, expand_move
from tos_core.edifact import (
    ConfirmedMove,
    Instruction,
    build_baplie,
    emit_coarri,
    parse_baplie,
    parse_coarri,
    serialize,
    tokenize,
)
from tos_core.model import EquipmentKind, EquipmentSpec, VesselProfile, VesselVisit, VisitStatus
from tos_core.reporting import ArchiveRecord, partition_archive, tier_of, years_before
from tos_core.vessel import (
    assign_stow_positions,
    build_discharge_list,
    detect_restows,
    plan_from_entries,
    sequence_loading,
)
from tos_core.yard import (
    AreaAssignment,
    Direction,
    ImoRuleTable,
    StackingPolicy,
    StackKey,
    Strategy,
    YardState,
    plan_slot,
)

from conftest import ACCEPTANCE, REFERENCE, box, four_zone_layout, utc
from gen import random_document, stow_entries
from oracles import best_assignment


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def test_criterion_01_edifact_round_trip():
    rng = random.Random(2026)
    started = time.perf_counter()
    failures = 0
    for _ in range(1000):
        doc = random_document(rng)
        text = serialize(doc)
        back = tokenize(text)
        if back != doc or serialize(back) != text:
            failures += 1
    elapsed = time.perf_counter() - started
    verdict(1, failures == 0 and elapsed < 5.0,
            f"1000 random documents, {failures} failures, {elapsed:.2f} s (limit 5 s)")


def _raw_local_count(text, local):
    """Recount local-port groups straight from the segment text."""
    ids, group = set(), {}
    for segment in text.split("'"):
        parts = segment.split("+")
        if parts[0] == "LOC" and parts[1] == "147":
            group = {}
        elif parts[0] == "LOC" and parts[1] == "11":
            group["pod"] = parts[2]
        elif parts[0] == "EQD" and parts[1] == "CN":
            if group.get("pod") == local:
                ids.add(parts[2])
    return ids


def test_criterion_02_discharge_list_and_coarri():
    rng = random.Random(200)
    entries = stow_entries(rng, 200)
    text = serialize(build_baplie(entries, visit_id="V200", when=utc(2026, 3, 2)))
    profile = VesselProfile("BIG", 300, 12, 20, 8, 6, 10 ** 7, 6)
    plan = plan_from_entries("V200", profile, parse_baplie(tokenize(text)))
    discharge = build_discharge_list(plan, "FRMRS")
    expected = _raw_local_count(text, "FRMRS")
    visit = VesselVisit("V200", "BIG", utc(2026, 3, 2), utc(2026, 3, 3), status=VisitStatus.WORKING)
    moves = [ConfirmedMove(e.container, e.size_type, Instruction.DISCHARGE, e.cell,
                           utc(2026, 3, 2, 6) + timedelta(minutes=i)) for i, e in enumerate(discharge)]
    reparsed = parse_coarri(tokenize(serialize(emit_coarri(visit, moves))))
    ok = ({str(e.container) for e in discharge} == expected and len(discharge) == len(expected)
          and len(reparsed) == len(discharge) and reparsed == moves)
    verdict(2, ok, f"discharge list {len(discharge)} vs oracle {len(expected)}, "
                   f"COARRI re-parsed {len(reparsed)}")


def test_criterion_03_grouped_vs_scattered():
    layout = four_zone_layout(bays=5)
    zones = ("Z1", "Z2", "Z3", "Z4")
    counts = {}
    for strategy in (Strategy.GROUPED, Strategy.SCATTERED):
        state = YardState()
        area = AreaAssignment("COLL", zones, strategy)
        for i in range(40):
            c = box(i, weight=15000)
            state.place(c, plan_slot(c, area, state, layout, ImoRuleTable(), StackingPolicy()), "COLL")
        per_zone = state.zone_counts(layout, "COLL")
        counts[strategy] = [per_zone[z] for z in zones]
    grouped, scattered = counts[Strategy.GROUPED], counts[Strategy.SCATTERED]
    ok = max(grouped) == 40 and max(scattered) - min(scattered) <= 1
    verdict(3, ok, f"grouped per zone {grouped}, scattered per zone {scattered}")


def test_criterion_04_restows_inverse_vs_fifo():
    started = time.perf_counter()
    cs = [box(i, weight=12000) for i in range(50)]
    delta = assign_stow_positions(cs, VesselProfile("R", 200, 10, 10, 4, 4, 10 ** 6, 4))
    cranes = ["QC1", "QC2"]
    order = sequence_loading(delta, YardState(), cranes).retrieval_order
    by_id = {c.id: c for c in cs}
    ranks = {cid: i for i, cid in enumerate(order)}
    layout = four_zone_layout(bays=6)  # 54 slots in the one zone used
    area = AreaAssignment("EXP", ("Z1",))
    results = {}
    for name, placement, policy in (
            ("inverse", order[::-1], StackingPolicy(((StackKey.LOAD_ORDER, Direction.EARLIER_ON_TOP),))),
            ("fifo", order, StackingPolicy())):
        yard = YardState()
        for cid in placement:
            c = by_id[cid]
            yard.place(c, plan_slot(c, area, yard, layout, ImoRuleTable(), policy, ranks), "EXP")
        results[name] = detect_restows(sequence_loading(delta, yard, cranes).queues, yard)
    elapsed = time.perf_counter() - started
    ok = results["inverse"] == 0 and results["fifo"] > 0 and elapsed < 1.0
    verdict(4, ok, f"restows inverse={results['inverse']} fifo={results['fifo']}, "
                   f"{elapsed:.2f} s (limit 1 s)")


def test_criterion_05_imo_segregation(reference_run):
    table = reference_run.cfg.imo
    violations = checked = 0
    for snap in reference_run.snapshots:
        dangerous = [(pos, snap.containers[cid].imo_class) for pos, cid in snap.occupancy.items()
                     if snap.containers[cid].imo_class]
        for i, (pa, ca) in enumerate(dangerous):
            for pb, cb in dangerous[i + 1:]:
                rule = table.rule(ca, cb)
                checked += 1
                if rule is None:
                    continue
                if pa.block != pb.block:
                    violations += rule.prohibited and table.cross_block_prohibited
                    continue
                if rule.prohibited or max(abs(pa.bay - pb.bay), abs(pa.row - pb.row)) < rule.min_distance:
                    violations += 1
    ok = violations == 0 and len(reference_run.snapshots) > 0
    verdict(5, ok, f"{len(reference_run.snapshots)} snapshots, {checked} IMO pairs, "
                   f"{violations} violations")


def test_criterion_06_stacking_rules(reference_run):
    blocks = {b.id: b for b in reference_run.layout.blocks}
    cap = reference_run.cfg.policy.max_tier
    problems = 0
    for snap in reference_run.snapshots:
        occupied = set(snap.occupancy)
        for pos in occupied:
            limit = blocks[pos.block].max_tier if cap is None else min(cap, blocks[pos.block].max_tier)
            if pos.tier > limit:
                problems += 1
            if pos.tier > 1 and type(pos)(pos.block, pos.bay, pos.row, pos.tier - 1) not in occupied:
                problems += 1
        for plan in snap.stows.values():
            p = plan.profile
            stacks = {}
            for cell, e in plan.entries.items():
                stacks.setdefault(cell.stack, []).append((cell.tier, e.weight))
            for items in stacks.values():
                tiers = sorted(t for t, _ in items)
                if tiers != list(range(1, len(tiers) + 1)):
                    problems += 1
                if len(tiers) > p.max_stack_height or max(tiers) > p.tiers:
                    problems += 1
                if sum(w for _, w in items) > p.max_stack_weight:
                    problems += 1
    verdict(6, problems == 0, f"{len(reference_run.snapshots)} snapshots, {problems} stacking violations")


def test_criterion_07_archive_tiers():
    now = utc(2026, 6, 15, 12)
    expected = {2: "operational", 3: "midterm", 9: "midterm", 10: "longterm", 11: "longterm"}
    got = {y: tier_of(years_before(now, y), now) for y in expected}
    rng = random.Random(7)
    records = [ArchiveRecord(f"R{i}", "MOVE", now - timedelta(seconds=rng.randint(0, 15 * 366 * 86400)))
               for i in range(10000)]
    part = partition_archive(records, now)
    ids = [r.record_id for tier in (part.operational, part.midterm, part.longterm) for r in tier]
    total_disjoint = len(ids) == len(set(ids)) == len(records) and set(ids) == {r.record_id for r in records}
    verdict(7, got == expected and total_disjoint,
            f"ages {sorted(got.items())}, 10000 records split "
            f"{len(part.operational)}/{len(part.midterm)}/{len(part.longterm)}")


def _rerate(engine, skip):
    """Independent per-client rating of the billed events, in cents."""
    rated = {}
    for ev in engine.billing:
        if ev.event_id in skip:
            continue
        day = ev.occurred_at.date()
        contract = next((c for c in engine.contracts if c.client == ev.client and c.valid_on(day)),
                        engine.default_contract)
        source = contract if ev.service_code in contract.rates else engine.default_contract
        rate = source.rates[ev.service_code]
        qty = ev.qty
        if rate.unit is Unit.PER_DAY:
            iv = engine.intervals[ev.container]
            hours = (iv.end - iv.start).total_seconds() / 3600
            qty = max(0, math.ceil(hours / 24) - contract.free_storage_days)
        discount = source.discounts.get(ev.service_code, Decimal(0))
        amount = (Decimal(qty * rate.price_cents) * (100 - discount) / 100).quantize(Decimal(1), ROUND_HALF_UP)
        rated[ev.client] = rated.get(ev.client, 0) + int(amount)
    return rated


def test_criterion_08_billing_conservation(reference_run):
    invoices, errors, _ = reference_run.invoices()
    rated = _rerate(reference_run, {e for e, _, _ in errors})
    billed = {}
    for inv in invoices:
        billed[inv.client] = billed.get(inv.client, 0) + inv.total + inv.advances_applied
    numbers = [inv.number for inv in invoices]
    gap_free = numbers == list(range(numbers[0], numbers[0] + len(numbers))) if numbers else True
    ok = bool(invoices) and billed == rated and gap_free
    verdict(8, ok, f"{len(invoices)} invoices numbered {numbers}, "
                   f"per-client totals+advances equal rerated amounts: {billed == rated}")


def test_criterion_09_deterministic_runs(tmp_path):
    outs, times = [], []
    for name in ("run1", "run2"):
        out = tmp_path / name
        started = time.perf_counter()
        cmd = [sys.executable, "-m", "tos_core.cli", "run", "--scenario", str(REFERENCE / "scenario.txt"),
               "--layout", str(REFERENCE / "terminal.txt"), "--tariffs", str(REFERENCE / "tariffs.txt"),
               "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)
        times.append(time.perf_counter() - started)
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    same = names == sorted(p.name for p in outs[1].iterdir()) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    ok = same and max(times) < 5.0
    verdict(9, ok, f"{len(names)} files byte-identical: {same}, run times "
                   f"{times[0]:.2f} s and {times[1]:.2f} s (limit 5 s)")


def _random_sim(rng):
    layout = four_zone_layout()
    kinds = [EquipmentKind.RTG, EquipmentKind.TRACTOR, EquipmentKind.QUAY_CRANE]
    fleet = kinds + [rng.choice(kinds[:2]) for _ in range(rng.randint(0, 2))]
    nodes = ("Z1", "Z2", "Z3", "Z4", "Q1", "Q2", "GATE")
    specs = []
    for i, kind in enumerate(fleet):
        home = rng.choice(("Q1", "Q2")) if kind is EquipmentKind.QUAY_CRANE else rng.choice(nodes)
        handling = 60.0 if kind is not EquipmentKind.TRACTOR else 0.0
        specs.append(EquipmentSpec(f"E{i + 1}", kind, rng.uniform(1, 6), rng.uniform(1, 5), home, handling))
    sim = Simulation(layout, specs)
    for m in range(rng.randint(1, 8)):
        zone, quay = rng.choice(nodes[:4]), rng.choice(("Q1", "Q2"))
        src, dst = (zone, quay) if rng.random() < 0.5 else (quay, zone)
        sim.submit(expand_move(f"M{m}", src, dst, layout))
    return sim


def test_criterion_10_dispatch_optimality():
    rng = random.Random(10)
    steps = mismatches = 0
    for _ in range(300):
        sim = _random_sim(rng)
        while True:
            ready = [leg for c in sim.active_chains() if (leg := c.ready_leg(sim.legs)) is not None]
            idle = [e for e in sim.fleet.values() if e.is_idle(sim.clock.now)]
            expected = best_assignment(ready, idle, sim.layout)
            got = sim.dispatch()
            steps += 1
            if (len(got), round(sum(a.empty_m for a in got), 6)) != (expected[0], round(expected[1], 6)):
                mismatches += 1
            if not len(sim.clock):
                break
            sim.step()
        assert sim.idle()
    verdict(10, mismatches == 0, f"{steps} decision steps over 300 random runs, {mismatches} mismatches")
