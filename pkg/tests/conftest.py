from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import pytest

from tos_core.model import (
    Block,
    BlockKind,
    Container,
    ContainerId,
    Reefer,
    Transaction,
    YardLayout,
    decode_size_type,
)

ROOT = Path(__file__).resolve().parent.parent
REFERENCE = ROOT / "scenarios" / "reference"
GOLDEN = ROOT / "tests" / "golden" / "reference"

# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


def box(serial: int, *, owner: str = "TST", size: str = "22G1", weight: int = 10000,
        pod: str = "ITGOA", pol: str = "FRMRS", imo: str | None = None, setpoint: float | None = None,
        transaction: Transaction = Transaction.EXPORT) -> Container:
    return Container(ContainerId.build(owner, serial), decode_size_type(size), weight, pol, pod,
                     transaction, imo_class=imo, reefer=Reefer(setpoint) if setpoint is not None else None)


def four_zone_layout(bays: int = 4, rows: int = 3, tiers: int = 3) -> YardLayout:
    blocks = [Block(f"B{z}", bays, rows, tiers, f"Z{z}") for z in range(1, 5)]
    edges = [("GATE", "Z1", 100), ("Z1", "Z2", 50), ("Z2", "Z3", 50), ("Z3", "Z4", 50),
             ("Z1", "Q1", 200), ("Z4", "Q2", 80), ("Q1", "Q2", 300)]
    return YardLayout(blocks, edges, quay_nodes=("Q1", "Q2"))


def imo_layout() -> YardLayout:
    blocks = [Block("I1", 6, 4, 2, "ZI", BlockKind.IMO), Block("I2", 6, 4, 2, "ZJ", BlockKind.IMO)]
    return YardLayout(blocks, [("GATE", "ZI", 50), ("ZI", "ZJ", 40), ("ZJ", "Q1", 90)], quay_nodes=("Q1",))


@pytest.fixture(scope="session")
def reference_run():
    """One full run of the committed reference scenario with snapshots recorded."""
    from tos_core.billing import load_tariffs
    from tos_core.config import load_config
    from tos_core.engine import Engine, run_scenario
    from tos_core.scenario import load_scenario

    config = load_config(REFERENCE / "terminal.txt")
    default, contracts = load_tariffs((REFERENCE / "tariffs.txt").read_text("utf-8"))
    scenario = load_scenario(REFERENCE / "scenario.txt")
    engine = Engine(config, default, contracts, record_snapshots=True)
    return run_scenario(scenario, config, default, contracts, engine=engine)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
