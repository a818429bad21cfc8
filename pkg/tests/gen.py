"""Random input generators shared by the unit and acceptance tests."""

from __future__ import annotations

import random
import string
from datetime import datetime, timezone

from tos_core.edifact import Cell, EdifactDocument, ServiceChars, StowEntry, build_interchange, seg
from tos_core.model import ContainerId

PUNCT = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~"


def random_chars(rng: random.Random) -> ServiceChars:
    return ServiceChars(*rng.sample(PUNCT, 5))


def escape_heavy(rng: random.Random, chars: ServiceChars) -> str:
    """Component text biased towards service characters."""
    pool = [*chars.as_tuple(), *chars.as_tuple(), *string.ascii_letters[:8], *string.digits[:4], " ", "é"]
    return "".join(rng.choice(pool) for _ in range(rng.randint(0, 12)))


def random_document(rng: random.Random) -> EdifactDocument:
    chars = random_chars(rng) if rng.random() < 0.8 else ServiceChars()
    messages = []
    for _ in range(rng.randint(0, 3)):
        body = []
        for _ in range(rng.randint(0, 6)):
            tag = "".join(rng.choices(string.ascii_uppercase + string.digits, k=3))
            if tag.startswith("UN"):
                tag = "X" + tag[1:]
            elements = [[escape_heavy(rng, chars) for _ in range(rng.randint(1, 3))]
                        for _ in range(rng.randint(0, 4))]
            body.append(seg(tag, *elements))
        messages.append(("MSG:D:95B:UN", body))
    return build_interchange(messages, sender=escape_heavy(rng, chars) or "S", recipient="R",
                             control_ref=str(rng.randint(1, 9999)),
                             when=datetime(2026, 1, 1, tzinfo=timezone.utc), chars=chars)


def stow_entries(rng: random.Random, n: int, *, local: str = "FRMRS",
                 others=("ITGOA", "ESBCN", "GRPIR")) -> list[StowEntry]:
    out, used = [], set()
    for i in range(n):
        while True:
            cell = Cell(rng.randint(1, 20), rng.randint(1, 8), rng.randint(1, 6))
            if cell not in used:
                used.add(cell)
                break
        pod = local if rng.random() < 0.45 else rng.choice(others)
        out.append(StowEntry(ContainerId.build("FXT", 100000 + i), cell, rng.randint(3000, 28000), pod,
                             rng.choice(("22G1", "45G1", "42G1")), "CNSHA",
                             rng.choice((None, None, None, "3", "8"))))
    return out
