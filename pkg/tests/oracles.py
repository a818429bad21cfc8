"""Brute-force reference answers shared by the unit and acceptance tests."""


def best_assignment(legs, machines, layout):
    """Enumerate every injective partial assignment; return the best (count, travel)."""
    results = []

    def walk(i, used, count, travel):
        if i == len(legs):
            results.append((-count, round(travel, 6)))
            return
        walk(i + 1, used, count, travel)
        leg = legs[i]
        for j, eq in enumerate(machines):
            if j in used or eq.spec.kind is not leg.kind:
                continue
            if leg.required_equipment and eq.id != leg.required_equipment:
                continue
            walk(i + 1, used | {j}, count + 1, travel + layout.distances_from(leg.from_node)[eq.position])

    walk(0, frozenset(), 0, 0.0)
    count, travel = min(results)
    return -count, travel
