"""Eventually periodic points of the boundary of a free group.

A point is ``head + cycle + cycle + ...``, an infinite reduced word that
the free group acts on by left concatenation followed by reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import DEFAULTS
from .errors import DomainError, ResourceError
from .groups import FreeGroup, ball_enumerate, free_mul


@dataclass(frozen=True)
class BoundaryPoint:
    head: str
    cycle: str

    def __post_init__(self):
        if not self.cycle:
            raise DomainError("boundary point needs a nonempty cycle")

    def __str__(self) -> str:
        return f"{self.head}({self.cycle})^inf"

    def to_json(self) -> dict:
        return {"head": self.head, "cycle": self.cycle}


def _primitive_root(word: str) -> str:
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


def boundary_point(group: FreeGroup, head: str, cycle: str) -> BoundaryPoint:
    """Canonical point of ``head . cycle^inf`` for arbitrary (unreduced) words.

    The cycle is conjugated to a cyclically reduced word, reduced to its
    primitive root, and the head is shortened as far as possible.
    """
    head = group.reduce(head)
    cycle = group.reduce(cycle)
    if not cycle:
        raise DomainError("cycle reduces to the identity; the word is not infinite")
    # cycle = u c u^-1 with c cyclically reduced: head.u.c^inf
    k = 0
    while len(cycle) - 2 * k >= 2 and cycle[k] == cycle[-1 - k].swapcase():
        k += 1
    head = free_mul(head, cycle[:k])
    cycle = cycle[k : len(cycle) - k]
    return _canonical(head, cycle)


def _canonical(head: str, cycle: str) -> BoundaryPoint:
    # cancel the head against the periodic tail
    while head and head[-1] == cycle[0].swapcase():
        head = head[:-1]
        cycle = cycle[1:] + cycle[0]
    cycle = _primitive_root(cycle)
    # shift trailing head letters into the cycle
    while head and head[-1] == cycle[-1]:
        head = head[:-1]
        cycle = cycle[-1] + cycle[:-1]
    return BoundaryPoint(head, cycle)


def boundary_from_json(group: FreeGroup, obj: dict) -> BoundaryPoint:
    try:
        return boundary_point(group, obj["head"], obj["cycle"])
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed boundary point {obj!r}") from exc


def parse_boundary(group: FreeGroup, text: str) -> BoundaryPoint:
    """Parse ``"ba|a"`` (head|cycle) or a bare cycle like ``"a"``."""
    head, sep, cycle = text.partition("|")
    if not sep:
        head, cycle = "", head
    return boundary_point(group, head.strip(), cycle.strip())


def boundary_act(group: FreeGroup, s: str, omega: BoundaryPoint) -> BoundaryPoint:
    group.check(s)
    return _canonical(free_mul(s, omega.head), omega.cycle)


def boundary_prefix(omega: BoundaryPoint, k: int) -> str:
    if k < 0:
        raise DomainError(f"prefix length must be >= 0, got {k}")
    if k <= len(omega.head):
        return omega.head[:k]
    rest = k - len(omega.head)
    reps = -(-rest // len(omega.cycle))
    return omega.head + (omega.cycle * reps)[:rest]


def cylinder_sample(group: FreeGroup, depth: int, budget: int | None = None) -> list[BoundaryPoint]:
    """One point per depth-L cylinder: w followed by its last letter forever."""
    if depth < 1:
        raise DomainError(f"cylinder depth must be >= 1, got {depth}")
    budget = DEFAULTS.element_budget if budget is None else budget
    count = group.sphere_size(depth)
    if count > budget:
        raise ResourceError(f"{count} cylinders of depth {depth} exceed the budget of {budget}")
    words = [w for w in ball_enumerate(group, depth, budget=max(budget, group.ball_size(depth))) if len(w) == depth]
    return [_canonical(w, w[-1]) for w in words]
