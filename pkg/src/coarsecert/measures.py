"""Finitely supported measures and vectors on group elements.

Masses may be floats or :class:`fractions.Fraction`; exact masses keep
total-variation sups exact, which the boundary certificates rely on.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping

from .config import DEFAULTS
from .errors import DomainError
from .groups import FreeGroup, Group, free_mul

SparseVec = dict


class ProbMeasure:
    """Probability measure with finite support on a group."""

    __slots__ = ("group", "masses")

    def __init__(self, group: Group, masses: Mapping, *, tol: float | None = None, validate: bool = True):
        self.group = group
        self.masses = dict(masses)
        if validate:
            self._validate(DEFAULTS.norm_tol if tol is None else tol)

    def _validate(self, tol: float) -> None:
        total = 0
        for g, m in self.masses.items():
            if m < 0:
                raise DomainError(f"negative mass {m} at {g!r}")
            total += m
        exact = all(isinstance(m, (int, Fraction)) for m in self.masses.values())
        if exact and total != 1:
            raise DomainError(f"masses sum to {total}, not 1")
        if not exact and abs(total - 1) > tol:
            raise DomainError(f"masses sum to {total!r}, not 1 within {tol}")

    @classmethod
    def uniform(cls, group: Group, elements: Iterable, exact: bool = False) -> "ProbMeasure":
        elements = list(elements)
        if not elements:
            raise DomainError("uniform measure needs a nonempty support")
        if len(set(elements)) != len(elements):
            raise DomainError("uniform measure support has duplicates")
        w = Fraction(1, len(elements)) if exact else 1.0 / len(elements)
        return cls(group, {g: w for g in elements})

    @classmethod
    def point(cls, group: Group, g) -> "ProbMeasure":
        return cls(group, {g: 1})

    @property
    def support(self) -> list:
        return list(self.masses)

    def __getitem__(self, g):
        return self.masses.get(g, 0)

    def __eq__(self, other) -> bool:
        return isinstance(other, ProbMeasure) and self.group == other.group and self.masses == other.masses

    def __repr__(self) -> str:
        return f"ProbMeasure({self.masses!r})"

    def to_json(self) -> dict:
        return {self.group.format(g): _json_mass(m) for g, m in self.masses.items()}

    @classmethod
    def from_json(cls, group: Group, obj: Mapping) -> "ProbMeasure":
        masses = {}
        for key, val in obj.items():
            masses[group.parse(key)] = Fraction(val) if isinstance(val, str) else val
        return cls(group, masses)


def _json_mass(m):
    return str(m) if isinstance(m, Fraction) else m


def translate(s, m: ProbMeasure) -> ProbMeasure:
    """Push-forward under left multiplication: (s.m)({t}) = m({s^-1 t})."""
    return ProbMeasure(m.group, translate_vec(m.group, s, m.masses), validate=False)


def translate_vec(group: Group, s, v: Mapping) -> SparseVec:
    group.check(s)
    if isinstance(group, FreeGroup):
        return {free_mul(s, g): x for g, x in v.items()}
    return {tuple(a + b for a, b in zip(s, g)): x for g, x in v.items()}


def tv_distance(m1: ProbMeasure, m2: ProbMeasure):
    """l1 norm of the difference, sum_t |m1(t) - m2(t)|; bounded by 2."""
    if m1.group != m2.group:
        raise DomainError(f"measures live on different groups: {m1.group} vs {m2.group}")
    return l1_distance(m1.masses, m2.masses)


def l1_distance(v1: Mapping, v2: Mapping):
    total = 0
    for g, x in v1.items():
        y = v2.get(g, 0)
        if x != y:
            total += abs(x - y)
    for g, y in v2.items():
        if g not in v1:
            total += abs(y)
    return total


def sq_l2_distance(v1: Mapping, v2: Mapping) -> float:
    total = 0.0
    for g, x in v1.items():
        d = x - v2.get(g, 0.0)
        total += d * d
    for g, y in v2.items():
        if g not in v1:
            total += y * y
    return total


def l2_distance(v1: Mapping, v2: Mapping) -> float:
    return math.sqrt(sq_l2_distance(v1, v2))


def l2_norm(v: Mapping) -> float:
    return math.sqrt(sum(x * x for x in v.values()))


def dot(v1: Mapping, v2: Mapping) -> float:
    if len(v2) < len(v1):
        v1, v2 = v2, v1
    return sum(x * v2[g] for g, x in v1.items() if g in v2)
