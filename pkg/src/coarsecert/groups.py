"""Word-metric geometry for free groups F_r and free abelian groups Z^d.

Elements are plain hashable values so they can key dictionaries cheaply:

* free group: a reduced ``str`` over ``a..z`` where an upper-case letter is
  the inverse generator (``"aBa"`` is a b^-1 a); the identity is ``""``.
* lattice: a ``tuple`` of ``d`` ints; the identity is the zero tuple.

Both group classes expose the same surface (``mul``, ``inv``, ``length``,
``distance``, ``parse``, ``format``), so the rest of the package never needs
to know which kind it is working with.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .config import DEFAULTS
from .errors import DomainError, ResourceError

Element = Union[str, tuple]


@dataclass(frozen=True)
class FreeGroup:
    rank: int
    kind: str = field(default="free", init=False)

    def __post_init__(self):
        if not 1 <= self.rank <= 26:
            raise DomainError(f"free group rank must be in 1..26, got {self.rank}")

    @property
    def letters(self) -> tuple[str, ...]:
        """Alphabet in canonical order: a, A, b, B, ..."""
        out = []
        for c in string.ascii_lowercase[: self.rank]:
            out.extend((c, c.upper()))
        return tuple(out)

    @property
    def identity(self) -> str:
        return ""

    def generators(self) -> tuple[str, ...]:
        return self.letters

    def check(self, g) -> str:
        if not isinstance(g, str):
            raise DomainError(f"{g!r} is not an element of {self}")
        alphabet = _alphabet_set(self.rank)
        for i, c in enumerate(g):
            if c not in alphabet:
                raise DomainError(f"letter {c!r} not in the alphabet of {self}")
            if i and g[i - 1] == c.swapcase():
                raise DomainError(f"word {g!r} is not reduced")
        return g

    def reduce(self, word: str) -> str:
        stack: list[str] = []
        alphabet = _alphabet_set(self.rank)
        for c in word:
            if c not in alphabet:
                raise DomainError(f"letter {c!r} not in the alphabet of {self}")
            if stack and stack[-1] == c.swapcase():
                stack.pop()
            else:
                stack.append(c)
        return "".join(stack)

    def mul(self, g: str, h: str) -> str:
        self.check(g)
        self.check(h)
        return free_mul(g, h)

    def inv(self, g: str) -> str:
        self.check(g)
        return g[::-1].swapcase()

    def length(self, g: str) -> int:
        self.check(g)
        return len(g)

    def distance(self, s: str, t: str) -> int:
        """Word distance l(s^-1 t); for reduced words this is |s|+|t|-2 lcp."""
        k = 0
        for x, y in zip(s, t):
            if x != y:
                break
            k += 1
        return len(s) + len(t) - 2 * k

    def parse(self, text: str) -> str:
        text = text.strip()
        if text in ("", "1"):
            return ""
        return self.reduce(text)

    def format(self, g: str) -> str:
        return g

    def to_json(self) -> dict:
        return {"kind": "free", "rank": self.rank}

    def element_to_json(self, g: str):
        return g

    def element_from_json(self, obj) -> str:
        if not isinstance(obj, str):
            raise DomainError(f"free-group element must be a string, got {obj!r}")
        return self.parse(obj)

    def ball_size(self, radius: int) -> int:
        if radius <= 0:
            return 1
        if self.rank == 1:
            return 1 + 2 * radius
        q = 2 * self.rank - 1
        return 1 + 2 * self.rank * (q**radius - 1) // (q - 1)

    def sphere_size(self, k: int) -> int:
        if k == 0:
            return 1
        return 2 * self.rank * (2 * self.rank - 1) ** (k - 1)

    def __str__(self) -> str:
        return f"F_{self.rank}"


@dataclass(frozen=True)
class LatticeGroup:
    dim: int
    kind: str = field(default="lattice", init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"lattice dimension must be >= 1, got {self.dim}")

    @property
    def identity(self) -> tuple:
        return (0,) * self.dim

    def generators(self) -> tuple[tuple, ...]:
        out = []
        for i in range(self.dim):
            for sign in (1, -1):
                v = [0] * self.dim
                v[i] = sign
                out.append(tuple(v))
        return tuple(out)

    def check(self, g) -> tuple:
        if not (isinstance(g, tuple) and len(g) == self.dim and all(isinstance(x, (int, np.integer)) for x in g)):
            raise DomainError(f"{g!r} is not an element of {self}")
        return g

    def mul(self, g: tuple, h: tuple) -> tuple:
        self.check(g)
        self.check(h)
        return tuple(x + y for x, y in zip(g, h))

    def inv(self, g: tuple) -> tuple:
        self.check(g)
        return tuple(-x for x in g)

    def length(self, g: tuple) -> int:
        self.check(g)
        return sum(abs(x) for x in g)

    def distance(self, s: tuple, t: tuple) -> int:
        return sum(abs(x - y) for x, y in zip(s, t))

    def parse(self, text: str) -> tuple:
        text = text.strip().strip("()[]")
        try:
            parts = tuple(int(p) for p in text.split(",") if p.strip() != "")
        except ValueError as exc:
            raise DomainError(f"cannot parse lattice element {text!r}") from exc
        if not parts and self.dim >= 1 and text == "":
            raise DomainError("empty lattice element")
        return self.check(parts)

    def format(self, g: tuple) -> str:
        return ",".join(str(int(x)) for x in g)

    def to_json(self) -> dict:
        return {"kind": "lattice", "dim": self.dim}

    def element_to_json(self, g: tuple):
        return [int(x) for x in g]

    def element_from_json(self, obj) -> tuple:
        if isinstance(obj, str):
            return self.parse(obj)
        if not isinstance(obj, list):
            raise DomainError(f"lattice element must be an integer array, got {obj!r}")
        return self.check(tuple(obj))

    def ball_size(self, radius: int) -> int:
        if radius <= 0:
            return 1
        d = self.dim
        return sum(2**k * math.comb(d, k) * math.comb(radius, k) for k in range(min(d, radius) + 1))

    def sphere_size(self, k: int) -> int:
        return self.ball_size(k) - (self.ball_size(k - 1) if k > 0 else 0)

    def __str__(self) -> str:
        return f"Z^{self.dim}"


Group = Union[FreeGroup, LatticeGroup]

_ALPHABETS: dict[int, frozenset] = {}


def _alphabet_set(rank: int) -> frozenset:
    if rank not in _ALPHABETS:
        lower = string.ascii_lowercase[:rank]
        _ALPHABETS[rank] = frozenset(lower + lower.upper())
    return _ALPHABETS[rank]


def free_mul(g: str, h: str) -> str:
    """Product of two reduced words, without validation."""
    k = 0
    n = min(len(g), len(h))
    while k < n and g[-1 - k] == h[k].swapcase():
        k += 1
    return g[: len(g) - k] + h[k:]


def group_from_json(obj: dict) -> Group:
    try:
        kind = obj["kind"]
        if kind == "free":
            return FreeGroup(int(obj["rank"]))
        if kind == "lattice":
            return LatticeGroup(int(obj["dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed group descriptor {obj!r}") from exc
    raise DomainError(f"unknown group kind {kind!r}")


def parse_group(text: str) -> Group:
    """Parse the CLI shorthand ``free:2`` / ``f:2`` / ``z:1`` / ``lattice:3``."""
    try:
        kind, _, num = text.partition(":")
        value = int(num)
    except ValueError as exc:
        raise DomainError(f"cannot parse group {text!r}; expected e.g. free:2 or z:1") from exc
    kind = kind.strip().lower()
    if kind in ("free", "f"):
        return FreeGroup(value)
    if kind in ("z", "lattice", "zd"):
        return LatticeGroup(value)
    raise DomainError(f"unknown group kind {kind!r}")


# --- balls and tubes ---------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    """All elements of word length <= radius, in length-lexicographic order."""

    group: Group
    radius: int
    elements: tuple
    index: dict = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator:
        return iter(self.elements)

    def __contains__(self, g) -> bool:
        return g in self.index

    def position(self, g) -> int:
        return self.index[g]


def ball_enumerate(group: Group, radius: int, budget: int | None = None) -> Ball:
    if radius < 0:
        raise DomainError(f"ball radius must be >= 0, got {radius}")
    budget = DEFAULTS.element_budget if budget is None else budget
    size = group.ball_size(radius)
    if size > budget:
        raise ResourceError(f"B({radius}) in {group} has {size} elements, over the budget of {budget}")
    if isinstance(group, FreeGroup):
        elements = _free_ball(group, radius)
    else:
        elements = _lattice_ball(group, radius)
    return Ball(group, radius, tuple(elements), {g: i for i, g in enumerate(elements)})


def _free_ball(group: FreeGroup, radius: int) -> list[str]:
    letters = group.letters
    out = [""]
    layer = [""]
    for _ in range(radius):
        nxt = []
        for w in layer:
            last = w[-1].swapcase() if w else None
            nxt.extend(w + c for c in letters if c != last)
        out.extend(nxt)
        layer = nxt
    return out


def _lattice_ball(group: LatticeGroup, radius: int) -> list[tuple]:
    pts = [p for p in itertools.product(range(-radius, radius + 1), repeat=group.dim) if sum(map(abs, p)) <= radius]
    pts.sort(key=lambda p: (sum(map(abs, p)), p))
    return pts


def sphere(group: Group, k: int) -> list:
    return [g for g in ball_enumerate(group, k) if _length(group, g) == k]


def _length(group: Group, g) -> int:
    return len(g) if isinstance(group, FreeGroup) else sum(map(abs, g))


@dataclass(frozen=True)
class Tube:
    """T_F for F = B(radius): pairs (s, t) with l(s^-1 t) <= radius."""

    group: Group
    radius: int


def tube_contains(tube: Tube, s, t) -> bool:
    tube.group.check(s)
    tube.group.check(t)
    return tube.group.distance(s, t) <= tube.radius


def tube_pairs(window: Ball, radius: int):
    """Unordered pairs (i, j), i <= j, of window positions at distance <= radius."""
    for i, j, _, _ in tube_pair_list(window, radius):
        yield i, j


_PAIR_CACHE: dict = {}


def tube_pair_list(window: Ball, radius: int) -> list[tuple]:
    """Cached ``(i, j, distance, s^-1 t)`` for the tube pairs of a window."""
    key = (window.group, window.radius, window.elements[:1], len(window), radius)
    hit = _PAIR_CACHE.get(key)
    if hit is not None and hit[0] == window.elements:
        return hit[1]
    group = window.group
    offsets = ball_enumerate(group, radius).elements if radius >= 0 else ()
    mul = free_mul if isinstance(group, FreeGroup) else _lattice_add
    index = window.index
    lens = [group.length(g) for g in offsets]
    out = []
    for i, s in enumerate(window.elements):
        for g, d in zip(offsets, lens):
            j = index.get(mul(s, g))
            if j is not None and j >= i:
                out.append((i, j, d, g))
    if len(_PAIR_CACHE) > 16:
        _PAIR_CACHE.clear()
    _PAIR_CACHE[key] = (window.elements, out)
    return out


def _lattice_add(g: tuple, h: tuple) -> tuple:
    return tuple(x + y for x, y in zip(g, h))


# --- vectorized metric -------------------------------------------------------


def encode_words(group: FreeGroup, words: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Letters as small ints (0 = padding) plus the word lengths."""
    code = {c: i + 1 for i, c in enumerate(group.letters)}
    width = max((len(w) for w in words), default=0)
    arr = np.zeros((len(words), max(width, 1)), dtype=np.int8)
    for i, w in enumerate(words):
        arr[i, : len(w)] = [code[c] for c in w]
    return arr, np.fromiter((len(w) for w in words), dtype=np.int64, count=len(words))


def distance_matrix(group: Group, left: Sequence, right: Sequence) -> np.ndarray:
    """Matrix of word distances d(s, t) = l(s^-1 t), s in left, t in right."""
    if isinstance(group, LatticeGroup):
        a = np.asarray(left, dtype=np.int64).reshape(len(left), group.dim)
        b = np.asarray(right, dtype=np.int64).reshape(len(right), group.dim)
        return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
    a, la = encode_words(group, left)
    b, lb = encode_words(group, right)
    width = min(a.shape[1], b.shape[1])
    lcp = np.zeros((len(left), len(right)), dtype=np.int64)
    running = np.ones((len(left), len(right)), dtype=bool)
    for k in range(width):
        running &= (a[:, k][:, None] == b[:, k][None, :]) & (a[:, k][:, None] != 0)
        if not running.any():
            break
        lcp += running
    return la[:, None] + lb[None, :] - 2 * lcp


def lengths(group: Group, elements: Iterable) -> list[int]:
    return [_length(group, g) for g in elements]
