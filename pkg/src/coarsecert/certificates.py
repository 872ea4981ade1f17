"""Explicit amenability certificates and their measured deficiencies.

Three constructions:

* Reiter/Foelner kernels on Z^d: row(s) uniform on s + B(n).
* Boundary means on the free group: m_n^omega uniform on the first n
  prefixes of omega.
* Geodesic-ray kernels on the free group: row(s) uniform on the first n
  vertices of the ray from s to a fixed boundary point; this is the boundary
  mean transported to G x G by row(s) = s . m_n^{s^-1 omega}.

Deficiency sups enumerate every tube pair inside the window.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .boundary import BoundaryPoint, boundary_act, boundary_point, boundary_prefix
from .errors import DomainError, UnderCoverageError
from .groups import Ball, FreeGroup, Group, LatticeGroup, free_mul, tube_pair_list
from .kernels import LatticeRow, PairwiseSq, TubeKernel, _left_div
from .measures import ProbMeasure, l1_distance, sq_l2_distance


# --- constructions -----------------------------------------------------------


def lattice_ball_coords(dim: int, radius: int) -> np.ndarray:
    """Integer points of the l1 ball, shape (k, dim), length-lex order."""
    if dim == 1:
        pts = np.zeros(2 * radius + 1, dtype=np.int64)
        k = np.arange(1, radius + 1, dtype=np.int64)
        pts[1::2], pts[2::2] = -k, k
        return pts.reshape(-1, 1)
    axes = np.arange(-radius, radius + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axes] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    pts = grid[np.abs(grid).sum(axis=1) <= radius]
    keys = [pts[:, i] for i in reversed(range(dim))] + [np.abs(pts).sum(axis=1)]
    return pts[np.lexsort(keys)]


def folner_certificate(group: LatticeGroup, n: int) -> TubeKernel:
    """l1 kernel with row(s) uniform on the ball s + B(n)."""
    if not isinstance(group, LatticeGroup):
        raise DomainError(f"Foelner balls certify amenability only on lattices, not {group}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    coords = lattice_ball_coords(group.dim, n)
    values = np.full(len(coords), 1.0 / len(coords))
    return TubeKernel(
        group, "l1", n, base=LatticeRow(coords, values), label=f"folner(n={n})", meta={"method": "folner", "n": n}
    )


def default_ray(group: FreeGroup) -> BoundaryPoint:
    return boundary_point(group, "", "a")


def free_ray_certificate(group: FreeGroup, n: int, omega: BoundaryPoint | None = None) -> TubeKernel:
    """l1 kernel on F_r: row(s) uniform on the first n vertices after s
    along the geodesic ray from s toward omega (default a^inf)."""
    if not isinstance(group, FreeGroup):
        raise DomainError(f"ray certificates need a free group, not {group}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    omega = default_ray(group) if omega is None else omega
    weight = 1.0 / n

    def row(s: str) -> dict:
        letters = boundary_prefix(boundary_act(group, s[::-1].swapcase(), omega), n)
        out = {}
        v = s
        for c in letters:
            v = v[:-1] if v and v[-1] == c.swapcase() else v + c
            out[v] = weight
        return out

    return TubeKernel(
        group,
        "l1",
        n,
        row_fn=row,
        check_support=False,
        label=f"free_ray(n={n}, omega={omega})",
        meta={"method": "free_ray", "n": n, "omega": omega.to_json()},
    )


@dataclass(frozen=True)
class BoundaryMeanFamily:
    """omega -> uniform mass 1/n on the prefixes of omega of lengths 1..n."""

    group: FreeGroup
    n: int
    exact: bool = True

    def __call__(self, omega: BoundaryPoint) -> ProbMeasure:
        word = boundary_prefix(omega, self.n)
        w = Fraction(1, self.n) if self.exact else 1.0 / self.n
        return ProbMeasure(self.group, {word[:k]: w for k in range(1, self.n + 1)}, validate=False)


def boundary_aicm(group: FreeGroup, n: int, exact: bool = True) -> BoundaryMeanFamily:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return BoundaryMeanFamily(group, n, exact)


# --- deficiency reports --------------------------------------------------------


@dataclass
class DeficiencyReport:
    n: int | None
    tube_radius: int
    window_radius: int | None
    sup: float | Fraction
    witness: dict
    table: list[tuple[int, float | Fraction]]
    pairs: int
    norm: str
    label: str = ""
    extra: dict = field(default_factory=dict)

    def sup_within(self, radius: int):
        """Sup restricted to pairs at distance <= radius (from the table)."""
        vals = [v for d, v in self.table if d <= radius]
        return max(vals, default=0)

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "norm": self.norm,
            "label": self.label,
            "tube_radius": self.tube_radius,
            "window_radius": self.window_radius,
            "sup": float(self.sup),
            "witness": self.witness,
            "pairs": self.pairs,
            "table": [{"distance": d, "max_deficiency": float(v)} for d, v in self.table],
        }
        if isinstance(self.sup, Fraction):
            out["sup_exact"] = str(self.sup)
            out["table_exact"] = [{"distance": d, "max_deficiency": str(v)} for d, v in self.table]
        out.update(self.extra)
        return out

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "distance", "max_deficiency"])
        for d, v in self.table:
            w.writerow([self.n, d, repr(float(v))])
        return buf.getvalue()


def _check_window(cert: TubeKernel, radius: int, window: Ball) -> None:
    if radius < 0:
        raise DomainError(f"tube radius must be >= 0, got {radius}")
    if window.group != cert.group:
        raise DomainError(f"window lives on {window.group}, certificate on {cert.group}")
    if window.radius < radius:
        raise UnderCoverageError(
            f"window B({window.radius}) cannot realize every displacement of the tube of radius {radius}"
        )
    cert.require(window)


def _sweep(cert, radius, window, pair_value, norm) -> DeficiencyReport:
    group = window.group
    elems = window.elements
    best = None
    best_pair = (group.identity, group.identity)
    table: dict[int, float] = {}
    count = 0
    for i, j, d, g in tube_pair_list(window, radius):
        v = pair_value(i, j, g)
        count += 1
        if d not in table or v > table[d]:
            table[d] = v
        if best is None or v > best:
            best, best_pair = v, (elems[i], elems[j])
    return DeficiencyReport(
        n=cert.meta.get("n"),
        tube_radius=radius,
        window_radius=window.radius,
        sup=best if best is not None else 0.0,
        witness={"s": group.element_to_json(best_pair[0]), "t": group.element_to_json(best_pair[1])},
        table=sorted(table.items()),
        pairs=count,
        norm=norm,
        label=cert.label,
    )


def _invariant_pair_value(cert: TubeKernel, window: Ball, radius: int, norm: str) -> Callable:
    group = cert.group
    memo: dict = {}
    if isinstance(group, LatticeGroup):
        shifter = cert.shifter(radius)
        compute = shifter.l1 if norm == "l1" else shifter.sq_l2
    else:
        base = cert.base
        dict_fn = l1_distance if norm == "l1" else sq_l2_distance

        def compute(g):
            return dict_fn(base, {free_mul(g, u): x for u, x in base.items()})

    def value(i: int, j: int, g):
        v = memo.get(g)
        if v is None:
            v = compute(g)
            memo[g] = v
            memo[_left_div(group, g, group.identity)] = v
        return v

    return value


def deficiency_l1(cert: TubeKernel, tube_radius: int, window: Ball) -> DeficiencyReport:
    """sup over tube pairs (s, t) in the window of sum_u |g(s,u) - g(t,u)|."""
    _check_window(cert, tube_radius, window)
    if cert.is_invariant:
        pair_value = _invariant_pair_value(cert, window, tube_radius, "l1")
    else:
        rows = [cert.row(s) for s in window]
        pair_value = lambda i, j, g: l1_distance(rows[i], rows[j])  # noqa: E731
    return _sweep(cert, tube_radius, window, pair_value, "l1")


def deficiency_l2(cert: TubeKernel, tube_radius: int, window: Ball, method: str = "auto") -> DeficiencyReport:
    """sup over tube pairs of sum_u |xi(s,u) - xi(t,u)|^2 (squared l2)."""
    _check_window(cert, tube_radius, window)
    if method == "auto":
        method = "gram" if (not cert.is_invariant and len(window) * window.group.ball_size(tube_radius) > 400_000) else "direct"
    if method == "gram":
        return _deficiency_l2_gram(cert, tube_radius, window)
    if cert.is_invariant:
        pair_value = _invariant_pair_value(cert, window, tube_radius, "sq_l2")
    else:
        rows = [cert.row(s) for s in window]
        pair_value = lambda i, j, g: sq_l2_distance(rows[i], rows[j])  # noqa: E731
    return _sweep(cert, tube_radius, window, pair_value, "sq_l2")


def _deficiency_l2_gram(cert: TubeKernel, radius: int, window: Ball, chunk: int = 1024) -> DeficiencyReport:
    from .groups import distance_matrix

    group = window.group
    elems = window.elements
    engine = PairwiseSq(cert.matrix(window).csr)
    table: dict[int, float] = {}
    best, best_pair, count = -1.0, (0, 0), 0
    for i0 in range(0, len(elems), chunk):
        i1 = min(len(elems), i0 + chunk)
        dist = distance_matrix(group, elems[i0:i1], elems)
        sq = engine.rows(i0, i1)
        # unordered pairs i <= j, as in the direct sweep
        upper = np.arange(i0, i1)[:, None] <= np.arange(len(elems))[None, :]
        mask = (dist <= radius) & upper
        count += int(mask.sum())
        for d in np.unique(dist[mask]):
            sel = mask & (dist == d)
            v = float(sq[sel].max())
            table[int(d)] = max(table.get(int(d), -1.0), v)
        vals = np.where(mask, sq, -1.0)
        k = int(np.argmax(vals))
        if vals.flat[k] > best:
            best = float(vals.flat[k])
            best_pair = (i0 + k // len(elems), k % len(elems))
    s, t = elems[best_pair[0]], elems[best_pair[1]]
    return DeficiencyReport(
        n=cert.meta.get("n"),
        tube_radius=radius,
        window_radius=window.radius,
        sup=max(best, 0.0),
        witness={"s": group.element_to_json(s), "t": group.element_to_json(t)},
        table=sorted(table.items()),
        pairs=count,
        norm="sq_l2",
        label=cert.label,
        extra={"method": "gram"},
    )


def aicm_deficiency(fam: BoundaryMeanFamily, points: Sequence[BoundaryPoint], window: Ball) -> DeficiencyReport:
    """sup over (omega, s) of ||s.m^omega - m^{s.omega}||_1."""
    group = fam.group
    if window.group != group:
        raise DomainError(f"window lives on {window.group}, family on {group}")
    n = fam.n
    weight = Fraction(1, n) if fam.exact else 1.0 / n
    cache: dict = {}

    def support(omega) -> frozenset:
        m = cache.get(omega)
        if m is None:
            word = boundary_prefix(omega, n)
            m = cache[omega] = frozenset(word[:k] for k in range(1, n + 1))
        return m

    def moved(s: str, omega) -> set:
        # s.(prefix of length k) for k = 1..n, multiplying letter by letter
        out, v = set(), s
        for c in boundary_prefix(omega, n):
            v = v[:-1] if v and v[-1] == c.swapcase() else v + c
            out.add(v)
        return out

    # both measures are uniform with mass 1/n on n points, so the l1
    # distance is (size of the support symmetric difference) / n, exactly
    zero = Fraction(0) if fam.exact else 0.0
    best, best_w = None, None
    table: dict[int, object] = {}
    count = 0
    for omega in points:
        for s in window:
            v = weight * len(moved(s, omega) ^ support(boundary_act(group, s, omega)))
            count += 1
            d = len(s)
            if d not in table or v > table[d]:
                table[d] = v
            if best is None or v > best:
                best, best_w = v, (omega, s)
    return DeficiencyReport(
        n=fam.n,
        tube_radius=window.radius,
        window_radius=window.radius,
        sup=zero if best is None else best,
        witness={} if best_w is None else {"omega": best_w[0].to_json(), "s": best_w[1]},
        table=sorted(table.items()),
        pairs=count,
        norm="l1",
        label=f"boundary_aicm(n={fam.n})",
        extra={"points": len(points)},
    )


def is_non_increasing(values: Sequence) -> bool:
    return all(b <= a for a, b in itertools.pairwise(values))


METHODS = {
    "folner": "Reiter balls on Z^d: row(s) uniform on s + B(n)",
    "free_ray": "geodesic rays on F_r: row(s) uniform on n ray vertices toward omega",
    "boundary": "boundary means on F_r: m_n^omega uniform on n prefixes of omega",
}


def certificate(group: Group, method: str, n: int, omega: BoundaryPoint | None = None) -> TubeKernel:
    if method == "folner":
        return folner_certificate(group, n)
    if method == "free_ray":
        return free_ray_certificate(group, n, omega)
    raise DomainError(f"no tube-kernel certificate named {method!r}")
