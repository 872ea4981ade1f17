"""Uniform embedding into l2 from a sequence of l2 certificates.

f(s) is the direct sum over levels n of (xi_n^s - xi_n^e). Level n must be
unit-normalized and have squared l2 deficiency at most 1/n^2 on the tube of
radius n; under that contract

* ||f(s) - f(t)||^2 <= 4n + sum_{k>n} 1/k^2 whenever l(s^-1 t) <= n,
* ||f(s) - f(t)||^2 >= 2n whenever l(s^-1 t) > 2 psi(n),

where psi(n) bounds the tube radii of the first n levels.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import zeta

from .certificates import folner_certificate, free_ray_certificate
from .errors import BoundViolationError, DecayContractError, DomainError, UnderCoverageError
from .groups import Ball, FreeGroup, Group, LatticeGroup, distance_matrix
from .kernels import PairwiseSq, TubeKernel
from .measures import sq_l2_distance
from .transforms import density_to_l2

# float slack on the two distance bounds; both sides are O(n) sums of O(1) terms
BOUND_TOL = 1e-9
DECAY_TOL = 1e-12


def folner_schedule(n: int) -> int:
    """Ball radius for level n of the lattice sequence."""
    return n**3


def free_ray_schedule(n: int) -> int:
    """Ray length for level n of the free-group sequence."""
    return 2 * n**3


@dataclass
class _WindowStats:
    """Aggregates over all ordered pairs of one window, for every prefix N."""

    counts: np.ndarray  # pairs per distance
    level_max: np.ndarray  # [p, d] max level-p squared distance
    cum_min: np.ndarray  # [N, d] min of sum over levels <= N
    cum_max: np.ndarray


class CertificateSequence:
    """Levels xi_1, xi_2, ... with the decay contract re-measured on a window."""

    def __init__(
        self,
        levels: Sequence[TubeKernel],
        window: Ball,
        *,
        schedule: Sequence[int] | None = None,
        check_decay: bool = True,
        label: str = "",
        chunk: int = 1024,
    ):
        if not levels:
            raise DomainError("a certificate sequence needs at least one level")
        group = levels[0].group
        for n, lv in enumerate(levels, 1):
            if lv.group != group:
                raise DomainError(f"level {n} lives on {lv.group}, not {group}")
            if lv.kind != "l2" or not lv.normalized:
                raise DomainError(f"level {n} is not an l2-normalized kernel")
        if window.group != group:
            raise DomainError(f"window lives on {window.group}, levels on {group}")
        self.group = group
        self.levels = list(levels)
        self.window = window
        self.schedule = list(schedule) if schedule is not None else [lv.tube_radius for lv in levels]
        self.label = label
        self.chunk = chunk
        self._engines: dict = {}
        self._stats: dict = {}
        self.deficiencies: list[float] = []
        if check_decay:
            self._check_decay()

    def __len__(self) -> int:
        return len(self.levels)

    def level(self, n: int) -> TubeKernel:
        if not 1 <= n <= len(self.levels):
            raise DomainError(f"level {n} not in 1..{len(self.levels)}")
        return self.levels[n - 1]

    def _check_decay(self) -> None:
        L = len(self.levels)
        if self.window.radius < L:
            raise UnderCoverageError(
                f"window B({self.window.radius}) cannot realize the tube of radius {L} for level {L}"
            )
        stats = self.stats(self.window)
        for n in range(1, L + 1):
            sup = float(stats.level_max[n - 1, : n + 1].max())
            self.deficiencies.append(sup)
            if sup > 1.0 / n**2 + DECAY_TOL:
                raise DecayContractError(
                    f"level {n} has squared l2 deficiency {sup!r} on the tube of radius {n}, above 1/n^2 = {1 / n**2!r}"
                )

    def engine(self, n: int, window: Ball) -> PairwiseSq:
        key = (n, window.group, window.radius)
        eng = self._engines.get(key)
        if eng is None:
            eng = self._engines[key] = PairwiseSq(self.level(n).matrix(window, cache=False).csr)
        return eng

    def stats(self, window: Ball) -> _WindowStats:
        """One chunked pass over all ordered pairs of the window."""
        key = (window.group, window.radius)
        if key in self._stats:
            return self._stats[key]
        for lv in self.levels:
            lv.require(window)
        elems = window.elements
        L = len(self.levels)
        dmax = 2 * window.radius
        counts = np.zeros(dmax + 1, dtype=np.int64)
        level_max = np.full((L, dmax + 1), -np.inf)
        cum_min = np.full((L, dmax + 1), np.inf)
        cum_max = np.full((L, dmax + 1), -np.inf)
        engines = [self.engine(n, window) for n in range(1, L + 1)]
        for i0 in range(0, len(elems), self.chunk):
            i1 = min(len(elems), i0 + self.chunk)
            dist = distance_matrix(self.group, elems[i0:i1], elems)
            flat = dist.ravel()
            here = np.bincount(flat, minlength=dmax + 1)
            counts += here
            # group entries by distance once; segment reductions per level
            order = np.argsort(flat, kind="stable")
            labels = np.flatnonzero(here)
            starts = np.concatenate(([0], np.cumsum(here[labels])[:-1]))
            total = np.zeros(flat.shape)
            for p, eng in enumerate(engines):
                sq = eng.rows(i0, i1).ravel()
                total += sq
                seg = sq[order]
                level_max[p, labels] = np.maximum(level_max[p, labels], np.maximum.reduceat(seg, starts))
                seg = total[order]
                cum_min[p, labels] = np.minimum(cum_min[p, labels], np.minimum.reduceat(seg, starts))
                cum_max[p, labels] = np.maximum(cum_max[p, labels], np.maximum.reduceat(seg, starts))
        stats = _WindowStats(counts, level_max, cum_min, cum_max)
        self._stats[key] = stats
        return stats


def support_radius(seq: CertificateSequence, n: int) -> int:
    """psi(n): the largest tube radius among levels 1..n."""
    return max(seq.level(p).tube_radius for p in range(1, n + 1))


def _sqrt_levels(kernels: Sequence[TubeKernel]) -> list[TubeKernel]:
    return [density_to_l2(k) for k in kernels]


def folner_sequence(group: LatticeGroup, levels: int, window: Ball, check_decay: bool = True, **kw):
    """Square roots of Reiter balls of radius n^3 at level n."""
    if levels < 1:
        raise DomainError(f"need at least one level, got {levels}")
    sched = [folner_schedule(n) for n in range(1, levels + 1)]
    kernels = _sqrt_levels([folner_certificate(group, m) for m in sched])
    return CertificateSequence(
        kernels, window, schedule=sched, check_decay=check_decay, label="folner-sqrt", **kw
    )


def free_ray_sequence(group: FreeGroup, levels: int, window: Ball, omega=None, check_decay: bool = True, **kw):
    """Square roots of ray certificates of length 2 n^3 at level n."""
    if levels < 1:
        raise DomainError(f"need at least one level, got {levels}")
    sched = [free_ray_schedule(n) for n in range(1, levels + 1)]
    kernels = _sqrt_levels([free_ray_certificate(group, m, omega) for m in sched])
    return CertificateSequence(
        kernels, window, schedule=sched, check_decay=check_decay, label="free_ray-sqrt", **kw
    )


def default_sequence(group: Group, levels: int, window: Ball, **kw) -> CertificateSequence:
    if isinstance(group, LatticeGroup):
        return folner_sequence(group, levels, window, **kw)
    return free_ray_sequence(group, levels, window, **kw)


# --- embedding vectors -----------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingVector:
    group: Group
    element: object
    blocks: tuple  # level n -> sparse difference vector, index n - 1

    @property
    def levels(self) -> int:
        return len(self.blocks)

    def sq_norm(self) -> float:
        return math.fsum(sum(v * v for v in b.values()) for b in self.blocks)

    def to_json(self) -> dict:
        g = self.group
        return {
            "element": g.element_to_json(self.element),
            "blocks": [{g.format(u): v for u, v in sorted(b.items(), key=lambda kv: g.format(kv[0]))} for b in self.blocks],
        }


def build_embedding(seq: CertificateSequence, levels: int, s) -> EmbeddingVector:
    """Truncation of f(s) to the first ``levels`` blocks."""
    if not 1 <= levels <= len(seq):
        raise DomainError(f"levels must be in 1..{len(seq)}, got {levels}")
    g = seq.group
    g.check(s)
    blocks = []
    for n in range(1, levels + 1):
        lv = seq.level(n)
        if not (lv.covers(s) and lv.covers(g.identity)):
            raise UnderCoverageError(f"{s!r} lies outside level {n}'s materialized domain")
        rs, re = lv.row(s), lv.row(g.identity)
        block = {}
        for u in set(rs) | set(re):
            v = rs.get(u, 0.0) - re.get(u, 0.0)
            if v != 0:
                block[u] = v
        blocks.append(block)
    return EmbeddingVector(g, s, tuple(blocks))


def tail_bound(distance: int, levels: int) -> float:
    """Bound on sum_{k > levels} ||xi_k^s - xi_k^t||^2 at this distance.

    Levels below the distance contribute at most 4, the rest at most 1/k^2.
    """
    big = max(0, distance - 1 - levels)
    start = max(levels + 1, distance)
    return 4.0 * big + float(zeta(2, start))


def upper_bound(distance: int) -> float:
    """4n + sum_{k>n} 1/k^2 at the smallest applicable n = max(distance, 1)."""
    n = max(distance, 1)
    return 4.0 * n + float(zeta(2, n + 1))


def embedding_distance(f1: EmbeddingVector, f2: EmbeddingVector) -> tuple[float, float]:
    """(sum over computed levels of block distances squared, tail bound)."""
    if f1.levels != f2.levels:
        raise DomainError(f"level counts differ: {f1.levels} vs {f2.levels}")
    if f1.group != f2.group:
        raise DomainError("embedding vectors live on different groups")
    sq = math.fsum(sq_l2_distance(a, b) for a, b in zip(f1.blocks, f2.blocks))
    d = f1.group.distance(f1.element, f2.element)
    return sq, tail_bound(d, f1.levels)


# --- distortion profile ----------------------------------------------------------


@dataclass(frozen=True)
class ProfileRow:
    distance: int
    pairs: int
    min_sq: float
    max_sq: float
    max_with_tail: float
    upper_bound: float
    lower_threshold: float | None
    lower_level: int | None


@dataclass
class DistortionProfile:
    levels: int
    window_radius: int
    schedule: list
    psi: list
    rows: list[ProfileRow]
    violations: list = field(default_factory=list)
    label: str = ""

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "levels": self.levels,
            "window_radius": self.window_radius,
            "schedule": self.schedule,
            "psi": self.psi,
            "rows": [r.__dict__ for r in self.rows],
            "violations": self.violations,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["distance", "min_sq", "max_sq", "upper_bound", "lower_threshold", "pairs", "max_with_tail"])
        for r in self.rows:
            low = "" if r.lower_threshold is None else repr(r.lower_threshold)
            w.writerow([r.distance, repr(r.min_sq), repr(r.max_sq), repr(r.upper_bound), low, r.pairs, repr(r.max_with_tail)])
        return buf.getvalue()


def distortion_profile(seq: CertificateSequence, levels: int, window: Ball, strict: bool = False) -> DistortionProfile:
    """Per-distance min/max of the truncated ||f(s) - f(t)||^2 with both bounds.

    The upper bound is checked on truncated value plus tail bound, so it
    covers the untruncated norm; the lower bound is checked on the truncated
    value, which can only underestimate.
    """
    if not 1 <= levels <= len(seq):
        raise DomainError(f"levels must be in 1..{len(seq)}, got {levels}")
    stats = seq.stats(window)
    psi = [support_radius(seq, n) for n in range(1, levels + 1)]
    rows, violations = [], []
    for d in np.flatnonzero(stats.counts):
        d = int(d)
        mn = float(stats.cum_min[levels - 1, d])
        mx = float(stats.cum_max[levels - 1, d])
        with_tail = mx + tail_bound(d, levels)
        up = upper_bound(d)
        low_n = max((n for n in range(1, levels + 1) if d > 2 * psi[n - 1]), default=None)
        low = None if low_n is None else 2.0 * low_n
        rows.append(ProfileRow(d, int(stats.counts[d]), mn, mx, with_tail, up, low, low_n))
        if with_tail > up + BOUND_TOL:
            violations.append({"bound": "upper", "distance": d, "value": with_tail, "limit": up})
        if low is not None and mn < low - BOUND_TOL:
            violations.append({"bound": "lower", "distance": d, "value": mn, "limit": low})
    prof = DistortionProfile(levels, window.radius, seq.schedule[:levels], psi, rows, violations, seq.label)
    if strict and violations:
        raise BoundViolationError(f"{len(violations)} embedding bound violations", report=prof)
    return prof
