"""Tube-supported kernels on G x G and their matrix views.

A kernel is stored row-wise, ``s -> {u: value}``. Rows come from one of
three sources:

* an explicit finite table (``rows=``), whose keys are the domain;
* a left-invariant base row (``base=``), with row(s) = s . base;
* a row function (``row_fn=``), optionally restricted to a finite domain.

Invariant kernels over Z^d keep their base as coordinate/value arrays so the
large Reiter sets used by the embedding never pass through Python dicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .config import DEFAULTS
from .errors import DomainError, UnderCoverageError
from .groups import Ball, FreeGroup, Group, LatticeGroup, ball_enumerate, free_mul
from .measures import dot, translate_vec

KINDS = ("l1", "l2", "positive-type", "raw")


@dataclass(frozen=True)
class LatticeRow:
    """Sparse row on Z^d as parallel arrays (k x d coordinates, k values)."""

    coords: np.ndarray
    values: np.ndarray

    def to_dict(self) -> dict:
        return {tuple(int(x) for x in c): float(v) for c, v in zip(self.coords, self.values)}

    @classmethod
    def from_dict(cls, dim: int, row: Mapping) -> "LatticeRow":
        coords = np.array(list(row.keys()), dtype=np.int64).reshape(len(row), dim)
        return cls(coords, np.array(list(row.values()), dtype=float))

    def map_values(self, fn) -> "LatticeRow":
        return LatticeRow(self.coords, fn(self.values))


class TubeKernel:
    def __init__(
        self,
        group: Group,
        kind: str,
        tube_radius: int,
        row_fn: Callable | None = None,
        *,
        rows: Mapping | None = None,
        base: Mapping | LatticeRow | None = None,
        domain: Iterable | None = None,
        normalized: bool | None = None,
        check_support: bool = True,
        label: str = "",
        meta: dict | None = None,
    ):
        if kind not in KINDS:
            raise DomainError(f"unknown kernel kind {kind!r}")
        if sum(x is not None for x in (row_fn, rows, base)) != 1:
            raise DomainError("give exactly one of row_fn, rows, base")
        self.group = group
        self.kind = kind
        self.tube_radius = int(tube_radius)
        self.normalized = kind in ("l1", "l2") if normalized is None else normalized
        self.check_support = check_support
        self.label = label
        self.meta = dict(meta or {})
        self._row_fn = row_fn
        self._rows = None
        self._base = None
        self._base_arrays = None
        self._shifter = None
        self._matrix_cache: dict = {}
        if rows is not None:
            self._rows = {s: dict(r) for s, r in rows.items()}
            self.domain = frozenset(self._rows)
            for s, r in self._rows.items():
                self._check_row(s, r)
        else:
            self.domain = None if domain is None else frozenset(domain)
        if base is not None:
            if isinstance(base, LatticeRow):
                if not isinstance(group, LatticeGroup):
                    raise DomainError("array base rows are only supported on lattices")
                self._base_arrays = base
            else:
                self._base = dict(base)
            self._check_base()

    # --- construction helpers -------------------------------------------

    @classmethod
    def from_rows(cls, group: Group, kind: str, rows: Mapping, tube_radius: int | None = None, **kw) -> "TubeKernel":
        """Explicit finite kernel; the tube radius defaults to the measured one."""
        if tube_radius is None:
            tube_radius = max((group.distance(s, u) for s, r in rows.items() for u in r), default=0)
        return cls(group, kind, tube_radius, rows=rows, **kw)

    def derive(self, kind: str, *, row_fn=None, base=None, tube_radius=None, normalized=None, label="", meta=None):
        """New kernel over the same domain (used by entrywise transforms)."""
        merged = dict(self.meta)
        merged.update(meta or {})
        if base is None and row_fn is None:
            raise DomainError("derive needs row_fn or base")
        return TubeKernel(
            self.group,
            kind,
            self.tube_radius if tube_radius is None else tube_radius,
            row_fn=row_fn,
            base=base,
            domain=None if base is not None else self.domain,
            normalized=normalized,
            check_support=self.check_support,
            label=label or self.label,
            meta=merged,
        )

    # --- access -------------------------------------------------------------

    @property
    def is_invariant(self) -> bool:
        return self._base is not None or self._base_arrays is not None

    @property
    def base(self) -> dict:
        """Row at the identity of a left-invariant kernel."""
        if not self.is_invariant:
            raise DomainError("kernel is not left-invariant")
        if self._base is None:
            self._base = self._base_arrays.to_dict()
        return self._base

    @property
    def base_arrays(self) -> LatticeRow:
        if not self.is_invariant or not isinstance(self.group, LatticeGroup):
            raise DomainError("array base rows are only available for invariant lattice kernels")
        if self._base_arrays is None:
            self._base_arrays = LatticeRow.from_dict(self.group.dim, self._base)
        return self._base_arrays

    def shifter(self, reach: int) -> "LatticeShifter":
        """Cached :class:`LatticeShifter` of the base row with at least this reach."""
        if self._shifter is None or self._shifter.reach < reach:
            self._shifter = LatticeShifter(self.base_arrays, reach)
        return self._shifter

    def covers(self, s) -> bool:
        return self.domain is None or s in self.domain

    def require(self, elements: Iterable) -> None:
        missing = [s for s in elements if not self.covers(s)]
        if missing:
            raise UnderCoverageError(
                f"{len(missing)} elements (first {missing[0]!r}) lie outside the kernel's materialized domain"
            )

    def row(self, s) -> dict:
        if not self.covers(s):
            raise UnderCoverageError(f"row {s!r} lies outside the kernel's materialized domain")
        if self._rows is not None:
            return self._rows[s]
        if self.is_invariant:
            return translate_vec(self.group, s, self.base)
        r = self._row_fn(s)
        self._check_row(s, r)
        return r

    def value(self, s, t) -> float:
        if self.group.distance(s, t) > self.tube_radius:
            return 0.0
        if self.is_invariant and self._rows is None:
            return self.base.get(_left_div(self.group, s, t), 0.0)
        return self.row(s).get(t, 0.0)

    # --- invariants ---------------------------------------------------------

    def _check_row(self, s, r: Mapping) -> None:
        tol = DEFAULTS.norm_tol
        if self.normalized:
            if self.kind == "l1":
                if any(v < 0 for v in r.values()):
                    raise DomainError(f"row {s!r} has a negative entry")
                total = math.fsum(r.values())
                if abs(total - 1) > tol:
                    raise DomainError(f"row {s!r} sums to {total!r}, not 1")
            elif self.kind == "l2":
                norm = math.sqrt(math.fsum(v * v for v in r.values()))
                if abs(norm - 1) > tol:
                    raise DomainError(f"row {s!r} has l2 norm {norm!r}, not 1")
        if self.check_support:
            for u in r:
                if self.group.distance(s, u) > self.tube_radius:
                    raise DomainError(f"row {s!r} has support at {u!r} outside tube radius {self.tube_radius}")

    def _check_base(self) -> None:
        if self._base_arrays is not None:
            arr = self._base_arrays
            if self.normalized:
                tol = DEFAULTS.norm_tol
                if self.kind == "l1" and (np.any(arr.values < 0) or abs(float(arr.values.sum()) - 1) > tol):
                    raise DomainError("base row is not a probability vector")
                if self.kind == "l2" and abs(math.sqrt(float(np.dot(arr.values, arr.values))) - 1) > tol:
                    raise DomainError("base row is not a unit vector")
            if arr.coords.size and np.abs(arr.coords).sum(axis=1).max() > self.tube_radius:
                raise DomainError("base row support exceeds the tube radius")
        else:
            self._check_row(self.group.identity, self._base)

    def check_row(self, s) -> dict:
        """Materialize row s and verify normalization and tube support."""
        r = self.row(s)
        saved = self.check_support
        self.check_support = True
        try:
            self._check_row(s, r)
        finally:
            self.check_support = saved
        return r

    # --- matrix views -------------------------------------------------------

    def matrix(self, elements: Sequence, cache: bool = True) -> "RowMatrix":
        """Rows for ``elements`` as a CSR matrix over a column index."""
        key = (elements.group, elements.radius) if isinstance(elements, Ball) else None
        if cache and key is not None and key in self._matrix_cache:
            return self._matrix_cache[key]
        self.require(elements)
        if self.is_invariant and isinstance(self.group, LatticeGroup) and self._rows is None:
            out = _lattice_invariant_matrix(self.base_arrays, elements, self.group.dim)
        else:
            out = _generic_matrix(self, elements)
        if cache and key is not None:
            self._matrix_cache[key] = out
        return out

    def clear_cache(self) -> None:
        self._matrix_cache.clear()

    # --- serialization ------------------------------------------------------

    def to_json(self, domain: Iterable | None = None) -> dict:
        if domain is None:
            if self.domain is None:
                raise UnderCoverageError("kernel has an infinite domain; pass the rows to export")
            domain = sorted(self.domain, key=_sort_key)
        g = self.group
        rows = {}
        for s in domain:
            r = self.row(s)
            rows[g.format(s)] = {g.format(u): float(r[u]) for u in sorted(r, key=_sort_key)}
        return {
            "group": g.to_json(),
            "kind": self.kind,
            "tube_radius": self.tube_radius,
            "normalized": self.normalized,
            "label": self.label,
            "rows": rows,
        }

    @classmethod
    def from_json(cls, obj: Mapping, group: Group | None = None) -> "TubeKernel":
        from .groups import group_from_json

        try:
            group = group or group_from_json(obj["group"])
            rows = {
                group.parse(s): {group.parse(u): float(v) for u, v in r.items()} for s, r in obj["rows"].items()
            }
            return cls(
                group,
                obj["kind"],
                int(obj["tube_radius"]),
                rows=rows,
                normalized=obj.get("normalized"),
                label=obj.get("label", ""),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise DomainError(f"malformed kernel JSON: {exc}") from exc

    def __repr__(self) -> str:
        return f"TubeKernel({self.group}, kind={self.kind!r}, tube_radius={self.tube_radius}, label={self.label!r})"


def _sort_key(g):
    if isinstance(g, str):
        return (len(g), g)
    return (sum(map(abs, g)), g)


def _left_div(group: Group, s, t):
    """s^-1 t without validation."""
    if isinstance(group, FreeGroup):
        return free_mul(s[::-1].swapcase(), t)
    return tuple(b - a for a, b in zip(s, t))


class CoefficientKernel(TubeKernel):
    """h(s, t) = sum_u xi_s(u) xi_t(u), the coefficient of an l2 field."""

    def __init__(self, source: TubeKernel, domain: Iterable | None = None, label: str = ""):
        dom = source.domain if domain is None else frozenset(domain)
        if dom is not None:
            source.require(dom)
        super().__init__(
            source.group,
            "positive-type",
            2 * source.tube_radius,
            row_fn=self._coefficient_row,
            domain=dom,
            normalized=False,
            check_support=False,
            label=label or f"coefficient({source.label})",
            meta=source.meta,
        )
        self.source = source
        self._src_rows: dict = {}

    def _src(self, s) -> dict:
        r = self._src_rows.get(s)
        if r is None:
            r = self._src_rows[s] = self.source.row(s)
        return r

    def value(self, s, t) -> float:
        if not (self.covers(s) and self.covers(t)):
            raise UnderCoverageError(f"pair ({s!r}, {t!r}) lies outside the coefficient's domain")
        if self.group.distance(s, t) > self.tube_radius:
            return 0.0
        return dot(self._src(s), self._src(t))

    def _coefficient_row(self, s) -> dict:
        if self.domain is not None:
            candidates = [t for t in self.domain if self.group.distance(s, t) <= self.tube_radius]
        else:
            ball = ball_enumerate(self.group, self.tube_radius)
            candidates = [_mul(self.group, s, g) for g in ball]
        out = {}
        for t in candidates:
            v = dot(self._src(s), self._src(t))
            if v != 0:
                out[t] = v
        return out


def _mul(group: Group, g, h):
    if isinstance(group, FreeGroup):
        return free_mul(g, h)
    return tuple(a + b for a, b in zip(g, h))


# --- matrices ------------------------------------------------------------------


@dataclass
class RowMatrix:
    csr: sparse.csr_matrix
    column_elements: list | None = None
    # lattice box layout: (origin, extents) for lazily decoding columns
    box: tuple | None = None

    @property
    def columns(self) -> list:
        if self.column_elements is None:
            origin, extents = self.box
            idx = np.arange(int(np.prod(extents)))
            coords = np.stack(np.unravel_index(idx, extents), axis=1) + origin
            self.column_elements = [tuple(int(x) for x in c) for c in coords]
        return self.column_elements


def _generic_matrix(kernel: TubeKernel, elements: Sequence) -> RowMatrix:
    col_index: dict = {}
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for s in elements:
        r = kernel.row(s)
        for u, v in r.items():
            j = col_index.get(u)
            if j is None:
                j = col_index[u] = len(col_index)
            indices.append(j)
            data.append(v)
        indptr.append(len(indices))
    csr = sparse.csr_matrix(
        (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(elements), len(col_index)),
    )
    return RowMatrix(csr, list(col_index))


def _lattice_invariant_matrix(base: LatticeRow, elements: Sequence, dim: int) -> RowMatrix:
    s = np.asarray(list(elements), dtype=np.int64).reshape(len(elements), dim)
    k = len(base.values)
    if k == 0:
        return RowMatrix(sparse.csr_matrix((len(elements), 0)), [])
    lo = s.min(axis=0) + base.coords.min(axis=0)
    hi = s.max(axis=0) + base.coords.max(axis=0)
    extents = tuple(int(x) for x in (hi - lo + 1))
    pts = s[:, None, :] + base.coords[None, :, :] - lo
    codes = np.ravel_multi_index(tuple(pts.reshape(-1, dim).T), extents)
    indptr = np.arange(0, len(elements) * k + 1, k, dtype=np.int64)
    data = np.tile(base.values, len(elements))
    csr = sparse.csr_matrix((data, codes.astype(np.int64), indptr), shape=(len(elements), int(np.prod(extents))))
    return RowMatrix(csr, box=(lo, extents))


class PairwiseSq:
    """Squared l2 distances ||x_i - x_j||^2 between the rows of a matrix.

    Uses ||x_i||^2 + ||x_j||^2 - 2 <x_i, x_j>. Columns touched by many rows
    are multiplied densely, the rest sparsely, so chunks of the distance
    matrix can be produced without ever forming the whole Gram matrix.
    """

    dense_limit = 40_000_000

    def __init__(self, mat: sparse.csr_matrix):
        mat = sparse.csr_matrix(mat)
        self.n = mat.shape[0]
        self.norms = np.asarray(mat.multiply(mat).sum(axis=1)).ravel()
        if mat.shape[0] * mat.shape[1] <= self.dense_limit:
            self.dense = mat.toarray()
            self.light = None
        else:
            nnz = np.bincount(mat.indices, minlength=mat.shape[1])
            heavy = nnz >= max(32, self.n // 64)
            self.dense = mat[:, np.flatnonzero(heavy)].toarray()
            light = mat[:, np.flatnonzero(~heavy)]
            self.light = sparse.csr_matrix(light)
            self.light_t = sparse.csc_matrix(light.T)

    def gram_rows(self, i0: int, i1: int) -> np.ndarray:
        g = self.dense[i0:i1] @ self.dense.T
        if self.light is not None:
            g += (self.light[i0:i1] @ self.light_t).toarray()
        return g

    def rows(self, i0: int, i1: int) -> np.ndarray:
        d = self.norms[i0:i1, None] + self.norms[None, :] - 2.0 * self.gram_rows(i0, i1)
        np.maximum(d, 0.0, out=d)
        # a row's distance to itself is exactly zero, not cancellation noise
        k = np.arange(i1 - i0)
        d[k, i0 + k] = 0.0
        return d


class LatticeShifter:
    """Zero-padded dense copy of a lattice base row.

    Differences ``base - g.base`` for every displacement with
    ``max |g_i| <= reach`` are computed from two slices, no scatter.
    """

    def __init__(self, base: LatticeRow, reach: int):
        self.reach = reach
        pad = 2 * reach
        lo = base.coords.min(axis=0) - pad
        hi = base.coords.max(axis=0) + pad
        self.extents = tuple(int(x) for x in (hi - lo + 1))
        self.dense = np.zeros(self.extents)
        self.dense[tuple((base.coords - lo).T)] = base.values

    def diff(self, g: Sequence[int]) -> np.ndarray:
        r = self.reach
        if any(abs(int(x)) > r for x in g):
            raise DomainError(f"displacement {tuple(g)} exceeds the reach {r}")
        inner = tuple(slice(r, e - r) for e in self.extents)
        # (g.base)(u) = base(u - g)
        moved = tuple(slice(r - int(x), e - r - int(x)) for x, e in zip(g, self.extents))
        return self.dense[inner] - self.dense[moved]

    def l1(self, g: Sequence[int]) -> float:
        return float(np.abs(self.diff(g)).sum())

    def sq_l2(self, g: Sequence[int]) -> float:
        d = self.diff(g).ravel()
        return float(np.dot(d, d))


def _reach(g: Sequence[int]) -> int:
    return max((abs(int(x)) for x in g), default=0)


def lattice_shift_l1(base: LatticeRow, g: Sequence[int]) -> float:
    """||base - g.base||_1 on Z^d."""
    return LatticeShifter(base, _reach(g)).l1(g)


def lattice_shift_sq_l2(base: LatticeRow, g: Sequence[int]) -> float:
    return LatticeShifter(base, _reach(g)).sq_l2(g)
