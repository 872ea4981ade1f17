"""Conversions between approximate means, densities, l2 fields and
positive-type coefficients, with the per-pair bounds each step obeys."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .config import DEFAULTS
from .errors import DomainError, NotPositiveTypeError, UnderCoverageError
from .groups import Ball, Group, tube_pair_list
from .kernels import CoefficientKernel, TubeKernel, _mul
from .measures import ProbMeasure, l1_distance, l2_norm, sq_l2_distance


@dataclass(frozen=True)
class BumpFunction:
    """Finitely supported probability density used for smoothing."""

    group: Group
    values: Mapping

    def __post_init__(self):
        if not self.values:
            raise DomainError("bump function needs a nonempty support")
        for g, v in self.values.items():
            self.group.check(g)
            if v < 0:
                raise DomainError(f"bump function is negative at {g!r}")
        total = math.fsum(self.values.values())
        if abs(total - 1) > DEFAULTS.norm_tol:
            raise DomainError(f"bump function sums to {total!r}, not 1")

    @classmethod
    def delta(cls, group: Group) -> "BumpFunction":
        return cls(group, {group.identity: 1.0})

    @classmethod
    def uniform(cls, group: Group, elements) -> "BumpFunction":
        elements = list(elements)
        return cls(group, {g: 1.0 / len(elements) for g in elements})

    @property
    def radius(self) -> int:
        return max(self.group.length(g) for g in self.values)

    def at(self, g) -> float:
        return self.values.get(g, 0.0)


def _convolve(group: Group, row: Mapping, bump: BumpFunction) -> dict:
    """u -> sum_t row(t) bump(t^-1 u)."""
    out: dict = {}
    for t, m in row.items():
        for b, w in bump.values.items():
            u = _mul(group, t, b)
            out[u] = out.get(u, 0.0) + m * w
    return out


def _check_bump(kernel_group: Group, bump: BumpFunction) -> None:
    if bump.group != kernel_group:
        raise DomainError(f"bump lives on {bump.group}, kernel on {kernel_group}")


def mean_to_density(means, bump: BumpFunction) -> TubeKernel:
    """Smooth a family of means by right convolution with a bump.

    ``means`` is an l1 TubeKernel or a mapping s -> ProbMeasure. The result
    has tube radius (mean radius + bump radius) and never a larger l1
    deficiency than the input.
    """
    if isinstance(means, TubeKernel):
        group = means.group
        _check_bump(group, bump)
        radius = means.tube_radius + bump.radius
        label = f"density({means.label})"
        if means.is_invariant:
            return means.derive("l1", base=_convolve(group, means.base, bump), tube_radius=radius, label=label)
        return means.derive(
            "l1", row_fn=lambda s: _convolve(group, means.row(s), bump), tube_radius=radius, label=label
        )
    if not means:
        raise DomainError("no means given")
    group = next(iter(means.values())).group
    _check_bump(group, bump)
    rows, mean_radius = {}, 0
    for s, m in means.items():
        if not isinstance(m, ProbMeasure) or m.group != group:
            raise DomainError(f"row {s!r} is not a probability measure on {group}")
        mean_radius = max([mean_radius] + [group.distance(s, t) for t in m.masses])
        rows[s] = _convolve(group, m.masses, bump)
    return TubeKernel.from_rows(group, "l1", rows, mean_radius + bump.radius, label="density")


def _normalize_row(group: Group, s, row: Mapping, bump: BumpFunction, n: int) -> dict:
    for u, v in row.items():
        if v < 0:
            raise DomainError(f"row {s!r} has a negative entry at {u!r}")
    # (row + bump(s^-1 .)/n) / (sum + 1/n), scaled by n to keep the zero-row case exact
    denom = math.fsum(row.values()) * n + 1
    out = {u: v * n for u, v in row.items()}
    for b, w in bump.values.items():
        u = _mul(group, s, b)
        out[u] = out.get(u, 0.0) + w
    return {u: v / denom for u, v in out.items()}


def density_normalize(kernel: TubeKernel, bump: BumpFunction, n: int) -> TubeKernel:
    """Turn nonnegative rows with positive finite mass into probability rows.

    The bump is added translated to each row's base point, so tube support
    is kept with radius max(kernel radius, bump radius).
    """
    _check_bump(kernel.group, bump)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    group = kernel.group
    radius = max(kernel.tube_radius, bump.radius)
    label = f"normalized({kernel.label}, n={n})"
    if kernel.is_invariant:
        base = _normalize_row(group, group.identity, kernel.base, bump, n)
        return kernel.derive("l1", base=base, tube_radius=radius, normalized=True, label=label)
    return kernel.derive(
        "l1",
        row_fn=lambda s: _normalize_row(group, s, kernel.row(s), bump, n),
        tube_radius=radius,
        normalized=True,
        label=label,
    )


def _entrywise(kernel: TubeKernel, fn, array_fn, kind: str, label: str) -> TubeKernel:
    if kernel.is_invariant:
        if kernel._base_arrays is not None:
            return kernel.derive(kind, base=kernel._base_arrays.map_values(array_fn), label=label)
        return kernel.derive(kind, base={u: fn(v) for u, v in kernel.base.items()}, label=label)
    return kernel.derive(kind, row_fn=lambda s: {u: fn(v) for u, v in kernel.row(s).items()}, label=label)


def _checked_sqrt(v: float) -> float:
    if v < 0:
        raise DomainError(f"density entry {v!r} is negative")
    return math.sqrt(v)


def _checked_sqrt_array(values: np.ndarray) -> np.ndarray:
    if np.any(values < 0):
        raise DomainError("density has a negative entry")
    return np.sqrt(values)


def density_to_l2(kernel: TubeKernel) -> TubeKernel:
    """Entrywise square root; probability rows become unit vectors."""
    return _entrywise(kernel, _checked_sqrt, _checked_sqrt_array, "l2", f"sqrt({kernel.label})")


def l2_to_density(kernel: TubeKernel) -> TubeKernel:
    """Entrywise square; unit rows become probability rows."""
    return _entrywise(kernel, lambda v: v * v, np.square, "l1", f"square({kernel.label})")


def l2_to_coefficient(kernel: TubeKernel, domain=None) -> CoefficientKernel:
    """h(s, t) = <row_s, row_t>, a positive-type kernel of twice the radius."""
    return CoefficientKernel(kernel, domain=domain)


# --- per-pair bound chain --------------------------------------------------------


@dataclass
class BoundChainReport:
    """Per-pair verification of mean -> density -> l2 -> coefficient."""

    tube_radius: int
    window_radius: int
    pairs: int = 0
    # check name -> largest (lhs - rhs) seen; <= slack means it held
    gaps: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def record(self, name: str, gap: float, limit: float, pair) -> None:
        if name not in self.gaps or gap > self.gaps[name]:
            self.gaps[name] = gap
            self.witnesses[name] = pair
        self.violations[name] = self.violations.get(name, 0) + (gap > limit)

    def to_json(self) -> dict:
        return {
            "tube_radius": self.tube_radius,
            "window_radius": self.window_radius,
            "pairs": self.pairs,
            "checks": {
                k: {"max_gap": self.gaps[k], "violations": self.violations[k], "witness": self.witnesses[k]}
                for k in sorted(self.gaps)
            },
            "ok": self.ok,
        }


def bound_chain(means: TubeKernel, bump: BumpFunction, tube_radius: int, window: Ball, slack: float = 1e-12):
    """Run the whole conversion chain and assert every bound per tube pair.

    Checks, for each pair (s, t) of the window at distance <= tube_radius:

    * density l1 difference <= mean l1 difference;
    * squared l2 difference of the square roots <= density l1 difference;
    * h(s,s) + h(t,t) - 2 h(s,t) equals the squared l2 difference;
    * the squared field's l1 difference <= (|xi_s| + |xi_t|) |xi_s - xi_t|.
    """
    if window.radius < tube_radius:
        raise UnderCoverageError(f"window B({window.radius}) is smaller than the tube radius {tube_radius}")
    group = window.group
    density = mean_to_density(means, bump)
    field_ = density_to_l2(density)
    coeff = l2_to_coefficient(field_)
    back = l2_to_density(field_)
    elems = window.elements
    rows = {}

    def get(i):
        r = rows.get(i)
        if r is None:
            s = elems[i]
            r = rows[i] = (means.row(s), density.row(s), field_.row(s), back.row(s))
        return r

    report = BoundChainReport(tube_radius, window.radius)
    for i, j, _, _ in tube_pair_list(window, tube_radius):
        ms, ds, xs, bs = get(i)
        mt, dt, xt, bt = get(j)
        pair = (group.element_to_json(elems[i]), group.element_to_json(elems[j]))
        report.pairs += 1
        mean_l1 = l1_distance(ms, mt)
        dens_l1 = l1_distance(ds, dt)
        sq = sq_l2_distance(xs, xt)
        report.record("density_le_mean", dens_l1 - mean_l1, slack, pair)
        report.record("l2_sq_le_l1", sq - dens_l1, slack, pair)
        polar = coeff.value(elems[i], elems[i]) + coeff.value(elems[j], elems[j]) - 2 * coeff.value(elems[i], elems[j])
        report.record("polarization", abs(polar - sq), slack, pair)
        cs = (l2_norm(xs) + l2_norm(xt)) * math.sqrt(sq)
        report.record("cauchy_schwarz", l1_distance(bs, bt) - cs, slack, pair)
    return report


# --- factorization -----------------------------------------------------------------


@dataclass
class Factorization:
    kernel: TubeKernel
    min_eigenvalue: float
    residual: float
    window_out: int
    window_in: int

    def to_json(self, rows: bool = False) -> dict:
        out = {
            "min_eigenvalue": self.min_eigenvalue,
            "residual": self.residual,
            "window_out": self.window_out,
            "window_in": self.window_in,
            "tube_radius": self.kernel.tube_radius,
        }
        if rows:
            out["kernel"] = self.kernel.to_json()
        return out


def gram_matrix(h: TubeKernel, window: Ball) -> np.ndarray:
    """H[i, j] = h(s_i, s_j) over the window, zero outside the tube."""
    h.require(window)
    if isinstance(h, CoefficientKernel):
        x = h.source.matrix(window).csr
        return (x @ x.T).toarray()
    n = len(window)
    H = np.zeros((n, n))
    elems = window.elements
    for i, j, _, _ in tube_pair_list(window, h.tube_radius):
        H[i, j] = h.value(elems[i], elems[j])
        H[j, i] = h.value(elems[j], elems[i])
    return H


def check_symmetric(M: np.ndarray, tol: float = 1e-12) -> None:
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > tol:
        raise DomainError(f"kernel is not symmetric: max |M - M^T| = {asym!r}")


def psd_sqrt(M: np.ndarray, psd_tol: float | None = None, labels=None) -> tuple[np.ndarray, float]:
    """Symmetric PSD square root; eigenvalues in [-psd_tol, 0) are clipped."""
    psd_tol = DEFAULTS.psd_tol if psd_tol is None else psd_tol
    w, V = np.linalg.eigh(M)
    k = int(np.argmin(w))
    lam = float(w[k])
    if lam < -psd_tol:
        v = V[:, k]
        witness = {labels[i] if labels else i: float(v[i]) for i in np.flatnonzero(np.abs(v) > 1e-14)}
        raise NotPositiveTypeError(f"kernel is not of positive type: eigenvalue {lam!r}", lam, witness)
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return root, lam


# entries below this fraction of the largest are floating noise from eigh
_CHOP = 1e-13


def coefficient_factorize(
    h: TubeKernel, window_out: Ball, window_in: Ball, psd_tol: float | None = None
) -> Factorization:
    """Write a positive-type kernel as h(s, t) = <xi_s, xi_t> on window_in.

    xi_s is column s of the square root of the Gram matrix over window_out.
    Rows are reported for window_in only, which must sit inside window_out
    with a margin of h's tube radius plus one.
    """
    group = h.group
    if window_out.group != group or window_in.group != group:
        raise DomainError("windows and kernel live on different groups")
    margin = window_in.radius + h.tube_radius + 1
    if window_out.radius < margin:
        raise UnderCoverageError(
            f"outer window B({window_out.radius}) needs radius >= {margin} around B({window_in.radius})"
        )
    H = gram_matrix(h, window_out)
    check_symmetric(H)
    labels = [group.format(s) for s in window_out.elements]
    root, lam = psd_sqrt(H, psd_tol, labels)
    inner = [window_out.position(s) for s in window_in.elements]
    cols = root[:, inner]
    cut = _CHOP * max(float(np.abs(cols).max()), 1.0) if cols.size else 0.0
    elems = window_out.elements
    rows = {}
    for c, s in enumerate(window_in.elements):
        col = cols[:, c]
        rows[s] = {elems[i]: float(col[i]) for i in np.flatnonzero(np.abs(col) > cut)}
    diag = np.diag(H)[inner]
    normalized = bool(np.all(np.abs(diag - 1) <= DEFAULTS.norm_tol))
    xi = TubeKernel.from_rows(group, "l2", rows, normalized=normalized, label=f"factor({h.label})")
    rebuilt = cols.T @ cols
    residual = float(np.max(np.abs(rebuilt - H[np.ix_(inner, inner)]))) if inner else 0.0
    return Factorization(xi, lam, residual, window_out.radius, window_in.radius)


def coefficient_residual(xi: TubeKernel, h: TubeKernel, window: Ball) -> float:
    """max |<xi_s, xi_t> - h(s, t)| over all pairs of the window."""
    coeff = l2_to_coefficient(xi, domain=window.elements)
    worst = 0.0
    for s in window:
        for t in window:
            worst = max(worst, abs(coeff.value(s, t) - h.value(s, t)))
    return worst


__all__ = [
    "BumpFunction",
    "BoundChainReport",
    "Factorization",
    "bound_chain",
    "coefficient_factorize",
    "coefficient_residual",
    "check_symmetric",
    "density_normalize",
    "density_to_l2",
    "gram_matrix",
    "l2_to_coefficient",
    "l2_to_density",
    "mean_to_density",
    "psd_sqrt",
]
