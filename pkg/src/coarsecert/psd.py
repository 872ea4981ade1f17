"""Finite positive-type checks for kernels on G x G and on X x G."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .boundary import BoundaryPoint, boundary_act
from .config import DEFAULTS
from .errors import DomainError
from .groups import FreeGroup, Group
from .kernels import TubeKernel, _left_div, _mul
from .measures import dot, translate_vec
from .transforms import check_symmetric


@dataclass
class PsdReport:
    min_eigenvalue: float
    verdict: str
    sample: list
    eigenvalues: list
    witness: list | None = None

    @property
    def positive(self) -> bool:
        return self.verdict == "positive-type"

    def to_json(self) -> dict:
        out = {"min_eigenvalue": self.min_eigenvalue, "verdict": self.verdict, "sample": self.sample}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def psd_check_matrix(M: np.ndarray, sample: list, psd_tol: float | None = None) -> PsdReport:
    """Full eigen-analysis of a real symmetric matrix."""
    psd_tol = DEFAULTS.psd_tol if psd_tol is None else psd_tol
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise DomainError(f"need a nonempty square matrix, got shape {M.shape}")
    check_symmetric(M)
    w, V = np.linalg.eigh(M)
    lam = float(w[0])
    if lam >= -psd_tol:
        return PsdReport(lam, "positive-type", sample, w.tolist())
    return PsdReport(lam, "indefinite", sample, w.tolist(), witness=V[:, 0].tolist())


def _check_sample(group: Group, sample: Sequence) -> list:
    sample = list(sample)
    if not sample:
        raise DomainError("sample must be nonempty")
    if len(set(sample)) != len(sample):
        raise DomainError("sample elements must be distinct")
    for s in sample:
        group.check(s)
    return sample


def group_matrix(h, sample: Sequence) -> np.ndarray:
    """M[i][j] = h(s_i, s_j); ``h`` is a TubeKernel or a callable."""
    value = h.value if isinstance(h, TubeKernel) else h
    n = len(sample)
    M = np.empty((n, n))
    for i, s in enumerate(sample):
        for j, t in enumerate(sample):
            M[i, j] = value(s, t)
    return M


def psd_check_group(h: TubeKernel, sample: Sequence, psd_tol: float | None = None) -> PsdReport:
    sample = _check_sample(h.group, sample)
    return psd_check_matrix(group_matrix(h, sample), [h.group.element_to_json(s) for s in sample], psd_tol)


@dataclass(frozen=True)
class ActionKernel:
    """Kernel k(x, s) on X x G for a left action ``act(s, x) = s.x``."""

    group: Group
    fn: Callable
    act: Callable
    label: str = ""

    def value(self, x, s) -> float:
        return self.fn(x, s)

    def __call__(self, x, s) -> float:
        return self.fn(x, s)


def action_matrix(k: ActionKernel, x, sample: Sequence) -> np.ndarray:
    """M[i][j] = k(t_i^-1 . x, t_i^-1 t_j)."""
    g = k.group
    n = len(sample)
    M = np.empty((n, n))
    for i, ti in enumerate(sample):
        ti_inv = g.inv(ti)
        y = k.act(ti_inv, x)
        for j, tj in enumerate(sample):
            M[i, j] = k.fn(y, _left_div(g, ti, tj))
    return M


def psd_check_action(k: ActionKernel, x, sample: Sequence, psd_tol: float | None = None) -> PsdReport:
    sample = _check_sample(k.group, sample)
    return psd_check_matrix(action_matrix(k, x, sample), [k.group.element_to_json(t) for t in sample], psd_tol)


def boundary_action(group: FreeGroup) -> Callable:
    def act(s, omega: BoundaryPoint) -> BoundaryPoint:
        return boundary_act(group, s, omega)

    return act


def action_coefficient(group: Group, field: Callable, act: Callable, label: str = "") -> ActionKernel:
    """(xi, xi)(x, s) = sum_t xi(x, t) xi(s^-1.x, s^-1 t).

    ``field(x)`` returns the sparse vector t -> xi(x, t); it is memoized.
    """
    cache: dict = {}

    def xi(x) -> Mapping:
        v = cache.get(x)
        if v is None:
            v = cache[x] = field(x)
        return v

    def fn(x, s) -> float:
        # xi(s^-1.x, s^-1 t) as a function of t is s . xi(s^-1.x)
        moved = translate_vec(group, s, xi(act(group.inv(s), x)))
        return float(dot(xi(x), moved))

    return ActionKernel(group, fn, act, label or "coefficient")


def kernel_to_action(h: TubeKernel) -> ActionKernel:
    """G acting on itself: k(x, t) = h(x^-1, x^-1 t)."""
    g = h.group

    def fn(x, t) -> float:
        xi = g.inv(x)
        return h.value(xi, _mul(g, xi, t))

    return ActionKernel(g, fn, lambda s, x: _mul(g, s, x), f"action({h.label})")


def perturbed(k: ActionKernel, x, s, delta: float) -> ActionKernel:
    """k + delta at the single point (x, s) and its mirror (s^-1.x, s^-1)."""
    g = k.group
    mirror = (k.act(g.inv(s), x), g.inv(s))

    def fn(y, t) -> float:
        v = k.fn(y, t)
        if (y, t) == (x, s) or (y, t) == mirror:
            v += delta
        return v

    return ActionKernel(g, fn, k.act, f"{k.label}+perturbation")
