from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass, fields


@dataclass
class Settings:
    psd_tol: float = 1e-10
    norm_tol: float = 1e-12
    # max number of group elements a single enumeration may materialize
    element_budget: int = 4_000_000


# shared instance; modules read attributes at call time, so override() reaches them
DEFAULTS = Settings()


@contextmanager
def override(**values):
    """Temporarily change shared settings, e.g. ``override(psd_tol=1e-9)``."""
    known = {f.name for f in fields(Settings)}
    unknown = set(values) - known
    if unknown:
        raise TypeError(f"unknown settings: {sorted(unknown)}")
    saved = {k: getattr(DEFAULTS, k) for k in values}
    try:
        for k, v in values.items():
            setattr(DEFAULTS, k, v)
        yield DEFAULTS
    finally:
        for k, v in saved.items():
            setattr(DEFAULTS, k, v)


def threads() -> int:
    """Worker cap from ``COARSECERT_THREADS`` (default 1)."""
    raw = os.environ.get("COARSECERT_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)
