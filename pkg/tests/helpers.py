import math

from coarsecert.groups import ball_enumerate
from coarsecert.kernels import TubeKernel


def random_l2_field(group, radius, rng, domain, density=0.6):
    """Row-table l2 kernel with random unit rows supported in s.B(radius)."""
    ball = list(ball_enumerate(group, radius))
    rows = {}
    for s in domain:
        vals = {group.mul(s, g): rng.gauss(0, 1) for g in ball if rng.random() < density}
        if not vals:
            vals = {s: 1.0}
        norm = math.sqrt(sum(v * v for v in vals.values()))
        rows[s] = {u: v / norm for u, v in vals.items()}
    return TubeKernel.from_rows(group, "l2", rows, tube_radius=radius)


def random_invariant_field(group, radius, rng, density=0.6):
    """Invariant l2 kernel: one random unit vector on B(radius), translated."""
    ball = list(ball_enumerate(group, radius))
    vals = {g: rng.gauss(0, 1) for g in ball if rng.random() < density} or {ball[0]: 1.0}
    norm = math.sqrt(sum(v * v for v in vals.values()))
    return TubeKernel(group, "l2", radius, base={g: v / norm for g, v in vals.items()})
