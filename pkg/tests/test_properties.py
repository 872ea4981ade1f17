import math
import random

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from coarsecert.boundary import boundary_act, boundary_point
from coarsecert.certificates import free_ray_certificate
from coarsecert.groups import FreeGroup, LatticeGroup, ball_enumerate
from coarsecert.measures import ProbMeasure, l1_distance, translate, tv_distance
from coarsecert.psd import psd_check_group
from coarsecert.transforms import l2_to_coefficient, l2_to_density
from helpers import random_invariant_field

F2 = FreeGroup(2)
Z2 = LatticeGroup(2)

words = st.text(alphabet="aAbB", max_size=8).map(F2.reduce)
points = st.tuples(st.integers(-20, 20), st.integers(-20, 20))
cycles = st.text(alphabet="aAbB", min_size=1, max_size=4).map(F2.reduce).filter(
    lambda w: w and w[0] != F2.inv(w[-1])
)


@given(words, words, words)
def test_free_group_axioms(g, h, k):
    assert F2.mul(F2.mul(g, h), k) == F2.mul(g, F2.mul(h, k))
    assert F2.mul(g, F2.inv(g)) == F2.identity
    assert F2.length(F2.mul(g, h)) <= F2.length(g) + F2.length(h)


@given(words, words, words)
def test_free_metric_left_invariant(g, s, t):
    assert F2.distance(F2.mul(g, s), F2.mul(g, t)) == F2.distance(s, t)
    assert F2.distance(s, t) == F2.distance(t, s)


@given(points, points, points)
def test_lattice_metric(g, s, t):
    assert Z2.distance(Z2.mul(g, s), Z2.mul(g, t)) == Z2.distance(s, t)
    assert Z2.distance(s, t) == sum(abs(a - b) for a, b in zip(s, t))


@given(words, words, cycles)
def test_boundary_action_law(g, h, cycle):
    omega = boundary_point(F2, "", cycle)
    assert boundary_act(F2, F2.mul(g, h), omega) == boundary_act(F2, g, boundary_act(F2, h, omega))


@given(words, st.lists(st.tuples(words, st.floats(0.01, 1)), min_size=1, max_size=5))
def test_tv_translation_invariant(g, pairs):
    masses = {}
    for w, m in pairs:
        masses[w] = masses.get(w, 0) + m
    tot = sum(masses.values())
    mu = ProbMeasure(F2, {w: m / tot for w, m in masses.items()})
    nu = ProbMeasure.point(F2, "a")
    assert math.isclose(tv_distance(translate(g, mu), translate(g, nu)), tv_distance(mu, nu), abs_tol=1e-15)


@given(st.integers(1, 12), words, words)
def test_ray_deficiency_bounded(n, s, t):
    cert = free_ray_certificate(F2, n)
    d = F2.distance(s, t)
    assert l1_distance(cert.row(s), cert.row(t)) <= min(2, 2 * d / n) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2))
def test_coefficients_positive_type(seed, radius):
    h = l2_to_coefficient(random_invariant_field(F2, radius, random.Random(seed)))
    sample = list(ball_enumerate(F2, 2))
    assert psd_check_group(h, sample).min_eigenvalue >= -1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), words, words)
def test_square_cauchy_schwarz(seed, s, t):
    xi = random_invariant_field(F2, 2, random.Random(seed))
    dens = l2_to_density(xi)
    a, b = xi.row(s), xi.row(t)
    l2 = math.sqrt(sum((a.get(u, 0) - b.get(u, 0)) ** 2 for u in set(a) | set(b)))
    assert l1_distance(dens.row(s), dens.row(t)) <= 2 * l2 + 1e-12
    assert np.isclose(sum(dens.row(s).values()), 1)
