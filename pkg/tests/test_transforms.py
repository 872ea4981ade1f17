import math
import random

import numpy as np
import pytest

from coarsecert.certificates import deficiency_l1, folner_certificate, free_ray_certificate
from coarsecert.errors import DomainError, NotPositiveTypeError, UnderCoverageError
from coarsecert.groups import ball_enumerate
from coarsecert.kernels import TubeKernel
from coarsecert.measures import ProbMeasure, l1_distance, sq_l2_distance
from coarsecert.transforms import (
    BumpFunction,
    bound_chain,
    coefficient_factorize,
    coefficient_residual,
    density_normalize,
    density_to_l2,
    gram_matrix,
    l2_to_coefficient,
    l2_to_density,
    mean_to_density,
    psd_sqrt,
)
from helpers import random_l2_field


class TestBump:
    def test_invariants(self, F2):
        with pytest.raises(DomainError):
            BumpFunction(F2, {"": 0.5})
        with pytest.raises(DomainError):
            BumpFunction(F2, {"": 1.5, "a": -0.5})
        with pytest.raises(DomainError):
            BumpFunction(F2, {})
        assert BumpFunction.uniform(F2, ball_enumerate(F2, 1)).radius == 1


class TestMeanToDensity:
    def test_delta_bump_is_identity(self, F2):
        cert = free_ray_certificate(F2, 3)
        dens = mean_to_density(cert, BumpFunction.delta(F2))
        for s in ball_enumerate(F2, 2):
            assert dens.row(s) == cert.row(s)

    def test_point_mass_example(self, F2):
        dens = mean_to_density({"": ProbMeasure.point(F2, "")}, BumpFunction.uniform(F2, ["", "a"]))
        assert dens.row("") == {"": 0.5, "a": 0.5}
        assert dens.tube_radius == 1

    def test_convolution_formula(self, F2):
        bump = BumpFunction(F2, {"": 0.5, "b": 0.3, "A": 0.2})
        cert = free_ray_certificate(F2, 2)
        dens = mean_to_density(cert, bump)
        assert dens.tube_radius == 3
        for s in ball_enumerate(F2, 2):
            m = cert.row(s)
            want = {}
            for u in ball_enumerate(F2, 5):
                v = sum(m.get(t, 0) * bump.at(F2.mul(F2.inv(t), u)) for t in m)
                if v:
                    want[u] = v
            assert dens.row(s) == pytest.approx(want)

    def test_deficiency_does_not_grow_on_perturbed_rows(self, Z1):
        rng = random.Random(11)
        cert = folner_certificate(Z1, 4)
        window = ball_enumerate(Z1, 6)
        means = {}
        for s in window:
            w = {u: v * (1 + 0.5 * rng.random()) for u, v in cert.row(s).items()}
            tot = sum(w.values())
            means[s] = ProbMeasure(Z1, {u: v / tot for u, v in w.items()})
        bump = BumpFunction.uniform(Z1, ball_enumerate(Z1, 2))
        dens = mean_to_density(means, bump)
        assert dens.tube_radius == 6
        for F in (1, 2, 3):
            before = max(
                l1_distance(means[s].masses, means[t].masses)
                for s in window for t in window if Z1.distance(s, t) <= F
            )
            after = max(
                l1_distance(dens.row(s), dens.row(t))
                for s in window for t in window if Z1.distance(s, t) <= F
            )
            assert after <= before + 1e-15

    def test_invariant_stays_invariant(self, Z1):
        dens = mean_to_density(folner_certificate(Z1, 3), BumpFunction.uniform(Z1, ball_enumerate(Z1, 1)))
        assert dens.is_invariant and dens.kind == "l1"
        assert density_to_l2(dens).is_invariant


class TestNormalize:
    def test_large_n_keeps_row(self, F2):
        cert = free_ray_certificate(F2, 4)
        bump = BumpFunction.uniform(F2, ball_enumerate(F2, 1))
        out = density_normalize(cert, bump, 10**6)
        for s in ["", "ab"]:
            r, o = cert.row(s), out.row(s)
            assert l1_distance(r, o) <= 2e-6
            assert math.fsum(o.values()) == pytest.approx(1, abs=1e-12)

    def test_zero_row_gives_bump(self, F2):
        bump = BumpFunction(F2, {"": 0.5, "a": 0.25, "b": 0.25})
        raw = TubeKernel(F2, "raw", 0, base={})
        out = density_normalize(raw, bump, 7)
        assert out.row("") == bump.values

    def test_formula(self, F2):
        bump = BumpFunction(F2, {"": 0.5, "a": 0.5})
        raw = TubeKernel.from_rows(F2, "raw", {"": {"": 0.2, "b": 0.3}}, tube_radius=1, normalized=False)
        out = density_normalize(raw, bump, 1)
        assert out.row("") == pytest.approx({"": 0.7 / 1.5, "a": 0.5 / 1.5, "b": 0.3 / 1.5})

    def test_bump_follows_base_point(self, F2):
        bump = BumpFunction(F2, {"a": 1.0})
        raw = TubeKernel(F2, "raw", 1, row_fn=lambda s: {}, normalized=False)
        assert density_normalize(raw, bump, 3).row("b") == {"ba": 1.0}

    def test_negative_rejected(self, F2):
        raw = TubeKernel.from_rows(F2, "raw", {"": {"": -0.1}}, normalized=False)
        with pytest.raises(DomainError):
            density_normalize(raw, BumpFunction.delta(F2), 2).row("")


class TestEntrywise:
    def test_sqrt_of_uniform(self, F2):
        xi = density_to_l2(free_ray_certificate(F2, 9))
        assert all(v == pytest.approx(1 / 3, abs=1e-16) for v in xi.row("aB").values())
        assert xi.kind == "l2"

    def test_scalar_star_star(self):
        assert (math.sqrt(0.81) - math.sqrt(0.49)) ** 2 == pytest.approx(0.04, abs=1e-15)
        assert (math.sqrt(0.81) - math.sqrt(0.49)) ** 2 <= abs(0.81 - 0.49)

    def test_unit_norm(self, Z2):
        xi = density_to_l2(folner_certificate(Z2, 3))
        assert math.fsum(v * v for v in xi.row((1, 1)).values()) == pytest.approx(1, abs=1e-14)

    def test_negative_entry(self, F2):
        k = TubeKernel.from_rows(F2, "raw", {"": {"": -0.5, "a": 1.0}}, normalized=False)
        with pytest.raises(DomainError):
            density_to_l2(k).row("")

    def test_square(self, F2):
        xi = density_to_l2(free_ray_certificate(F2, 4))
        back = l2_to_density(xi)
        assert back.row("b") == pytest.approx({u: 0.25 for u in back.row("b")})

    def test_round_trip_density(self, F2, Z1):
        for cert in (free_ray_certificate(F2, 5), folner_certificate(Z1, 6)):
            back = l2_to_density(density_to_l2(cert))
            for s in list(ball_enumerate(cert.group, 2)):
                r, b = cert.row(s), back.row(s)
                assert set(r) == set(b)
                assert max(abs(r[u] - b[u]) for u in r) <= 1e-14

    def test_cauchy_schwarz_on_random_rows(self, F2):
        rng = random.Random(5)
        domain = list(ball_enumerate(F2, 2))
        xi = random_l2_field(F2, 2, rng, domain)
        dens = l2_to_density(xi)
        for _ in range(100):
            s, t = rng.choice(domain), rng.choice(domain)
            lhs = l1_distance(dens.row(s), dens.row(t))
            assert lhs <= 2 * math.sqrt(sq_l2_distance(xi.row(s), xi.row(t))) + 1e-12

    def test_disjoint_points(self, F2):
        point = TubeKernel(F2, "l2", 0, base={"": 1.0})
        dens = l2_to_density(point)
        assert l1_distance(dens.row(""), dens.row("a")) == 2 <= 2 * math.sqrt(2)


class TestCoefficient:
    def test_point_masses(self, F2):
        h = l2_to_coefficient(TubeKernel(F2, "l2", 0, base={"": 1.0}))
        for s in ball_enumerate(F2, 1):
            for t in ball_enumerate(F2, 1):
                assert h.value(s, t) == (1.0 if s == t else 0.0)

    def test_identical_rows(self, F2):
        xi = TubeKernel(F2, "l2", 2, row_fn=lambda s: {"": 0.6, "a": 0.8}, check_support=False)
        h = l2_to_coefficient(xi)
        assert h.value("a", "b") == pytest.approx(1.0, abs=1e-15)

    def test_folner_overlap(self, Z1):
        h = l2_to_coefficient(density_to_l2(folner_certificate(Z1, 2)))
        assert h.value((0,), (1,)) == pytest.approx(4 / 5, abs=1e-15)

    def test_polarization(self, F2):
        xi = density_to_l2(free_ray_certificate(F2, 4))
        h = l2_to_coefficient(xi)
        for s in ball_enumerate(F2, 2):
            for t in ball_enumerate(F2, 2):
                lhs = h.value(s, s) + h.value(t, t) - 2 * h.value(s, t)
                assert lhs == pytest.approx(sq_l2_distance(xi.row(s), xi.row(t)), abs=1e-12)


class TestFactorize:
    def test_delta_kernel(self, F2):
        h = TubeKernel(F2, "positive-type", 0, base={"": 1.0}, normalized=False)
        fac = coefficient_factorize(h, ball_enumerate(F2, 2), ball_enumerate(F2, 1))
        assert fac.residual == 0
        for s in ball_enumerate(F2, 1):
            assert fac.kernel.row(s) == {s: 1.0}

    def test_round_trip_random(self, F2):
        rng = random.Random(2)
        window_out = ball_enumerate(F2, 5)
        window_in = ball_enumerate(F2, 2)
        xi0 = random_l2_field(F2, 1, rng, list(ball_enumerate(F2, 5)))
        h = l2_to_coefficient(xi0)
        fac = coefficient_factorize(h, window_out, window_in)
        assert fac.residual <= 1e-8
        assert coefficient_residual(fac.kernel, h, window_in) <= 1e-8

    def test_generic_gram_path(self, F2):
        rng = random.Random(4)
        xi0 = random_l2_field(F2, 1, rng, list(ball_enumerate(F2, 4)))
        h = l2_to_coefficient(xi0)
        rows = {s: h.row(s) for s in ball_enumerate(F2, 4)}
        table = TubeKernel.from_rows(F2, "positive-type", rows, tube_radius=2, normalized=False)
        w = ball_enumerate(F2, 4)
        assert np.allclose(gram_matrix(table, w), gram_matrix(h, w), atol=1e-15)
        fac = coefficient_factorize(table, w, ball_enumerate(F2, 1))
        assert fac.residual <= 1e-8

    def test_indefinite_rejected(self, Z1):
        v = np.ones(3) / math.sqrt(3)
        pts = [(-1,), (0,), (1,)]
        bad = np.eye(3) - 1.1 * np.outer(v, v)
        window = ball_enumerate(Z1, 4)
        rows = {s: {s: 1.0} for s in window}
        for i, s in enumerate(pts):
            rows[s] = {t: float(bad[i, j]) for j, t in enumerate(pts)}
        h = TubeKernel.from_rows(Z1, "positive-type", rows, normalized=False)
        with pytest.raises(NotPositiveTypeError) as info:
            coefficient_factorize(h, window, ball_enumerate(Z1, 1))
        assert info.value.eigenvalue == pytest.approx(-0.1, abs=1e-12)
        H = gram_matrix(h, window)
        idx = [window.position(Z1.parse(k)) for k in info.value.witness]
        w = np.zeros(len(window))
        w[idx] = list(info.value.witness.values())
        assert w @ H @ w < 0

    def test_three_point_matrix(self):
        v = np.ones(3) / math.sqrt(3)
        with pytest.raises(NotPositiveTypeError) as info:
            psd_sqrt(np.eye(3) - 1.1 * np.outer(v, v))
        assert info.value.eigenvalue == pytest.approx(-0.1, abs=1e-12)
        w = np.array([info.value.witness[i] for i in range(3)])
        assert abs(abs(w @ v) - 1) < 1e-12

    def test_clipping_within_tolerance(self):
        M = np.diag([1.0, -1e-12])
        root, lam = psd_sqrt(M)
        assert lam == -1e-12 and root[1, 1] == 0

    def test_margin(self, F2):
        h = l2_to_coefficient(density_to_l2(free_ray_certificate(F2, 1)))
        with pytest.raises(UnderCoverageError):
            coefficient_factorize(h, ball_enumerate(F2, 3), ball_enumerate(F2, 1))

    def test_asymmetric(self, F2):
        rows = {s: {s: 1.0} for s in ball_enumerate(F2, 3)}
        rows[""]["a"] = 0.3
        h = TubeKernel.from_rows(F2, "positive-type", rows, normalized=False)
        with pytest.raises(DomainError):
            coefficient_factorize(h, ball_enumerate(F2, 3), ball_enumerate(F2, 1))


class TestBoundChain:
    def test_lattice_and_free(self, Z1, F2):
        for cert, window in [(folner_certificate(Z1, 5), ball_enumerate(Z1, 8)), (free_ray_certificate(F2, 5), ball_enumerate(F2, 3))]:
            bump = BumpFunction.uniform(cert.group, ball_enumerate(cert.group, 1))
            rep = bound_chain(cert, bump, 2, window)
            assert rep.ok, rep.to_json()
            assert rep.pairs > 0

    def test_chain_vs_certificate_deficiency(self, Z1):
        cert = folner_certificate(Z1, 6)
        window = ball_enumerate(Z1, 4)
        eps = deficiency_l1(cert, 2, window).sup
        dens = mean_to_density(cert, BumpFunction.uniform(Z1, ball_enumerate(Z1, 1)))
        assert deficiency_l1(dens, 2, window).sup <= eps + 1e-15

    def test_under_coverage(self, Z1):
        with pytest.raises(UnderCoverageError):
            bound_chain(folner_certificate(Z1, 2), BumpFunction.delta(Z1), 3, ball_enumerate(Z1, 1))
