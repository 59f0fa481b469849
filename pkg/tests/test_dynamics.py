import math

import mpmath
import numpy as np
import pytest

from expweb.dynamics import (
    PALETTE,
    Label,
    Window,
    chain_rule_check,
    classify_A,
    classify_AR,
    classify_grid,
    classify_pixel,
    escapes_heuristically,
    iterate_orbit,
    julia_criterion,
)
from expweb.errors import MuNotExpanding, ZeroValue
from expweb.estimates import default_eps0
from expweb.expsum import ExpSum, iterate_max_modulus_levels


class TestOrbit:
    def test_e1_from_one(self, e1):
        rec = iterate_orbit(e1, 1, 3)
        assert rec.points[1] == pytest.approx(math.e)
        assert rec.points[2].real == pytest.approx(15.1543, rel=1e-5)
        assert rec.points[3].real == pytest.approx(3.8143e6, rel=1e-4)
        assert rec.overflow_depth is None

    def test_e1_overflow_continues_in_logs(self, e1):
        rec = iterate_orbit(e1, 1, 6)
        # the last float-range iterate is z_3; z_4 = e^{3.8e6} survives as a log
        assert rec.overflow_depth == 3
        assert len(rec.log_points) == 1
        assert rec.depth_reached == 4
        assert rec.log_abs(4) == pytest.approx(rec.points[3].real, rel=1e-15)

    def test_g_from_zero(self, g):
        rec = iterate_orbit(g, 0, 2)
        assert rec.points[1] == 2
        assert abs(rec.points[2] - (math.cosh(2) + math.cos(2))) < 1e-12

    def test_e1_factors_are_moduli(self, e1):
        rec = iterate_orbit(e1, 0.5 + 0.2j, 3)
        for z, fac in zip(rec.points, rec.factors):
            assert fac == pytest.approx(abs(z), rel=1e-15)

    def test_escape_heuristic(self, e1):
        assert escapes_heuristically(iterate_orbit(e1, 1, 6))
        f = ExpSum((0.1,))
        assert not escapes_heuristically(iterate_orbit(f, 0, 20))


class TestChainRule:
    @pytest.mark.parametrize("z0", [0.3 + 0.2j, 1.1 - 0.4j, -0.7 + 1.3j])
    def test_identity(self, g, z0):
        rec = iterate_orbit(g, z0, 3)
        for n in range(1, min(3, len(rec.points) - 1) + 1):
            lhs, rhs = chain_rule_check(g, rec, n)
            assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_against_high_precision_composition(self, g):
        z0 = 0.8 + 0.3j
        with mpmath.workdps(40):
            F = lambda z: mpmath.cos(mpmath.cos(z) + mpmath.cosh(z)) + mpmath.cosh(mpmath.cos(z) + mpmath.cosh(z))
            ratio = abs(mpmath.diff(F, mpmath.mpc(z0)) / F(mpmath.mpc(z0)))
        rec = iterate_orbit(g, z0, 2)
        lhs, _ = chain_rule_check(g, rec, 2)
        assert lhs == pytest.approx(float(ratio), rel=1e-9)


class TestClassifyAR:
    def test_e1_orbit_equals_max_modulus(self, e1):
        c = classify_AR(e1, 1, 1.0, 4)
        assert c.label is Label.IN_AR
        assert c.ell == 0

    def test_e1_zero_fails_at_first_step(self, e1):
        c = classify_AR(e1, 0, 1.0, 4)
        assert c.label is Label.NOT_IN_AR
        assert c.details["failed_at"] == 1

    def test_small_image_fails_immediately(self, g):
        c = classify_AR(g, 0.1j, 10.0, 3)
        assert c.label is Label.NOT_IN_AR
        assert c.details["failed_at"] == 1

    def test_perturbation_breaks_tie(self, e1):
        assert classify_AR(e1, 1 - 1e-9, 1.0, 4).label is Label.NOT_IN_AR

    def test_high_precision_agreement(self):
        # f = a e^z has M(r) = |a| e^r exactly, so depth-2 verdicts can be recomputed in mpmath
        rng = np.random.default_rng(11)
        f = ExpSum((1.3,))
        R = 1.0
        for _ in range(60):
            z0 = complex(rng.uniform(-1, 3), rng.uniform(-2, 2))
            c = classify_AR(f, z0, R, 2)
            if c.label is Label.UNDETERMINED:
                continue
            with mpmath.workdps(40):
                a = mpmath.mpf(1.3)
                z1 = a * mpmath.exp(mpmath.mpc(z0))
                z2 = a * mpmath.exp(z1)
                m1 = a * mpmath.exp(R)
                m2 = a * mpmath.exp(m1)
                truth = abs(z1) >= m1 and abs(z2) >= m2
            assert (c.label is Label.IN_AR) == truth

    def test_ar_implies_a0(self, e1):
        assert classify_AR(e1, 1, 1.0, 4).label is Label.IN_AR
        c = classify_A(e1, 1, 1.0, 1.0, 4, 0)
        assert c.label is Label.IN_A and c.ell == 0


class TestClassifyA:
    def test_e1_zero_shift_one(self, e1):
        c = classify_A(e1, 0, 1.0, 1.0, 4, 2)
        assert c.label is Label.IN_A
        assert c.ell == 1

    def test_g_deep_in_sector(self, g):
        eps = default_eps0(4)
        c = classify_A(g, 30, eps, 30.0, 3, 1)
        assert c.label is Label.IN_A
        assert c.ell <= 1

    def test_non_expanding_mu(self, g):
        with pytest.raises(MuNotExpanding):
            classify_A(g, 30, 1e-3, 30.0, 3, 1)

    def test_ell_zero_matches_AR(self):
        f = ExpSum.equal(3, 0.8)
        R = 3.0
        rng = np.random.default_rng(2)
        levels = iterate_max_modulus_levels(f, R, 3)
        pts = rng.uniform(-8, 8, 1000) + 1j * rng.uniform(-8, 8, 1000)
        for z in pts:
            ar = classify_AR(f, z, R, 3, levels=levels).label
            a = classify_A(f, z, 1.0, R, 3, 0)
            if ar is Label.IN_AR:
                assert a.label is Label.IN_A and a.ell == 0
            else:
                assert a.label is not Label.IN_A


class TestJulia:
    def test_e1_from_two(self, e1):
        c = julia_criterion(e1, 2, 2.0, 8)
        assert c.label is Label.JULIA
        assert all(x >= 2 for x in c.details["factors"])

    def test_g_deep_in_sector(self, g):
        assert julia_criterion(g, 30, 2.0, 6).label is Label.JULIA

    def test_g_critical_point(self, g):
        c = julia_criterion(g, 0, 2.0, 6)
        assert c.label is Label.UNDETERMINED
        assert c.details["first_small_factor"] == 0

    def test_without_no_mcfc_flag(self, e1):
        assert julia_criterion(e1, 2, no_mcfc=False).label is Label.JULIA_OR_MCFC

    def test_zero_of_f(self):
        f = ExpSum((1.0, -1.0))  # 2 sinh z, an exact zero at the origin
        with pytest.raises(ZeroValue):
            julia_criterion(f, 0, depth=2)

    def test_lambda_must_exceed_one(self, e1):
        with pytest.raises(ValueError):
            julia_criterion(e1, 2, 1.0)


class TestGrid:
    def test_two_by_two_pointwise(self, g):
        win = Window(-3, 3, -3, 3)
        res = classify_grid(g, win, (2, 2), R=2.0, depth=3)
        levels = iterate_max_modulus_levels(g, 2.0, 3)
        centers = win.pixel_centers(2, 2)
        for i in range(2):
            for j in range(2):
                z = complex(centers[i, j])
                assert res.labels()[i][j] is classify_pixel(g, z, 2.0, 3, levels)
                ar = classify_AR(g, z, 2.0, 3).label
                if res.labels()[i][j] is not Label.ESCAPING:
                    assert res.labels()[i][j] is ar

    def test_e1_right_column_mostly_AR(self, e1):
        # near the axis the first three iterates stay close to real; at depth 4 the
        # argument of e^{e^48} is pure rounding noise, so stop at 3
        res = classify_grid(e1, Window(0, 4, -0.01, 0.01), (16, 8), R=1.0, depth=3)
        right = [row[-1] for row in res.labels()]
        assert sum(lab is Label.IN_AR for lab in right) > len(right) / 2

    def test_ppm_and_histogram(self, g):
        res = classify_grid(g, Window(-10, 10, -10, 10), (12, 10))
        data = res.ppm_bytes()
        header = b"P6\n12 10\n255\n"
        assert data.startswith(header)
        assert len(data) == len(header) + 12 * 10 * 3
        assert sum(res.histogram().values()) == 120
        side = res.sidecar()
        assert set(side) >= {"window", "resolution", "params", "histogram"}
        assert set(side["palette"]) == {lab.value for lab in PALETTE}

    def test_reproducible_and_worker_independent(self, g):
        win = Window(-40, 40, -40, 40)
        a = classify_grid(g, win, (24, 24))
        b = classify_grid(g, win, (24, 24))
        c = classify_grid(g, win, (24, 24), workers=2)
        assert a.ppm_bytes() == b.ppm_bytes() == c.ppm_bytes()
        assert a.histogram() == c.histogram()

    def test_write(self, g, tmp_path):
        res = classify_grid(g, Window(-5, 5, -5, 5), (4, 4))
        res.write(str(tmp_path / "img.ppm"))
        assert (tmp_path / "img.ppm").read_bytes() == res.ppm_bytes()
        assert (tmp_path / "img.json").exists()
