import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expweb.errors import NuTooSmall
from expweb.expsum import ExpSum
from expweb.geometry import (
    IN_POLYGON,
    ON_BOUNDARY,
    ClosedPolyline,
    RegionDecomposition,
    boundary_distance,
    cut_line,
    gamma_line,
    in_component,
    in_strip,
    locate,
    polygon,
    sample_boundary,
    truncated_polygon,
)


def dec_for(n, nu=10.0, tau=5.0):
    return RegionDecomposition(ExpSum.equal(n), nu, tau)


class TestPolygon:
    @pytest.mark.parametrize("n", [3, 4, 5, 7])
    def test_sides_at_distance_nu(self, n):
        dec = dec_for(n, nu=13.5)
        for p in range(n):
            a, b = dec.side_segment(p)
            # distance from 0 to the line through a and b
            d = abs((np.conj(b - a) * (0 - a)).imag) / abs(b - a)
            assert d == pytest.approx(13.5, rel=1e-9)

    def test_pentagon_vertices(self):
        dec = dec_for(5, nu=4.0)
        for k in range(5):
            expected = 4.0 / math.cos(math.pi / 5) * cmath.exp((2 * k + 1) * 1j * math.pi / 5)
            assert abs(dec.vertex(k) - expected) < 1e-12

    def test_vertex_push_lands_in_strip(self):
        dec = dec_for(5, nu=10.0, tau=2.0)
        for k in range(5):
            loc = locate(dec, dec.vertex(k) * 1.0001)
            assert loc.kind == "strip"
            assert loc.index == (-k) % 5

    def test_polygon_signed_area_positive(self):
        poly = polygon(dec_for(6))
        assert poly.signed_area > 0
        assert poly.is_simple()


class TestLocate:
    def test_triangle_positive_axis(self):
        assert locate(dec_for(3), 15) == in_component(0)

    def test_origin(self):
        assert locate(dec_for(3), 0) == IN_POLYGON

    def test_on_side(self):
        assert locate(dec_for(4, nu=7.0, tau=1.0), 7 + 0.5j) == ON_BOUNDARY

    def test_strip_interior(self):
        dec = dec_for(4, nu=7.0, tau=1.0)
        v = dec.vertex(0)
        assert locate(dec, 3 * v) == in_strip(0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(3, 7), st.floats(-60, 60), st.floats(-60, 60))
    def test_rotation_moves_sector_index(self, n, x, y):
        dec = dec_for(n, nu=10.0, tau=3.0)
        z = complex(x, y)
        a = locate(dec, z)
        b = locate(dec, z * cmath.exp(-2j * math.pi / n))
        if a.kind == "component" and b.kind != "boundary":
            assert b == in_component((a.index + 1) % n)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(3, 6), st.floats(-40, 40), st.floats(-40, 40))
    def test_exactly_one_region(self, n, x, y):
        dec = dec_for(n)
        z = complex(x, y)
        loc = locate(dec, z)
        if loc == ON_BOUNDARY:
            return
        inside = dec.polygon_excess(np.array([z]))[0] < 0
        w = dec.strip_coords(np.array([z]))[0]
        strips = [k for k in range(n) if w[k].real > 0 and abs(w[k].imag) < dec.tau]
        if inside:
            assert loc == IN_POLYGON
        elif strips:
            assert loc.kind == "strip" and loc.index in strips
        else:
            assert loc.kind == "component"


class TestBoundaryDistance:
    def test_triangle_closed_form(self):
        dec = dec_for(3)
        z = 15.0
        # nearest strip edges: strips 0 and 2 have axes at +-60 degrees
        edges = []
        for k in (0, 2):
            w = z * np.conj(dec.strip_axis(k))
            edges.append(abs(abs(w.imag) - dec.tau))
        assert boundary_distance(dec, z) == pytest.approx(min(15 - 10, *edges), abs=1e-12)

    def test_zero_on_side(self):
        assert boundary_distance(dec_for(4, nu=7.0, tau=1.0), 7 + 0.3j) == pytest.approx(0, abs=1e-12)

    def test_lipschitz(self):
        dec = dec_for(5, nu=8.0, tau=2.0)
        rng = np.random.default_rng(3)
        z1 = rng.uniform(-40, 40, 500) + 1j * rng.uniform(-40, 40, 500)
        z2 = z1 + rng.normal(0, 1, 500) + 1j * rng.normal(0, 1, 500)
        d1 = dec.boundary_distance_many(z1)
        d2 = dec.boundary_distance_many(z2)
        assert np.all(np.abs(d1 - d2) <= np.abs(z1 - z2) + 1e-12)


class TestGammaLine:
    def test_square_side(self):
        dec = dec_for(4, nu=7.0)
        line = gamma_line(dec, 0)
        assert abs(line.point - 7) < 1e-12
        assert abs(abs(line.direction.imag) - 1) < 1e-12
        for z in (3 + 2j, -1 - 9j, 20):
            assert line.signed_distance(z) == pytest.approx(z.real - 7 if isinstance(z, complex) else z - 7)

    @pytest.mark.parametrize("n", [3, 5, 8])
    def test_adjacent_sides_angle(self, n):
        dec = dec_for(n)
        d0 = gamma_line(dec, 0).direction
        d1 = gamma_line(dec, 1).direction
        turn = abs(cmath.phase(d1 / d0))
        assert math.pi - turn == pytest.approx(math.pi - 2 * math.pi / n, abs=1e-12)


class TestCutLines:
    @pytest.mark.parametrize("n", [3, 4, 5])
    @pytest.mark.parametrize("m", [-2, 0, 3])
    def test_slope_formula(self, n, m):
        f = ExpSum(tuple(complex(1 + 0.3 * k, 0.2 * k) for k in range(n)))
        line = cut_line(f, 0, m)
        c0 = cmath.log(f.coeffs[n - 1] / f.coeffs[0])
        s, cot = math.sin(math.pi / n), 1 / math.tan(math.pi / n)
        for t in (-5.0, 0.0, 7.5):
            z = line.point + t * line.direction
            assert z.imag == pytest.approx(-cot * z.real + (c0.imag - 2 * m * math.pi) / (2 * s * s), abs=1e-9)

    def test_equal_coefficients_m0_through_origin(self):
        f = ExpSum.equal(5)
        line = cut_line(f, 0, 0)
        assert abs(line.signed_distance(0)) < 1e-12

    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_pair_adds_without_cancellation(self, j):
        f = ExpSum((1.0, 2j, -0.5 + 0.5j))
        line = cut_line(f, j, 1)
        p, q = (-j) % 3, (-(j + 1)) % 3
        for t in np.linspace(-20, 20, 100):
            z = line.point + t * line.direction
            tp = f.coeffs[p] * cmath.exp(f.omega_powers[p] * z)
            tq = f.coeffs[q] * cmath.exp(f.omega_powers[q] * z)
            assert abs(tp + tq) >= max(abs(tp), abs(tq)) * (1 - 1e-9)

    def test_order_two_rejected(self):
        with pytest.raises(ValueError):
            cut_line(ExpSum.equal(2), 0, 0)


class TestTruncatedPolygon:
    def test_g_shape_and_modulus_band(self, g):
        tau = 4.7407
        poly = truncated_polygon(g, 20.0, tau)
        assert len(poly) == 8
        assert poly.is_simple()
        pts = sample_boundary(poly, 4000)
        mods = np.abs(pts)
        assert mods.min() >= 20 * (1 - 1e-12)
        assert mods.max() <= 40 * (1 + 1e-12)

    def test_chords_clear_the_strip(self, g):
        tau = 4.7407
        poly = truncated_polygon(g, 20.0, tau)
        chord = abs(poly.vertices[1] - poly.vertices[0])
        assert chord >= 2 * tau * math.tan(math.pi / 4) * math.cos(math.pi / 4)
        assert chord >= 2 * tau - 1e-9

    def test_contains_polygon_center(self, g):
        poly = truncated_polygon(g, 20.0, 4.7407)
        assert poly.contains(np.array([0j]))[0]

    def test_too_small_nu(self):
        with pytest.raises(NuTooSmall):
            truncated_polygon(ExpSum.equal(5), 3.0, 5.0)


class TestSampleBoundary:
    def square(self):
        return ClosedPolyline((0, 1, 1 + 1j, 1j))

    def test_square_four_samples_hit_vertices(self):
        pts = sample_boundary(self.square(), 4)
        assert np.allclose(pts[:4], [0, 1, 1 + 1j, 1j], atol=1e-12)

    def test_samples_on_boundary_and_evenly_spaced(self):
        poly = truncated_polygon(ExpSum.equal(3), 30.0, 3.0)
        pts = sample_boundary(poly, 997)
        assert np.all(poly.distance_to(pts) < 1e-12 * 60)
        gaps = np.abs(np.diff(pts))
        # gaps across a corner are chords, so only bounded by the arc step
        assert np.all(gaps <= poly.perimeter / 997 + 1e-12)
        assert np.median(gaps) == pytest.approx(poly.perimeter / 997, abs=1e-12)

    def test_json_round_trip(self):
        poly = truncated_polygon(ExpSum.equal(3), 30.0, 3.0)
        back = ClosedPolyline.from_json(poly.to_json(), "P'")
        assert back.vertices == poly.vertices
