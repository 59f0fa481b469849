import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expweb.tower import TowerBracket, TowerReal, add_const, exp_of, scale

positive = st.floats(1e-300, 1e300, allow_nan=False, allow_infinity=False)
any_float = st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)


class TestCanonicalForm:
    def test_normalize_lifts_large_tops(self):
        t = TowerReal.normalized(0, 1e6)
        assert t.height == 2
        assert t.top == pytest.approx(math.log(math.log(1e6)))

    @given(positive)
    def test_normalize_idempotent(self, x):
        t = TowerReal.from_float(x)
        assert t.is_canonical
        assert t.normalize() == t
        assert (t.normalize().height, t.normalize().top) == (t.height, t.top)

    def test_non_finite_top(self):
        with pytest.raises(ValueError):
            TowerReal(0, math.inf)

    def test_negative_height(self):
        with pytest.raises(ValueError):
            TowerReal(-1, 1.0)

    @given(positive)
    def test_round_trip_to_float(self, x):
        assert TowerReal.from_float(x).to_float() == pytest.approx(x, rel=1e-12)

    def test_huge_to_float_is_inf(self):
        assert TowerReal(3, 2.0).to_float() == math.inf

    def test_json_round_trip(self):
        t = TowerReal.from_log(1e5)
        assert TowerReal.from_json(t.to_json()) == t


class TestOrdering:
    @given(any_float, any_float)
    def test_agrees_with_floats(self, a, b):
        ta, tb = TowerReal.from_float(a), TowerReal.from_float(b)
        assert (ta < tb) == (a < b)
        assert (ta == tb) == (a == b)

    def test_height_dominates(self):
        assert TowerReal(2, 1.01) > TowerReal(1, 2.7)

    def test_log_then_exp(self):
        t = TowerReal.from_log(5000.0)
        assert t.log().exp() == t
        assert t.log() == TowerReal.from_float(5000.0)


class TestOutwardRounding:
    @given(st.floats(-1e6, 1e6), st.floats(-50, 50))
    def test_add_const_brackets_exact_sum(self, x, a):
        t = TowerReal.from_float(x)
        lo = add_const(t, a, upward=False).to_float("down")
        hi = add_const(t, a, upward=True).to_float("up")
        exact = mpmath.mpf(x) + mpmath.mpf(a)
        assert lo <= exact <= hi

    @given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e3))
    def test_scale_brackets_exact_product(self, x, c):
        t = TowerReal.from_float(x)
        lo = scale(t, c, upward=False).to_float("down")
        hi = scale(t, c, upward=True).to_float("up")
        exact = mpmath.mpf(x) * mpmath.mpf(c)
        assert lo <= exact <= hi

    def test_add_const_beyond_float_range_is_conservative(self):
        t = TowerReal.from_log(1e5)
        assert add_const(t, 3.0, upward=False) == t
        assert add_const(t, 3.0, upward=True) > t
        assert add_const(t, -3.0, upward=True) == t
        assert add_const(t, -3.0, upward=False) < t

    def test_scale_on_huge_tower(self):
        t = TowerReal.from_log(1e5)
        up = scale(t, 2.0, upward=True)
        down = scale(t, 2.0, upward=False)
        assert down <= up
        assert up > t

    def test_exp_of_rounds_outward(self):
        t = TowerReal.from_float(2.0)
        assert exp_of(t, upward=False) <= exp_of(t, upward=True)

    def test_scale_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            scale(TowerReal.from_float(2.0), 0.0, upward=True)


class TestBracket:
    def test_inverted_bracket_rejected(self):
        with pytest.raises(ValueError):
            TowerBracket(TowerReal.from_float(3.0), TowerReal.from_float(2.0))

    def test_certain_comparisons(self):
        a = TowerBracket(TowerReal.from_float(1.0), TowerReal.from_float(2.0))
        b = TowerBracket(TowerReal.from_float(1.5), TowerReal.from_float(3.0))
        c = TowerBracket.from_float(5.0)
        assert not a.certainly_ge(b) and not a.certainly_lt(b)
        assert a.certainly_lt(c)
        assert c.certainly_ge(a)

    def test_point_bracket(self):
        assert TowerBracket.from_log(12.0).is_point
