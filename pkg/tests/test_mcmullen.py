import math

import numpy as np
import pytest

from expweb.dynamics import Label
from expweb.errors import BoxNotInSector, ParamSearchFailed
from expweb.estimates import SIGMA, default_eps0, tau_for
from expweb.expsum import ExpSum
from expweb.geometry import RegionDecomposition
from expweb.mcmullen import (
    BoxId,
    RefinementParams,
    alpha,
    area_lower_bound,
    box_image_frame,
    certify_point,
    loss_constant_from,
    make_params,
    region_clear_log,
    seed_box,
    survival_fraction,
)


@pytest.fixture(scope="module")
def params12():
    return make_params(ExpSum.cos_plus_cosh(), {"nu0": 12}, samples=2000)


def unchecked(f, nu0):
    return RefinementParams._unchecked(
        f=f, sigma=SIGMA, eta=51.0, tau=tau_for(f), epsilon0=default_eps0(f.n),
        nu0=nu0, nu_prime=nu0)


class TestParams:
    def test_g_tau(self, params12):
        assert params12.tau == pytest.approx(math.log(816) / math.sqrt(2), rel=1e-12)
        assert params12.tau == pytest.approx(4.742, abs=2e-3)

    def test_gates_recorded(self, params12):
        assert params12.checked
        assert set(params12.checks) == {"nu0_ge_nu_prime", "alpha_expands", "image_side_large", "mu_expands"}
        assert all(c["pass"] for c in params12.checks.values())

    def test_schedule_expands(self, params12):
        nu1 = params12.nu(1)
        assert nu1 == pytest.approx(0.5 * math.exp(params12.epsilon0 * 12))
        assert nu1 > 12

    def test_sigma_too_big(self, g):
        with pytest.raises(ParamSearchFailed) as err:
            make_params(g, {"sigma": 0.1}, samples=500)
        assert err.value.condition == "sigma"

    def test_eta_too_small(self, g):
        with pytest.raises(ParamSearchFailed) as err:
            make_params(g, {"eta": 40}, samples=500)
        assert err.value.condition == "eta"

    @pytest.mark.parametrize("nu0, gate", [(6, "alpha_expands"), (10, "image_side_large")])
    def test_small_nu0_rejected_by_gate(self, g, nu0, gate):
        # alpha(6) = 3.37 < 6; at 10 the image side 440 is below 100 tau = 474
        with pytest.raises(ParamSearchFailed) as err:
            make_params(g, {"nu0": nu0, "nu_prime": 4.75}, samples=500)
        assert err.value.condition == gate

    def test_search_finds_gated_nu0(self, g):
        p = make_params(g, samples=1000)
        assert p.nu0 >= p.nu_prime
        assert p.checks["image_side_large"]["image_side"] >= p.checks["image_side_large"]["required"]

    def test_unknown_override(self, g):
        with pytest.raises(ValueError):
            make_params(g, {"bogus": 1})

    def test_unchecked_skips_gates(self, g):
        p = unchecked(g, 3.0)
        assert not p.checked

    def test_alpha_overflow(self):
        assert alpha(1e4, 0.3) == math.inf


class TestBoxes:
    def test_seed_box_on_real_axis(self, params12):
        box = seed_box(params12)
        assert box.mp == 0
        assert box.m * SIGMA >= 12

    def test_frame_g_nu12(self, g):
        box = BoxId(152, 0)
        fr = box_image_frame(g, box, 12.0)
        assert fr.inner_side >= 3255
        assert fr.inner_side == pytest.approx(0.5 * 0.08 * math.exp(12) * 0.5)
        assert fr.relative_band_width == pytest.approx(2 / 51)
        assert fr.argument_band <= 1 / 51
        lo, hi = fr.modulus_band
        assert lo < 0.5 * math.exp(152 * 0.08) < hi

    def test_frame_rejects_strip_box(self, g):
        with pytest.raises(BoxNotInSector):
            box_image_frame(g, BoxId.containing(20 + 20j, SIGMA), 12.0)

    def test_region_clear_log_matches_float_path(self, g):
        dec = RegionDecomposition(g, 50.0, tau_for(g))
        rng = np.random.default_rng(0)
        w = rng.uniform(-400, 400, 400) + 1j * rng.uniform(-400, 400, 400)
        direct = region_clear_log(dec, np.log(w), 0.5)
        # the same points pushed through the large-modulus branch by scaling
        # would change them, so compare against locate on the floats instead
        kinds, _ = dec.locate_codes(w)
        expected = (kinds == 2) & (dec.boundary_distance_many(w) > 0.5)
        assert np.array_equal(direct, expected)

    def test_region_clear_log_far_out(self, g):
        dec = RegionDecomposition(g, 1e4, tau_for(g))
        # exp(1e4) in direction 0 is deep inside R_0; direction pi/4 is the strip axis
        assert region_clear_log(dec, np.array([1e4 + 0j]), 1.0)[0]
        assert not region_clear_log(dec, np.array([1e4 + 0.25j * math.pi]), 1.0)[0]


class TestSurvival:
    def test_level1_fraction(self, g, params12):
        rep = survival_fraction(g, params12, 1, 100_000, seed=0)
        assert rep.fraction >= 0.999
        assert rep.ci_low >= 0.999
        assert rep.survivors > 0
        assert rep.strip_adjacent + rep.boundary_adjacent == rep.samples - rep.survivors

    def test_level2_nonempty(self, g, params12):
        rep = survival_fraction(g, params12, 2, 10_000, seed=0)
        assert rep.survivors > 0
        assert rep.nu_level == pytest.approx(params12.nu(2))

    def test_tiny_nu0_loses_visibly(self, g):
        rep = survival_fraction(g, unchecked(g, 2.0), 1, 20_000, seed=0)
        assert rep.fraction < 0.99

    def test_deterministic(self, g, params12):
        a = survival_fraction(g, params12, 1, 5000, seed=3)
        b = survival_fraction(g, params12, 1, 5000, seed=3)
        assert a.to_json() == b.to_json()
        assert np.array_equal(a.survivor_points, b.survivor_points)

    def test_json_fields(self, g, params12):
        js = survival_fraction(g, params12, 1, 2000, seed=1).to_json()
        assert "survivor_points" not in js
        assert set(js["loss"]) == {"strip_adjacent", "boundary_adjacent"}

    def test_too_few_samples(self, g, params12):
        with pytest.raises(ValueError):
            survival_fraction(g, params12, 1, 10)


class TestAreaBound:
    def test_unit_constant(self, params12):
        delta, tail = area_lower_bound(params12, 1.0)
        assert delta >= 0.99999
        assert delta >= 1 - math.exp(-12) - math.exp(-params12.nu(1)) - 1e-12

    def test_zero_constant(self, params12):
        assert area_lower_bound(params12, 0.0)[0] == 1.0

    def test_monotone_in_nu0(self, g):
        ds = [area_lower_bound(unchecked(g, nu0), 20.0)[0] for nu0 in (10.0, 12.0, 14.0, 16.0)]
        assert ds == sorted(ds)

    def test_loss_constant_uses_conservative_end(self, g, params12):
        rep = survival_fraction(g, params12, 1, 20_000, seed=0)
        assert loss_constant_from(rep, 12) >= (1 - rep.fraction) * math.exp(12)

    def test_negative_constant(self, params12):
        with pytest.raises(ValueError):
            area_lower_bound(params12, -1.0)


class TestCertifyPoint:
    def test_survivors_certified(self, g, params12):
        rep = survival_fraction(g, params12, 1, 2000, seed=0)
        labels = [certify_point(g, params12, complex(z)).label for z in rep.survivor_points[:100]]
        assert all(lab is Label.JULIA for lab in labels)

    def test_certificate_records_A(self, g, params12):
        z = seed_box(params12).center(SIGMA)
        c = certify_point(g, params12, z)
        assert c.ell == 0 and c.details["in_A"]

    def test_image_in_strip_refused(self, g, params12):
        # arg f(z) ~ Im z, so Im z = pi/4 sends the image along the strip axis;
        # at |f(z)| ~ 1e5 the strip is only ~3e-5 rad wide, so aim exactly
        z = 12.5 + 0.25j * math.pi
        box = BoxId.containing(z, SIGMA)
        c = certify_point(g, params12, z, box=box)
        assert c.label is Label.UNDETERMINED
        assert c.details["witness_step"] == 1

    def test_straddling_box_precondition(self, g, params12):
        box = BoxId.containing(12.0 + 0.01j, SIGMA)
        c = certify_point(g, params12, box.center(SIGMA), box=box)
        assert c.label is Label.UNDETERMINED
        assert c.details["reason"].startswith("precondition")
