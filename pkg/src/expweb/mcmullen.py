"""Nested box construction for a positive-area subset of J(f) ∩ A(f).

A seed box K0 of side sigma sits in the sector R_0(nu0).  Its image under f
covers a huge curvilinear square, most of which is tiled by sigma-boxes lying
well inside R(nu1); the loss at each level is what falls near the image
boundary or near the strips.  We estimate the surviving fraction by Monte
Carlo, using a sigma*sqrt(2) clearance in place of exact box containment.
"""

from __future__ import annotations

import contextvars
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.stats import qmc
from statsmodels.stats.proportion import proportion_confint

from .dynamics import Classification, Label, _dominates, iterate_orbit
from .errors import (
    BoxNotInSector,
    ExpSumOverflow,
    MuNotExpanding,
    NotExpanding,
    ParamSearchFailed,
)
from .estimates import (
    ETA,
    SIGMA,
    default_eps0,
    find_nu_prime,
    require_order,
    tau_for,
)
from .expsum import (
    LOG_FLOAT_MAX,
    ExpSum,
    dominant_sums,
    iterate_max_modulus_levels,
    log_max_modulus,
)
from .geometry import COMPONENT, RegionDecomposition

LARGE_MULTIPLE = 100.0
LAMBDA = 2.0
SQRT2 = math.sqrt(2.0)

_UNCHECKED = contextvars.ContextVar("expweb_unchecked_params", default=False)


def alpha(r: float, eps0: float) -> float:
    """alpha(r) = exp(eps0 r) / 2, inf once it leaves the float range."""
    x = eps0 * r - math.log(2.0)
    return math.exp(x) if x < LOG_FLOAT_MAX else math.inf


def gate_results(f: ExpSum, sigma: float, tau: float, eps0: float, nu0: float, nu_prime: float,
                 large_multiple: float = LARGE_MULTIPLE) -> dict:
    """Evaluate the four conditions on nu0; each entry is (passed, detail)."""
    out = {}
    out["nu0_ge_nu_prime"] = (nu0 >= nu_prime, {"nu0": nu0, "nu_prime": nu_prime})
    a = alpha(nu0, eps0)
    out["alpha_expands"] = (a > nu0, {"alpha_nu0": a})
    side = 0.5 * sigma * math.exp(min(nu0, LOG_FLOAT_MAX)) * f.abs_min
    need = large_multiple * max(sigma, tau)
    out["image_side_large"] = (side >= need, {"image_side": side, "required": need,
                                               "multiple": large_multiple})
    mu_ok, witness = True, None
    for r in np.geomspace(nu0, max(1e6, 2 * nu0), 32):
        if not log_max_modulus(f, eps0 * float(r)) > math.log(r):
            mu_ok, witness = False, float(r)
            break
    out["mu_expands"] = (mu_ok, {"witness_r": witness})
    return out


@dataclass(frozen=True)
class RefinementParams:
    f: ExpSum
    sigma: float
    eta: float
    tau: float
    epsilon0: float
    nu0: float
    nu_prime: float
    seed: int = 0
    large_multiple: float = LARGE_MULTIPLE
    checks: dict = field(default_factory=dict, compare=False)
    checked: bool = True

    def __post_init__(self):
        if _UNCHECKED.get():
            object.__setattr__(self, "checked", False)
            return
        require_order(self.f)
        if not 0 < self.sigma < 1 / (8 * SQRT2):
            raise ParamSearchFailed(f"sigma = {self.sigma} must lie in (0, 1/(8 sqrt 2))", "sigma")
        if not self.eta > 4 / self.sigma:
            raise ParamSearchFailed(f"eta = {self.eta} must exceed 4/sigma = {4 / self.sigma:.6g}", "eta")
        if self.tau < tau_for(self.f, self.eta) * (1 - 1e-12):
            raise ParamSearchFailed(f"tau = {self.tau} is below the bound {tau_for(self.f, self.eta):.6g}", "tau")
        if not 0 < self.epsilon0 < 0.5 * math.cos(math.pi / self.f.n):
            raise ParamSearchFailed("epsilon0 must lie in (0, cos(pi/n)/2)", "epsilon0")
        gates = gate_results(self.f, self.sigma, self.tau, self.epsilon0, self.nu0, self.nu_prime,
                             self.large_multiple)
        for name, (ok, detail) in gates.items():
            if not ok:
                raise ParamSearchFailed(f"nu0 = {self.nu0} fails {name}: {detail}", name)
        object.__setattr__(self, "checks", {k: {"pass": bool(v[0]), **v[1]} for k, v in gates.items()})

    @classmethod
    def _unchecked(cls, **kwargs) -> RefinementParams:
        """Bypass every gate.  For tests and degenerate experiments only."""
        token = _UNCHECKED.set(True)
        try:
            return cls(**kwargs)
        finally:
            _UNCHECKED.reset(token)

    def nu(self, k: int) -> float:
        """nu_k = alpha^k(nu0)."""
        v = self.nu0
        for _ in range(k):
            v = alpha(v, self.epsilon0)
        return v

    def to_json(self) -> dict:
        return {
            "family": self.f.describe(),
            "sigma": self.sigma,
            "eta": self.eta,
            "tau": self.tau,
            "epsilon0": self.epsilon0,
            "nu0": self.nu0,
            "nu_prime": self.nu_prime,
            "schedule": [self.nu(k) for k in range(3)],
            "seed": self.seed,
            "large_multiple": self.large_multiple,
            "checked": self.checked,
            "checks": self.checks,
        }


def make_params(f: ExpSum, overrides: dict | None = None, *, samples: int = 10_000,
                nu_ceiling: float = 700.0) -> RefinementParams:
    """Fill defaults, find nu', then double nu0 until all four conditions hold."""
    require_order(f)
    o = dict(overrides or {})
    sigma = float(o.pop("sigma", SIGMA))
    eta = float(o.pop("eta", ETA))
    tau = float(o.pop("tau", tau_for(f, eta)))
    eps0 = float(o.pop("epsilon0", default_eps0(f.n)))
    seed = int(o.pop("seed", 0))
    multiple = float(o.pop("large_multiple", LARGE_MULTIPLE))
    nu_prime = o.pop("nu_prime", None)
    nu0 = o.pop("nu0", None)
    if o:
        raise ValueError(f"unknown parameter(s): {sorted(o)}")
    if not 0 < sigma < 1 / (8 * SQRT2):
        raise ParamSearchFailed(f"sigma = {sigma} must lie in (0, 1/(8 sqrt 2)) = (0, 0.0883883)", "sigma")
    if not eta > 4 / sigma:
        raise ParamSearchFailed(f"eta = {eta} must exceed 4/sigma = {4 / sigma:.6g}", "eta")
    if nu_prime is None:
        nu_prime = find_nu_prime(f, eta, tau, samples, seed)
    common = dict(f=f, sigma=sigma, eta=eta, tau=tau, epsilon0=eps0, nu_prime=float(nu_prime),
                  seed=seed, large_multiple=multiple)
    if nu0 is not None:
        return RefinementParams(nu0=float(nu0), **common)
    nu0 = float(nu_prime)
    last = None
    while nu0 <= nu_ceiling:
        try:
            return RefinementParams(nu0=nu0, **common)
        except ParamSearchFailed as exc:
            last = exc
            if exc.condition in ("sigma", "eta", "tau", "epsilon0"):
                raise
        nu0 *= 2
    raise ParamSearchFailed(f"no nu0 <= {nu_ceiling} passes: {last}", getattr(last, "condition", None))


# -- boxes --------------------------------------------------------------------------


class BoxId(NamedTuple):
    """B_{m,m'} = (m sigma, (m+1) sigma) x (m' sigma, (m'+1) sigma)."""

    m: int
    mp: int

    @classmethod
    def containing(cls, z: complex, sigma: float) -> BoxId:
        return cls(math.floor(z.real / sigma), math.floor(z.imag / sigma))

    def corner(self, sigma: float) -> complex:
        return complex(self.m * sigma, self.mp * sigma)

    def center(self, sigma: float) -> complex:
        return complex((self.m + 0.5) * sigma, (self.mp + 0.5) * sigma)


def box_clearance(dec: RegionDecomposition, box: BoxId, sigma: float) -> tuple:
    """(component index or None, boundary distance minus half-diagonal) for the box."""
    c = box.center(sigma)
    kinds, idx = dec.locate_codes(np.array([c]))
    if kinds[0] != COMPONENT:
        return None, -math.inf
    return int(idx[0]), float(dec.boundary_distance_many(np.array([c]))[0]) - sigma / SQRT2


@dataclass(frozen=True)
class BoxFrame:
    sector: int
    inner_side: float
    modulus_band: tuple
    relative_band_width: float
    argument_band: float


def box_image_frame(f: ExpSum, box: BoxId, nu: float, *, sigma: float = SIGMA, eta: float = ETA,
                    tau: float | None = None) -> BoxFrame:
    """Guaranteed inner square side and modulus/argument bands for f(B)."""
    tau = tau_for(f, eta) if tau is None else tau
    dec = RegionDecomposition(f, nu, tau)
    p, clear = box_clearance(dec, box, sigma)
    if p is None or clear < 0:
        raise BoxNotInSector(f"box {tuple(box)} is not inside R({nu})")
    a, w, loga = f._arrays
    corners = box.corner(sigma) + sigma * np.array([0, 1, 1 + 1j, 1j])
    logs = loga[p].real + (w[p] * corners).real
    lo = (1 - 1 / eta) * math.exp(min(float(logs.min()), LOG_FLOAT_MAX))
    hi = (1 + 1 / eta) * math.exp(min(float(logs.max()), LOG_FLOAT_MAX))
    inner = 0.5 * sigma * math.exp(min(nu, LOG_FLOAT_MAX)) * f.abs_min
    return BoxFrame(p, inner, (lo, hi), 2 / eta, 1 / eta)


def seed_box(params: RefinementParams) -> BoxId:
    """First box on the positive real axis lying in R_0(nu0) with sigma sqrt 2 clearance."""
    dec = RegionDecomposition(params.f, params.nu0, params.tau)
    m = math.ceil(params.nu0 / params.sigma)
    for _ in range(100_000):
        p, clear = box_clearance(dec, BoxId(m, 0), params.sigma)
        if p == 0 and clear > params.sigma * SQRT2:
            return BoxId(m, 0)
        m += 1
    raise BoxNotInSector("no seed box found on the positive real axis")


# -- survival -----------------------------------------------------------------------


def region_clear_log(dec: RegionDecomposition, L: np.ndarray, clearance: float) -> np.ndarray:
    """Whether exp(L) lies in a component of R(nu) at distance > clearance from its boundary.

    Works from L = log w directly, so |w| may be far beyond the float range.
    """
    L = np.asarray(L, dtype=complex)
    small = L.real < 700.0
    ok = np.zeros(L.shape, dtype=bool)
    if small.any():
        w = np.exp(L[small])
        kinds, _ = dec.locate_codes(w)
        ok[small] = (kinds == COMPONENT) & (dec.boundary_distance_many(w) > clearance)
    big = ~small
    if big.any():
        lr, th = L.real[big], L.imag[big]
        circum = dec.nu / math.cos(math.pi / dec.n)
        good = lr > math.log(circum + clearance)
        for ax in dec._axes:
            d = th - np.angle(ax)
            facing = np.cos(d) > 0
            with np.errstate(divide="ignore"):
                far = lr + np.log(np.abs(np.sin(d))) > math.log(dec.tau + clearance)
            good &= ~facing | far
        ok[big] = good
    return ok


@dataclass
class SurvivalReport:
    level: int
    samples: int
    survivors: int
    fraction: float
    ci_low: float
    ci_high: float
    strip_adjacent: int
    boundary_adjacent: int
    seed: int
    sampler: str
    nu_level: float
    box: tuple
    survivor_points: np.ndarray = field(repr=False, default=None)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("survivor_points")
        d["half_width"] = self.half_width
        d["loss"] = {"strip_adjacent": d.pop("strip_adjacent"), "boundary_adjacent": d.pop("boundary_adjacent")}
        return d


def _sample_box(corner: complex, sigma: float, count: int, seed: int, sampler: str) -> np.ndarray:
    if sampler == "sobol":
        m = math.ceil(math.log2(count))
        u = qmc.Sobol(d=2, scramble=True, seed=seed).random_base2(m)[:count]
    elif sampler == "random":
        u = np.random.default_rng(seed).random((count, 2))
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return corner + sigma * (u[:, 0] + 1j * u[:, 1])


def _survivors(f: ExpSum, z: np.ndarray, corner: complex, sigma: float, dec_next: RegionDecomposition):
    d = dominant_sums(f, z)
    L = d.log_scale + np.log(d.s0)
    log_df = d.log_scale.real + np.log(np.abs(d.s1))
    rel = z - corner
    edge = np.minimum(np.minimum(rel.real, sigma - rel.real), np.minimum(rel.imag, sigma - rel.imag))
    with np.errstate(divide="ignore"):
        bd_ok = np.log(edge) + log_df > math.log(sigma * SQRT2)
    region_ok = region_clear_log(dec_next, L, sigma * SQRT2)
    return region_ok, bd_ok, L


def survival_fraction(f: ExpSum, params: RefinementParams, level: int, n_samples: int,
                      seed: int | None = None, *, sampler: str = "random") -> SurvivalReport:
    """Monte Carlo fraction of a level-(level-1) box whose image stays in a clear box of R(nu_level)."""
    if level not in (1, 2):
        raise ValueError("level must be 1 or 2")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    seed = params.seed if seed is None else seed
    sigma = params.sigma
    box = seed_box(params)
    corner = box.corner(sigma)
    if level == 2:
        # a sigma-box of the next grid around the image of a level-1 survivor
        probe = survival_fraction(f, params, 1, 1000, seed, sampler=sampler)
        if probe.survivors == 0:
            raise ExpSumOverflow("no level-1 survivor to refine")
        w = complex(np.exp(probe.survivor_points[0]))
        if not math.isfinite(abs(w)):
            raise ExpSumOverflow("level-1 image leaves the float range; lower nu0")
        box = BoxId.containing(w, sigma)
        corner = box.corner(sigma)
    elif params.nu0 > LOG_FLOAT_MAX:
        raise ExpSumOverflow("seed box beyond the float range")
    nu_next = params.nu(level)
    dec_next = RegionDecomposition(f, nu_next, params.tau)
    z = _sample_box(corner, sigma, n_samples, seed, sampler)
    region_ok, bd_ok, L = _survivors(f, z, corner, sigma, dec_next)
    alive = region_ok & bd_ok
    k = int(alive.sum())
    lo, hi = proportion_confint(k, n_samples, alpha=0.05, method="wilson")
    return SurvivalReport(
        level=level, samples=n_samples, survivors=k, fraction=k / n_samples,
        ci_low=float(lo), ci_high=float(hi),
        strip_adjacent=int((~region_ok).sum()), boundary_adjacent=int((region_ok & ~bd_ok).sum()),
        seed=seed, sampler=sampler, nu_level=nu_next, box=(box.m, box.mp),
        survivor_points=z[alive],
    )


class LossFit(NamedTuple):
    slope: float
    intercept: float
    nu0s: tuple
    losses: tuple


def fit_loss_exponent(f: ExpSum, nu0s=(10.0, 12.0, 14.0), n_samples: int = 1 << 20, seed: int = 0,
                      *, sampler: str = "sobol", nu_prime: float | None = None) -> LossFit:
    """Least-squares slope of log(1 - level-1 fraction) against nu0.

    Parameters are built without the nu0 gates: the point is to watch the
    loss scale, including at nu0 values the gates would reject.
    """
    eta = ETA
    tau = tau_for(f, eta)
    losses = []
    for nu0 in nu0s:
        params = RefinementParams._unchecked(
            f=f, sigma=SIGMA, eta=eta, tau=tau, epsilon0=default_eps0(f.n), nu0=float(nu0),
            nu_prime=float(nu_prime if nu_prime is not None else nu0), seed=seed)
        rep = survival_fraction(f, params, 1, n_samples, seed, sampler=sampler)
        losses.append(1.0 - rep.fraction)
    if min(losses) <= 0:
        raise ValueError(f"no loss observed at some nu0 ({losses}); increase n_samples")
    slope, intercept = np.polyfit(np.array(nu0s, dtype=float), np.log(losses), 1)
    return LossFit(float(slope), float(intercept), tuple(nu0s), tuple(losses))


def loss_constant_from(report: SurvivalReport, nu0: float) -> float:
    """Empirical C with 1 - fraction ~ C exp(-nu0); the upper Wilson end is used."""
    return (1.0 - report.ci_low) * math.exp(nu0)


def area_lower_bound(params: RefinementParams, loss_constant: float, levels: int = 3) -> tuple:
    """(Delta, tail): Delta bounds area(K)/area(K0) from below given per-level loss C exp(-nu_k)."""
    if loss_constant < 0:
        raise ValueError("loss_constant must be nonnegative")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    prod = 1.0
    nu = params.nu0
    for _ in range(levels):
        prod *= 1.0 - min(1.0, loss_constant * math.exp(-nu))
        nu = alpha(nu, params.epsilon0)
    # nu_k grows at least geometrically from here, so the tail is dominated by its first term
    nxt = alpha(nu, params.epsilon0)
    ratio = math.exp(-(nxt - nu)) if math.isfinite(nxt) else 0.0
    tail = loss_constant * math.exp(-nu) / (1.0 - ratio) if ratio < 1 else math.inf
    return prod * max(0.0, 1.0 - tail), tail


# -- point certificates -------------------------------------------------------------


@lru_cache(maxsize=64)
def _mu_levels(f: ExpSum, nu0: float, depth: int, eps0: float) -> list:
    try:
        return iterate_max_modulus_levels(f, nu0, depth, radius_scale=eps0)
    except NotExpanding as exc:
        raise MuNotExpanding(str(exc)) from exc


def certify_point(f: ExpSum, params: RefinementParams, z: complex, depth: int = 2, *,
                  box: BoxId | None = None) -> Classification:
    """Finite-depth Julia and A(f) certificate for a point of the seed box.

    Every reachable iterate z_k must lie in a component of R(nu_k), every
    factor |z_k f'(z_k)/f(z_k)| with k < depth must be at least 2, and
    |f^k(z)| must dominate the mu_eps0 iterates of nu0.  On success the
    label is Julia with ``ell = 0`` recording membership of A(f).
    """
    sigma = params.sigma
    box = seed_box(params) if box is None else box
    details = {"depth": depth, "box": [box.m, box.mp], "certificate": "finite-depth"}
    dec0 = RegionDecomposition(f, params.nu0, params.tau)
    p, clear = box_clearance(dec0, box, sigma)
    if p is None or clear < 0:
        details["reason"] = "precondition: box not inside R(nu0)"
        return Classification(Label.UNDETERMINED, 0, None, details)
    rel = complex(z) - box.corner(sigma)
    if not (0 <= rel.real <= sigma and 0 <= rel.imag <= sigma):
        details["reason"] = "precondition: z not in the box"
        return Classification(Label.UNDETERMINED, 0, None, details)

    rec = iterate_orbit(f, z, depth, eta=params.eta)
    for k in range(min(depth, rec.depth_reached) + 1):
        dec = RegionDecomposition(f, params.nu(k), params.tau)
        if k < len(rec.points):
            L = np.log(np.array([rec.points[k]]))
        else:
            L = np.array([rec.log_points[k - len(rec.points)]])
        if not region_clear_log(dec, L, 0.0)[0]:
            details.update(reason=f"z_{k} is not in R(nu_{k})", witness_step=k)
            return Classification(Label.UNDETERMINED, k, None, details)
        if k < depth and not rec.factors[k] >= LAMBDA:
            details.update(reason=f"factor at z_{k} is below {LAMBDA}", witness_step=k,
                           factor=rec.factors[k])
            return Classification(Label.UNDETERMINED, k, None, details)
    if rec.depth_reached < depth:
        details.update(reason="orbit could not be followed", witness_step=rec.depth_reached + 1)
        return Classification(Label.UNDETERMINED, rec.depth_reached, None, details)
    levels = _mu_levels(f, params.nu0, depth, params.epsilon0)
    verdict, checked, witness = _dominates(rec, levels, 0, depth)
    if verdict != "ge":
        details.update(reason="orbit does not dominate the mu iterates", witness_step=witness)
        return Classification(Label.UNDETERMINED, checked, None, details)
    details["factors"] = rec.factors[:depth]
    details["in_A"] = True
    return Classification(Label.JULIA, depth, 0, details)
