"""Sampled certificates for the sector inequalities, conformality and distortion.

Every sup/min here is taken over finitely many points, so the reports are
heuristic certificates (sampling), never proofs.  Margins are relative:
a margin of 0.1 means the inequality holds with 10% to spare.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import DerivativeZero, NotFound, OrderTooSmall, PreconditionViolated
from .expsum import (
    ExpSum,
    dominant_sums,
    evaluate,
    log_max_modulus,
    max_modulus_log_bounds,
    psi_many,
)
from .geometry import COMPONENT, RegionDecomposition

SIGMA = 0.08
ETA = 51.0
MARGIN = 0.1
HEURISTIC = "heuristic certificate (sampling)"

INEQUALITIES = (
    "psi_bound",
    "uniform_expansion",
    "bounded_nonlinearity",
    "log_derivative",
    "epsilon_growth",
)


def require_order(f: ExpSum, minimum: int = 3) -> None:
    if f.n < minimum:
        raise OrderTooSmall(
            f"n = {f.n}: the sector construction needs n >= {minimum} "
            "(E_1 and E_2 lie in class B, where A_R(f) is not a spider's web)"
        )


def default_eps0(n: int) -> float:
    return 0.45 * math.cos(math.pi / n)


def tau_for(f: ExpSum, eta: float = ETA) -> float:
    """Least strip half-width allowed for the given eta."""
    n = f.n
    return math.log(4 * n * eta * f.abs_max / f.abs_min) / (2 * math.sin(math.pi / n))


@dataclass
class InequalityResult:
    inequality_id: str
    passed: bool
    worst_margin: float
    witness: complex | None
    samples: int
    seed: int

    def to_json(self) -> dict:
        w = None if self.witness is None else [self.witness.real, self.witness.imag]
        return {
            "inequality_id": self.inequality_id,
            "pass": bool(self.passed),
            "worst_margin": float(self.worst_margin),
            "witness": w,
            "samples": int(self.samples),
            "seed": int(self.seed),
        }


@dataclass
class EstimateReport:
    family: dict
    nu: float
    eta: float
    tau: float
    eps0: float
    samples: int
    seed: int
    window: tuple
    results: list = field(default_factory=list)
    window_truncated: bool = False
    label: str = HEURISTIC

    def result(self, inequality_id: str) -> InequalityResult:
        for r in self.results:
            if r.inequality_id == inequality_id:
                return r
        raise KeyError(inequality_id)

    def passed(self, margin: float = 0.0) -> bool:
        return all(r.passed and r.worst_margin >= margin for r in self.results)

    @property
    def worst_margin(self) -> float:
        return min(r.worst_margin for r in self.results)

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "nu": self.nu,
            "eta": self.eta,
            "tau": self.tau,
            "eps0": self.eps0,
            "samples": self.samples,
            "seed": self.seed,
            "window": list(self.window),
            "window_truncated": self.window_truncated,
            "label": self.label,
            "inequalities": [r.to_json() for r in self.results],
        }


# -- sampling of a sector ----------------------------------------------------------


def _sobol(n_points: int, seed: int, dim: int = 2) -> np.ndarray:
    m = max(1, math.ceil(math.log2(max(n_points, 2))))
    return qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:n_points]


def sector_samples(dec: RegionDecomposition, p: int, count: int, seed: int,
                   r_max: float, boundary_share: float = 0.1) -> np.ndarray:
    """Quasi-random points of R_p(nu) with |z| <= r_max, including boundary points."""
    n = dec.n
    nu = dec.nu
    rot = np.exp(-2j * np.pi * p / n)
    n_bd = int(round(boundary_share * count))
    n_in = count - n_bd
    pts = []
    got = 0
    attempt = 0
    while got < n_in:
        u = _sobol(4 * (n_in - got) + 64, seed + 7919 * attempt)
        r = nu + u[:, 0] * (r_max - nu)
        th = (2 * u[:, 1] - 1) * np.pi / n
        z = r * np.exp(1j * th)
        kinds, idx = dec.locate_codes(z)
        ok = z[(kinds == COMPONENT) & (idx == 0)]
        pts.append(ok[: n_in - got])
        got += len(pts[-1])
        attempt += 1
        if attempt > 50:
            raise RuntimeError("could not sample the sector; is nu too small for tau?")
    if n_bd:
        segs, rays = dec.boundary_pieces()
        pieces = list(segs) + [(p0, p0 + (r_max - abs(p0)) * d) for p0, d in rays if abs(p0) < r_max]
        t = (np.arange(4 * n_bd) + 0.5) / (4 * n_bd)
        cand = np.concatenate([a + t * (b - a) for a, b in pieces])
        nudged = cand + 1e-9 * np.maximum(1.0, np.abs(cand)) * (np.abs(cand) - cand) / np.maximum(
            np.abs(np.abs(cand) - cand), 1e-300)
        kinds, idx = dec.locate_codes(nudged)
        bd = cand[(kinds == COMPONENT) & (idx == 0) & (np.abs(cand) <= r_max)]
        if len(bd) > n_bd:
            bd = bd[np.linspace(0, len(bd) - 1, n_bd).astype(int)]
        pts.append(bd)
    return np.concatenate(pts) * rot


def _inequality_margins(f: ExpSum, p: int, z: np.ndarray, nu: float, eta: float, eps0: float) -> dict:
    a, w, loga = f._arrays
    wp = w[p]
    psi0, psi1, psi2 = psi_many(f, p, z)
    base = loga[p].real + (wp * z).real  # log |a_p exp(w^p z)|
    f_rel = 1 + psi0
    d1_rel = wp * (1 + psi0) + psi1
    d2_rel = wp * wp * (1 + psi0) + 2 * wp * psi1 + psi2
    with np.errstate(divide="ignore", invalid="ignore"):
        log_f = base + np.log(np.abs(f_rel))
        log_d1 = base + np.log(np.abs(d1_rel))
        q = np.maximum(np.abs(psi0), np.maximum(np.abs(psi1), np.abs(psi2)))
        nonlin = np.abs(d2_rel / d1_rel)
        logder = np.abs(z) * np.abs(d1_rel / f_rel)
        # log M(eps0 |z|) <= eps0 |z| + log sum |a_k|
        rhs = np.maximum(eps0 * nu, eps0 * np.abs(z) + math.log(f.abs_sum))
        return {
            "psi_bound": 1 - eta * q,
            "uniform_expansion": 1 - np.exp(math.log(2.0) - log_d1),
            "bounded_nonlinearity": 1 - nonlin / 2,
            "log_derivative": 1 - 2 / logder,
            "epsilon_growth": 1 - np.exp(rhs - log_f),
        }


def verify_component_estimates(
    f: ExpSum,
    nu: float,
    eta: float = ETA,
    samples: int = 10_000,
    seed: int = 0,
    *,
    tau: float | None = None,
    eps0: float | None = None,
    r_max: float | None = None,
) -> EstimateReport:
    """Check the five sector inequalities at ``samples`` points of every R_p(nu)."""
    require_order(f)
    tau = tau_for(f, eta) if tau is None else tau
    eps0 = default_eps0(f.n) if eps0 is None else eps0
    truncated = False
    if r_max is None:
        r_max = 3 * nu + 10
    if r_max > 1e6:
        r_max, truncated = 1e6, True
    dec = RegionDecomposition(f, nu, tau)
    worst = {k: (math.inf, None) for k in INEQUALITIES}
    for p in range(f.n):
        z = sector_samples(dec, p, samples, seed + p, r_max)
        margins = _inequality_margins(f, p, z, nu, eta, eps0)
        for key, m in margins.items():
            m = np.where(np.isnan(m), -np.inf, m)
            i = int(np.argmin(m))
            if m[i] < worst[key][0]:
                worst[key] = (float(m[i]), complex(z[i]))
    results = [
        InequalityResult(key, bool(worst[key][0] > 0), worst[key][0], worst[key][1], samples, seed)
        for key in INEQUALITIES
    ]
    return EstimateReport(
        family=f.describe(), nu=nu, eta=eta, tau=tau, eps0=eps0, samples=samples, seed=seed,
        window=(nu, r_max), results=results, window_truncated=truncated,
    )


def find_nu_prime(
    f: ExpSum,
    eta: float = ETA,
    tau: float | None = None,
    samples: int = 10_000,
    seed: int = 0,
    *,
    margin: float = MARGIN,
    start: float | None = None,
    ceiling: float = 1e4,
    rel_tol: float = 0.02,
) -> float:
    """Least tested nu at which every inequality holds with ``margin`` to spare.

    Doubling from ``start`` then bisection.  A sampling certificate only.
    """
    require_order(f)
    tau = tau_for(f, eta) if tau is None else tau

    def ok(nu):
        return verify_component_estimates(f, nu, eta, samples, seed, tau=tau).passed(margin)

    nu = start if start is not None else max(1.0, tau)
    if ok(nu):
        return nu
    lo = nu
    while True:
        nu *= 2
        if nu > ceiling:
            raise NotFound(f"no nu <= {ceiling:g} passes with margin {margin}")
        if ok(nu):
            break
        lo = nu
    hi = nu
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# -- boxes, nonlinearity, distortion -------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Closed axis-parallel square with lower-left corner ``corner``."""

    corner: complex
    side: float

    @classmethod
    def centered(cls, center: complex, side: float) -> Box:
        return cls(complex(center) - side / 2 * (1 + 1j), side)

    @property
    def center(self) -> complex:
        return self.corner + self.side / 2 * (1 + 1j)

    @property
    def corners(self) -> np.ndarray:
        c, s = self.corner, self.side
        return np.array([c, c + s, c + s + 1j * s, c + 1j * s])

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(2)

    def grid(self, k: int) -> np.ndarray:
        t = np.linspace(0.0, 1.0, k)
        x, y = np.meshgrid(t, t)
        return (self.corner + self.side * (x + 1j * y)).reshape(-1)

    def random(self, count: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((count, 2))
        return self.corner + self.side * (u[:, 0] + 1j * u[:, 1])

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z) - self.corner
        return (z.real >= 0) & (z.real <= self.side) & (z.imag >= 0) & (z.imag <= self.side)


def _sup_nonlinearity(f: ExpSum, box: Box, samples: int) -> float:
    z = box.grid(samples)
    d = dominant_sums(f, z)
    zero = np.flatnonzero(d.s1 == 0)
    if zero.size:
        raise DerivativeZero("f' vanishes in the box", point=complex(z[zero[0]]))
    return float(np.max(np.abs(d.s2 / d.s1)))


def nonlinearity(f: ExpSum, box: Box, samples: int = 33) -> float:
    """Sampled sup |f''/f'| times the box diameter."""
    return _sup_nonlinearity(f, box, samples) * box.diameter


def conformality_criterion(f: ExpSum, box: Box, samples: int = 33) -> tuple:
    """(s * sup|f''/f'|, 1/(sqrt(2) s + 1))."""
    s = box.side
    return s * _sup_nonlinearity(f, box, samples), 1.0 / (math.sqrt(2) * s + 1.0)


def _images(f: ExpSum, z: np.ndarray) -> np.ndarray:
    try:
        return np.array([evaluate(f, x) for x in z])
    except OverflowError:
        d = dominant_sums(f, z)
        return d.log_scale + np.log(d.s0)


def conformality_check(f: ExpSum, box: Box, samples: int = 33, *, margin: float = MARGIN,
                       injectivity_points: int = 1000, seed: int = 0) -> bool:
    lhs, rhs = conformality_criterion(f, box, samples)
    if not lhs <= (1 - margin) * rhs:
        return False
    rng = np.random.default_rng(seed)
    z = box.random(injectivity_points, rng)
    w = _images(f, z)
    scale = max(1.0, float(np.max(np.abs(w))))
    tree = cKDTree(np.column_stack([w.real, w.imag]))
    for i, j in tree.query_pairs(1e-12 * scale):
        if z[i] != z[j]:
            return False
    return True


class Distortion(NamedTuple):
    c: float
    C: float
    L: float


def iterate_map(f: ExpSum, k: int):
    def F(z):
        for _ in range(k):
            z = evaluate(f, z)
        return z
    return F


def distortion_estimate(f: ExpSum, k: int, box: Box, pair_samples: int = 2000, seed: int = 0,
                        *, pairs=None) -> Distortion:
    """Sampled extreme difference quotients of f^k on the box (inner estimate of L)."""
    F = iterate_map(f, k)
    if pairs is None:
        rng = np.random.default_rng(seed)
        x = box.random(pair_samples, rng)
        y = box.random(pair_samples, rng)
        cs = box.corners
        x = np.concatenate([x, cs, cs[:2]])
        y = np.concatenate([y, np.roll(cs, 1), cs[2:]])
    else:
        x, y = (np.asarray(v, dtype=complex) for v in pairs)
    keep = np.abs(x - y) > 1e-6 * box.side
    x, y = x[keep], y[keep]
    fx = np.array([F(v) for v in x])
    fy = np.array([F(v) for v in y])
    q = np.abs(fx - fy) / np.abs(x - y)
    c, C = float(q.min()), float(q.max())
    return Distortion(c, C, C / c)


def schubert_bound(N: float) -> float:
    return 1.0 + 8.0 * N


def distortion_product_bound(M: float, s: float, alpha: float) -> float:
    """prod_{m>=0} (1 + 8 M s sqrt(2) alpha^-m), truncated once a factor is within 1e-12 of 1."""
    if not alpha > 1:
        raise PreconditionViolated("alpha must exceed 1")
    if not (M > 0 and 0 < s < 1.0 / (4 * math.sqrt(2) * M)):
        raise PreconditionViolated(
            f"need 0 < s < 1/(4 sqrt(2) M) = {1 / (4 * math.sqrt(2) * M):.6g}, "
            f"i.e. M s sqrt(2) < 1/4 (got {M * s * math.sqrt(2):.6g})"
        )
    x = 8.0 * M * s * math.sqrt(2)
    prod = 1.0
    m = 0
    while True:
        term = x * alpha ** (-m)
        if term < 1e-12:
            return prod
        prod *= 1.0 + term
        m += 1


# -- growth -------------------------------------------------------------------------


class BKResult(NamedTuple):
    A: float
    B: float
    passed: bool


def bk_condition_check(f: ExpSum, C: float = 2.0, r_lo: float = 30.0, r_hi: float = 300.0,
                       samples: int = 16) -> BKResult:
    """Empirical A = min, B = max of log M(C r) / log M(r) over sampled r."""
    if not C > 1:
        raise ValueError("C must exceed 1")
    rs = np.geomspace(r_lo, r_hi, samples)
    ratios = [log_max_modulus(f, C * r) / log_max_modulus(f, r) for r in rs]
    A, B = min(ratios), max(ratios)
    return BKResult(A, B, A > 1 and B > 1)


def growth_bounds_threshold(f: ExpSum, radii) -> float | None:
    """Smallest sampled r from which r + log(min|a|/2) <= log M(r) <= r + log sum|a| holds."""
    radii = sorted(radii)
    ok = []
    for r in radii:
        lo, hi = max_modulus_log_bounds(f, r)
        lm = log_max_modulus(f, r)
        ok.append(lo <= lm <= hi)
    best = None
    for r, good in zip(reversed(radii), reversed(ok)):
        if not good:
            break
        best = r
    return best
