"""Orbits and finite-depth membership tests for I(f), A_R(f), A(f) and J(f).

All classifications are certificates up to the depth that could actually be
checked.  Orbits are followed in floats until a term overflows, then for one
more step in log coordinates; after that the argument of the iterate is lost
and nothing further can be said.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import ExpSumOverflow, MuNotExpanding, NotExpanding, ZeroValue
from .expsum import (
    LOG_FLOAT_MAX,
    ExpSum,
    derivative,
    dominant_sums,
    evaluate,
    iterate_max_modulus_levels,
    log_max_modulus,
)
from .tower import TowerBracket, TowerReal

ETA = 51.0
ESCAPE_RADIUS = 1e3
ESCAPE_STEPS = 3


class Label(str, Enum):
    ESCAPING = "Escaping"
    IN_AR = "InAR"
    NOT_IN_AR = "NotInAR"
    IN_A = "InA"
    JULIA_OR_MCFC = "JuliaOrMCFC"
    JULIA = "Julia"
    UNDETERMINED = "Undetermined"


@dataclass
class Classification:
    label: Label
    depth: int
    ell: int | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"label": self.label.value, "depth": self.depth, "ell": self.ell, "details": self.details}


@dataclass
class OrbitRecord:
    z0: complex
    points: list
    log_points: list
    factors: list
    overflow_depth: int | None
    sector: int | None = None

    @property
    def depth_reached(self) -> int:
        return len(self.points) - 1 + len(self.log_points)

    def log_abs(self, k: int) -> float:
        """log |f^k(z0)| for any k <= depth_reached."""
        if k < len(self.points):
            v = abs(self.points[k])
            return math.log(v) if v > 0 else -math.inf
        return self.log_points[k - len(self.points)].real


def _factor(f: ExpSum, z: complex) -> float:
    """|z f'(z)/f(z)|, NaN where f(z) is zero to working precision."""
    d = dominant_sums(f, np.array([z]))
    s0, s1 = complex(d.s0[0]), complex(d.s1[0])
    _, w, loga = f._arrays
    # sum of term moduli relative to the dominant one: the cancellation scale
    mags = np.exp((loga + w * z).real - d.log_scale[0].real).sum()
    if abs(s0) <= 8 * np.finfo(float).eps * mags:
        return math.nan
    return abs(z) * abs(s1 / s0)


def iterate_orbit(f: ExpSum, z0: complex, max_depth: int, *, eta: float = ETA) -> OrbitRecord:
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    z = complex(z0)
    points = [z]
    factors = []
    log_points = []
    overflow_depth = None
    sector = None
    for _ in range(max_depth):
        factors.append(_factor(f, z))
        try:
            z = evaluate(f, z)
        except ExpSumOverflow:
            overflow_depth = len(points) - 1
            d = dominant_sums(f, np.array([z]))
            if abs(d.psi[0]) < 1.0 / eta:
                sector = int(d.p[0])
                log_points.append(complex(d.log_scale[0] + np.log(d.s0[0])))
            break
        points.append(z)
    return OrbitRecord(complex(z0), points, log_points, factors, overflow_depth, sector)


# -- A_R(f) and A(f) ----------------------------------------------------------------


def _orbit_bracket(rec: OrbitRecord, k: int) -> TowerBracket:
    L = rec.log_abs(k)
    delta = 1e-12 * max(1.0, abs(L))
    return TowerBracket(TowerReal.from_log(L - delta, "down"), TowerReal.from_log(L + delta, "up"))


def _compare(rec: OrbitRecord, k: int, level: tuple) -> str:
    """'ge', 'lt' or 'unknown' for |f^k(z0)| against one (bracket, log M) level."""
    bracket, lm = level
    if lm is not None:
        # a directly computed level: plain float comparison, ties count as membership
        if k < len(rec.points):
            if lm > LOG_FLOAT_MAX:
                return "lt"
            return "ge" if abs(rec.points[k]) >= math.exp(lm) else "lt"
        return "ge" if rec.log_abs(k) >= lm else "lt"
    orb = _orbit_bracket(rec, k)
    if orb.certainly_ge(bracket):
        return "ge"
    if orb.certainly_lt(bracket):
        return "lt"
    return "unknown"


def _dominates(rec: OrbitRecord, levels: list, ell: int, depth: int) -> tuple:
    """Check |f^{n+ell}(z0)| >= levels[n-1] for n = 1..; returns (verdict, checked, witness)."""
    usable = min(depth, len(levels), rec.depth_reached - ell)
    if usable < 1:
        return "unknown", 0, None
    for n in range(1, usable + 1):
        c = _compare(rec, n + ell, levels[n - 1])
        if c == "lt":
            return "lt", n, n
        if c == "unknown":
            return "unknown", n - 1, n
    return "ge", usable, None


def classify_AR(f: ExpSum, z0: complex, R: float, depth: int, *, levels=None) -> Classification:
    """Finite-depth test of |f^n(z0)| >= M^n(R, f), n = 1..depth."""
    if levels is None:
        levels = iterate_max_modulus_levels(f, R, depth)
    rec = iterate_orbit(f, z0, depth)
    verdict, checked, witness = _dominates(rec, levels, 0, depth)
    details = {"R": R, "orbit_depth": rec.depth_reached, "overflow_depth": rec.overflow_depth,
               "certificate": "finite-depth"}
    if verdict == "lt":
        details["failed_at"] = witness
        return Classification(Label.NOT_IN_AR, checked, None, details)
    if verdict == "unknown":
        details["undetermined_at"] = witness
        return Classification(Label.UNDETERMINED, checked, None, details)
    return Classification(Label.IN_AR, checked, 0, details)


def check_mu_expanding(f: ExpSum, epsilon: float, R: float, samples: int = 32,
                       r_max: float = 1e6) -> None:
    """Sampled check that M(eps r, f) > r for r >= R; raises MuNotExpanding."""
    for r in np.geomspace(R, max(r_max, 2 * R), samples):
        if not log_max_modulus(f, epsilon * float(r)) > math.log(r):
            raise MuNotExpanding(f"mu_eps({r:.6g}) <= {r:.6g} for eps = {epsilon}")


@lru_cache(maxsize=64)
def _mu_levels(f: ExpSum, epsilon: float, R: float, depth: int) -> tuple:
    check_mu_expanding(f, epsilon, R)
    try:
        return tuple(iterate_max_modulus_levels(f, R, depth, radius_scale=epsilon))
    except NotExpanding as exc:
        raise MuNotExpanding(str(exc)) from exc


def classify_A(f: ExpSum, z0: complex, epsilon: float, R: float, depth: int,
               ell_max: int) -> Classification:
    """Least ell <= ell_max with |f^{n+ell}(z0)| >= mu_eps^n(R) for every checkable n."""
    levels = _mu_levels(f, epsilon, R, depth)
    rec = iterate_orbit(f, z0, depth + ell_max)
    tried = []
    for ell in range(ell_max + 1):
        verdict, checked, witness = _dominates(rec, levels, ell, depth)
        tried.append({"ell": ell, "verdict": verdict, "checked": checked})
        if verdict == "ge":
            return Classification(Label.IN_A, checked, ell,
                                  {"epsilon": epsilon, "R": R, "tried": tried, "certificate": "finite-depth"})
    return Classification(Label.UNDETERMINED, 0, None, {"epsilon": epsilon, "R": R, "tried": tried})


# -- Julia criterion ----------------------------------------------------------------


def escapes_heuristically(rec: OrbitRecord, radius: float = ESCAPE_RADIUS,
                          steps: int = ESCAPE_STEPS) -> bool:
    """Overflowed, or |z_n| > radius while growing for ``steps`` consecutive steps."""
    if rec.overflow_depth is not None:
        return True
    mags = [abs(z) for z in rec.points]
    run = 0
    for prev, cur in zip(mags, mags[1:]):
        run = run + 1 if cur > prev else 0
        if run >= steps and cur > radius:
            return True
    return False


def julia_criterion(f: ExpSum, z0: complex, lam: float = 2.0, depth: int = 8, *,
                    start_index: int = 0, no_mcfc: bool = True) -> Classification:
    """Finite-depth check of the hypothesis |z_n f'(z_n)/f(z_n)| >= lam for n >= start_index.

    ``no_mcfc`` records that f has no multiply connected Fatou components
    (true for every exponential sum in the family), which upgrades the
    dichotomy to membership in J(f).
    """
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    rec = iterate_orbit(f, z0, depth)
    for k, fac in enumerate(rec.factors):
        if math.isnan(fac):
            raise ZeroValue(f"f(z_{k}) = 0", point=rec.points[k])
    details = {"lambda": lam, "start_index": start_index, "factors": rec.factors,
               "certificate": "partial (finite depth)"}
    escaping = escapes_heuristically(rec)
    tail = rec.factors[start_index:]
    details["escaping"] = escaping
    if not escaping or not tail or min(tail) < lam:
        if tail and min(tail) < lam:
            details["first_small_factor"] = start_index + next(i for i, v in enumerate(tail) if v < lam)
        return Classification(Label.UNDETERMINED, len(rec.factors), None, details)
    label = Label.JULIA if no_mcfc else Label.JULIA_OR_MCFC
    details["no_mcfc"] = no_mcfc
    return Classification(label, len(rec.factors), None, details)


def chain_rule_check(f: ExpSum, rec: OrbitRecord, n: int) -> tuple:
    """(prod factors / |z0|, |(f^n)'(z0)| / |f^n(z0)|) for n float-range steps."""
    if n > len(rec.points) - 1:
        raise ValueError("n exceeds the float-range depth of the record")
    lhs = math.prod(rec.factors[:n]) / abs(rec.z0)
    d = 1.0
    for k in range(n):
        d *= abs(derivative(f, rec.points[k]))
    return lhs, d / abs(rec.points[n])


# -- grid classification ------------------------------------------------------------

PALETTE = {
    Label.IN_AR: (255, 220, 40),
    Label.ESCAPING: (200, 60, 40),
    Label.NOT_IN_AR: (20, 30, 90),
    Label.UNDETERMINED: (128, 128, 128),
    Label.IN_A: (255, 160, 0),
    Label.JULIA_OR_MCFC: (120, 200, 120),
    Label.JULIA: (40, 160, 60),
}
_CODES = list(PALETTE)


@dataclass(frozen=True)
class Window:
    x0: float
    x1: float
    y0: float
    y1: float

    def pixel_centers(self, width: int, height: int) -> np.ndarray:
        """Row-major centers, top row first (largest imaginary part)."""
        xs = self.x0 + (np.arange(width) + 0.5) * (self.x1 - self.x0) / width
        ys = self.y1 - (np.arange(height) + 0.5) * (self.y1 - self.y0) / height
        return xs[None, :] + 1j * ys[:, None]


def classify_pixel(f: ExpSum, z: complex, R: float, depth: int, levels) -> Label:
    c = classify_AR(f, z, R, depth, levels=levels)
    if c.label is Label.NOT_IN_AR and escapes_heuristically(iterate_orbit(f, z, depth)):
        return Label.ESCAPING
    return c.label


def _row(args) -> list:
    f, row, R, depth, levels = args
    return [_CODES.index(classify_pixel(f, complex(z), R, depth, levels)) for z in row]


@dataclass
class GridResult:
    codes: np.ndarray
    window: Window
    params: dict

    def histogram(self) -> dict:
        counts = np.bincount(self.codes.reshape(-1), minlength=len(_CODES))
        return {lab.value: int(c) for lab, c in zip(_CODES, counts) if c}

    def labels(self) -> list:
        return [[_CODES[c] for c in row] for row in self.codes]

    def ppm_bytes(self) -> bytes:
        h, w = self.codes.shape
        rgb = np.array([PALETTE[lab] for lab in _CODES], dtype=np.uint8)[self.codes]
        return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()

    def sidecar(self) -> dict:
        h, w = self.codes.shape
        return {
            "window": [self.window.x0, self.window.x1, self.window.y0, self.window.y1],
            "resolution": [w, h],
            "params": self.params,
            "histogram": self.histogram(),
            "palette": {lab.value: list(PALETTE[lab]) for lab in _CODES},
        }

    def write(self, ppm_path: str, json_path: str | None = None) -> None:
        with open(ppm_path, "wb") as fh:
            fh.write(self.ppm_bytes())
        if json_path is None:
            json_path = os.path.splitext(ppm_path)[0] + ".json"
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def classify_grid(f: ExpSum, window: Window, resolution: tuple, *, R: float = 10.0, depth: int = 4,
                  workers: int = 1) -> GridResult:
    """Label every pixel center; rows are farmed out to a process pool when workers > 1."""
    width, height = resolution
    if width < 2 or height < 2:
        raise ValueError("resolution must be at least 2x2")
    levels = iterate_max_modulus_levels(f, R, depth)
    z = window.pixel_centers(width, height)
    jobs = [(f, z[i], R, depth, levels) for i in range(height)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row, jobs))
    else:
        rows = [_row(j) for j in jobs]
    params = {"family": f.describe(), "R": R, "depth": depth}
    return GridResult(np.array(rows, dtype=np.uint8), window, params)
