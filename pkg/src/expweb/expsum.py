"""Exponential sums f(z) = sum_k a_k exp(w^k z), w = exp(2 pi i / n).

Scalar evaluation uses error-free (``math.fsum``) summation of the real and
imaginary parts.  Everything that must survive arguments far outside the
float range goes through :func:`dominant_sums`, which factors out the
largest term so that only ratios of modulus <= 1 are ever exponentiated.
"""

from __future__ import annotations

import cmath
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ExpSumOverflow, NotExpanding, ZeroValue
from .tower import TowerBracket, TowerReal, add_const
from .tower import scale as tower_scale

LOG_FLOAT_MAX = 709.782712893384
DEFAULT_ANGULAR_SAMPLES = 4096
DEFAULT_ANGULAR_TOL = 1e-12
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _root_of_unity(k: int, n: int) -> complex:
    # exact values on the axes so that e.g. cos z + cosh z is real on R
    k %= n
    if (4 * k) % n == 0:
        return (1, 1j, -1, -1j)[(4 * k) // n]
    return cmath.exp(2j * math.pi * k / n)


@dataclass(frozen=True)
class ExpSum:
    """An element of E_n: order ``n`` and nonzero coefficients a_0..a_{n-1}."""

    coeffs: tuple
    name: str | None = None

    def __post_init__(self):
        coeffs = tuple(complex(a) for a in self.coeffs)
        if not coeffs:
            raise ValueError("an exponential sum needs at least one coefficient")
        for k, a in enumerate(coeffs):
            if not (math.isfinite(a.real) and math.isfinite(a.imag)):
                raise ValueError(f"coefficient a_{k} is not finite")
            if a == 0:
                raise ValueError(f"coefficient a_{k} must be nonzero")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def equal(cls, n: int, value: complex = 1.0) -> ExpSum:
        return cls((value,) * n, name=f"en:{n}")

    @classmethod
    def cos_plus_cosh(cls) -> ExpSum:
        return cls((0.5, 0.5, 0.5, 0.5), name="cosx")

    @property
    def n(self) -> int:
        return len(self.coeffs)

    @cached_property
    def omega_powers(self) -> tuple:
        return tuple(_root_of_unity(k, self.n) for k in range(self.n))

    @cached_property
    def _arrays(self):
        a = np.array(self.coeffs, dtype=complex)
        w = np.array(self.omega_powers, dtype=complex)
        return a, w, np.log(a)

    @property
    def abs_min(self) -> float:
        return min(abs(a) for a in self.coeffs)

    @property
    def abs_max(self) -> float:
        return max(abs(a) for a in self.coeffs)

    @property
    def abs_sum(self) -> float:
        return math.fsum(abs(a) for a in self.coeffs)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "coeffs": [[a.real, a.imag] for a in self.coeffs],
        }

    def __call__(self, z: complex) -> complex:
        return evaluate(self, z)


def _csum(values: Sequence[complex]) -> complex:
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


def _terms(f: ExpSum, z: complex, weights=None) -> list:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"non-finite argument {z!r}")
    out = []
    for k, (a, w) in enumerate(zip(f.coeffs, f.omega_powers)):
        e = w * z
        if e.real + math.log(abs(a)) > LOG_FLOAT_MAX:
            raise ExpSumOverflow(f"term {k} overflows at z={z!r}")
        t = a * cmath.exp(e)
        if weights is not None:
            t *= weights[k]
        out.append(t)
    return out


def evaluate(f: ExpSum, z: complex) -> complex:
    return _csum(_terms(f, z))


def derivative(f: ExpSum, z: complex, order: int = 1) -> complex:
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    weights = [w**order for w in f.omega_powers]
    return _csum(_terms(f, z, weights))


def _psi_terms(f: ExpSum, p: int, z: complex, power: int) -> list:
    if not 0 <= p < f.n:
        raise IndexError(f"sector index {p} out of range for n={f.n}")
    z = complex(z)
    ap, wp = f.coeffs[p], f.omega_powers[p]
    out = []
    for k, (a, w) in enumerate(zip(f.coeffs, f.omega_powers)):
        if k == p:
            continue
        d = w - wp
        e = d * z + cmath.log(a / ap)
        if e.real > LOG_FLOAT_MAX:
            raise ExpSumOverflow(f"ratio of term {k} to term {p} overflows at z={z!r}")
        out.append(cmath.exp(e) * d**power)
    return out


def psi(f: ExpSum, p: int, z: complex) -> complex:
    """Relative error of f against its p-th term, summed from the other terms."""
    return _csum(_psi_terms(f, p, z, 0))


def psi_derivatives(f: ExpSum, p: int, z: complex) -> tuple:
    """(psi_p, psi_p', psi_p'') at z."""
    return tuple(_csum(_psi_terms(f, p, z, j)) for j in range(3))


class DominantSums(NamedTuple):
    """f^(j)(z) = exp(log_scale) * s_j with |ratio terms| <= 1 (when p is the argmax)."""

    p: np.ndarray
    log_scale: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    psi: np.ndarray


def dominant_sums(f: ExpSum, z, p=None) -> DominantSums:
    """Vectorised factorisation f = a_p exp(w^p z) * s0 (and likewise f', f'').

    ``p`` defaults to the index of the largest term at each point.  Works for
    arguments whose terms are far beyond the float range.
    """
    a, w, loga = f._arrays
    z = np.asarray(z, dtype=complex)
    expo = loga[:, None] + w[:, None] * z.reshape(1, -1)
    if p is None:
        idx = np.argmax(expo.real, axis=0)
    else:
        idx = np.broadcast_to(np.asarray(p, dtype=int), (z.size,)).reshape(-1)
    cols = np.arange(z.size)
    scale_ = expo[idx, cols]
    ratio = np.exp(expo - scale_[None, :])
    ratio[idx, cols] = 0.0
    psi_ = ratio.sum(axis=0)
    ratio[idx, cols] = 1.0
    s0 = 1.0 + psi_
    s1 = (ratio * w[:, None]).sum(axis=0)
    s2 = (ratio * (w**2)[:, None]).sum(axis=0)
    shape = z.shape
    return DominantSums(
        idx.reshape(shape),
        scale_.reshape(shape),
        s0.reshape(shape),
        s1.reshape(shape),
        s2.reshape(shape),
        psi_.reshape(shape),
    )


def psi_many(f: ExpSum, p: int, z) -> tuple:
    """Vectorised (psi_p, psi_p', psi_p'') with the p-th term factored out."""
    a, w, loga = f._arrays
    z = np.asarray(z, dtype=complex)
    expo = loga[:, None] + (w[:, None] - w[p]) * z.reshape(1, -1) - loga[p]
    ratio = np.exp(np.delete(expo, p, axis=0))
    d = np.delete(w - w[p], p)[:, None]
    out = (ratio.sum(axis=0), (ratio * d).sum(axis=0), (ratio * d * d).sum(axis=0))
    return tuple(v.reshape(z.shape) for v in out)


def log_abs_f(f: ExpSum, z) -> np.ndarray:
    d = dominant_sums(f, z)
    with np.errstate(divide="ignore"):
        return d.log_scale.real + np.log(np.abs(d.s0))


def log_evaluate(f: ExpSum, z: complex) -> complex:
    """A logarithm of f(z) (branch fixed by the dominant term); never overflows."""
    d = dominant_sums(f, np.array([z]))
    if d.s0[0] == 0:
        raise ZeroValue("f(z) = 0", point=complex(z))
    return complex(d.log_scale[0] + np.log(d.s0[0]))


def log_derivative_factor(f: ExpSum, z: complex) -> float:
    """|z f'(z) / f(z)|."""
    d = dominant_sums(f, np.array([z]))
    s0, s1 = complex(d.s0[0]), complex(d.s1[0])
    if s0 == 0:
        raise ZeroValue("f(z) = 0: the logarithmic derivative is undefined", point=complex(z))
    return abs(complex(z)) * abs(s1 / s0)


# -- maximum modulus -------------------------------------------------------------


def _log_abs_on_circle(f: ExpSum, r: float, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    z = r * np.cos(theta) + 1j * (r * np.sin(theta))
    return log_abs_f(f, z)


def _log_abs_at_angle(f: ExpSum, r: float, t: float) -> float:
    """Scalar log|f(r e^{it})| in dominant-term form; same arithmetic as log_abs_f."""
    z = complex(r * math.cos(t), r * math.sin(t))
    _, w, loga = f._arrays
    expo = [complex(la) + complex(wk) * z for la, wk in zip(loga, w)]
    top = max(range(len(expo)), key=lambda k: expo[k].real)
    acc = complex(0.0)
    for k, e in enumerate(expo):
        if k != top:
            acc += cmath.exp(e - expo[top])
    s0 = 1.0 + acc
    if s0 == 0:
        return -math.inf
    return expo[top].real + math.log(abs(s0))


def golden_section_max(func, lo: float, hi: float, tol: float) -> tuple:
    """Maximise a unimodal ``func`` on [lo, hi]; returns (argmax, max)."""
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = func(x1), func(x2)
    while hi - lo > tol:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = func(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = func(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def max_modulus_search(
    f: ExpSum,
    r: float,
    samples: int = DEFAULT_ANGULAR_SAMPLES,
    tol: float = DEFAULT_ANGULAR_TOL,
    candidates: int = 8,
) -> tuple:
    """(log M(r, f), maximising angle): dense sampling, then golden refinement."""
    if not r > 0:
        raise ValueError("radius must be positive")
    theta = 2.0 * math.pi * np.arange(samples) / samples
    vals = _log_abs_on_circle(f, r, theta)
    step = 2.0 * math.pi / samples
    best_i = int(np.argmax(vals))
    best_t, best_v = float(theta[best_i]), float(vals[best_i])
    left, right = np.roll(vals, 1), np.roll(vals, -1)
    peaks = np.flatnonzero((vals >= left) & (vals >= right))
    peaks = peaks[np.argsort(-vals[peaks], kind="stable")][:candidates]

    def g(t):
        return _log_abs_at_angle(f, r, t)

    for i in peaks:
        t0 = float(theta[i])
        t, v = golden_section_max(g, t0 - step, t0 + step, tol)
        if v > best_v:
            best_t, best_v = t % (2.0 * math.pi), v
    return best_v, best_t


def log_max_modulus(f: ExpSum, r: float, samples: int = DEFAULT_ANGULAR_SAMPLES,
                    tol: float = DEFAULT_ANGULAR_TOL) -> float:
    return max_modulus_search(f, r, samples, tol)[0]


def max_modulus(f: ExpSum, r: float, samples: int = DEFAULT_ANGULAR_SAMPLES,
                tol: float = DEFAULT_ANGULAR_TOL) -> float:
    """M(r, f) = max |f| on |z| = r."""
    lm = log_max_modulus(f, r, samples, tol)
    if lm > LOG_FLOAT_MAX:
        raise ExpSumOverflow(f"M({r}, f) exceeds the float range; use log_max_modulus")
    return math.exp(lm)


def growth_constants(f: ExpSum) -> tuple:
    """(alpha_1, alpha_2) with r + alpha_1 <= log M(r) <= r + alpha_2 for large r."""
    return math.log(f.abs_min / 2.0), math.log(f.abs_sum)


def max_modulus_log_bounds(f: ExpSum, r: float) -> tuple:
    """Heuristic lower / rigorous upper bound on log M(r, f).

    The lower bound only holds once a single term dominates on the positive
    axis of its sector (r beyond the nu' certificate).
    """
    a1, a2 = growth_constants(f)
    return r + a1, r + a2


def iterate_max_modulus_levels(
    f: ExpSum,
    R: float,
    depth: int,
    *,
    radius_scale: float = 1.0,
    samples: int = DEFAULT_ANGULAR_SAMPLES,
) -> list:
    """Like :func:`iterate_max_modulus_tower` but each level is ``(bracket, log_value)``.

    ``log_value`` is the float log M of that level while it is computed
    directly, and ``None`` once the level is only known as a bracket.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    first = log_max_modulus(f, radius_scale * R, samples)
    if not first > math.log(R):
        raise NotExpanding(f"M({radius_scale * R:g}, f) = {math.exp(first):g} does not exceed R = {R:g}")
    a1, a2 = growth_constants(f)
    levels = []
    radius: float | None = float(R)
    bracket: TowerBracket | None = None
    for _ in range(depth):
        lm = None
        if radius is not None:
            lm = log_max_modulus(f, radius_scale * radius, samples)
            bracket = TowerBracket.from_log(lm)
            radius = math.exp(lm) if lm < math.log(1e300) else None
        else:
            lo = bracket.lower
            hi = bracket.upper
            if radius_scale != 1.0:
                lo = tower_scale(lo, radius_scale, upward=False)
                hi = tower_scale(hi, radius_scale, upward=True)
            lo = add_const(lo, a1, upward=False).exp("down")
            hi = add_const(hi, a2, upward=True).exp("up")
            bracket = TowerBracket(lo, hi)
        levels.append((bracket, lm))
    return levels


def iterate_max_modulus_tower(
    f: ExpSum,
    R: float,
    depth: int,
    *,
    radius_scale: float = 1.0,
    samples: int = DEFAULT_ANGULAR_SAMPLES,
) -> list:
    """Brackets for M^n(R, f), n = 1..depth (or mu^n(R) with mu(r) = M(c r, f)).

    Levels whose radius is a finite float are computed directly from
    :func:`log_max_modulus` (point brackets); beyond that both tracks advance
    with the growth constants, the upper with log sum|a_k| and the lower with
    log(min|a_k| / 2).
    """
    levels = iterate_max_modulus_levels(f, R, depth, radius_scale=radius_scale, samples=samples)
    return [b for b, _ in levels]


__all__ = [
    "ExpSum",
    "DominantSums",
    "evaluate",
    "derivative",
    "psi",
    "psi_derivatives",
    "dominant_sums",
    "psi_many",
    "log_abs_f",
    "log_evaluate",
    "log_derivative_factor",
    "golden_section_max",
    "max_modulus_search",
    "log_max_modulus",
    "max_modulus",
    "growth_constants",
    "max_modulus_log_bounds",
    "iterate_max_modulus_tower",
    "iterate_max_modulus_levels",
    "TowerReal",
]
