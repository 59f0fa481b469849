"""Plane decomposition into the n-gon P(nu), half-strips Q_k and sectors R_p(nu).

Conventions
-----------
* Polygon side ``p`` is the one facing sector ``R_p``; it lies on the line
  ``Re(w^p z) = nu`` (side 0 is ``Re z = nu``).
* Vertex ``j`` sits at angle ``(2j+1) pi / n`` between sides ``-j`` and
  ``-(j+1)`` (mod n).
* Strip ``Q_k`` has its axis at angle ``(1 - 2k) pi / n``, so it is centred
  on vertex ``-k mod n``.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NuTooSmall
from .expsum import ExpSum

BOUNDARY_TOL = 1e-12

# integer codes used by the vectorised locator
POLYGON, STRIP, COMPONENT, BOUNDARY = 0, 1, 2, 3
_KIND_NAMES = {POLYGON: "polygon", STRIP: "strip", COMPONENT: "component", BOUNDARY: "boundary"}


class Location(NamedTuple):
    kind: str
    index: int | None = None

    def __str__(self):
        return self.kind if self.index is None else f"{self.kind}({self.index})"


IN_POLYGON = Location("polygon")
ON_BOUNDARY = Location("boundary")


def in_strip(k: int) -> Location:
    return Location("strip", k)


def in_component(p: int) -> Location:
    return Location("component", p)


@dataclass(frozen=True)
class Line:
    """Oriented line ``point + t * direction`` (``direction`` has modulus 1)."""

    point: complex
    direction: complex

    @property
    def normal(self) -> complex:
        # right-hand normal; for the upward line Re z = nu this is +1
        return -1j * self.direction

    def signed_distance(self, z):
        return np.real((np.asarray(z) - self.point) * np.conj(self.normal))

    def intersect(self, other: Line) -> complex:
        e = other.direction
        cross = (np.conj(e) * self.direction).imag
        if abs(cross) < 1e-15:
            raise ValueError("parallel lines")
        t = (np.conj(e) * (other.point - self.point)).imag / cross
        return complex(self.point + t * self.direction)

    def project(self, z: complex) -> complex:
        t = ((z - self.point) * np.conj(self.direction)).real
        return self.point + t * self.direction


@dataclass(frozen=True)
class RegionDecomposition:
    f: ExpSum
    nu: float
    tau: float

    def __post_init__(self):
        if not (self.nu > 0 and self.tau > 0):
            raise ValueError("nu and tau must be positive")

    @property
    def n(self) -> int:
        return self.f.n

    @property
    def apothem(self) -> float:
        return self.nu

    def vertex(self, j: int) -> complex:
        n = self.n
        return self.nu / math.cos(math.pi / n) * cmath.exp((2 * (j % n) + 1) * 1j * math.pi / n)

    @property
    def vertices(self) -> list:
        return [self.vertex(j) for j in range(self.n)]

    def side_normal(self, p: int) -> complex:
        return cmath.exp(-2j * math.pi * (p % self.n) / self.n)

    def strip_axis(self, k: int) -> complex:
        return cmath.exp((1 - 2 * (k % self.n)) * 1j * math.pi / self.n)

    def side_segment(self, p: int) -> tuple:
        """Endpoints (counter-clockwise) of the side of P(nu) facing R_p."""
        u = self.side_normal(p)
        half = self.nu * math.tan(math.pi / self.n)
        mid = self.nu * u
        return mid - half * 1j * u, mid + half * 1j * u

    # -- vectorised core -------------------------------------------------
    @property
    def _normals(self) -> np.ndarray:
        return np.array([self.side_normal(p) for p in range(self.n)])

    @property
    def _axes(self) -> np.ndarray:
        return np.array([self.strip_axis(k) for k in range(self.n)])

    def polygon_excess(self, z) -> np.ndarray:
        """max_p Re(w^p z) - nu: negative inside P(nu), zero on its boundary."""
        z = np.asarray(z, dtype=complex)
        proj = np.real(z[..., None] * np.conj(self._normals))
        return proj.max(axis=-1) - self.nu

    def strip_coords(self, z) -> np.ndarray:
        """z rotated into the frame of every strip, shape (..., n)."""
        z = np.asarray(z, dtype=complex)
        return z[..., None] * np.conj(self._axes)

    def boundary_pieces(self) -> tuple:
        """(segments, rays) forming the union of all region boundaries."""
        segs = [self.side_segment(p) for p in range(self.n)]
        rays = []
        for k in range(self.n):
            axis = self.strip_axis(k)
            for sgn in (1.0, -1.0):
                p0 = sgn * self.tau * 1j * axis
                # exit parameter for this edge specifically
                if self.polygon_excess(np.array([p0]))[0] >= 0:
                    t0 = 0.0
                    segs.append((p0, -p0))
                else:
                    t0 = math.inf
                    for u in self._normals:
                        rate = (axis * np.conj(u)).real
                        if rate > 1e-15:
                            t0 = min(t0, (self.nu - (p0 * np.conj(u)).real) / rate)
                rays.append((p0 + t0 * axis, axis))
        return segs, rays

    def locate_codes(self, z) -> tuple:
        """Vectorised locate: (kind codes, indices) arrays."""
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        z = z.reshape(-1)
        kinds = np.full(z.shape, COMPONENT, dtype=np.int8)
        index = np.full(z.shape, -1, dtype=np.int64)
        scale = np.maximum(1.0, np.abs(z))
        tol = BOUNDARY_TOL * scale

        excess = self.polygon_excess(z)
        w = self.strip_coords(z)
        in_q = (w.real > 0) & (np.abs(w.imag) < self.tau)
        on_q_edge = (w.real >= -tol[:, None]) & (np.abs(np.abs(w.imag) - self.tau) <= tol[:, None])

        inside = excess < -tol
        on_poly = np.abs(excess) <= tol
        outside = excess > tol
        strip_hit = in_q & ~(np.abs(np.abs(w.imag) - self.tau) <= tol[:, None])

        kinds[inside] = POLYGON
        any_strip = outside & strip_hit.any(axis=1)
        kinds[any_strip] = STRIP
        index[any_strip] = np.argmax(strip_hit[any_strip], axis=1)

        comp = outside & ~strip_hit.any(axis=1)
        n = self.n
        ang = np.angle(z[comp])
        index[comp] = np.mod(np.rint(-ang * n / (2 * math.pi)).astype(np.int64), n)

        boundary = on_poly | (outside & on_q_edge.any(axis=1) & ~strip_hit.any(axis=1))
        kinds[boundary] = BOUNDARY
        index[boundary] = -1
        return kinds.reshape(shape), index.reshape(shape)

    def boundary_distance_many(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        z = z.reshape(-1)
        segs, rays = self.boundary_pieces()
        best = np.full(z.shape, np.inf)
        for a, b in segs:
            best = np.minimum(best, _dist_segment(z, a, b))
        for p0, d in rays:
            best = np.minimum(best, _dist_ray(z, p0, d))
        return best.reshape(shape)


def _dist_segment(z, a, b):
    ab = b - a
    L2 = abs(ab) ** 2
    t = np.clip(np.real((z - a) * np.conj(ab)) / L2, 0.0, 1.0)
    return np.abs(z - (a + t * ab))


def _dist_ray(z, p0, d):
    t = np.maximum(np.real((z - p0) * np.conj(d)), 0.0)
    return np.abs(z - (p0 + t * d))


def locate(dec: RegionDecomposition, z: complex) -> Location:
    kinds, idx = dec.locate_codes(np.array([z]))
    k, i = int(kinds[0]), int(idx[0])
    if k == POLYGON:
        return IN_POLYGON
    if k == BOUNDARY:
        return ON_BOUNDARY
    return Location(_KIND_NAMES[k], i)


def boundary_distance(dec: RegionDecomposition, z: complex) -> float:
    """Distance from z to the boundary of the region that contains it."""
    return float(dec.boundary_distance_many(np.array([z]))[0])


def gamma_line(dec: RegionDecomposition, p: int) -> Line:
    """The full line through the polygon side facing R_p, oriented counter-clockwise."""
    u = dec.side_normal(p)
    return Line(dec.nu * u, 1j * u)


# -- cut-corner polygon ----------------------------------------------------------


def _vertex_sides(n: int, j: int) -> tuple:
    """Sectors (p, p') whose sides meet at vertex j, in counter-clockwise order."""
    return (-j) % n, (-(j + 1)) % n


def cut_log_ratio(f: ExpSum, j: int) -> complex:
    p, q = _vertex_sides(f.n, j)
    return cmath.log(f.coeffs[q] / f.coeffs[p])


def cut_line(f: ExpSum, j: int, m: int, c=None) -> Line:
    """Line on which the two terms dominant at vertex j have equal argument.

    ``Im((w^{p'} - w^p) z + c_j) = 2 m pi`` with ``c_j = log(a_{p'} / a_p)``
    (principal branch unless ``c`` is given).  Oriented counter-clockwise,
    i.e. from side p towards side p'.
    """
    n = f.n
    if n < 3:
        raise ValueError("cut lines need n >= 3")
    p, q = _vertex_sides(n, j)
    A = f.omega_powers[q] - f.omega_powers[p]
    if c is None:
        c = cut_log_ratio(f, j)
    k = 2 * m * math.pi - complex(c).imag
    phi = cmath.phase(A)
    point = 1j * cmath.exp(-1j * phi) * k / abs(A)
    direction = cmath.exp(-1j * phi)
    v = cmath.exp((2 * j + 1) * 1j * math.pi / n)
    if (direction * (-1j * v).conjugate()).real > 0:
        # make the chord run counter-clockwise around the origin
        direction = -direction
    return Line(point, direction)


def cut_distance(f: ExpSum, j: int, m: int, c=None) -> float:
    """Distance from 0 to cut_line(j, m) measured along the vertex direction."""
    n = f.n
    s = math.sin(math.pi / n)
    if c is None:
        c = cut_log_ratio(f, j)
    return (complex(c).imag - 2 * m * math.pi) / (2 * s)


@dataclass(frozen=True)
class ClosedPolyline:
    vertices: tuple
    tag: str = "P"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(complex(v) for v in self.vertices))

    def __len__(self):
        return len(self.vertices)

    def edges(self):
        vs = self.vertices
        return [(vs[i], vs[(i + 1) % len(vs)]) for i in range(len(vs))]

    @property
    def signed_area(self) -> float:
        vs = np.array(self.vertices)
        return 0.5 * float(np.sum((np.conj(vs) * np.roll(vs, -1)).imag))

    @property
    def perimeter(self) -> float:
        return math.fsum(abs(b - a) for a, b in self.edges())

    def is_simple(self) -> bool:
        es = self.edges()
        m = len(es)
        for i in range(m):
            for j in range(i + 1, m):
                if j == i + 1 or (i == 0 and j == m - 1):
                    continue
                if _segments_intersect(*es[i], *es[j]):
                    return False
        return True

    def contains(self, z) -> np.ndarray:
        """Even-odd point-in-polygon test (vectorised)."""
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        inside = np.zeros(z.shape, dtype=bool)
        for a, b in self.edges():
            cond = (a.imag > y) != (b.imag > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = a.real + (y - a.imag) * (b.real - a.real) / (b.imag - a.imag)
            inside ^= cond & (x < xc)
        return inside

    def distance_to(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        best = np.full(z.shape, np.inf)
        for a, b in self.edges():
            best = np.minimum(best, _dist_segment(z, a, b))
        return best

    @property
    def max_modulus(self) -> float:
        return max(abs(v) for v in self.vertices)

    def to_json(self) -> list:
        return [[v.real, v.imag] for v in self.vertices]

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data, tag: str = "P") -> ClosedPolyline:
        return cls(tuple(complex(x, y) for x, y in data), tag)


def _orient(a, b, c) -> float:
    return ((b - a).conjugate() * (c - a)).imag


def _segments_intersect(a, b, c, d) -> bool:
    d1, d2 = _orient(c, d, a), _orient(c, d, b)
    d3, d4 = _orient(a, b, c), _orient(a, b, d)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def polygon(dec: RegionDecomposition) -> ClosedPolyline:
    return ClosedPolyline(tuple(dec.vertices), tag="P")


def truncated_polygon(f: ExpSum, nu: float, tau: float, *, c_branches=None) -> ClosedPolyline:
    """P'(nu): P(nu) with each vertex replaced by a chord along a cut line.

    For each vertex the chosen cut line is the admissible one closest to the
    vertex (the least m), where admissible means it meets both adjacent sides
    between their midpoints and the vertex, outside the strip centred there.
    ``meta['m']`` records the selected m per vertex.
    """
    n = f.n
    if n < 3:
        raise ValueError("P'(nu) needs n >= 3")
    dec = RegionDecomposition(f, nu, tau)
    s, c = math.sin(math.pi / n), math.cos(math.pi / n)
    d_lo = nu * c
    d_hi = (nu - tau * s) / c
    pts = []
    ms = []
    for j in range(n):
        cj = cut_log_ratio(f, j) if c_branches is None else c_branches[j]
        # d(m) decreases in m; the least admissible m gives the largest d <= d_hi
        m = math.ceil((complex(cj).imag - 2 * s * d_hi) / (2 * math.pi))
        d = cut_distance(f, j, m, cj)
        while d > d_hi * (1 + 1e-15):
            m += 1
            d = cut_distance(f, j, m, cj)
        if d < d_lo:
            raise NuTooSmall(f"no admissible cut line at vertex {j} for nu={nu:g}, tau={tau:g}")
        line = cut_line(f, j, m, cj)
        p, q = _vertex_sides(n, j)
        z0 = line.intersect(gamma_line(dec, p))
        z1 = line.intersect(gamma_line(dec, q))
        pts.extend([z0, z1])
        ms.append(m)
    poly = ClosedPolyline(tuple(pts), tag="P'", meta={"nu": nu, "tau": tau, "m": ms})
    mods = [abs(v) for v in pts]
    # |z| is minimal at the chord foot or the side midpoints; maximal at a chord end
    min_mod = min(min(cut_distance(f, j, ms[j], None if c_branches is None else c_branches[j])
                      for j in range(n)), nu)
    if min_mod < nu * (1 - 1e-12) or max(mods) > 2 * nu * (1 + 1e-12):
        raise NuTooSmall(f"P'({nu:g}) violates nu <= |z| <= 2 nu on its boundary")
    return poly


def sample_boundary(poly: ClosedPolyline, count: int) -> np.ndarray:
    """Arc-length-uniform boundary samples starting at vertex 0; first point repeated last."""
    if count < len(poly):
        raise ValueError(f"need at least {len(poly)} samples")
    vs = np.array(poly.vertices + (poly.vertices[0],))
    seg = np.abs(np.diff(vs))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    s = total * np.arange(count) / count
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - cum[i]) / seg[i]
    out = vs[i] + t * (vs[i + 1] - vs[i])
    return np.concatenate([out, out[:1]])
