"""Level-index ("tower") reals for quantities far beyond the float range.

A canonical ``TowerReal(h, x)`` stands for exp(exp(...exp(x))) with ``h``
exponentials.  For ``h >= 1`` the top satisfies ``1 <= x < e``; for
``h == 0`` it is an ordinary float below ``e``.  With that convention the
lexicographic order on ``(h, x)`` is the numeric order.

Directional helpers (``add_const``, ``scale``, ``exp_of``) round outward so
that a pair of towers can be carried as a certified lower/upper bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering

E = math.e
_BIG = 1e300


def _nudge(x: float, rounding: str | None) -> float:
    if rounding == "up":
        return math.nextafter(x, math.inf)
    if rounding == "down":
        return math.nextafter(x, -math.inf)
    return x


@total_ordering
@dataclass(frozen=True)
class TowerReal:
    height: int
    top: float

    def __post_init__(self):
        if self.height < 0:
            raise ValueError("tower height must be nonnegative")
        if not math.isfinite(self.top):
            raise ValueError(f"tower top must be finite, got {self.top!r}")

    # -- construction -----------------------------------------------------
    @classmethod
    def normalized(cls, height: int, top: float, rounding: str | None = None) -> TowerReal:
        h, x = int(height), float(top)
        if not math.isfinite(x):
            raise ValueError(f"cannot build a tower from {x!r}")
        while x >= E:
            x = _nudge(math.log(x), rounding)
            h += 1
        while h >= 1 and x < 1.0:
            x = _nudge(math.exp(x), rounding)
            h -= 1
        return cls(h, x)

    @classmethod
    def from_float(cls, value: float, rounding: str | None = None) -> TowerReal:
        return cls.normalized(0, value, rounding)

    @classmethod
    def from_log(cls, log_value: float, rounding: str | None = None) -> TowerReal:
        """Tower for exp(log_value); works for any finite float."""
        return cls.normalized(1, log_value, rounding)

    @property
    def is_canonical(self) -> bool:
        if self.height == 0:
            return self.top < E
        return 1.0 <= self.top < E

    def normalize(self) -> TowerReal:
        return TowerReal.normalized(self.height, self.top)

    # -- conversion ---------------------------------------------------------
    def to_float(self, rounding: str | None = None) -> float:
        """Value as a float, ``inf`` when it does not fit.

        With ``rounding`` each exp is nudged one ulp in that direction, which
        covers the (sub-ulp) error of ``math.exp``.
        """
        x = self.top
        for _ in range(self.height):
            if x > 709.782712893384:
                return math.inf
            x = _nudge(math.exp(x), rounding)
        return x

    def log(self, rounding: str | None = None) -> TowerReal:
        if self.height >= 1:
            return TowerReal.normalized(self.height - 1, self.top, rounding)
        if self.top <= 0:
            raise ValueError("log of a nonpositive tower")
        return TowerReal.normalized(0, _nudge(math.log(self.top), rounding), rounding)

    def exp(self, rounding: str | None = None) -> TowerReal:
        return TowerReal.normalized(self.height + 1, self.top, rounding)

    def to_json(self) -> dict:
        return {"height": self.height, "top": self.top}

    @classmethod
    def from_json(cls, obj: dict) -> TowerReal:
        return cls(int(obj["height"]), float(obj["top"]))

    # -- ordering -----------------------------------------------------------
    def _key(self):
        t = self if self.is_canonical else self.normalize()
        return (t.height, t.top)

    def __eq__(self, other):
        if not isinstance(other, TowerReal):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __lt__(self, other):
        if not isinstance(other, TowerReal):
            return NotImplemented
        return self._key() < other._key()

    def __repr__(self):
        v = self.to_float()
        if math.isfinite(v):
            return f"TowerReal({self.height}, {self.top!r} ~ {v:.6g})"
        return f"TowerReal({self.height}, {self.top!r})"


def _as_small_float(t: TowerReal, rounding: str | None = None) -> float | None:
    v = t.to_float(rounding)
    if math.isfinite(v) and abs(v) < _BIG:
        return v
    return None


def add_const(t: TowerReal, a: float, *, upward: bool) -> TowerReal:
    """Outward-rounded tower for ``t + a``.

    Once ``t`` exceeds 1e300 the shift is far below one ulp of log(t), so the
    result is either ``t`` itself (the conservative side) or ``t`` nudged one
    ulp at the deepest float-representable level.
    """
    rounding = "up" if upward else "down"
    v = _as_small_float(t, rounding)
    if v is not None:
        return TowerReal.from_float(_nudge(v + a, rounding), rounding)
    if a == 0 or (a > 0) != upward:
        return t
    return add_const(t.log(rounding), 0.0, upward=upward).exp(rounding)


def scale(t: TowerReal, c: float, *, upward: bool) -> TowerReal:
    """Outward-rounded tower for ``c * t`` with ``c > 0`` and ``t > 0``."""
    if c <= 0:
        raise ValueError("scale factor must be positive")
    rounding = "up" if upward else "down"
    v = _as_small_float(t, rounding)
    if v is not None:
        return TowerReal.from_float(_nudge(v * c, rounding), rounding)
    if c == 1.0:
        return t
    shift = _nudge(math.log(c), rounding)
    return add_const(t.log(rounding), shift, upward=upward).exp(rounding)


def exp_of(t: TowerReal, *, upward: bool) -> TowerReal:
    return t.exp("up" if upward else "down")


@dataclass(frozen=True)
class TowerBracket:
    """Certified enclosure ``lower <= value <= upper``."""

    lower: TowerReal
    upper: TowerReal

    def __post_init__(self):
        if self.upper < self.lower:
            raise ValueError("bracket with upper < lower")

    @classmethod
    def exact(cls, t: TowerReal) -> TowerBracket:
        return cls(t, t)

    @classmethod
    def from_float(cls, v: float) -> TowerBracket:
        return cls.exact(TowerReal.from_float(v))

    @classmethod
    def from_log(cls, log_value: float) -> TowerBracket:
        return cls.exact(TowerReal.from_log(log_value))

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper

    def certainly_ge(self, other: TowerBracket) -> bool:
        return self.lower >= other.upper

    def certainly_lt(self, other: TowerBracket) -> bool:
        return self.upper < other.lower

    def to_json(self) -> dict:
        return {"lower": self.lower.to_json(), "upper": self.upper.to_json()}
