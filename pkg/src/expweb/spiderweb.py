"""Domains G_n = P'(beta^n(nu)) and numeric checks of the two spider's web conditions.

The first few domains are explicit polygons; once beta^n(nu) leaves the
float range a domain is kept only as a tower bracket for its nu-parameter.
Explicit steps are checked by sampling |f| on the boundary (in log space, so
nu may be large) and by the winding number of f(boundary) about 0.  Symbolic
steps are certified from the inequality chain with the measured epsilon',
which is an extrapolation and is reported as such.
"""

from __future__ import annotations

import contextvars
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NuTooSmall, OrderTooSmall, WindingUnstable
from .estimates import tau_for
from .expsum import ExpSum, dominant_sums, iterate_max_modulus_levels, log_max_modulus
from .geometry import ClosedPolyline, sample_boundary, truncated_polygon
from .tower import TowerBracket, TowerReal, add_const

MARGIN = 0.1
EXPLICIT_LIMIT = 1e12
CHUNK = 1 << 18
MAX_WINDING_SAMPLES = 1 << 25

_UNCHECKED = contextvars.ContextVar("expweb_unchecked_web", default=False)


def require_web_order(f: ExpSum) -> None:
    if f.n < 3:
        raise OrderTooSmall(
            f"n = {f.n}: E_1 and E_2 lie in class B, and for f in class B the set A_R(f) "
            "is not a spider's web; the construction needs n >= 3"
        )


def kappa(n: int, tau: float) -> float:
    return 2 * math.pi / math.tan(math.pi / n) + 2 * tau * math.sin(math.pi / n)


# -- epsilon' -----------------------------------------------------------------------


@dataclass
class EpsilonPrime:
    value: float
    nu: float
    raw_min: float
    side_min: float
    chord_min: float
    chord_mins: list
    side_ok: bool
    chord_ok: bool
    floor: float
    samples: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _edge_samples(a: complex, b: complex, count: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, count)
    return a + t * (b - a)


def epsilon_prime_report(f: ExpSum, nu: float, boundary_samples: int = 4096, *,
                         tau: float | None = None, margin: float = MARGIN) -> EpsilonPrime:
    """Measure min |f| / e^nu on the boundary of P'(nu), sides and cut chords separately."""
    require_web_order(f)
    tau = tau_for(f) if tau is None else tau
    poly = truncated_polygon(f, nu, tau)
    k = kappa(f.n, tau)
    side_logs, chord_logs = [], []
    side_ok = chord_ok = True
    for i, (a, b) in enumerate(poly.edges()):
        z = _edge_samples(a, b, boundary_samples)
        d = dominant_sums(f, z)
        logf = d.log_scale.real + np.log(np.abs(d.s0)) - nu
        la = np.log(np.abs(np.asarray(f.coeffs)))
        if i % 2 == 0:
            # chord from z_j (side p) to z'_j (side p'): two comparable terms
            chord_logs.append(float(logf.min()))
            p = int(d.p[0])
            if logf.min() < math.log(0.5) + la[p] - k:
                chord_ok = False
        else:
            side_logs.append(float(logf.min()))
            p = int(d.p[len(z) // 2])
            if logf.min() < math.log(0.5) + la[p]:
                side_ok = False
    raw = min(min(side_logs), min(chord_logs))
    floor = 0.5 * f.abs_min * math.exp(-k) * (1 - margin)
    return EpsilonPrime(
        value=(1 - margin) * math.exp(raw), nu=nu, raw_min=math.exp(raw),
        side_min=math.exp(min(side_logs)), chord_min=math.exp(min(chord_logs)),
        chord_mins=[math.exp(v) for v in chord_logs], side_ok=side_ok, chord_ok=chord_ok,
        floor=floor, samples=boundary_samples,
    )


def epsilon_prime(f: ExpSum, nu: float, boundary_samples: int = 4096, **kwargs) -> float:
    return epsilon_prime_report(f, nu, boundary_samples, **kwargs).value


# -- parameters ---------------------------------------------------------------------


def _chain_ok(f: ExpSum, delta: float, r: float) -> bool:
    """log of: delta M(r) >= M(delta r)/delta >= r."""
    lhs = math.log(delta) + log_max_modulus(f, r)
    mid = log_max_modulus(f, delta * r) - math.log(delta)
    return lhs >= mid >= math.log(r) and log_max_modulus(f, r) > math.log(r)


def _r_grid(R: float) -> np.ndarray:
    return np.geomspace(R, max(1e4, 4 * R), 24)


@dataclass(frozen=True)
class WebParams:
    f: ExpSum
    nu: float
    R: float
    delta: float
    epsilon_prime: float
    tau: float
    steps: int = 3
    checks: dict = field(default_factory=dict, compare=False)
    checked: bool = True

    def __post_init__(self):
        if _UNCHECKED.get():
            object.__setattr__(self, "checked", False)
            return
        require_web_order(self.f)
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.nu < self.R / self.delta:
            raise ValueError(f"nu = {self.nu} is below R/delta = {self.R / self.delta:.6g}")
        # beta(r) >= delta M(r) uses M(r) <= sum|a_k| e^r
        if not self.epsilon_prime / 2 >= self.delta * self.f.abs_sum * (1 - 1e-12):
            raise ValueError("beta(r) >= delta M(r, f) fails")
        bad = [float(r) for r in _r_grid(self.R) if not _chain_ok(self.f, self.delta, float(r))]
        if bad:
            raise ValueError(f"delta M(r) >= M(delta r)/delta >= r fails at r = {bad[0]:.6g}")
        object.__setattr__(self, "checks", {"nu_ge_R_over_delta": True, "beta_ge_delta_M": True,
                                            "chain_sampled_r": [float(_r_grid(self.R)[0]),
                                                                float(_r_grid(self.R)[-1])]})

    @classmethod
    def _unchecked(cls, **kwargs) -> WebParams:
        token = _UNCHECKED.set(True)
        try:
            return cls(**kwargs)
        finally:
            _UNCHECKED.reset(token)

    def beta_log(self, r: float) -> float:
        return math.log(self.epsilon_prime / 2) + r

    def to_json(self) -> dict:
        return {
            "family": self.f.describe(), "nu": self.nu, "R": self.R, "delta": self.delta,
            "epsilon_prime": self.epsilon_prime, "tau": self.tau, "steps": self.steps,
            "beta": f"beta(r) = ({self.epsilon_prime:.6g}/2) e^r", "checked": self.checked,
            "checks": self.checks,
        }


def find_R(f: ExpSum, delta: float, start: float = 1.0, ceiling: float = 1e6) -> float:
    R = start
    while R <= ceiling:
        if all(_chain_ok(f, delta, float(r)) for r in _r_grid(R)):
            return R
        R *= 2
    raise NuTooSmall(f"no R <= {ceiling:g} satisfies the growth chain for delta = {delta:.3g}")


def make_web_params(f: ExpSum, nu: float = 20.0, steps: int = 3, *, tau: float | None = None,
                    boundary_samples: int = 4096, max_rounds: int = 8) -> WebParams:
    """epsilon' at nu, delta = epsilon'/(2 sum|a|), R by doubling, nu raised to R/delta.

    epsilon' is re-measured at the raised nu (keeping the smaller value)
    until nu no longer moves.
    """
    require_web_order(f)
    tau = tau_for(f) if tau is None else tau
    while True:
        try:
            truncated_polygon(f, nu, tau)
            break
        except NuTooSmall:
            if nu > EXPLICIT_LIMIT:
                raise
            nu *= 2
    eps = math.inf
    for _ in range(max_rounds):
        eps = min(eps, epsilon_prime(f, nu, boundary_samples, tau=tau))
        delta = eps / (2 * f.abs_sum)
        R = find_R(f, delta)
        target = R / delta
        if nu >= target:
            # settled: eps is valid at this nu
            return WebParams(f=f, nu=nu, R=R, delta=delta, epsilon_prime=eps, tau=tau, steps=steps)
        nu = target
    raise NuTooSmall("epsilon'/R/nu iteration did not settle")


# -- domains ------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolicDomain:
    """P'(nu_n) for a nu_n beyond the explicit range; nu_n <= |z| <= 2 nu_n on its boundary."""

    index: int
    nu: TowerBracket

    def to_json(self) -> dict:
        return {"index": self.index, "nu": self.nu.to_json(), "mode": "symbolic"}


def beta_track(params: WebParams, count: int) -> list:
    """Brackets for beta^n(nu), n = 0..count-1, plus their float values while they fit."""
    shift = math.log(params.epsilon_prime / 2)
    out = [(TowerBracket.from_float(params.nu), params.nu)]
    for _ in range(1, count):
        br, val = out[-1]
        if val is not None and val < 700:
            v = math.exp(shift + val)
            out.append((TowerBracket(TowerReal.from_float(v, "down"), TowerReal.from_float(v, "up")), v))
            continue
        if val is not None:
            lo = TowerReal.from_log(math.nextafter(shift + val, -math.inf), "down")
            hi = TowerReal.from_log(math.nextafter(shift + val, math.inf), "up")
        else:
            lo = add_const(br.lower, math.nextafter(shift, -math.inf), upward=False).exp("down")
            hi = add_const(br.upper, math.nextafter(shift, math.inf), upward=True).exp("up")
        out.append((TowerBracket(lo, hi), None))
    return out


def build_web_sequence(f: ExpSum, params: WebParams, count: int) -> list:
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    for n, (br, val) in enumerate(beta_track(params, count)):
        if val is not None and val <= EXPLICIT_LIMIT:
            try:
                out.append(truncated_polygon(f, val, params.tau))
                continue
            except NuTooSmall:
                pass
        out.append(SymbolicDomain(n, br))
    return out


# -- condition (a): inclusion -------------------------------------------------------


@dataclass
class InclusionResult:
    n: int
    status: str  # "pass", "fail" or "undetermined"
    beta: dict
    M: dict

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        return dict(self.__dict__)


def verify_inclusion(f: ExpSum, params: WebParams, n_max: int) -> list:
    """beta^n(nu) (lower track) against M^n(R, f) (upper track) for n = 0..n_max."""
    betas = beta_track(params, n_max + 1)
    out = [InclusionResult(0, "pass" if params.nu >= params.R else "fail",
                           {"value": params.nu}, {"value": params.R})]
    if n_max == 0:
        return out
    levels = iterate_max_modulus_levels(f, params.R, n_max)
    for n in range(1, n_max + 1):
        b, bval = betas[n]
        m, mlog = levels[n - 1]
        if bval is not None and mlog is not None:
            ok = math.log(bval) >= mlog
            status = "pass" if ok else "fail"
        elif b.certainly_ge(m):
            status = "pass"
        elif b.certainly_lt(m):
            status = "fail"
        else:
            status = "undetermined"
        out.append(InclusionResult(n, status, b.to_json(), m.to_json()))
    return out


# -- condition (b): one step --------------------------------------------------------


def _wrap(x: np.ndarray) -> np.ndarray:
    return (x + np.pi) % (2 * np.pi) - np.pi


def winding_number(points, center: complex = 0.0) -> int:
    """Winding number of a closed sampled curve (first point repeated last) about center."""
    w = np.asarray(points, dtype=complex) - center
    total = _wrap(np.diff(np.angle(w))).sum()
    return int(round(total / (2 * math.pi)))


def _image_log_and_steps(f: ExpSum, z: np.ndarray) -> tuple:
    """(min log|f|, accumulated argument change, largest single step) along z."""
    min_log = math.inf
    total = 0.0
    biggest = 0.0
    # consecutive chunks share one point so every increment is counted once
    for start in range(0, len(z) - 1, CHUNK):
        d = dominant_sums(f, z[start:start + CHUNK + 1])
        logf = d.log_scale + np.log(d.s0)
        min_log = min(min_log, float(logf.real.min()))
        steps = _wrap(np.diff(logf.imag))
        total += float(steps.sum())
        biggest = max(biggest, float(np.abs(steps).max()))
    return min_log, total, biggest


def image_winding(f: ExpSum, poly: ClosedPolyline, samples: int, *, max_samples: int = MAX_WINDING_SAMPLES):
    """Winding of f(boundary) about 0, doubling samples until three counts agree.

    The starting density keeps steps along the boundary below 1/2, and the
    final refinement must have every argument step below pi/2.
    """
    start = max(samples, int(math.ceil(poly.perimeter / 0.5)))
    history = []
    count = start
    min_log = math.inf
    while count <= max_samples:
        z = sample_boundary(poly, count)
        ml, total, biggest = _image_log_and_steps(f, z)
        min_log = min(min_log, ml)
        w = total / (2 * math.pi)
        history.append((count, int(round(w)), abs(w - round(w)), biggest))
        if len(history) >= 3 and history[-1][1] == history[-2][1] == history[-3][1] and biggest < math.pi / 2:
            return history[-1][1], count, min_log, history
        count *= 2
    raise WindingUnstable(f"winding did not stabilise up to {max_samples} samples: {history}")


@dataclass
class WebStepReport:
    n: int
    mode: str
    min_mod_boundary_log: float
    sup_next_radius_log: float
    winding: int | None
    pass_a: bool | None
    pass_b: bool
    samples: int
    note: str = ""
    measured_sup_next_log: float | None = None

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "mode": self.mode,
            "min_mod_boundary": {"log": self.min_mod_boundary_log},
            "sup_next_radius": {"log": self.sup_next_radius_log, "measured_log": self.measured_sup_next_log},
            "winding": self.winding,
            "pass_a": self.pass_a,
            "pass_b": self.pass_b,
            "samples": self.samples,
            "note": self.note,
        }


def _nu_log(G) -> float | None:
    if isinstance(G, ClosedPolyline):
        return math.log(G.meta["nu"])
    lo = G.nu.lower.log()
    v = lo.to_float()
    return v if math.isfinite(v) else None


def verify_step(f: ExpSum, G_n, G_next, boundary_samples: int = 4096, *, n: int = 0,
                epsilon_prime: float | None = None, pass_a: bool | None = None) -> WebStepReport:
    """Condition (b) for one step: min |f| on the boundary of G_n beyond sup |z| on G_{n+1}, and nonzero winding."""
    if isinstance(G_next, ClosedPolyline):
        sup_log = math.log(2 * G_next.meta["nu"])
        measured = math.log(max(abs(v) for v in G_next.vertices))
    else:
        up = G_next.nu.upper.log("up").to_float()
        sup_log = math.log(2) + up if math.isfinite(up) else math.inf
        measured = None
    if isinstance(G_n, ClosedPolyline):
        winding, used, min_log, _ = image_winding(f, G_n, boundary_samples)
        passed = min_log > sup_log and winding != 0
        return WebStepReport(n, "explicit", min_log, sup_log, winding, pass_a, passed, used,
                             "containment read as modulus gap plus nonzero winding", measured)
    if epsilon_prime is None:
        raise ValueError("symbolic steps need the measured epsilon'")
    # |f| > (eps'/0.9) e^{nu_n} on the boundary of G_n, and sup|z| on G_{n+1} <= 2 beta(nu_n) = eps' e^{nu_n}
    return WebStepReport(
        n, "symbolic", math.nan, math.nan, None, pass_a, True, 0,
        "certified analytically: min|f| > (eps'/(1-margin)) e^nu_n > eps' e^nu_n = 2 beta(nu_n) >= sup|z|; "
        "extrapolates the epsilon' measured at the explicit nu",
    )


@dataclass
class WebCertificate:
    params: WebParams
    inclusion: list
    steps: list
    depth: int
    certified: bool

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "inclusion": [r.to_json() for r in self.inclusion],
            "steps": [s.to_json() for s in self.steps],
            "depth": self.depth,
            "certified": self.certified,
            "statement": (f"A_R spider's web certified to depth {self.depth}" if self.certified
                          else "not certified"),
        }


def certify_web(f: ExpSum, depth: int, *, nu: float = 20.0, boundary_samples: int = 4096,
                params: WebParams | None = None) -> WebCertificate:
    """Inclusion for n <= depth and one step report for each n < depth."""
    require_web_order(f)
    params = make_web_params(f, nu, depth, boundary_samples=boundary_samples) if params is None else params
    inclusion = verify_inclusion(f, params, depth)
    steps = []
    if depth > 0:
        seq = build_web_sequence(f, params, depth + 1)
        for k in range(depth):
            steps.append(verify_step(f, seq[k], seq[k + 1], boundary_samples, n=k,
                                     epsilon_prime=params.epsilon_prime, pass_a=inclusion[k].passed))
    ok = all(r.passed for r in inclusion) and all(s.pass_b for s in steps)
    return WebCertificate(params, inclusion, steps, depth, ok)
