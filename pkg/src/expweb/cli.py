"""Command line entry point: ``expweb {verify,render,area,web}``.

Configuration comes from an optional JSON document (``--config``) with
command line flags taking precedence.  Exit codes: 0 pass, 1 a check failed,
2 bad usage or configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ExpWebError, OrderTooSmall
from .expsum import ExpSum

FAMILY_ALIASES = ("exp", "cosine", "cosx", "en:k")


# -- configuration ------------------------------------------------------------------


def _numbers(values) -> bool:
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values)


def parse_family(value) -> ExpSum:
    """Resolve an alias string or a {"coeffs": [[re, im], ...]} mapping."""
    if isinstance(value, str):
        s = value.strip().lower()
        if s == "exp":
            return ExpSum((1.0,), name="exp")
        if s == "cosine":
            return ExpSum((0.5, 0.5), name="cosine")
        if s == "cosx":
            return ExpSum.cos_plus_cosh()
        if s.startswith("en:"):
            try:
                k = int(s[3:])
            except ValueError:
                raise ConfigError(f"bad order in {value!r}", "family") from None
            if k < 1:
                raise ConfigError("order must be positive", "family")
            return ExpSum.equal(k)
        raise ConfigError(f"unknown family {value!r} (aliases: {', '.join(FAMILY_ALIASES)})", "family")
    if isinstance(value, dict) and "coeffs" not in value and isinstance(value.get("name"), str):
        return parse_family(value["name"])
    if isinstance(value, dict):
        coeffs = value.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError("expected a nonempty list", "family.coeffs")
        out = []
        for i, c in enumerate(coeffs):
            path = f"family.coeffs[{i}]"
            if isinstance(c, (int, float)) and not isinstance(c, bool):
                c = [c, 0.0]
            if (not isinstance(c, list) or len(c) != 2
                    or not _numbers(c)):
                raise ConfigError("expected [re, im]", path)
            v = complex(float(c[0]), float(c[1]))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)) or v == 0:
                raise ConfigError("coefficient must be finite and nonzero", path)
            out.append(v)
        if "n" in value and value["n"] != len(out):
            raise ConfigError(f"n = {value['n']} but {len(out)} coefficients given", "family.n")
        return ExpSum(tuple(out), name=value.get("name"))
    raise ConfigError("expected an alias string or an object with coeffs", "family")


def family_to_json(f: ExpSum) -> dict:
    return {"n": f.n, "coeffs": [[a.real, a.imag] for a in f.coeffs], "name": f.name}


@dataclass
class RunConfig:
    command: str
    family: dict
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def expsum(self) -> ExpSum:
        return parse_family(self.family)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> RunConfig:
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object", "<root>")
        unknown = set(obj) - {"command", "family", "params", "seed", "workers", "out"}
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)}", "<root>")
        cfg = cls(
            command=obj.get("command", ""),
            family=family_to_json(parse_family(obj.get("family", "cosx"))),
            params=dict(obj.get("params", {})),
            seed=obj.get("seed", 0),
            workers=obj.get("workers", 1),
            out=obj.get("out"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("expected a nonnegative integer", "seed")
        if not isinstance(self.workers, int) or isinstance(self.workers, bool) or self.workers < 1:
            raise ConfigError("expected a positive integer", "workers")
        if not isinstance(self.params, dict):
            raise ConfigError("expected an object", "params")
        for key, value in self.params.items():
            if key == "window":
                if (not isinstance(value, list) or len(value) != 4 or not _numbers(value)
                        or not (value[0] < value[1] and value[2] < value[3])):
                    raise ConfigError("expected [x0, x1, y0, y1] with x0<x1 and y0<y1", "params.window")
                continue
            if key == "res":
                if (not isinstance(value, list) or len(value) != 2
                        or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 2 for v in value)):
                    raise ConfigError("expected [width, height], integers >= 2", "params.res")
                continue
            if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise ConfigError("expected a number", f"params.{key}")


PARAM_FLAGS = ("nu", "sigma", "eta", "tau", "eps0", "samples", "depth", "levels", "boundary_samples")


def _parse_window(text: str) -> list:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad window {text!r}", "params.window") from None
    if len(vals) != 4 or not (vals[0] < vals[1] and vals[2] < vals[3]):
        raise ConfigError("expected x0,x1,y0,y1 with x0<x1 and y0<y1", "params.window")
    return vals


def _parse_res(text: str) -> list:
    try:
        parts = [int(x) for x in text.lower().split("x")]
    except ValueError:
        raise ConfigError(f"bad resolution {text!r}", "params.res") from None
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 2:
        raise ConfigError("expected WIDTHxHEIGHT with both at least 2", "params.res")
    return parts


def _parse_coeffs(text: str) -> dict:
    try:
        val = json.loads(text)
    except json.JSONDecodeError:
        try:
            val = [float(x) for x in text.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse {text!r}", "family.coeffs") from None
    return {"coeffs": val}


def build_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: {exc.msg}", args.config) from None
        except OSError as exc:
            raise ConfigError(str(exc), "--config") from None
    base = dict(base)
    base["command"] = args.command
    if args.coeffs is not None:
        base["family"] = _parse_coeffs(args.coeffs)
    elif args.family is not None:
        base["family"] = args.family
    params = dict(base.get("params", {}))
    for key in PARAM_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    if getattr(args, "window", None) is not None:
        params["window"] = _parse_window(args.window)
    if getattr(args, "res", None) is not None:
        params["res"] = _parse_res(args.res)
    base["params"] = params
    for key in ("seed", "workers", "out"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    return RunConfig.from_json(base)


# -- output -------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit(cfg: RunConfig, report: dict) -> None:
    text = dumps(report)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands -----------------------------------------------------------------------


def cmd_verify(cfg: RunConfig) -> int:
    from .estimates import (
        Box,
        bk_condition_check,
        conformality_check,
        conformality_criterion,
        distortion_estimate,
        find_nu_prime,
        nonlinearity,
        require_order,
        tau_for,
        verify_component_estimates,
    )

    f = cfg.expsum()
    p = cfg.params
    require_order(f)
    eta = p.get("eta", 51.0)
    tau = p.get("tau", tau_for(f, eta))
    samples = int(p.get("samples", 10_000))
    sigma = p.get("sigma", 0.08)
    nu_prime = find_nu_prime(f, eta, tau, samples, cfg.seed)
    nu = max(p.get("nu", nu_prime), nu_prime)
    est = verify_component_estimates(f, nu, eta, samples, cfg.seed, tau=tau, eps0=p.get("eps0"))
    box = Box.centered(complex(2 * nu + tau, 0.0), sigma)
    lhs, rhs = conformality_criterion(f, box)
    conf = conformality_check(f, box, seed=cfg.seed)
    N = nonlinearity(f, box)
    dist = distortion_estimate(f, 1, box, 2000, cfg.seed)
    schubert = dist.L <= 1 + 8 * N + 1e-6
    bk = bk_condition_check(f)
    passed = est.passed(0.1) and conf and schubert and bk.passed
    report = {
        "config": cfg.to_json(),
        "nu_prime": nu_prime,
        "estimates": est.to_json(),
        "conformality": {"box": {"center": box.center, "side": box.side}, "lhs": lhs, "rhs": rhs, "pass": conf},
        "distortion": {"c": dist.c, "C": dist.C, "L": dist.L, "N": N, "bound": 1 + 8 * N, "pass": schubert},
        "growth": {"A": bk.A, "B": bk.B, "pass": bk.passed},
        "label": est.label,
        "pass": passed,
    }
    emit(cfg, report)
    return 0 if passed else 1


def cmd_render(cfg: RunConfig) -> int:
    from .dynamics import Window, classify_grid

    f = cfg.expsum()
    p = cfg.params
    win = Window(*p.get("window", [-40.0, 40.0, -40.0, 40.0]))
    res = tuple(p.get("res", [256, 256]))
    grid = classify_grid(f, win, res, R=float(p.get("nu", 10.0)), depth=int(p.get("depth", 4)),
                         workers=cfg.workers)
    out = cfg.out or "render.ppm"
    json_path = out.rsplit(".", 1)[0] + ".json"
    grid.write(out, json_path)
    side = grid.sidecar()
    side["config"] = cfg.to_json()
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(dumps(side))
    sys.stdout.write(dumps({"ppm": out, "sidecar": json_path, "histogram": side["histogram"]}))
    return 0


def cmd_area(cfg: RunConfig, dump_survivors: str | None = None) -> int:
    from .mcmullen import (
        area_lower_bound,
        loss_constant_from,
        make_params,
        survival_fraction,
    )

    f = cfg.expsum()
    p = cfg.params
    overrides = {"nu0": p.get("nu", 12.0), "seed": cfg.seed}
    for key, name in (("sigma", "sigma"), ("eta", "eta"), ("tau", "tau"), ("eps0", "epsilon0")):
        if key in p:
            overrides[name] = p[key]
    params = make_params(f, overrides)
    samples = int(p.get("samples", 100_000))
    rep = survival_fraction(f, params, 1, samples, cfg.seed)
    C = loss_constant_from(rep, params.nu0)
    delta, tail = area_lower_bound(params, C, int(p.get("levels", 3)))
    # first-order loss is about 4 sqrt 2 / (|a_0| e^x) on the seed box; allow four times that
    band = 16 * math.sqrt(2) / f.abs_min
    point_C = (1.0 - rep.fraction) * math.exp(params.nu0)
    passed = delta > 0 and point_C <= band
    if dump_survivors:
        with open(dump_survivors, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im"])
            for z in rep.survivor_points:
                w.writerow([repr(float(z.real)), repr(float(z.imag))])
    report = {
        "config": cfg.to_json(),
        "params": params.to_json(),
        "survival": rep.to_json(),
        "loss_constant": C,
        "loss_constant_point": point_C,
        "loss_constant_band": band,
        "delta": delta,
        "tail": tail,
        "pass": passed,
    }
    emit(cfg, report)
    return 0 if passed else 1


def cmd_web(cfg: RunConfig) -> int:
    from .spiderweb import certify_web

    f = cfg.expsum()
    p = cfg.params
    depth = int(p.get("depth", 3))
    cert = certify_web(f, depth, nu=float(p.get("nu", 20.0)),
                       boundary_samples=int(p.get("boundary_samples", 4096)))
    report = cert.to_json()
    report["config"] = cfg.to_json()
    if cert.certified:
        report["downstream"] = ("the web property passes from A_R(f) to the fast escaping set and the "
                                "escaping set; with no multiply connected Fatou components it also holds "
                                "for their parts in the Julia set")
    emit(cfg, report)
    sys.stderr.write(report["statement"] + "\n")
    return 0 if cert.certified else 1


# -- argument parsing ---------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expweb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--family", help="exp, cosine, cosx or en:K")
    common.add_argument("--coeffs", help='coefficients as JSON [[re, im], ...] or comma-separated reals')
    common.add_argument("--nu", type=float, help="nu (verify, web), nu0 (area) or escape radius R (render)")
    common.add_argument("--sigma", type=float, help="box side")
    common.add_argument("--eta", type=float, help="constant in the non-dominant term bound; sets the default tau")
    common.add_argument("--tau", type=float, help="strip half-width (default from eta)")
    common.add_argument("--eps0", type=float, help="growth exponent epsilon0 (default 0.45 cos(pi/n))")
    common.add_argument("--window", help="x0,x1,y0,y1")
    common.add_argument("--res", help="WIDTHxHEIGHT")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--depth", type=int, help="iteration depth")
    common.add_argument("--levels", type=int, help="refinement levels (area)")
    common.add_argument("--boundary-samples", dest="boundary_samples", type=int, help="samples per polygon edge")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--workers", type=int, help="worker processes (render)")
    common.add_argument("--out", help="output file (report JSON, or PPM for render)")
    for name, text in (("verify", "check the sector inequalities and distortion bounds"),
                       ("render", "classify a pixel grid and write a PPM image"),
                       ("area", "Monte Carlo survival fraction and area lower bound"),
                       ("web", "certify the spider's web conditions to a given depth")):
        sp = sub.add_parser(name, parents=[common], help=text)
        if name == "area":
            sp.add_argument("--dump-survivors", dest="dump_survivors", help="CSV of surviving points")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = build_config(args)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "render":
            return cmd_render(cfg)
        if args.command == "area":
            return cmd_area(cfg, getattr(args, "dump_survivors", None))
        return cmd_web(cfg)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except OrderTooSmall as exc:
        sys.stderr.write(f"rejected: {exc}\n")
        return 1
    except ExpWebError as exc:
        sys.stderr.write(f"check failed: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
