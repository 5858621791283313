"""Command-line front end: ``mflab <subcommand> [--config FILE] [--set key=value ...]``.

Configurations are flat text, one ``dotted.key = value`` per line, ``#``
starting a comment. ``--set`` overrides are applied after the file. Every
subcommand writes ``<subcommand>.json`` (schema ``v1``, embedding the resolved
configuration) and its CSV tables to the output directory, which the
``MFLAB_OUTDIR`` environment variable overrides.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import deviations, dynsys, gibbs, landscape, walk
from ._numerics import NumericalError
from .report import ReportError, dumps, emit_plot_script, write_report, write_table

DEFAULT_SEED = 20240531
SUBCOMMANDS = ("walk-dist", "walk-mdp", "magnetization-dist", "landscape", "critical-beta",
               "verify-mdp", "scaling-check", "hs-check", "clt-density")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = dict(problems)
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(self.problems.items())))


# -- value parsers -----------------------------------------------------------------

def _int_list(text):
    out = [int(float(x)) for x in str(text).replace(";", ",").split(",") if x.strip()]
    if not out:
        raise ValueError("empty list")
    return out


def _float_grid(text):
    """``lo:hi:num`` (inclusive linspace) or a comma-separated list."""
    text = str(text)
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.linspace(float(lo), float(hi), int(num)).tolist()
    out = [float(x) for x in text.split(",") if x.strip()]
    if not out:
        raise ValueError("empty list")
    return out


def _optional_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _str_list(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


# key -> (parser, default); a default of None means "optional"
SCHEMA = {
    "system.kind": (str, "torus-rotation"),
    "system.alpha": (float, dynsys.GOLDEN),
    "system.field": (str, "identity"),
    "system.x0": (float, 0.0),
    "system.integrator": (str, "closed-form"),
    "model.beta": (float, 1.0),
    "model.J": (float, 1.0),
    "run.n": (int, 100),
    "run.n_grid": (_int_list, [1000, 4000, 16000]),
    "run.theta": (float, 0.75),
    "run.t": (float, 1.0),
    "run.alpha": (float, None),
    "run.z": (float, 1.0),
    "run.window": (_optional_float, None),
    "run.s_grid": (_float_grid, None),
    "run.minimum": (int, -1),
    "run.samples": (int, 0),
    "run.seed": (int, DEFAULT_SEED),
    "output.directory": (str, "mflab-out"),
    "output.formats": (_str_list, ["json", "csv"]),
}


def parse_config_text(text: str) -> dict:
    raw, problems = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems[f"line {lineno}"] = f"expected 'key = value', got {line!r}"
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    if problems:
        raise ConfigError(problems)
    return raw


def resolve_config(raw: dict) -> dict:
    """Parse and range-check every key; all violations are reported together."""
    problems = {}
    cfg = {}
    for key in raw:
        if key not in SCHEMA:
            problems[key] = "unknown key"
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                cfg[key] = parse(raw[key])
            except (TypeError, ValueError) as exc:
                problems[key] = f"cannot parse {raw[key]!r}: {exc}"
        else:
            cfg[key] = default
    checks = {
        "model.beta": lambda v: v > 0 or "must be positive",
        "model.J": lambda v: v > 0 or "must be positive",
        "run.n": lambda v: v >= 1 or "must be a positive integer",
        "run.n_grid": lambda v: all(n >= 1 for n in v) or "entries must be positive",
        "run.theta": lambda v: 0.5 < v < 1.0 or "must lie in (1/2, 1)",
        "run.t": lambda v: v > 0 or "must be positive",
        "run.z": lambda v: v != 0 or "must be nonzero",
        "run.window": lambda v: v is None or v > 0 or "must be positive",
        "run.samples": lambda v: v >= 0 or "must be nonnegative",
        "system.x0": lambda v: 0.0 <= v < 1.0 or "must lie in [0, 1)",
        "system.kind": lambda v: v in ("torus-rotation", "constant-field") or
        "must be torus-rotation or constant-field",
        "system.integrator": lambda v: v in dynsys.INTEGRATORS or f"must be one of {dynsys.INTEGRATORS}",
        "output.formats": lambda v: set(v) <= {"json", "csv"} or "allowed formats are json, csv",
    }
    for key, check in checks.items():
        if key in problems:
            continue
        verdict = check(cfg[key])
        if verdict is not True:
            problems[key] = verdict
    if "system.field" not in problems:
        try:
            dynsys.parse_field(cfg["system.field"])
        except (ValueError, SyntaxError) as exc:
            problems["system.field"] = str(exc)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path=None, overrides=()) -> dict:
    raw = {}
    if path:
        with open(path) as fh:
            raw.update(parse_config_text(fh.read()))
    bad = {}
    for item in overrides:
        if "=" not in item:
            bad[item] = "override must look like key=value"
            continue
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    if bad:
        raise ConfigError(bad)
    return resolve_config(raw)


# -- helpers ---------------------------------------------------------------------

def _system(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dynsys.RationalRotationWarning)
        return dynsys.from_config(cfg["system.kind"], cfg["system.alpha"], cfg["system.field"],
                                  cfg["system.integrator"])


def _bj(cfg):
    return cfg["model.beta"] * cfg["model.J"]


def _profile(system, cfg):
    profiles = landscape.find_and_classify_minima(system, _bj(cfg))
    idx = cfg["run.minimum"]
    if idx < 0:
        glob = [p for p in profiles if p.is_global]
        # the global minimizer closest to (and, on ties, above) zero
        return min(glob, key=lambda p: (abs(p.m), -p.m)), profiles
    if idx >= len(profiles):
        raise ConfigError({"run.minimum": f"only {len(profiles)} minima were found"})
    return profiles[idx], profiles


def _alpha(cfg, profile):
    a = cfg["run.alpha"]
    if a is None:
        a = 1.0 - 0.5 / profile.two_k   # midpoint of the admissible range
    lo = 1.0 - 1.0 / profile.two_k
    if not lo < a < 1.0:
        raise ConfigError({"run.alpha": f"must lie in ({lo}, 1) for a minimum of type {profile.two_k}"})
    return a


def _verdict_rows(v):
    return zip(v.grid, v.speeds, v.log_probs, v.r, v.errors)


VERDICT_HEADER = ["n", "speed", "log_prob", "r_n", "err"]


# -- subcommands -------------------------------------------------------------------
# each returns (result dict, {table name: (header, rows)})

def cmd_walk_dist(cfg, rng):
    system = _system(cfg)
    traj = dynsys.orbit(system, cfg["system.x0"], cfg["run.n"])
    law = walk.walk_distribution(traj)
    result = {"n": law.n, "mean": law.mean(), "variance": law.variance()}
    if cfg["run.samples"]:
        paths = walk.sample_walk(traj, rng, cfg["run.samples"])
        result["sample_mean"] = float(paths[:, -1].mean())
    rows = zip(law.support.tolist(), law.log_mass.tolist(), law.prob.tolist())
    return result, {"distribution": (["k", "log_prob", "prob"], rows)}


def cmd_magnetization_dist(cfg, rng):
    system = _system(cfg)
    n = cfg["run.n"]
    traj = dynsys.orbit(system, cfg["system.x0"], n)
    params = gibbs.ModelParams(cfg["model.beta"], cfg["model.J"], n)
    law = gibbs.magnetization_distribution(traj, params)
    result = {"n": n, "mean": law.mean(), "variance": law.variance()}
    try:
        result["log_partition"] = gibbs.log_partition(traj, params)
    except gibbs.InfiniteFieldError:
        result["log_partition"] = None
    if cfg["run.samples"]:
        draws = gibbs.sample_configuration(traj, params, rng, cfg["run.samples"])
        result["sample_mean_magnetization"] = float(draws.sum(axis=1).mean())
    rows = zip(law.support.tolist(), law.log_mass.tolist(), law.prob.tolist())
    return result, {"distribution": (["k", "log_prob", "prob"], rows)}


def cmd_walk_mdp(cfg, rng):
    system = _system(cfg)
    rate = walk.walk_mdp_rate(system)
    v = deviations.verify_walk_mdp(system, cfg["system.x0"], cfg["run.theta"], cfg["run.t"],
                                   cfg["run.n_grid"])
    result = {"rate": rate.to_dict(), "a": rate.params["a"], "I_t": float(rate(cfg["run.t"])),
              "verdict": v.to_dict()}
    return result, {"verdict": (VERDICT_HEADER, _verdict_rows(v))}


def cmd_landscape(cfg, rng):
    system = _system(cfg)
    bj = _bj(cfg)
    profiles = landscape.find_and_classify_minima(system, bj)
    s = np.asarray(cfg["run.s_grid"] or np.linspace(-1.0, 1.0, 401))
    G = landscape.eval_G(system, bj, s, 0)
    result = {"beta_J": bj, "minima": [p.to_dict() for p in profiles],
              "stationary": [{"s": x, "kind": k} for x, k in landscape.stationary_points(system, bj)]}
    if len(profiles) == 1:
        result.update({k: profiles[0].to_dict()[k] for k in ("m", "two_k", "lambda")})
    return result, {"landscape": (["s", "G"], zip(s.tolist(), np.atleast_1d(G).tolist()))}


def cmd_critical_beta(cfg, rng):
    system = _system(cfg)
    return {"beta_c": landscape.critical_beta(system, cfg["model.J"]), "J": cfg["model.J"]}, {}


def cmd_verify_mdp(cfg, rng):
    system = _system(cfg)
    profile, _ = _profile(system, cfg)
    alpha = _alpha(cfg, profile)
    rate = deviations.mdp_rate_magnetization(profile, _bj(cfg))
    v = deviations.verify_magnetization_mdp(system, cfg["system.x0"], cfg["model.beta"],
                                            cfg["model.J"], cfg["run.n_grid"], profile, alpha,
                                            cfg["run.z"], cfg["run.window"])
    result = {"profile": profile.to_dict(), "alpha": alpha, "rate": rate.to_dict(),
              "verdict": v.to_dict()}
    return result, {"verdict": (VERDICT_HEADER, _verdict_rows(v))}


def cmd_scaling_check(cfg, rng):
    system = _system(cfg)
    profile, _ = _profile(system, cfg)
    alpha = _alpha(cfg, profile)
    s = cfg["run.s_grid"] or np.linspace(-2.0, 2.0, 81).tolist()
    t = deviations.scaling_limit_check(system, cfg["system.x0"], cfg["run.n_grid"], _bj(cfg),
                                       profile, alpha, s)
    result = {"profile": profile.to_dict(), "alpha": alpha, "grid": t.grid,
              "sup_errors": t.sup_errors, "radius": t.radius, "lower_bound_holds": t.bound_holds,
              "lower_bound_from": t.bound_from}
    rows = zip(t.grid, t.sup_errors, [int(b) for b in t.bound_holds])
    return result, {"scaling": (["n", "sup_error", "lower_bound_holds"], rows)}


def cmd_hs_check(cfg, rng):
    system = _system(cfg)
    n = cfg["run.n"]
    traj = dynsys.orbit(system, cfg["system.x0"], n)
    params = gibbs.ModelParams(cfg["model.beta"], cfg["model.J"], n)
    profile, _ = _profile(system, cfg)
    alpha = cfg["run.alpha"] if cfg["run.alpha"] is not None else 1.0
    if not 0.5 < alpha <= 1.0:
        raise ConfigError({"run.alpha": "must lie in (1/2, 1] for hs-check"})
    s = np.asarray(cfg["run.s_grid"] or np.linspace(-1.5, 1.5, 61))
    hs = np.atleast_1d(gibbs.hs_density(traj, params, profile.m, alpha, s))
    law = gibbs.magnetization_distribution(traj, params)
    ref = np.atleast_1d(gibbs.gaussian_smoothed_density(law, params, profile.m, alpha, s))
    result = {"n": n, "m": profile.m, "alpha": alpha, "max_abs_error": float(np.max(np.abs(hs - ref)))}
    rows = zip(s.tolist(), hs.tolist(), ref.tolist())
    return result, {"density": (["s", "hs_density", "smoothed_exact"], rows)}


def cmd_clt_density(cfg, rng):
    from scipy import integrate

    system = _system(cfg)
    bj = _bj(cfg)
    profile, _ = _profile(system, cfg)
    s = np.asarray(cfg["run.s_grid"] or np.linspace(-4.0, 4.0, 161))
    dens = lambda x: deviations.clt_limit_density(profile.two_k, profile.strength, bj, x)
    mass, _ = integrate.quad(dens, -math.inf, math.inf, epsabs=1e-13, epsrel=1e-13)
    result = {"profile": profile.to_dict(), "total_mass": mass}
    return result, {"density": (["s", "density"], zip(s.tolist(), np.atleast_1d(dens(s)).tolist()))}


COMMANDS = {
    "walk-dist": cmd_walk_dist,
    "walk-mdp": cmd_walk_mdp,
    "magnetization-dist": cmd_magnetization_dist,
    "landscape": cmd_landscape,
    "critical-beta": cmd_critical_beta,
    "verify-mdp": cmd_verify_mdp,
    "scaling-check": cmd_scaling_check,
    "hs-check": cmd_hs_check,
    "clt-density": cmd_clt_density,
}


def output_dir(cfg) -> Path:
    return Path(os.environ.get("MFLAB_OUTDIR") or cfg["output.directory"])


def run(subcommand: str, cfg: dict) -> Path:
    """Run one experiment and write its report; returns the report path."""
    if subcommand not in COMMANDS:
        raise ConfigError({"subcommand": f"unknown subcommand {subcommand!r}"})
    rng = np.random.default_rng(cfg["run.seed"])
    result, tables = COMMANDS[subcommand](cfg, rng)
    outdir = output_dir(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    written = {}
    if "csv" in cfg["output.formats"]:
        for name, (header, rows) in tables.items():
            path = outdir / f"{subcommand}_{name}.csv"
            write_table(path, header, rows)
            written[name] = str(path)
    if "json" not in cfg["output.formats"]:
        return outdir
    return write_report(outdir, subcommand, cfg, cfg["run.seed"], result, written)


def _error(kind, message, **extra):
    print(dumps({"error": dict(type=kind, message=message, **extra)}), end="", file=sys.stderr)


def build_parser():
    ap = argparse.ArgumentParser(prog="mflab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", help="flat dotted-key configuration file")
        p.add_argument("--set", "-s", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--outdir", help="output directory (MFLAB_OUTDIR takes precedence)")
    p = sub.add_parser("plot-script", help="write a standalone matplotlib script for a report")
    p.add_argument("report")
    p.add_argument("--output", "-o")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot-script":
        try:
            print(emit_plot_script(args.report, args.output))
        except (ReportError, KeyError) as exc:
            _error("report", str(exc), report=args.report)
            return 2
        return 0
    overrides = list(args.set)
    if args.outdir:
        overrides.append(f"output.directory={args.outdir}")
    try:
        cfg = load_config(args.config, overrides)
        print(f"seed: {cfg['run.seed']}")
        path = run(args.command, cfg)
    except ConfigError as exc:
        _error("config", "invalid configuration", keys=exc.problems)
        return 2
    except OSError as exc:
        _error("io", str(exc))
        return 2
    except (NumericalError, ValueError, ArithmeticError) as exc:
        _error(type(exc).__name__, str(exc), subcommand=args.command)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
