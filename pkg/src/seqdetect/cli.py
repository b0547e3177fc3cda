"""Batch front-end: JSON config in, JSON/CSV artifacts out.

Subcommands: solve, rates, mc, sweep, adaptive.  Every output embeds the
fully resolved config and seed, floats are written with 17 significant
digits and '.' decimals, and identical config + seed yields byte-identical
files.  Exit codes: 0 success, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import extreme, rates, simulate, testing
from .spectra import BesovSpec, ProblemSpec

ACTIONS = ("solve", "rates", "mc", "sweep", "adaptive")

_PAIR_KINDS = {
    "mild_sobolev": ("polynomial", "polynomial"),
    "mild_analytic": ("exponential", "polynomial"),
    "severe_sobolev": ("polynomial", "exponential"),
    "severe_analytic": ("exponential", "exponential"),
}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header: list, rows: list, config: dict | None = None):
    lines = []
    if config is not None:
        # provenance: resolved config and seed ride along as a comment line
        lines.append("# config: " + json.dumps(config, sort_keys=True))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {where}: {sorted(unknown)}")


def _load_spec(d: dict):
    try:
        if "alpha" in d and "a" not in d and "preset" not in d:
            return BesovSpec.from_json_dict(d)
        return ProblemSpec.from_json_dict(d)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad spec: {exc}") from exc


def _build_rule(d: dict, spec, sol=None):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "weighted_chi_sq":
        _check_keys(d, {"alpha", "H"}, "rule")
        if sol is None:
            sol = extreme.solve_extreme(spec)
        return testing.build_weighted(sol, alpha=d.get("alpha"), H=d.get("H")), sol
    if kind == "truncated_chi_sq":
        _check_keys(d, {"m", "H"}, "rule")
        return testing.TruncatedChiSq(m=int(d["m"]), H=float(d["H"])), sol
    if kind == "max_threshold":
        _check_keys(d, {"m", "alpha"}, "rule")
        return testing.build_max_threshold(int(d["m"]), float(d["alpha"])), sol
    if kind in ("chi_grid", "max_grid", "extreme_max"):
        _check_keys(d, {"L", "C", "T_eps"}, "rule")
        return testing.build_adaptive(kind, L=d.get("L"), C=float(d.get("C", 2.5)),
                                      T_eps=d.get("T_eps"), eps=spec.eps), sol
    if kind == "sparse_combined":
        _check_keys(d, {"mode", "alpha", "H", "K"}, "rule")
        sp = extreme.solve_sparse_extreme(spec)
        rule = testing.build_sparse_combined(
            sp, spec.eps, int(d.get("K", spec.K)), mode=d.get("mode", "G"),
            alpha=float(d.get("alpha", 0.05)), H=d.get("H"))
        return rule, sol
    if kind == "besov_sparse":
        _check_keys(d, {"mode", "alpha", "H"}, "rule")
        sp = extreme.solve_besov_extreme(spec)
        return testing.build_besov_sparse(sp, spec, mode=d.get("mode", "G"),
                                          alpha=float(d.get("alpha", 0.05)),
                                          H=d.get("H")), sol
    if kind == "besov_adaptive":
        _check_keys(d, {"c"}, "rule")
        return testing.build_besov_adaptive(spec, c=float(d.get("c", 0.15))), sol
    raise ConfigError(f"unknown rule kind {kind!r}")


def _solution_rows(spec: ProblemSpec, sol) -> tuple:
    header = ["k", "a_k", "sigma_k", "eta_sq_k", "w_k"]
    a = spec.a.values(sol.m)
    s = spec.sigma.values(sol.m)
    rows = [(k + 1, float(a[k]), float(s[k]), float(sol.eta_sq[k]), float(sol.w[k]))
            for k in range(sol.m)]
    return header, rows


def run_solve(config: dict, out: Path, fmt: str) -> dict:
    spec = _load_spec(config["spec"])
    sol = extreme.solve_extreme(spec)
    payload = {"config": config, "solution": sol.to_json_dict(),
               "residuals": extreme.solution_residuals(spec, sol)}
    _write_json(out, payload)
    header, rows = _solution_rows(spec, sol)
    _write_csv(out.with_suffix(".csv"), header, rows, config)
    return payload


def run_rates(config: dict, out: Path, fmt: str) -> dict:
    rows = []
    for case in config["cases"]:
        _check_keys(dict(case), {"pair", "alpha", "beta", "q", "eps"}, "rates case")
        pair = case["pair"]
        alpha, beta = float(case["alpha"]), float(case["beta"])
        q = float(case.get("q", 2.0))
        eps = float(case["eps"])
        base = rates.separation_rate(alpha, beta, q, pair)
        ad = rates.adaptive_rate(alpha, beta, q, pair)
        rows.append((pair, alpha, beta, q, eps, base(eps), ad(eps),
                     ad.payment_class))
    header = ["pair", "alpha", "beta", "q", "eps", "r_star", "r_ad", "payment_class"]
    if fmt == "csv":
        _write_csv(out, header, rows, config)
    else:
        _write_json(out, {"config": config,
                          "rows": [dict(zip(header, row)) for row in rows]})
    return {"rows": rows}


def _resolve_alternative(config: dict, spec, sol):
    alt = config.get("alternative", "least_favorable")
    if alt == "least_favorable":
        if isinstance(spec, BesovSpec):
            raise ConfigError("explicit alternative required for dyadic specs")
        if sol is None:
            sol = extreme.solve_extreme(spec)
        return sol.least_favorable(spec.K), sol
    return np.asarray(alt, dtype=float), sol


def run_mc(config: dict, out: Path, fmt: str) -> dict:
    spec = _load_spec(config["spec"])
    rule, sol = _build_rule(config["rule"], spec)
    eta, sol = _resolve_alternative(config, spec, sol)
    theory_u = sol.u if sol is not None else config.get("theory_u")
    report = simulate.estimate_errors(
        rule, eta, spec.eps, int(config["reps"]), int(config["seed"]),
        threads=int(config.get("threads", 1)), theory_u=theory_u,
        theory_alpha=float(config.get("alpha", 0.05)),
        theory_D=config.get("theory_D"))
    if config.get("trace"):
        simulate.trace_outcomes(rule, eta, spec.eps, int(config["reps"]),
                                int(config["seed"]), config["trace"],
                                rule_id=config["rule"].get("kind", "rule"))
    payload = {"config": config, "report": report.to_json_dict()}
    _write_json(out, payload)
    return payload


def run_sweep(config: dict, out: Path, fmt: str) -> dict:
    spec = _load_spec(config["spec"])
    parameter = config.get("parameter", "r")
    if parameter not in ("r", "eps"):
        raise ConfigError("sweep parameter must be 'r' or 'eps'")
    alpha_level = float(config.get("alpha", 0.05))
    rows = []
    for value in config["values"]:
        d = spec.to_json_dict()
        d[parameter] = float(value)
        case = ProblemSpec.from_json_dict(d)
        sol = extreme.solve_extreme(case)
        errors = testing.theoretical_errors(u=sol.u, alpha=alpha_level)
        rows.append((float(value), sol.u, float(sol.m), sol.A,
                     errors["beta"], errors["gamma"]))
    header = [parameter, "u", "m", "A", "beta_theory", "gamma_theory"]
    if fmt == "csv":
        _write_csv(out, header, rows, config)
    else:
        _write_json(out, {"config": config,
                          "rows": [dict(zip(header, row)) for row in rows]})
    return {"rows": rows}


def run_adaptive(config: dict, out: Path, fmt: str) -> dict:
    grid = config["grid"]
    _check_keys(dict(grid), {"alpha", "beta"}, "grid")
    pair = config.get("pair", "mild_sobolev")
    if pair not in _PAIR_KINDS:
        raise ConfigError(f"unknown pair {pair!r}")
    a_kind, s_kind = _PAIR_KINDS[pair]
    base = dict(config["spec"])
    rule_cfg = config["rule"]
    reps = int(config["reps"])
    seed = int(config["seed"])
    threads = int(config.get("threads", 1))

    rows = []
    u_values = []
    eps = float(base["eps"])
    for i, alpha in enumerate(grid["alpha"]):
        for j, beta in enumerate(grid["beta"]):
            d = dict(base)
            d["a"] = {"kind": a_kind, "scale": 1.0, "exponent": float(alpha)}
            d["sigma"] = {"kind": s_kind, "scale": 1.0, "exponent": float(beta)}
            spec = ProblemSpec.from_json_dict(d)
            sol = extreme.solve_extreme(spec)
            u_values.append(sol.u)
            rule, _ = _build_rule(rule_cfg, spec, sol)
            report = simulate.estimate_errors(
                rule, sol.least_favorable(spec.K), spec.eps, reps, seed,
                threads=threads, experiment_id=i * len(grid["beta"]) + j)
            rows.append((float(alpha), float(beta), spec.r, sol.u,
                         report.alpha_hat, report.beta_hat, report.gamma_hat))
    margin = rates.adaptive_margin(u_values, eps)
    header = ["alpha", "beta", "r", "u", "alpha_hat", "beta_hat", "gamma_hat"]
    if fmt == "csv":
        _write_csv(out, header, rows, config)
    else:
        _write_json(out, {"config": config, "u_sigma": min(u_values),
                          "margin": margin,
                          "rows": [dict(zip(header, row)) for row in rows]})
    return {"rows": rows, "u_sigma": min(u_values), "margin": margin}


_RUNNERS = {"solve": run_solve, "rates": run_rates, "mc": run_mc,
            "sweep": run_sweep, "adaptive": run_adaptive}

_TOP_KEYS = {
    "solve": {"action", "spec", "out", "format", "seed"},
    "rates": {"action", "cases", "out", "format", "seed"},
    "mc": {"action", "spec", "rule", "reps", "seed", "alternative", "alpha",
           "theory_u", "theory_D", "threads", "out", "format", "trace"},
    "sweep": {"action", "spec", "parameter", "values", "alpha", "out",
              "format", "seed"},
    "adaptive": {"action", "spec", "grid", "pair", "rule", "reps", "seed",
                 "threads", "out", "format"},
}


def _resolve_config(args) -> tuple:
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    action = args.action or config.get("action")
    if action not in ACTIONS:
        raise ConfigError(f"action must be one of {ACTIONS}, got {action!r}")
    config["action"] = action
    for key, value in (("out", args.out), ("format", args.format),
                       ("reps", args.reps), ("seed", args.seed),
                       ("threads", args.threads)):
        if value is not None:
            config[key] = value
    env_seed = os.environ.get("SEQDETECT_SEED")
    if env_seed is not None:
        config["seed"] = int(env_seed)
    config.setdefault("seed", 0)
    config.setdefault("format", "json")
    _check_keys(config, _TOP_KEYS[action], f"{action} config")
    if config["format"] not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    if "out" not in config:
        raise ConfigError("output path required (--out or config key)")
    return action, config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="seqdetect",
        description="minimax detection for ill-posed sequence models")
    parser.add_argument("action", nargs="?", choices=ACTIONS,
                        help="overrides the config's action")
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", help="output artifact path")
    parser.add_argument("--format", choices=("json", "csv"))
    parser.add_argument("--reps", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    args = parser.parse_args(argv)

    try:
        action, config = _resolve_config(args)
    except ConfigError as exc:
        print(f"seqdetect:error:config: {exc}", file=sys.stderr)
        return 2
    try:
        _RUNNERS[action](config, Path(config["out"]), config["format"])
    except ConfigError as exc:
        print(f"seqdetect:error:config: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError) as exc:
        print(f"seqdetect:error:config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"seqdetect:error:numeric: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
