"""Command-line surface: bound computation, verification runs, common-information brackets.

Exit codes: 0 success, 1 property failure, 2 invalid input, 3 unverified
condition.  All values are reported in nats unless --bits is given (conversion
happens at the presentation layer only).  Reports are deterministic: the same
configuration, seed, and budget produce byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .bounds import (
    BoundConditionError,
    closed_form_bounds,
    counterexample_density,
    entropy_gap,
    renyi_gap,
    tight_bounds,
    truncation_upper,
)
from .commoninfo import (
    ModelError,
    common_info_bracket,
    make_gaussian_model,
    make_mvt_model,
)
from .discrete import nb_binomial_identity_check, poisson_cdf, poisson_limit_check
from .families import (
    BETA_CONCAVE,
    ENTROPY,
    LOG_CONCAVE,
    RENYI,
    TRUNCATION,
    FamilyError,
    NonIntegrableError,
    make_family,
    make_functional,
)
from .oracle import (
    OracleBudget,
    RandomDensityConfig,
    generate_random_density,
    integrate_functional,
    solve_threshold,
    truncated_mass,
)

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_INVALID = 2
EXIT_UNVERIFIED = 3

SEED_ENV_VAR = "DENSITYBOUNDS_SEED"
NATS_PER_BIT = math.log(2.0)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 20260810
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"invalid {SEED_ENV_VAR}={raw!r}: must be an integer")


def _read_config_file(path: str) -> dict:
    """Flat key=value text file; keys mirror long flag names with '-' or '_'."""
    out = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill unset options from the config file; explicit flags take precedence."""
    if not getattr(args, "config", None):
        return
    values = _read_config_file(args.config)
    for key, raw in values.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is not None:
            continue  # flag was given explicitly
        action = next((a for a in parser._actions if a.dest == key), None)
        if action is None or action.type is None:
            setattr(args, key, raw)
        else:
            setattr(args, key, action.type(raw))


def _scaled(value: float, bits: bool) -> float:
    return value / NATS_PER_BIT if bits else value


def _emit(report: dict, fmt: str, bits: bool) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        rows = report.get("results", [])
        buf = io.StringIO()
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        return buf.getvalue()
    lines = [f"command: {report['command']}"]
    for row in report.get("results", []):
        lines.append("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
    for prop in report.get("properties", []):
        lines.append(f"  [{'PASS' if prop['passed'] else 'FAIL'}] {prop['name']}"
                     f" (margin={prop.get('margin')})")
    for key, val in report.get("diagnostics", {}).items():
        lines.append(f"  {key}: {val}")
    return "\n".join(lines) + "\n"


def _functional_from_args(args) -> object:
    kind = args.functional
    if kind == "entropy":
        return make_functional(ENTROPY)
    if kind == "renyi":
        if args.alpha is None:
            raise FamilyError("--alpha is required for the renyi functional")
        return make_functional(RENYI, alpha=args.alpha)
    if kind == "truncation":
        if args.t is None:
            raise FamilyError("--t is required for the truncation functional")
        return make_functional(TRUNCATION, t=args.t)
    raise FamilyError(f"unknown functional {kind!r}")


def _family_from_args(args) -> object:
    if args.family == "log-concave":
        return make_family(LOG_CONCAVE)
    if args.family == "beta-concave":
        if args.beta is None:
            raise FamilyError("--beta is required for the beta-concave family")
        return make_family(BETA_CONCAVE, beta=args.beta)
    raise FamilyError(f"unknown family {args.family!r}")


def _config_echo(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _versions() -> dict:
    return {"densitybounds": __version__, "numpy": np.__version__}


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    functional = _functional_from_args(args)
    family = _family_from_args(args)
    method = args.method or "auto"
    tol = args.tol if args.tol is not None else 1e-10
    if method == "closed-form":
        result = closed_form_bounds(functional, family, args.n, args.fmax)
    else:
        result = tight_bounds(functional, family, args.n, args.fmax,
                              tol=tol, method=method)
    payload = result.as_dict()
    for key in ("lower", "upper", "gap"):
        payload[key] = _scaled(payload[key], args.bits)
    report = {
        "command": "bounds",
        "config_echo": _config_echo(args, ("functional", "alpha", "t", "family",
                                           "beta", "n", "fmax", "method", "bits")),
        "results": [payload],
        "properties": [],
        "diagnostics": {"units": "bits" if args.bits else "nats"},
        "versions": _versions(),
    }
    sys.stdout.write(_emit(report, args.format, args.bits))
    return EXIT_OK if result.validated() else EXIT_UNVERIFIED


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _verify_attainment(props, budget, rtol=2e-6):
    cases = [
        (ENTROPY, {}, LOG_CONCAVE, None),
        (ENTROPY, {}, BETA_CONCAVE, 4.0),
        (RENYI, {"alpha": 2.0}, LOG_CONCAVE, None),
        (RENYI, {"alpha": 2.0}, BETA_CONCAVE, 4.0),
        (TRUNCATION, {"t": 0.25}, LOG_CONCAVE, None),
        (TRUNCATION, {"t": 0.25}, BETA_CONCAVE, 4.0),
    ]
    from .families import make_extremal_linear, make_uniform_box
    for fk, fkw, gk, beta in cases:
        functional = make_functional(fk, **fkw)
        family = make_family(gk, beta=beta)
        res = tight_bounds(functional, family, 1, 1.0)
        ext = make_extremal_linear(family, 1, 1.0)
        box = make_uniform_box(family, 1, 1.0)
        got_ext = integrate_functional(ext, functional, budget).value
        got_box = integrate_functional(box, functional, budget).value
        err_e = abs(got_ext - res.a_orthant) / max(abs(res.a_orthant), 1.0)
        err_b = abs(got_box - res.a_box) / max(abs(res.a_box), 1.0)
        label = f"{fk}/{gk}" + (f"(beta={beta:g})" if beta else "")
        props.append({"name": f"attainment orthant {label}", "margin": err_e,
                      "passed": bool(err_e <= rtol)})
        props.append({"name": f"attainment box {label}", "margin": err_b,
                      "passed": bool(err_b <= rtol)})


def _verify_containment(props, budget, densities, seed):
    combos = [
        (ENTROPY, {}, LOG_CONCAVE, None),
        (ENTROPY, {}, BETA_CONCAVE, 4.0),
        (TRUNCATION, {"t": 0.2}, LOG_CONCAVE, None),
    ]
    for fk, fkw, gk, beta in combos:
        functional = make_functional(fk, **fkw)
        family = make_family(gk, beta=beta)
        worst = math.inf
        violations = 0
        for i in range(densities):
            gen = "quadratic" if i % 2 == 0 else "max-affine"
            spec = generate_random_density(RandomDensityConfig(
                family=family, n=1, generator=gen, seed=seed + i))
            res = tight_bounds(functional, family, 1, spec.f_max)
            est = integrate_functional(spec, functional, budget)
            eps = (est.abs_tol or 0.0) + 3.0 * (est.std_error or 0.0) + 1e-7
            margin = min(est.value - (res.i_lower - eps), (res.i_upper + eps) - est.value)
            worst = min(worst, margin)
            if margin < 0:
                violations += 1
        label = f"{fk}/{gk}" + (f"(beta={beta:g})" if beta else "")
        props.append({"name": f"containment {label} ({densities} densities)",
                      "margin": worst, "passed": violations == 0})


def _verify_identities(props):
    dev = abs(truncation_upper(make_family(LOG_CONCAVE), 2, 1.0, 0.1)
              - poisson_cdf(math.log(10.0), 2))
    props.append({"name": "truncation series equals poisson cdf", "margin": dev,
                  "passed": bool(dev <= 1e-12)})
    ok = all(nb_binomial_identity_check(beta, n, p)
             for beta in (2, 3, 5, 8) for n in (0, 1, 2) if beta >= n + 1
             for p in (0.1, 0.5, 0.9))
    props.append({"name": "negative-binomial / binomial identity", "margin": 0.0,
                  "passed": ok})
    limit = poisson_limit_check(1.0, 1, [10, 100, 10_000, 1_000_000])
    props.append({"name": "poisson limit of binomial cdfs",
                  "margin": limit["max_deviation"],
                  "passed": bool(limit["deviations"][-1] < 1e-5 and limit["decreasing_in_r"])})
    gap_drop = abs(entropy_gap(1e6, 2) - 2.0)
    props.append({"name": "entropy gap degenerates as beta grows", "margin": gap_drop,
                  "passed": bool(gap_drop < 1e-5)})
    renyi_drop = abs(renyi_gap(1.0001, None, 1) - 1.0)
    props.append({"name": "renyi gap degenerates as alpha -> 1", "margin": renyi_drop,
                  "passed": bool(renyi_drop < 1e-3)})


def _verify_threshold(props, budget):
    from .families import make_extremal_linear
    spec = make_extremal_linear(make_family(LOG_CONCAVE), 1, 1.0)
    worst = 0.0
    for gamma in (0.1, 0.3, 0.5, 0.7, 0.9):
        t = solve_threshold(spec, gamma, tol=1e-8, budget=budget)
        worst = max(worst, abs(truncated_mass(spec, t, budget).value - gamma))
    props.append({"name": "threshold round-trip", "margin": worst,
                  "passed": bool(worst <= 1e-8)})


def _verify_determinism(props, budget):
    from .families import make_extremal_linear
    spec = make_extremal_linear(make_family(LOG_CONCAVE), 3, 1.0)
    functional = make_functional(ENTROPY)
    small = OracleBudget(mc_samples=20_000, seed=budget.seed, workers=budget.workers)
    one = integrate_functional(spec, functional, small, method="monte-carlo")
    two = integrate_functional(spec, functional, small, method="monte-carlo")
    same = one.value == two.value
    props.append({"name": "monte-carlo determinism (same seed)",
                  "margin": abs(one.value - two.value), "passed": bool(same)})


def _verify_injection(props, budget):
    functional = make_functional(ENTROPY)
    family = make_family(LOG_CONCAVE)
    res = tight_bounds(functional, family, 1, 1.0)
    a = res.a_orthant - 0.05
    spec = counterexample_density(functional, family, 1, 1.0, a, violated="i")
    got = integrate_functional(spec, functional, budget).value
    margin = got - a
    props.append({"name": "injected violation exceeded by counterexample",
                  "margin": margin, "passed": bool(margin > 0.04)})


def cmd_verify(args) -> int:
    budget = OracleBudget(seed=args.seed, workers=args.workers or 1,
                          mc_samples=args.samples or 200_000)
    suites = (args.suite.split(",") if args.suite
              else ["attainment", "containment", "identities", "threshold", "determinism"])
    props: list = []
    densities = args.densities or 25
    for suite in suites:
        if suite == "attainment":
            _verify_attainment(props, budget)
        elif suite == "containment":
            _verify_containment(props, budget, densities, args.seed)
        elif suite == "identities":
            _verify_identities(props)
        elif suite == "threshold":
            _verify_threshold(props, budget)
        elif suite == "determinism":
            _verify_determinism(props, budget)
        else:
            raise FamilyError(f"unknown suite {suite!r}")
    if args.inject_violation:
        if args.inject_violation != "A-minus-epsilon":
            raise FamilyError(f"unknown injection {args.inject_violation!r}")
        _verify_injection(props, budget)
    all_pass = all(p["passed"] for p in props)
    report = {
        "command": "verify",
        "config_echo": _config_echo(args, ("suite", "densities", "samples", "seed",
                                           "workers", "inject_violation")),
        "results": [],
        "properties": props,
        "diagnostics": {"suites": suites, "all_passed": all_pass},
        "versions": _versions(),
    }
    sys.stdout.write(_emit(report, args.format, args.bits))
    return EXIT_OK if all_pass else EXIT_PROPERTY_FAILURE


# ---------------------------------------------------------------------------
# common-info
# ---------------------------------------------------------------------------

def cmd_common_info(args) -> int:
    budget = OracleBudget(seed=args.seed, workers=args.workers or 1,
                          mc_samples=args.samples or 200_000)
    if args.model == "gaussian":
        model = make_gaussian_model(args.n or 2, rho=args.rho)
    elif args.model == "mvt":
        model = make_mvt_model(args.n or 2, nu=args.nu, allow_limit=args.limit_mode)
    else:
        raise FamilyError(f"unknown model {args.model!r}")
    bracket = common_info_bracket(model, budget, diagnostics=not args.no_diagnostics)
    payload = bracket.as_dict()
    if args.bits:
        for key in ("g_lower", "g_upper", "gap"):
            payload[key] = _scaled(payload[key], True)
        payload["i_d"]["value"] = _scaled(payload["i_d"]["value"], True)
    report = {
        "command": "common-info",
        "config_echo": _config_echo(args, ("model", "rho", "nu", "n", "samples",
                                           "seed", "limit_mode", "bits")),
        "results": [payload],
        "properties": [],
        "diagnostics": {"units": "bits" if args.bits else "nats"},
        "versions": _versions(),
    }
    sys.stdout.write(_emit(report, args.format, args.bits))
    return EXIT_OK


# ---------------------------------------------------------------------------
# table
# ---------------------------------------------------------------------------

def _parse_values(raw: str) -> list:
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
            return [float(v) for v in range(lo, hi + 1)]
        if len(parts) == 3 and parts[2] == "log":
            lo, hi = float(parts[0]), float(parts[1])
            count = int(round(math.log10(hi / lo))) + 1
            return list(np.geomspace(lo, hi, count))
        raise FamilyError(f"cannot parse sweep values {raw!r}")
    return [float(v) for v in raw.split(",") if v]


def cmd_table(args) -> int:
    values = _parse_values(args.values) if args.values else []
    if not values:
        raise FamilyError("empty sweep")
    n = args.n or 1
    f_max = args.fmax if args.fmax is not None else 1.0
    rows = []
    for value in values:
        row = {"param": args.param, "value": value, "n": n, "fmax": f_max}
        if args.param == "beta":
            family = make_family(BETA_CONCAVE, beta=value)
            if args.functional == "renyi":
                functional = make_functional(RENYI, alpha=args.alpha)
                res = closed_form_bounds(functional, family, n, f_max)
                row["limit_gap"] = renyi_gap(args.alpha, None, n)
            else:
                functional = make_functional(ENTROPY)
                res = closed_form_bounds(functional, family, n, f_max)
                row["limit_gap"] = float(n)
        elif args.param == "alpha":
            functional = make_functional(RENYI, alpha=value)
            family = _family_from_args(args)
            res = closed_form_bounds(functional, family, n, f_max)
            row["limit_gap"] = entropy_gap(args.beta, n) if args.family == "beta-concave" \
                else float(n)
        elif args.param == "t":
            functional = make_functional(TRUNCATION, t=value)
            family = _family_from_args(args)
            res = closed_form_bounds(functional, family, n, f_max)
            if args.family == "log-concave":
                row["poisson_cdf"] = poisson_cdf(math.log(f_max / value), n)
        else:
            raise FamilyError(f"unknown sweep parameter {args.param!r}")
        row["lower"] = _scaled(res.lower, args.bits)
        row["upper"] = _scaled(res.upper, args.bits)
        row["gap"] = _scaled(res.gap, args.bits)
        if "limit_gap" in row:
            row["limit_gap"] = _scaled(row["limit_gap"], args.bits)
        rows.append(row)
    report = {
        "command": "table",
        "config_echo": _config_echo(args, ("param", "values", "functional", "family",
                                           "alpha", "beta", "t", "n", "fmax", "bits")),
        "results": rows,
        "properties": [],
        "diagnostics": {"units": "bits" if args.bits else "nats"},
        "versions": _versions(),
    }
    fmt = args.format if args.format != "text" else "csv"
    sys.stdout.write(_emit(report, fmt, args.bits))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densitybounds",
        description="Value brackets for integral functionals of shape-constrained "
                    "densities, their numerical verification, and common-information "
                    "brackets.")
    parser.add_argument("--format", choices=["json", "csv", "text"], default="json")
    parser.add_argument("--bits", action="store_true",
                        help="report values in bits instead of nats")
    parser.add_argument("--config", type=str, default=None,
                        help="flat key=value config file (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    common_num = dict(type=float, default=None)

    p_bounds = sub.add_parser("bounds", help="compute a validated bracket")
    p_bounds.add_argument("--functional", choices=["entropy", "renyi", "truncation"],
                          required=True)
    p_bounds.add_argument("--alpha", **common_num)
    p_bounds.add_argument("--t", **common_num)
    p_bounds.add_argument("--family", choices=["log-concave", "beta-concave"],
                          required=True)
    p_bounds.add_argument("--beta", **common_num)
    p_bounds.add_argument("-n", "--n", type=int, default=1)
    p_bounds.add_argument("--fmax", type=float, default=1.0)
    p_bounds.add_argument("--tol", **common_num)
    p_bounds.add_argument("--method", choices=["auto", "closed-form", "quadrature"],
                          default=None)

    p_verify = sub.add_parser("verify", help="run the numerical property suites")
    p_verify.add_argument("--suite", type=str, default=None,
                          help="comma-separated subset of: attainment, containment, "
                               "identities, threshold, determinism")
    p_verify.add_argument("--densities", type=int, default=None)
    p_verify.add_argument("--samples", type=int, default=None)
    p_verify.add_argument("--workers", type=int, default=None)
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--inject-violation", dest="inject_violation", type=str,
                          default=None, choices=["A-minus-epsilon"])

    p_ci = sub.add_parser("common-info", help="bracket the exact common information")
    p_ci.add_argument("--model", choices=["gaussian", "mvt"], required=True)
    p_ci.add_argument("--rho", **common_num)
    p_ci.add_argument("--nu", **common_num)
    p_ci.add_argument("-n", "--n", type=int, default=None)
    p_ci.add_argument("--samples", type=int, default=None)
    p_ci.add_argument("--workers", type=int, default=None)
    p_ci.add_argument("--seed", type=int, default=None)
    p_ci.add_argument("--limit-mode", dest="limit_mode", action="store_true")
    p_ci.add_argument("--no-diagnostics", dest="no_diagnostics", action="store_true")

    p_table = sub.add_parser("table", help="sweep the closed-form brackets to CSV")
    p_table.add_argument("--param", choices=["beta", "alpha", "t"], required=True)
    p_table.add_argument("--values", type=str, default=None,
                         help="list '0.5,2,4', integer range '3:20', or decades "
                              "'1e-5:1e-1:log'")
    p_table.add_argument("--functional", choices=["entropy", "renyi", "truncation"],
                         default="entropy")
    p_table.add_argument("--family", choices=["log-concave", "beta-concave"],
                         default="log-concave")
    p_table.add_argument("--alpha", **common_num)
    p_table.add_argument("--beta", **common_num)
    p_table.add_argument("--t", **common_num)
    p_table.add_argument("-n", "--n", type=int, default=None)
    p_table.add_argument("--fmax", **common_num)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, parser)
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_INVALID
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = _default_seed()
    try:
        if args.command == "bounds":
            return cmd_bounds(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "common-info":
            return cmd_common_info(args)
        if args.command == "table":
            return cmd_table(args)
    except (FamilyError, NonIntegrableError, ModelError, ValueError) as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return EXIT_INVALID
    except BoundConditionError as exc:
        sys.stderr.write(f"bound conditions failed: {exc}\n")
        return EXIT_UNVERIFIED
    parser.error(f"unknown command {args.command!r}")
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
