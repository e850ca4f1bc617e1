"""Command line entry point: decoupling-lab <command> [flags].

Exit codes: 0 success (all checks passed), 1 some check failed, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from fractions import Fraction

import numpy as np

from .caps import as_fraction, small_cap_level
from .ensembles import EnsembleKind, EnsembleSpec, block_lower_bound, generate, parabola_energy
from .errors import LabError
from .parabola import lp_power, make_params
from .sweep import SweepConfig, default_threads, format_summary, replay, run_sweep
from .verifiers import REGISTRY, BoundWarning, decoupling_ratio, summarize, theorem_bound_info

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- value parsers ------------------------------------------------------------------

def parse_number(text: str) -> float:
    """Accepts 3^32, 1/2, 1e6, inf."""
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "oo"):
        return math.inf
    if "^" in s:
        base, exp = s.split("^", 1)
        return float(Fraction(base)) ** float(Fraction(exp))
    if "**" in s:
        base, exp = s.split("**", 1)
        return float(Fraction(base)) ** float(Fraction(exp))
    try:
        return float(Fraction(s))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def parse_beta(text: str) -> Fraction:
    try:
        return as_fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a fraction: {text!r}")


def parse_grid(text: str) -> tuple:
    parts = str(text).split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("alpha grid is lo:hi:count")
    try:
        return (parse_number(parts[0]), parse_number(parts[1]), int(parts[2]))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha grid {text!r}")


def parse_set(text: str) -> list:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer set {text!r}")


def _emit(record: dict) -> None:
    print(json.dumps(_clean(record)))


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


# -- arguments ------------------------------------------------------------------------

def _field_args(p: argparse.ArgumentParser, beta_default: str = "1") -> None:
    p.add_argument("--field", default="padic", help="padic (Z/p^n) or laurent (F_p[t]/t^n)")
    p.add_argument("--p", type=int, default=3)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--beta", type=parse_beta, default=parse_beta(beta_default), help="small cap exponent M/2N, e.g. 3/4")


def _ensemble_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ensemble", default="random", choices=[k.value for k in EnsembleKind])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=0.2)
    p.add_argument("--set", dest="charset", type=parse_set, default=None, help="integer set for charsum, e.g. 0,1,4,9")


def _exp_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pexp", type=parse_number, default=4.0)
    p.add_argument("--qexp", type=parse_number, default=4.0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="decoupling-lab", description="Finite-model experiments for small cap decoupling over local fields.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run registered checks over an ensemble")
    v.add_argument("--check", action="append", default=None, help="check name, comma list, or 'all'")
    _field_args(v)
    _ensemble_args(v)
    _exp_args(v)
    v.add_argument("--trials", type=int, default=10)
    v.add_argument("--alpha-grid", type=parse_grid, default=None, help="lo:hi:count, relative to sup|f|")
    v.add_argument("--tol", type=float, default=None)
    v.add_argument("--out", default=None, help="report file, one JSON record per line")
    v.add_argument("--csv", default=None, help="optional CSV mirror of the reports")
    v.add_argument("--threads", type=int, default=None)

    b = sub.add_parser("bound", help="evaluate the closed-form small cap decoupling bound")
    b.add_argument("--p", type=int, default=3, help="the base bold p")
    b.add_argument("--R", type=parse_number, required=True)
    b.add_argument("--beta", type=parse_beta, default=parse_beta("1"))
    _exp_args(b)

    r = sub.add_parser("ratio", help="decoupling ratio of one ensemble member")
    _field_args(r)
    _ensemble_args(r)
    _exp_args(r)

    k = sub.add_parser("block", help="decoupling ratio of the block example and its lower bound")
    _field_args(k)
    _exp_args(k)

    e = sub.add_parser("energy", help="parabola energy of an integer set")
    e.add_argument("--field", default="padic")
    e.add_argument("--p", type=int, default=3)
    e.add_argument("--N", type=int, default=1)
    e.add_argument("--set", dest="charset", type=parse_set, required=True)

    o = sub.add_parser("optimize", help="search for large decoupling ratios")
    _field_args(o)
    _exp_args(o)
    o.add_argument("--restarts", type=int, default=200)
    o.add_argument("--iters", type=int, default=500)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--threads", type=int, default=None)
    o.add_argument("--magnitudes", action="store_true")
    o.add_argument("--no-trace", action="store_true", help="print only the final record")

    y = sub.add_parser("replay", help="rerun a manifest and compare with its stored reports")
    y.add_argument("manifest")
    y.add_argument("--threads", type=int, default=None)

    sub.add_parser("checks", help="list registered checks")
    return ap


# -- commands ---------------------------------------------------------------------------

def _check_names(raw) -> list:
    if not raw:
        raise UsageError("--check is required")
    names = []
    for item in raw:
        for n in item.split(","):
            n = n.strip()
            if n == "all":
                names.extend(REGISTRY)
            elif n:
                names.append(n)
    seen = []
    for n in names:
        if n not in seen:
            seen.append(n)
    return seen


def cmd_verify(args, argv) -> int:
    config = SweepConfig(
        checks=_check_names(args.check),
        kind=args.field,
        p=args.p,
        N=args.N,
        beta=str(args.beta),
        ensemble=args.ensemble,
        trials=args.trials,
        seed=args.seed,
        alpha_grid=args.alpha_grid,
        tol=args.tol,
        p_exp=args.pexp,
        q_exp="inf" if math.isinf(args.qexp) else args.qexp,
        density=args.density,
        charset=args.charset,
    )
    threads = args.threads if args.threads is not None else default_threads()
    if threads <= 0:
        raise UsageError("--threads must be positive")
    result = run_sweep(config, threads=threads, out=args.out, argv=argv)
    if args.csv:
        _write_csv(args.csv, result.reports)
    print(format_summary(summarize(result.reports)))
    if result.skipped:
        counts: dict = {}
        for name, code in result.skipped:
            counts[(name, code)] = counts.get((name, code), 0) + 1
        for (name, code), n in counts.items():
            print(f"skipped {name}: {code} x{n}", file=sys.stderr)
    if not result.reports:
        print("no applicable checks ran", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if result.all_passed else EXIT_FAIL


def _write_csv(path: str, reports) -> None:
    import csv

    cols = ["check_name", "field", "p", "N", "beta", "p_exp", "q_exp", "ensemble", "seed", "alpha",
            "lhs", "rhs", "paper_constant", "tightest_constant", "pass", "tol", "wall_time"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in reports:
            rec = r.to_record()
            w.writerow([rec[c] for c in cols])


def cmd_bound(args) -> int:
    info = theorem_bound_info(args.pexp, args.qexp, args.beta, args.p, args.R)
    if not info["region_ok"]:
        print("warning: EXPONENT_REGION: 3/p + 1/q > 1", file=sys.stderr)
    if not info["scale_ok"]:
        print("warning: SMALL_SCALE: R < bold_p^32", file=sys.stderr)
    _emit({"bold_p": args.p, "R": args.R, "beta": args.beta, "p_exp": args.pexp, "q_exp": args.qexp, **info})
    return EXIT_OK


def _ensemble_function(args, params):
    kind = EnsembleKind.parse(args.ensemble)
    A = tuple(args.charset or ())
    if kind is EnsembleKind.CHARSUM and not A:
        raise LabError("EMPTY_SET", "charsum needs --set")
    spec = EnsembleSpec(kind, seed=args.seed, density=args.density, beta=args.beta, A=A)
    return spec, generate(spec, params)


def cmd_ratio(args) -> int:
    params = make_params(args.field, args.p, args.N)
    spec, f = _ensemble_function(args, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundWarning)
        info = theorem_bound_info(args.pexp, args.qexp, args.beta, params.bold_p, params.R)
    ratio = decoupling_ratio(f, args.pexp, args.qexp, args.beta)
    ok = ratio <= info["value"]
    _emit({"field": params.kind.value, "p": params.p, "N": params.N, "beta": args.beta, "p_exp": args.pexp,
           "q_exp": args.qexp, "ensemble": spec.describe(), "seed": args.seed, "ratio": ratio,
           "theorem_bound": info["value"], "region_ok": info["region_ok"], "pass": ok})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_block(args) -> int:
    params = make_params(args.field, args.p, args.N)
    small_cap_level(params, args.beta)
    f = generate(EnsembleSpec(EnsembleKind.BLOCK, beta=args.beta), params)
    ratio = decoupling_ratio(f, args.pexp, args.qexp, args.beta)
    lb = block_lower_bound(params.R, args.beta, args.pexp, args.qexp)
    ok = ratio >= lb * (1 - 1e-9)
    _emit({"field": params.kind.value, "p": params.p, "N": params.N, "beta": args.beta, "p_exp": args.pexp,
           "q_exp": args.qexp, "ratio": ratio, "lower_bound": lb, "pass": ok})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_energy(args) -> int:
    params = make_params(args.field, args.p, args.N)
    A = args.charset
    E = parabola_energy(A, params.ring)
    f = generate(EnsembleSpec(EnsembleKind.CHARSUM, A=tuple(A)), params)
    l4 = lp_power(f.grid, 4)
    _emit({"field": params.kind.value, "p": params.p, "N": params.N, "q": params.q, "set": A, "energy": E,
           "l4_over_q2": l4 / params.q**2})
    return EXIT_OK


def cmd_optimize(args) -> int:
    from .optimize import SearchConfig, maximize_ratio

    threads = args.threads if args.threads is not None else default_threads()
    config = SearchConfig(kind=args.field, p=args.p, N=args.N, beta=args.beta, p_exp=args.pexp, q_exp=args.qexp,
                          restarts=args.restarts, iterations=args.iters, seed=args.seed, magnitudes=args.magnitudes,
                          threads=threads)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundWarning)
        res = maximize_ratio(config)
    if not args.no_trace:
        for row in res.trace:
            _emit(row)
    _emit(res.to_record())
    return EXIT_OK if res.within_bound else EXIT_FAIL


def cmd_replay(args) -> int:
    threads = args.threads if args.threads is not None else default_threads()
    out = replay(args.manifest, threads=threads)
    _emit({"records": out["records"], "compared": out["compared"], "mismatches": out["mismatches"]})
    if not out["compared"]:
        return EXIT_USAGE
    return EXIT_OK if not out["mismatches"] else EXIT_FAIL


def cmd_checks() -> int:
    for name, spec in REGISTRY.items():
        req = ",".join(spec.requires) or "-"
        print(f"{name:<24} needs {req:<18} {spec.summary}")
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "verify":
            return cmd_verify(args, ["decoupling-lab"] + argv)
        if args.command == "bound":
            return cmd_bound(args)
        if args.command == "ratio":
            return cmd_ratio(args)
        if args.command == "block":
            return cmd_block(args)
        if args.command == "energy":
            return cmd_energy(args)
        if args.command == "optimize":
            return cmd_optimize(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "checks":
            return cmd_checks()
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
