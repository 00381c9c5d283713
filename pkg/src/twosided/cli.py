"""Command-line front end.

Exit codes: 0 on success, 1 on a domain or data error (or a failed
acceptance criterion under ``verify``), 2 on a usage error. The default
numerical tolerance can be overridden with the ``TWOSIDED_TOL`` environment
variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance, opf, polyapprox, quadcc, seps
from .errors import ConvergenceError, DomainError, SchemaError
from .formulation import build_soc, dumps, emit_json, parse_problem
from .solver import KelleyOptions, kelley_solve, solve_via_soc

TOL_ENV = "TWOSIDED_TOL"
DEFAULT_TOL = 1e-7


class UsageError(Exception):
    pass


def default_tol():
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise UsageError(f"{TOL_ENV}={raw!r} is not a number") from None
    if not tol > 0:
        raise UsageError(f"{TOL_ENV} must be positive")
    return tol


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two numbers, got {text!r}")
    return vals


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_json(path):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
        return json.loads(text)
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from exc


def _emit(args, text):
    if not text.endswith("\n"):
        text += "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------

def cmd_seps(args):
    eps = args.eps
    if args.op == "support":
        if args.dir is None:
            raise UsageError("support needs --dir")
        value, point = seps.support(args.dir[0], args.dir[1], eps)
        doc = {"op": "support", "eps": eps, "dir": list(args.dir),
               "value": value if np.isfinite(value) else None,
               "maximizer": None if point is None else list(point)}
    else:
        if args.point is None:
            raise UsageError(f"{args.op} needs --point")
        p = args.point
        doc = {"op": args.op, "eps": eps, "point": list(p)}
        if args.op == "contains":
            doc["contains"] = seps.contains(p, eps)
            doc["mass"] = seps.mass(p)
        elif args.op == "separate":
            cut = (seps.separate_tangent(p, eps) if args.method == "tangent"
                   else seps.separate_gradient(p, eps))
            doc["method"] = args.method
            doc["cut"] = {"a1": cut.a1, "a2": cut.a2, "rhs": cut.rhs}
        else:
            pr = seps.project(p, eps)
            doc["projection"] = list(pr.point)
            doc["lam"] = pr.lam
    _emit(args, dumps(doc))
    return 0


def cmd_approx(args):
    grid = args.eps_grid if args.eps_grid else (args.eps,)
    families = tuple(f for f in args.families.split(",") if f)
    report = polyapprox.certificates_report(grid, families, args.tangent_cuts or ())
    _emit(args, dumps({"certificates": report}))
    return 0


def cmd_formulate(args):
    p = parse_problem(_read_json(args.input))
    _emit(args, dumps(emit_json(build_soc(p, args.mode, args.factor))))
    return 0


def cmd_quadcc(args):
    tol = args.tol
    if args.op == "witness":
        w = quadcc.nonconvexity_witness(tol=tol)
        if args.trace:
            Path(args.trace).write_text(quadcc.trace_csv(w["trace"]))
        doc = {k: v for k, v in w.items() if k != "trace"}
        _emit(args, dumps(doc))
    elif args.op == "true-prob":
        inst = quadcc.example_instance(args.x, args.y, args.eps, args.k)
        _emit(args, dumps({"x": args.x, "y": args.y, "k": args.k, "eps": args.eps,
                           "true_prob": quadcc.true_prob(inst, tol)}))
    elif args.op == "compare-grid":
        rows = quadcc.compare_grid(args.eps, n=args.grid, tol=tol)
        _emit(args, quadcc.grid_csv(rows))
    elif args.op == "mc":
        inst = quadcc.example_instance(args.x, args.y, args.eps, args.k)
        rng = np.random.default_rng(args.seed)
        xi = inst.dist.sample(rng, args.samples)
        q = (xi @ inst.a + inst.b) ** 2 + (xi @ inst.c + inst.d) ** 2
        _emit(args, dumps({"x": args.x, "y": args.y, "samples": args.samples,
                           "seed": args.seed, "estimate": float(np.mean(q <= inst.k)),
                           "true_prob": quadcc.true_prob(inst, tol)}))
    else:
        rows = quadcc.exact_contour(args.eps, tol=tol)
        lines = ["theta,x,y"] + [",".join(repr(v) for v in r) for r in rows]
        _emit(args, "\n".join(lines))
    return 0


def cmd_solve(args):
    p = parse_problem(_read_json(args.input))
    opts = KelleyOptions(tol=args.tol)
    if args.method == "kelley":
        rep = kelley_solve(p, opts)
    else:
        rep = solve_via_soc(p, args.mode, opts)
    if args.history:
        Path(args.history).write_text(rep.history_csv())
    _emit(args, rep.to_json())
    return 0 if rep.status == "optimal" else 1


def cmd_opf(args):
    if (args.network is None) == (args.fixture is None):
        raise UsageError("give exactly one of a network file or --fixture")
    net = opf.load_fixture(args.fixture) if args.fixture else opf.load_network(_read_json(args.network))
    rep, _ = opf.solve_cc_opf(net, args.eps, args.mode, slack=args.slack,
                              split_side_eps=args.side_eps, opts=KelleyOptions(tol=args.tol))
    doc = {"mode": args.mode, "eps": args.eps, "status": rep.status}
    if rep.status == "optimal":
        p, alpha = opf.dispatch_from_report(net, rep)
        ev = opf.evaluate_dispatch(net, p, alpha, args.eps, slack=args.slack)
        doc.update({"p": p.tolist(), "alpha": alpha.tolist(), **ev.to_dict()})
    _emit(args, dumps(doc))
    return 0 if rep.status == "optimal" else 1


def cmd_verify(args):
    results = acceptance.run_all(set(args.criteria) if args.criteria else None, seed=args.seed)
    if args.json:
        _emit(args, dumps([r.as_dict() for r in results]))
    else:
        _emit(args, "\n".join(r.line() for r in results))
    return 0 if all(r.passed for r in results) else 1


# -- parser ------------------------------------------------------------------

def build_parser(tol):
    parser = argparse.ArgumentParser(
        prog="twosided", description="Gaussian two-sided chance constraint toolkit.",
        epilog=f"Set {TOL_ENV} to change the default tolerance ({tol:g}).")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("-o", "--out", help="write output here instead of stdout")
        p.add_argument("--tol", type=float, default=tol, help="numerical tolerance")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="random seed")

    p = sub.add_parser("seps", help="membership, separation, projection, support")
    p.add_argument("op", choices=("contains", "separate", "project", "support"))
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--point", type=_pair, help="x,y")
    p.add_argument("--dir", type=_pair, help="a1,a2")
    p.add_argument("--method", choices=("tangent", "gradient"), default="tangent")
    common(p)
    p.set_defaults(func=cmd_seps)

    p = sub.add_parser("approx", help="build polyhedral families and certify them")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--eps-grid", type=_floats, help="comma-separated eps values")
    p.add_argument("--families", default="A,B", help="comma-separated subset of A,B")
    p.add_argument("--tangent-cuts", type=_ints, help="tangent family sizes to certify")
    common(p)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("formulate", help="problem JSON to SOC formulation JSON")
    p.add_argument("input", help="problem JSON file or - for stdin")
    p.add_argument("--mode", choices=("outer", "conservative"), default="outer")
    p.add_argument("--factor", type=float, default=1.25)
    common(p)
    p.set_defaults(func=cmd_formulate)

    p = sub.add_parser("quadcc", help="quadratic chance constraint experiments")
    p.add_argument("op", choices=("true-prob", "witness", "compare-grid", "contour", "mc"))
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--grid", type=int, default=100, help="grid points per axis")
    p.add_argument("--x", type=float, default=0.8)
    p.add_argument("--y", type=float, default=0.8)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--trace", help="CSV path for the witness line trace")
    common(p, seed=True)
    p.set_defaults(func=cmd_quadcc)

    p = sub.add_parser("solve", help="solve a problem JSON")
    p.add_argument("input", help="problem JSON file or - for stdin")
    p.add_argument("--method", choices=("kelley", "soc"), default="kelley")
    p.add_argument("--mode", choices=("outer", "conservative"), default="outer",
                   help="SOC variant for --method soc")
    p.add_argument("--history", help="CSV path for the iteration history")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("opf", help="chance-constrained DC optimal power flow")
    p.add_argument("network", nargs="?", help="network JSON file")
    p.add_argument("--fixture", choices=opf.FIXTURES)
    p.add_argument("--mode", choices=opf.MODES, default="two_sided_exact")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--slack", type=int, default=0)
    p.add_argument("--side-eps", type=float, help="per-side level in split mode (eps/2)")
    common(p)
    p.set_defaults(func=cmd_opf)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--criteria", type=_ints, help="subset, e.g. 1,2,7")
    p.add_argument("--json", action="store_true")
    p.add_argument("--seed", type=int, help="override the sampled criteria's seeds")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_verify)
    return parser


def run(argv=None):
    """Parse ``argv`` and execute; returns the exit code."""
    try:
        parser = build_parser(default_tol())
    except UsageError as exc:
        print(f"twosided: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"twosided: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, SchemaError, ConvergenceError) as exc:
        print(f"twosided: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
