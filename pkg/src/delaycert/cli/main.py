"""``delaycert`` command line.

Every command prints one JSON document on standard output. Exit codes:
0 certified / completed, 1 not certified, 2 error or numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import sys
import time
from fractions import Fraction

from ..polynomial import Poly
from ..sdp import write_sdpa
from ..search import margin_bisection, parse_grid, region_certify, sweep
from ..simulate import integrate
from ..stability.certificate import CERTIFIED, NOT_CERTIFIED, build_program, certify, dumps
from ..stability.systems import fix_parameter
from .specfile import SpecError, load

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_ERROR = 0, 1, 2


def parse_poly(text: str, var: str = "theta") -> Poly:
    """Polynomial from an arithmetic expression in ``var`` (``+ - * / **`` and numbers)."""
    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return Poly.const(Fraction(repr(node.value)) if isinstance(node.value, float) else node.value)
        if isinstance(node, ast.Name) and node.id == var:
            return Poly.var(var)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a = walk(node.left)
            if isinstance(node.op, ast.Pow):
                if not isinstance(node.right, ast.Constant) or not isinstance(node.right.value, int):
                    raise ValueError("exponents must be integer literals")
                return a ** node.right.value
            b = walk(node.right)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div) and not b.variables:
                return a * (1 / Fraction(b.constant_term()))
        raise ValueError(f"unsupported expression: {ast.dump(node)}")

    try:
        return walk(ast.parse(text.strip(), mode="eval"))
    except SyntaxError as exc:
        raise ValueError(f"cannot parse polynomial {text!r}: {exc.msg}") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaycert", description="Stability certificates for time-delay systems.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, degree=True):
        sp.add_argument("--spec", required=True, help="system specification (JSON)")
        if degree:
            sp.add_argument("--degree", type=int, help="polynomial degree d (default from the spec file)")
        sp.add_argument("--theta-degree", type=int, help="s-degree of nonlinear functionals")
        sp.add_argument("--method", choices=["functional", "delay-independent"], default=None)

    c = sub.add_parser("certify", help="certify one system")
    common(c)
    c.add_argument("--tau", type=float, help="override the largest delay (others keep their ratios)")
    c.add_argument("--dump-cert", metavar="PATH", help="write the certificate JSON here")

    m = sub.add_parser("margin", help="bisect for the delay margin")
    common(m)
    m.add_argument("--param", default="tau")
    m.add_argument("--bracket", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    m.add_argument("--tol", type=float, default=1e-3)
    m.add_argument("--verify-trials", type=int, default=10)

    s = sub.add_parser("sweep", help="certify on a grid")
    common(s)
    s.add_argument("--param", default="tau")
    s.add_argument("--grid", required=True, metavar="LO:STEP:HI")
    s.add_argument("--jobs", type=int, default=1)

    r = sub.add_parser("region", help="certify over the parameter boxes")
    r.add_argument("--spec", required=True)
    r.add_argument("--degree-theta", type=int)
    r.add_argument("--degree-param", type=int)
    r.add_argument("--dump-cert", metavar="PATH")

    si = sub.add_parser("simulate", help="integrate from a polynomial history")
    si.add_argument("--spec", required=True)
    si.add_argument("--history", default="1", help="comma-separated polynomials in theta, one per state")
    si.add_argument("--tend", type=float)
    si.add_argument("--h", type=float)
    si.add_argument("--out", help="CSV output path")

    e = sub.add_parser("export-sdpa", help="write the stability SDP in SDPA sparse format")
    common(e)
    e.add_argument("--out", required=True)
    return p


def _degree(args, defaults, key="d", attr="degree", fallback=4):
    v = getattr(args, attr, None)
    return v if v is not None else defaults.get(key, fallback)


def _kw(args, defaults) -> dict:
    kw = {}
    th = args.theta_degree if args.theta_degree is not None else defaults.get("theta")
    if th is not None:
        kw["theta_degree"] = th
    if args.method:
        kw["method"] = args.method
    if "kernel" in defaults:
        kw["kernel_degree"] = defaults["kernel"]
    return kw


def _verdict_code(verdict: str) -> int:
    return {CERTIFIED: EXIT_OK, NOT_CERTIFIED: EXIT_NOT_CERTIFIED}.get(verdict, EXIT_ERROR)


def run(argv=None) -> tuple[int, dict]:
    """Execute a command; returns ``(exit_code, report)``."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        if not exc.code:
            return EXIT_OK, {}
        return EXIT_ERROR, {"error": "invalid arguments"}
    try:
        spec, defaults = load(args.spec)
        cmd = args.command
        if cmd == "certify":
            if args.tau is not None:
                spec = fix_parameter(spec, "tau", args.tau)
            rep = certify(spec, _degree(args, defaults), **_kw(args, defaults))
            out = {"command": cmd, "spec": args.spec, "degree": _degree(args, defaults), **rep.to_json()}
            if args.dump_cert and rep.certificate is not None:
                rep.certificate.save(args.dump_cert)
                out["certificate"] = args.dump_cert
            return _verdict_code(rep.verdict), out
        if cmd == "margin":
            res = margin_bisection(spec, _degree(args, defaults), tuple(args.bracket), args.tol, args.param,
                                   args.verify_trials, **_kw(args, defaults))
            out = {"command": cmd, **res.to_json()}
            ok = res.verification is None or res.verification["passed"]
            return (EXIT_OK if ok else EXIT_ERROR), out
        if cmd == "sweep":
            rows = sweep(spec, parse_grid(args.grid), _degree(args, defaults), args.param, args.jobs,
                         **_kw(args, defaults))
            return EXIT_OK, {"command": cmd, "param": args.param, "results": rows}
        if cmd == "region":
            d1 = args.degree_theta if args.degree_theta is not None else defaults.get("d", 4)
            d2 = args.degree_param if args.degree_param is not None else defaults.get("param", 2)
            rep = region_certify(spec, d1, d2)
            out = {"command": cmd, "degree_theta": d1, "degree_param": d2,
                   "parameters": {k: [float(lo), float(hi)] for k, (lo, hi) in spec.parameters.items()},
                   **rep.to_json()}
            if args.dump_cert and rep.certificate is not None:
                rep.certificate.save(args.dump_cert)
            return _verdict_code(rep.verdict), out
        if cmd == "simulate":
            parts = [parse_poly(p) for p in args.history.split(",")]
            if len(parts) == 1 and spec.n > 1:
                parts = parts * spec.n
            traj = integrate(spec, parts, T_end=args.tend, h=args.h)
            if args.out:
                traj.to_csv(args.out)
            out = {"command": cmd, "h": traj.h, "t_end": traj.t_end, "steps": len(traj.t) - 1,
                   "final_state": [float(v) for v in traj.x[-1]], "max_abs": float(abs(traj.x).max()),
                   "blew_up": traj.blew_up, "escape_time": traj.escape_time,
                   "error_estimate": traj.error_estimate, "csv": args.out}
            return (EXIT_ERROR if traj.blew_up else EXIT_OK), out
        if cmd == "export-sdpa":
            prog = build_program(spec, _degree(args, defaults), args.method, args.theta_degree)
            write_sdpa(prog.problem, args.out)
            return EXIT_OK, {"command": cmd, "out": args.out, **prog.problem.summary()}
        return EXIT_ERROR, {"error": f"unknown command {cmd}"}
    except SpecError as exc:
        return EXIT_ERROR, {"error": "malformed specification", "detail": str(exc)}
    except (ValueError, KeyError, MemoryError) as exc:
        return EXIT_ERROR, {"error": type(exc).__name__, "detail": str(exc), "status": "unknown"}


def main(argv=None) -> int:
    t0 = time.perf_counter()
    code, report = run(argv)
    if not report:
        return code
    report.setdefault("seconds_total", time.perf_counter() - t0)
    sys.stdout.write(dumps(report, indent=1) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
