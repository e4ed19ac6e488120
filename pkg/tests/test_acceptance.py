"""Acceptance criteria, each at its stated tolerance.

Every test logs one PASS/FAIL line (collected in the terminal summary) and
then asserts. Run with ``pytest tests/test_acceptance.py -v``.
"""

from fractions import Fraction

import numpy as np
import pytest
import sympy

from delaycert.cli.specfile import bundled
from delaycert.cones import g2_kernel, spacing_var
from delaycert.polynomial import LinExpr, MonomialBasis, Poly
from delaycert.sdp import INFEASIBLE, SdpProblem, export_sdpa, parse_sdpa, solve
from delaycert.search import margin_bisection, region_certify
from delaycert.simulate import gauss_panels, integrate, random_history
from delaycert.sos import sos
from delaycert.stability.certificate import (certificate_from_assignment, certify, derivative_value,
                                             evaluate_functional, verify_certificate)
from delaycert.stability.linear import build_linear
from delaycert.stability.systems import (SystemSpec, cooke, cross_term, example1, example3, fix_parameter, hale,
                                         scalar_delay)

SOLVE_LIMIT = 60.0


def _bisect(spec, d, bracket, tol=1e-4):
    res = margin_bisection(spec, d, bracket, tol=tol, verify_trials=0)
    return res, (res.certified + res.uncertified) / 2


def _region_spec(lo, hi) -> SystemSpec:
    spec, _ = bundled("example1_region")
    d = dict(spec.__dict__)
    d["parameters"] = {"tau": (lo, hi)}
    return SystemSpec(**d)


# ---------------------------------------------------------------------------
# shared runs


@pytest.fixture(scope="module")
def crit1():
    out = {}
    out["upper2"] = _bisect(example1(1.0), 2, (1.0, 2.0))
    out["upper4"] = _bisect(example1(1.0), 4, (1.0, 2.0))
    out["lower2"] = _bisect(example1(1.0), 2, (1.0, 0.05))
    return out


@pytest.fixture(scope="module")
def crit2():
    return {"ex1_d6": _bisect(example1(1.0), 6, (1.0, 2.0)),
            "scalar": _bisect(scalar_delay(1.0), 14, (1.0, 2.0), tol=1e-3)}


@pytest.fixture(scope="module")
def crit4():
    good = region_certify(_region_spec("0.2", "1.6"), 4, 2)
    bad = region_certify(_region_spec("0.2", "1.75"), 4, 2)
    return good, bad


@pytest.fixture(scope="module")
def crit5():
    return {
        "hale b=0.9": (hale("0.9"), certify(hale("0.9"), 6, theta_degree=0)),
        "hale b=1.1": (hale("1.1"), certify(hale("1.1"), 6, theta_degree=0)),
        "cross-term": (cross_term(), certify(cross_term(), 4, theta_degree=0)),
        "cooke (2,1)": (cooke(2, 1), certify(cooke(2, 1), 4, method="delay-independent")),
        "cooke (1,2)": (cooke(1, 2), certify(cooke(1, 2), 4, method="delay-independent")),
    }


# ---------------------------------------------------------------------------
# 1-5


@pytest.mark.slow
def test_1_example1_margins(crit1, criterion_log):
    (r2, u2), (r4, u4), (rl, l2) = crit1["upper2"], crit1["upper4"], crit1["lower2"]
    slowest = max(s["seconds"] for r in (r2, r4, rl) for s in r.solves)
    checks = [abs(u2 - 1.6249) <= 0.01, abs(u4 - 1.7172) <= 0.005, abs(l2 - 0.10017) <= 0.001,
              slowest <= SOLVE_LIMIT]
    ok = criterion_log("1 Example 1 margins", all(checks),
                       f"d=2 tau_max={u2:.5f} (1.6249+-0.01), d=4 tau_max={u4:.5f} (1.7172+-0.005), "
                       f"d=2 tau_min={l2:.5f} (0.10017+-0.001), slowest solve {slowest:.2f}s")
    assert ok


@pytest.mark.slow
def test_2_analytic_limits(crit2, criterion_log):
    (_, u6), (rs, us) = crit2["ex1_d6"], crit2["scalar"]
    a = abs(u6 - 1.71785) <= 0.002
    b = abs(us - np.pi / 2) <= 0.01
    ok = criterion_log("2 analytic limits", a and b,
                       f"Example 1 d=6 tau_max={u6:.5f} (1.71785+-0.002: {'ok' if a else 'miss'}), "
                       f"scalar d=14 tau_max={us:.5f} in [{rs.bracket[0]:.5f}, {rs.bracket[1]:.5f}] "
                       f"(pi/2+-0.01: {'ok' if b else 'miss'})")
    assert ok


@pytest.mark.slow
def test_3_example3_margins(criterion_log):
    found = {}
    for key, bracket in (("tau_max", (1.0, 2.0)), ("tau_min", (1.0, 0.05))):
        try:
            found[key] = _bisect(example3(1.0), 4, bracket)[1]
        except ValueError:
            found[key] = None
    a = found["tau_max"] is not None and abs(found["tau_max"] - 1.3722) <= 0.01
    b = found["tau_min"] is not None and abs(found["tau_min"] - 0.20247) <= 0.002
    fmt = {k: ("no margin in bracket (both ends certified)" if v is None else f"{v:.5f}") for k, v in found.items()}
    ok = criterion_log("3 Example 3 margins", a and b,
                       f"d=4 tau_max {fmt['tau_max']} (1.3722+-0.01), tau_min {fmt['tau_min']} (0.20247+-0.002)")
    assert ok


@pytest.mark.slow
def test_4_region_certification(crit4, criterion_log):
    good, bad = crit4
    ok = criterion_log("4 region certification", good.certified and not bad.certified,
                       f"tau in [0.2,1.6]: {good.verdict} (margin {good.margin:.3g}, {good.seconds:.0f}s); "
                       f"tau in [0.2,1.75]: {bad.verdict} ({bad.seconds:.0f}s)")
    assert ok


@pytest.mark.slow
def test_5_nonlinear(crit5, criterion_log):
    want = {"hale b=0.9": True, "hale b=1.1": False, "cross-term": True, "cooke (2,1)": True,
            "cooke (1,2)": False}
    got = {k: rep.certified for k, (_, rep) in crit5.items()}
    # the failing cases are genuinely not asymptotically stable
    grow = integrate(hale("1.1"), 1.0, T_end=40)
    endemic = integrate(cooke(1, 2), 0.1, T_end=40)
    diverge = float(abs(grow.x[-1, 0])) > 1.0 and float(endemic.x[-1, 0]) > 0.4
    ok = criterion_log("5 nonlinear", got == want and diverge,
                       ", ".join(f"{k}: {crit5[k][1].verdict}" for k in want)
                       + f"; simulation: b=1.1 x(40)={grow.x[-1, 0]:.3g}, cooke(1,2) y(40)={endemic.x[-1, 0]:.3g}")
    assert ok


# ---------------------------------------------------------------------------
# 6 oracle suite


def test_6a_derivative_identity(criterion_log):
    spec = example1(1.0)
    prog = build_linear(spec, 4)
    rng = np.random.default_rng(2024)
    worst = (np.inf, -np.inf)
    for _ in range(20):
        x = rng.standard_normal(prog.problem.n_vars)
        cert = certificate_from_assignment(prog, x)
        tr = integrate(spec, random_history(rng, spec.n, 1.0), T_end=2.0, h=1 / 1000)
        want = derivative_value(prog, x, tr.segment(1.5))
        errs = []
        for h in (0.04, 0.02, 0.01):
            fd = (evaluate_functional(cert, tr.segment(1.5 + h)) - evaluate_functional(cert, tr.segment(1.5 - h))) / (2 * h)
            errs.append(abs(want - fd))
        ratios = [a / b for a, b in zip(errs, errs[1:])]
        worst = (min(worst[0], *ratios), max(worst[1], *ratios))
    ok = criterion_log("6a derivative identity", 3.5 < worst[0] and worst[1] < 4.5,
                       f"20 draws, central-difference error ratios per halving in [{worst[0]:.3f}, {worst[1]:.3f}]")
    assert ok


@pytest.mark.slow
def test_6b_verification(crit1, crit2, crit4, crit5, criterion_log):
    runs = []
    for key, (res, _) in {**crit1, **crit2}.items():
        spec = example1(1.0) if key != "scalar" else scalar_delay(1.0)
        runs.append((key, res.certificate, fix_parameter(spec, "tau", res.certified), None))
    region = _region_spec("0.2", "1.6")
    for tau in (0.2, 0.9, 1.6):
        runs.append((f"region tau={tau}", crit4[0].certificate, fix_parameter(region, "tau", tau), {"tau": tau}))
    for key, (spec, rep) in crit5.items():
        if rep.certified:
            runs.append((key, rep.certificate, spec, None))
    failed = []
    for key, cert, spec, point in runs:
        out = verify_certificate(cert, spec, trials=100, point=point)
        if not out["passed"]:
            failed.append(key)
    ok = criterion_log("6b verification", not failed,
                       f"{len(runs)} certificates x 100 histories, failures: {failed or 'none'}")
    assert ok


@pytest.mark.slow
def test_6c_gram_residual(crit1, crit2, crit4, crit5, criterion_log):
    res = [s["gram_residual"] for r, _ in (*crit1.values(), *crit2.values()) for s in r.solves
           if "gram_residual" in s]
    res += [rep.certificate.solver["gram_residual"] for rep in crit4 if rep.certificate is not None]
    res += [rep.certificate.solver["gram_residual"] for _, rep in crit5.values() if rep.certificate is not None]
    worst = max(res)
    ok = criterion_log("6c Gram residual", worst <= 1e-7, f"{len(res)} feasible solves, worst {worst:.2e} (<= 1e-7)")
    assert ok


def _exact_point(pb: SdpProblem, seed: int) -> dict:
    A = sympy.Matrix([[sympy.Rational(c.coeffs.get(k, 0)) for k in range(pb.n_vars)] for c in pb.constraints])
    b = sympy.Matrix([sympy.Rational(c.rhs) for c in pb.constraints])
    sol, params = A.gauss_jordan_solve(b)
    rng = np.random.default_rng(seed)
    v = sol.subs({p: sympy.Rational(int(rng.integers(-9, 10)), int(rng.integers(1, 6))) for p in params})
    return {k: Fraction(int(sympy.fraction(v[k])[0]), int(sympy.fraction(v[k])[1])) for k in range(pb.n_vars)}


def test_6d_spacing_integrals(criterion_log):
    cases = [([Fraction(1)], False, 4), ([Fraction(1, 2), Fraction(1)], True, 4), ([Fraction(1, 2), Fraction(1)], True, 2)]
    nonzero = 0
    for k, (delays, piecewise, d) in enumerate(cases):
        pb = SdpProblem()
        sf = spacing_var(pb, 2, delays=delays, d=d, piecewise=piecewise)
        pt = _exact_point(pb, k)
        for _, _, p in sf.integral().entries():
            for c in p.terms.values():
                val = sum((w * pt[i] if i != LinExpr.CONST else w for i, w in c.terms.items()), Fraction(0))
                nonzero += val != 0
    ok = criterion_log("6d spacing integrals", nonzero == 0,
                       f"{len(cases)} spacing functions at exact rational points, {nonzero} nonzero coefficients")
    assert ok


def test_6e_degree_monotonicity(criterion_log):
    r2, r4 = certify(example1(1.6), 2), certify(example1(1.6), 4)
    ok = criterion_log("6e degree monotonicity", (not r2.certified) or r4.certified,
                       f"tau=1.6: d=2 {r2.verdict} (margin {r2.margin:.4g}), d=4 {r4.verdict} (margin {r4.margin:.4g})")
    assert ok


def _moments(kernel, x, order=14):
    r, n, d = kernel.size, kernel.n, kernel.d
    ms = []
    for (lo, hi), (al, be) in zip(kernel.pieces.intervals, kernel.maps):
        t, w = gauss_panels(np.array([float(lo), float(hi)]), order)
        a = float(al) * t + float(be)
        Z = np.vander(a, d + 1, increasing=True)
        ms.append(np.einsum("q,qe,qc->ce", w, Z, x(t)).reshape(r))
    return np.concatenate(ms)


def test_6f_piecewise_change_of_variables(criterion_log):
    delays = [Fraction(1, 2), Fraction(1)]
    pb = SdpProblem()
    ker = g2_kernel(pb, 2, delays=delays, d=3, piecewise=True)
    rng = np.random.default_rng(7)
    size = len(delays) * ker.size
    G = rng.standard_normal((size, size))
    Q = G @ G.T
    nodes, w = gauss_panels(np.array([-1.0, 0.0]), 14)
    worst = 0.0
    for _ in range(20):
        coef = rng.standard_normal((2, 6))

        def x(t):
            return np.stack([np.polyval(c, t) for c in coef], axis=1)
        lhs = _moments(ker, x) @ Q @ _moments(ker, x)
        # each piece pulled back to the reference interval [-1, 0]
        ms = []
        for al, be in ker.maps:
            pre = (nodes - float(be)) / float(al)
            Z = np.vander(nodes, ker.d + 1, increasing=True)
            ms.append(np.einsum("q,qe,qc->ce", w, Z, x(pre) / float(al)).reshape(-1))
        m = np.concatenate(ms)
        rhs = m @ Q @ m
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    ok = criterion_log("6f piecewise change of variables", worst <= 1e-9, f"20 draws, worst relative gap {worst:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# 7-8


def test_7_motzkin(criterion_log):
    x, y = Poly.var("x"), Poly.var("y")
    m = x ** 4 * y ** 2 + x ** 2 * y ** 4 - 3 * x ** 2 * y ** 2 + 1
    statuses = {}
    for d in (3, 4):
        pb = SdpProblem()
        sos(pb, m, basis=MonomialBasis(["x", "y"], d))
        statuses[d] = solve(pb).status
    pts = np.random.default_rng(0).uniform(-2, 2, size=(200, 2))
    low = float(np.min(m.lambdify(["x", "y"])(pts[:, 0], pts[:, 1])))
    ok = criterion_log("7 Motzkin", all(s == INFEASIBLE for s in statuses.values()) and low >= 0,
                       f"sos() at d=3: {statuses[3]}, d=4: {statuses[4]}; 200-point sample minimum {low:.4f}")
    assert ok


def test_8_sdpa_round_trip(criterion_log):
    pb = build_linear(example1(1.0), 2).problem
    text = export_sdpa(pb)
    again = export_sdpa(parse_sdpa(text))
    ok = criterion_log("8 SDPA round trip", again == text,
                       f"Example 1 d=2: {len(text.splitlines())} lines, bit-identical={again == text}")
    assert ok
