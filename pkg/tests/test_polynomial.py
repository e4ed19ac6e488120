from fractions import Fraction

import numpy as np
import pytest
import sympy

from delaycert.polynomial import (LinExpr, MonomialBasis, PiecewisePolyMatrix, Poly, PolyMatrix, kron_basis,
                                  poly_from_coeffs, to_fraction)

x, y, th = Poly.var("x"), Poly.var("y"), Poly.var("theta")
sx, sy, sth = sympy.symbols("x y theta")


def to_sympy(p: Poly):
    out = 0
    for m, c in p.terms.items():
        term = sympy.Rational(c.numerator, c.denominator)
        for v, e in m:
            term *= sympy.Symbol(v) ** e
        out += term
    return sympy.expand(out)


def random_poly(rng, variables, deg, terms=5):
    p = Poly()
    for _ in range(terms):
        m = Poly.const(Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5))))
        for v in variables:
            m = m * Poly.var(v) ** int(rng.integers(0, deg + 1))
        p = p + m
    return p


@pytest.mark.parametrize("seed", range(5))
def test_arithmetic_matches_sympy(seed):
    rng = np.random.default_rng(seed)
    p = random_poly(rng, ["x", "y"], 3)
    q = random_poly(rng, ["x", "theta"], 2)
    assert to_sympy(p + q) == sympy.expand(to_sympy(p) + to_sympy(q))
    assert to_sympy(p * q) == sympy.expand(to_sympy(p) * to_sympy(q))
    assert to_sympy(p - q) == sympy.expand(to_sympy(p) - to_sympy(q))
    assert to_sympy(q ** 3) == sympy.expand(to_sympy(q) ** 3)


@pytest.mark.parametrize("seed", range(5))
def test_calculus_matches_sympy(seed):
    rng = np.random.default_rng(10 + seed)
    p = random_poly(rng, ["x", "theta"], 4)
    sp = to_sympy(p)
    assert to_sympy(p.diff("theta")) == sympy.expand(sympy.diff(sp, sth))
    lo, hi = Fraction(-3, 2), Fraction(1, 3)
    expected = sympy.expand(sympy.integrate(sp, (sth, sympy.Rational(-3, 2), sympy.Rational(1, 3))))
    assert to_sympy(p.integrate("theta", lo, hi)) == expected
    assert to_sympy(p.antiderivative("theta").diff("theta")) == sp


def test_subs_and_affine_substitute():
    p = x ** 2 * th + 3 * th - 1
    got = p.subs({"theta": 2 * x + 1})
    assert to_sympy(got) == sympy.expand(sx ** 2 * (2 * sx + 1) + 3 * (2 * sx + 1) - 1)
    q = p.affine_substitute("theta", Fraction(1, 2), Fraction(-1))
    assert to_sympy(q) == sympy.expand(sx ** 2 * (sth / 2 - 1) + 3 * (sth / 2 - 1) - 1)
    assert p.evaluate({"x": 2, "theta": Fraction(1, 3)}) == Fraction(4, 3) + 1 - 1


def test_exact_rational_coefficients():
    p = th * Fraction(1, 3) + Fraction(1, 7)
    assert (p * 21).coeff((("theta", 1),)) == 7
    assert to_fraction("19/20") == Fraction(19, 20)
    assert to_fraction(0.1) == Fraction(1, 10)
    assert (p - p).is_zero()


def test_linexpr_coefficients_resolve():
    a, b = LinExpr.var(0), LinExpr.var(1, 2)
    p = Poly({(("x", 1),): a, (): b + 3})
    vals = np.array([1.5, -2.0])
    r = p.resolve(vals)
    assert float(r.coeff((("x", 1),))) == pytest.approx(1.5)
    assert float(r.constant_term()) == pytest.approx(-1.0)
    assert p.unknowns() == {0, 1}
    assert (a * 2 - a - a).is_zero()


def test_lambdify_agrees_with_evaluate():
    p = x ** 3 * th - Fraction(5, 2) * th ** 2 + x
    f = p.lambdify(["x", "theta"])
    xs, ts = np.linspace(-1, 1, 7), np.linspace(-2, 0, 7)
    want = [float(p.evaluate({"x": a, "theta": b})) for a, b in zip(xs, ts)]
    np.testing.assert_allclose(f(xs, ts), want, rtol=1e-14)


def test_monomial_basis_counts():
    assert len(MonomialBasis(["x", "y"], 3)) == 10
    assert len(MonomialBasis(["x", "y", "theta"], 2)) == 10
    capped = MonomialBasis(["x", "theta"], 4, {"theta": 1})
    assert all(dict(m).get("theta", 0) <= 1 for m in capped)
    assert len(kron_basis(MonomialBasis(["theta"], 2), MonomialBasis(["x"], 1))) == 6


def test_polymatrix_algebra():
    A = PolyMatrix([[x, 1], [th, x * th]])
    B = PolyMatrix([[1, th], [0, x]])
    C = A @ B
    sa = sympy.Matrix([[sx, 1], [sth, sx * sth]])
    sb = sympy.Matrix([[1, sth], [0, sx]])
    sc = (sa * sb).expand()
    for i in range(2):
        for j in range(2):
            assert to_sympy(C[i, j]) == sc[i, j]
    assert (A + A.T).is_symmetric()
    assert A.T.T == A
    blk = PolyMatrix.block([[A, None], [None, B]])
    assert blk.shape == (4, 4) and blk[2, 3] == th
    np.testing.assert_allclose(A.evaluate({"x": 2.0, "theta": 3.0}), [[2, 1], [3, 6]])


def test_poly_from_coeffs_and_piecewise():
    p = poly_from_coeffs("theta", [1, 0, -2])
    assert to_sympy(p) == 1 - 2 * sth ** 2
    pw = PiecewisePolyMatrix([-2, -1, 0], [PolyMatrix([[th]]), PolyMatrix([[th * th]])])
    assert pw.evaluate(-1.5)[0, 0] == pytest.approx(-1.5)
    assert pw.evaluate(-0.5)[0, 0] == pytest.approx(0.25)
