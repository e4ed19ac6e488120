from fractions import Fraction

import numpy as np
import pytest

from delaycert.polynomial import MonomialBasis, Poly, PolyMatrix
from delaycert.sdp import FEASIBLE, INFEASIBLE, SdpProblem, solve
from delaycert.sos import (check_decomposition, gram_expand, interval_positivity, matrix_sos, psatz, putinar,
                           sos)

x, y, th = Poly.var("x"), Poly.var("y"), Poly.var("theta")
MOTZKIN = x ** 4 * y ** 2 + x ** 2 * y ** 4 - 3 * x ** 2 * y ** 2 + 1


def solve_sos(target, **kw):
    pb = SdpProblem()
    con = sos(pb, target, **kw)
    return con, solve(pb)


@pytest.mark.parametrize("target", [x * x, x ** 4 + 1, (x - y) ** 2 + (x * y - 1) ** 2, x ** 2 + 2 * x * y + 2 * y ** 2])
def test_sos_accepts_with_exact_gram(target):
    con, sol = solve_sos(target)
    assert sol.status == FEASIBLE
    assert con.residual(sol) < 1e-7
    rep = check_decomposition(target, sol.blocks[con.gram.index], con.basis)
    assert rep["residual"] < 1e-7 and rep["min_eig"] > -1e-8


def test_sos_rejects_negative_and_odd():
    _, sol = solve_sos(-x * x - 1)
    assert sol.status == INFEASIBLE
    with pytest.raises(ValueError):
        solve_sos(x ** 3)


@pytest.mark.parametrize("d", [3, 4])
def test_motzkin_not_sos(d):
    _, sol = solve_sos(MOTZKIN, basis=MonomialBasis(["x", "y"], d))
    assert sol.status == INFEASIBLE
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, size=(200, 2))
    vals = MOTZKIN.lambdify(["x", "y"])(pts[:, 0], pts[:, 1])
    assert np.min(vals) >= 0


def test_motzkin_times_multiplier_is_sos():
    con, sol = solve_sos((x * x + y * y + 1) * MOTZKIN)
    assert sol.status == FEASIBLE
    assert con.residual(sol) < 1e-7


def test_matrix_sos():
    M = PolyMatrix([[1 + x * x, x], [x, 1 + x * x]])
    pb = SdpProblem()
    con = matrix_sos(pb, M)
    sol = solve(pb)
    assert sol.status == FEASIBLE and con.residual(sol) < 1e-7
    bad = PolyMatrix([[x * x, 1], [1, x * x]])
    pb = SdpProblem()
    matrix_sos(pb, bad)
    assert solve(pb).status == INFEASIBLE


def test_interval_positivity():
    # theta (theta + 1) + c >= 0 on [-1, 0] iff c >= 1/4
    for c, ok in ((Fraction(1, 3), True), (Fraction(1, 5), False)):
        pb = SdpProblem()
        interval_positivity(pb, th * (th + 1) + c, (-1, 0))
        assert (solve(pb).status == FEASIBLE) is ok


def test_putinar_region():
    pb = SdpProblem()
    putinar(pb, y + 1, [1 - y * y])
    assert solve(pb).status == FEASIBLE
    pb = SdpProblem()
    putinar(pb, y, [1 - y * y])
    assert solve(pb).status == INFEASIBLE


def test_psatz_maximizes_lower_bound():
    # max g such that x^4 - 2 x^2 - g is SOS: g* = -1
    pb = SdpProblem()
    g = pb.free_expr("g")
    pb.set_objective(g)
    psatz(pb, x ** 4 - 2 * x ** 2 - Poly.const(g))
    sol = solve(pb)
    assert sol.value(g) == pytest.approx(-1, abs=1e-6)


def test_gram_expand_round_trip():
    basis = MonomialBasis(["x"], 2)
    Q = np.array([[1.0, 0.5, 0.0], [0.5, 2.0, -1.0], [0.0, -1.0, 3.0]])
    p = gram_expand(Q, basis)[0, 0]
    assert float(p.coeff((("x", 2),))) == pytest.approx(2.0)
    assert float(p.coeff((("x", 3),))) == pytest.approx(-2.0)
    assert check_decomposition(p, Q, basis)["residual"] < 1e-15
