import numpy as np
import pytest

from delaycert.polynomial import LinExpr
from delaycert.sdp import (FAILURE, FEASIBLE, INFEASIBLE, SdpProblem, SolverOptions, export_sdpa, parse_sdpa,
                           read_sdpa, solve, to_cvxpy, write_sdpa)


def random_sdp(seed, sizes=(3, 2), m=4, free=1):
    """max <C, X> + c'u  s.t. <A_k, X> + a_k'u = b_k at a strictly feasible X0."""
    rng = np.random.default_rng(seed)
    pb = SdpProblem()
    hs = [pb.add_block(k) for k in sizes]
    us = [pb.add_free() for _ in range(free)]
    X0 = []
    for k in sizes:
        G = rng.standard_normal((k, k))
        X0.append(G @ G.T + np.eye(k))
    u0 = rng.standard_normal(free)
    for _ in range(m):
        expr, val = LinExpr(), 0.0
        for h, X in zip(hs, X0):
            for i in range(h.size):
                for j in range(i, h.size):
                    a = round(float(rng.standard_normal()), 3)
                    expr = expr + LinExpr.var(h.entry(i, j), a)
                    val += a * X[i, j]
        for vid, u in zip(us, u0):
            a = round(float(rng.standard_normal()), 3)
            expr = expr + LinExpr.var(vid, a)
            val += a * u
        pb.add_equality(expr, round(val, 6))
    # bounded objective: minimize the trace (maximize minus trace)
    obj = LinExpr()
    for h in hs:
        for i in range(h.size):
            obj = obj + LinExpr.var(h.entry(i, i), -1)
    pb.set_objective(obj)
    return pb


@pytest.mark.parametrize("seed", range(6))
def test_objective_matches_clarabel(seed):
    pb = random_sdp(seed)
    sol = solve(pb)
    assert sol.status == FEASIBLE
    prob, _, _ = to_cvxpy(pb)
    prob.solve(solver="CLARABEL")
    assert sol.objective == pytest.approx(prob.value, rel=1e-6, abs=1e-6)
    assert sol.eq_residual < 1e-7
    assert min(sol.min_eigs) > -1e-7


def test_feasibility_problem_returns_psd_point():
    pb = SdpProblem()
    h = pb.add_block(2)
    pb.add_equality(h.expr(0, 0) + h.expr(1, 1), 2)
    pb.add_equality(h.expr(0, 1), 0.5)
    sol = solve(pb)
    assert sol.status == FEASIBLE
    X = sol.blocks[0]
    assert np.trace(X) == pytest.approx(2)
    assert X[0, 1] == pytest.approx(0.5)
    assert np.linalg.eigvalsh(X)[0] > -1e-9


def test_infeasible_sdp_yields_dual_ray():
    # [[a, 1], [1, 0]] is never PSD
    pb = SdpProblem()
    h = pb.add_block(2)
    pb.add_equality(h.expr(0, 1), 1)
    pb.add_equality(h.expr(1, 1), 0)
    sol = solve(pb)
    assert sol.status == INFEASIBLE
    # [[1, a], [a, b]] with a = 2, b = 1 is not PSD either (not caught by facial reduction)
    pb = SdpProblem()
    h = pb.add_block(2)
    pb.add_equality(h.expr(0, 0), 1)
    pb.add_equality(h.expr(0, 1), 2)
    pb.add_equality(h.expr(1, 1), 1)
    sol = solve(pb)
    assert sol.status == INFEASIBLE
    cert = sol.certificate
    assert cert["kind"] == "dual-ray"
    assert cert["CX"] < 0 and cert["min_eig_X"] > -1e-9


def test_inconsistent_equalities():
    pb = SdpProblem()
    u = pb.add_free()
    pb.add_equality(LinExpr.var(u), 1)
    pb.add_equality(LinExpr.var(u), 2)
    sol = solve(pb)
    assert sol.status == INFEASIBLE
    assert sol.certificate["kind"] == "inconsistent-equalities"


def test_unbounded_objective_reports_failure():
    pb = SdpProblem()
    pb.add_block(1)
    u = pb.add_free()
    pb.set_objective(LinExpr.var(u))
    assert solve(pb).status == FAILURE


def test_hidden_face_from_diagonal_combination():
    # X11 + X22 = 0 forces the whole 2x2 block of the 3x3 block to vanish
    pb = SdpProblem()
    h = pb.add_block(3)
    pb.add_equality(h.expr(0, 0) + h.expr(1, 1), 0)
    pb.add_equality(h.expr(2, 2), 1)
    u = pb.free_expr()
    pb.add_equality(h.expr(0, 2) - u, 0)
    pb.set_objective(u)
    sol = solve(pb)
    assert sol.status == FEASIBLE
    assert np.max(np.abs(sol.blocks[0][:2])) < 1e-9


def test_tolerance_options_are_used():
    pb = random_sdp(1)
    loose = solve(pb, SolverOptions(tol=1e-4))
    tight = solve(pb, SolverOptions(tol=1e-10))
    assert loose.iterations <= tight.iterations


def test_sdpa_round_trip_is_bit_identical(tmp_path):
    pb = random_sdp(3)
    text = export_sdpa(pb)
    assert export_sdpa(parse_sdpa(text)) == text
    path = tmp_path / "p.dat-s"
    write_sdpa(pb, path)
    assert export_sdpa(read_sdpa(path)) == text


def test_sdpa_parsed_problem_has_same_optimum():
    pb = random_sdp(4)
    back = parse_sdpa(export_sdpa(pb))
    assert solve(back).objective == pytest.approx(solve(pb).objective, rel=1e-7, abs=1e-8)


def test_sdpa_header_layout():
    pb = random_sdp(0, sizes=(2,), m=2, free=1)
    lines = export_sdpa(pb).splitlines()
    assert lines[0] == "2"
    assert lines[1] == "2"
    assert lines[2] == "2 -2"
