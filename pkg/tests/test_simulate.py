import csv
import math

import numpy as np
import pytest
import scipy.linalg as sla

from delaycert.polynomial import Poly, PolyMatrix
from delaycert.simulate import as_history, gauss_panels, integrate, piece_rule, random_history
from delaycert.stability.systems import (SystemSpec, cooke, distributed_scalar, example1, example3, hale,
                                         scalar_delay)


def steps_solution(t: float) -> float:
    """x' = -x(t - 1), x = 1 on [-1, 0]: sum_k (-1)^k (t - k + 1)^k / k! over t - k + 1 >= 0."""
    return sum((-1) ** k * (t - k + 1) ** k / math.factorial(k) for k in range(int(math.floor(t)) + 2))


def heun_dde(f, hist, delays, T, h):
    """Second-order fixed-step oracle; every delay must be a multiple of h."""
    lags = [int(round(d / h)) for d in delays]
    assert all(abs(l * h - d) < 1e-12 for l, d in zip(lags, delays))
    steps = int(round(T / h))
    back = max(lags)
    xs = [np.atleast_1d(hist(-k * h)) for k in range(back, 0, -1)] + [np.atleast_1d(hist(0.0))]
    for k in range(steps):
        cur = len(xs) - 1
        xd0 = [xs[cur - l] for l in lags]
        xd1 = [xs[cur - l + 1] for l in lags]
        k1 = f(xs[cur], xd0)
        pred = xs[cur] + h * k1
        k2 = f(pred, xd1)
        xs.append(xs[cur] + h / 2 * (k1 + k2))
    return np.array(xs[back:])


@pytest.mark.parametrize("t", [0.5, 1.7, 3.25, 6.0])
def test_method_of_steps_closed_form(t):
    tr = integrate(scalar_delay(1.0), 1.0, T_end=6.0, h=0.01)
    assert tr(t)[0, 0] == pytest.approx(steps_solution(t), abs=1e-8)
    assert tr.error_estimate < 1e-8


def test_fourth_order_convergence():
    errs = []
    for h in (0.05, 0.025, 0.0125):
        tr = integrate(scalar_delay(1.0), lambda th: np.cos(th)[:, None], T_end=4.0, h=h, error_estimate=False)
        ref = integrate(scalar_delay(1.0), lambda th: np.cos(th)[:, None], T_end=4.0, h=h / 8,
                        error_estimate=False)
        errs.append(abs(tr.x[-1, 0] - ref.x[-1, 0]))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(rates) > 3.5


def test_ode_matches_matrix_exponential():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    x, v = Poly.var("x_0"), Poly.var("v_0")
    spec = SystemSpec("ode", 2, [], rhs=[v, x * -2 + v * -0.3], states=["x", "v"])
    tr = integrate(spec, [Poly.const(1), Poly.const(0)], T_end=3.0, h=0.01)
    np.testing.assert_allclose(tr.x[-1], sla.expm(3 * A) @ np.array([1.0, 0.0]), atol=1e-9)


def test_linear_two_delays_against_oracle():
    spec = example3(1.0)
    hist = lambda th: np.array([1.0 + th, 0.5])  # noqa: E731
    h = 1 / 400
    tr = integrate(spec, lambda th: np.stack([1.0 + th, 0.5 + 0 * th], axis=1), T_end=5.0, h=h)
    A = [np.asarray(M.evaluate({}), dtype=float) for M in spec.matrices]
    f = lambda x, xd: A[0] @ x + A[1] @ xd[0] + A[2] @ xd[1]  # noqa: E731
    ref = heun_dde(f, hist, [0.5, 1.0], 5.0, h / 4)
    np.testing.assert_allclose(tr.x[-1], ref[-1], atol=1e-6)


def test_distributed_against_augmented_oracle():
    # y = int_{t-1}^t x gives the discrete system x' = -x + c y, y' = x(t) - x(t-1)
    c = 0.5
    h = 1 / 200
    tr = integrate(distributed_scalar(c, 1.0), lambda th: (1 + th)[:, None], T_end=6.0, h=h)
    y0 = 0.5  # int_{-1}^0 (1 + s) ds

    def hist(th):
        return np.array([1 + th, y0 if th == 0 else np.nan])

    def f(z, zd):
        return np.array([-z[0] + c * z[1], z[0] - zd[0][0]])
    ref = heun_dde(f, hist, [1.0], 6.0, h / 4)
    assert tr.x[-1, 0] == pytest.approx(ref[-1, 0], abs=1e-6)


def test_nonlinear_against_oracle():
    spec = hale("0.9")
    h = 1 / 200
    tr = integrate(spec, 0.8, T_end=5.0, h=h)
    f = lambda x, xd: -x ** 3 + 0.9 * xd[0] ** 3  # noqa: E731
    ref = heun_dde(f, lambda th: np.array([0.8]), [1.0], 5.0, h / 4)
    assert tr.x[-1, 0] == pytest.approx(ref[-1, 0], abs=1e-6)


def test_stability_examples():
    assert abs(integrate(scalar_delay(1.0), 1.0, T_end=10)(10.0)[0, 0]) < 0.2
    grow = integrate(scalar_delay(2.0), 1.0, T_end=60)
    assert np.max(np.abs(grow.x)) > 10
    decay = integrate(example1(1.0), [Poly.const(1), Poly.const(0)], T_end=40)
    assert np.max(np.abs(decay.x[-50:])) < 0.05


def test_blow_up_reports_escape_time():
    x1 = Poly.var("x_1")
    spec = SystemSpec("nonlinear-delay", 1, [1.0], rhs=[x1 ** 3])
    tr = integrate(spec, 2.0, T_end=5.0, h=0.01)
    assert tr.blew_up
    # x(1) = 10, x(2) ~ 322, x(3) ~ 1e6: the bound 1e8 is crossed during the fourth interval
    assert 3.0 < tr.escape_time < 4.0
    assert tr.error_estimate is None


def test_cooke_stays_in_unit_interval():
    tr = integrate(cooke(2, 1), 0.3, T_end=20)
    assert np.all(tr.x >= -1e-12) and np.all(tr.x <= 1)


def test_step_restriction():
    with pytest.raises(ValueError):
        integrate(scalar_delay(1.0), 1.0, h=0.2)


def test_dense_output_and_segments():
    tr = integrate(scalar_delay(1.0), 1.0, T_end=3.0, h=0.01)
    seg = tr.segment(2.5)
    th = np.linspace(-1, 0, 11)
    np.testing.assert_allclose(seg(th)[:, 0], [steps_solution(2.5 + s) for s in th], atol=1e-8)
    bp = seg.breakpoints
    assert np.all((bp > -1) & (bp < 0))
    assert len(bp) == 99
    early = tr.segment(0.305)
    assert np.any(np.isclose(early.breakpoints, -0.305))
    with pytest.raises(ValueError):
        tr(3.5)


def test_histories():
    f = as_history([Poly.var("theta"), Poly.const(2)], 2)
    np.testing.assert_allclose(f(np.array([-0.5])), [[-0.5, 2.0]])
    g = as_history(3.0, 2)
    np.testing.assert_allclose(g(np.array([-1.0, 0.0])), [[3, 3], [3, 3]])
    rng = np.random.default_rng(0)
    r = random_history(rng, 2, 2.0, amplitude=0.5)
    vals = r(np.linspace(-2, 0, 201))
    assert np.max(np.abs(vals)) == pytest.approx(0.5, rel=0.02)


def test_quadrature_rules():
    x, w = gauss_panels(np.array([-1.0, -0.3, 0.0]), 5)
    assert np.sum(w * x ** 9) == pytest.approx((0 - 1) / 10)
    tr = integrate(scalar_delay(1.0), 1.0, T_end=2.0, h=0.05)
    nodes, wts = piece_rule(tr.segment(2.0), -1.0, 0.0, 4)
    assert np.sum(wts) == pytest.approx(1.0)
    assert len(nodes) == 4 * 20


def test_csv_output(tmp_path):
    tr = integrate(example1(1.0), 1.0, T_end=1.0, h=0.02)
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x1", "x2"]
    assert len(rows) == len(tr.t) + 1
    assert float(rows[-1][1]) == tr.x[-1, 0]


def test_parameter_point_rescales_delay():
    spec = scalar_delay(1.0)
    d = dict(spec.__dict__)
    d["parameters"] = {"tau": (0.5, 2.0)}
    boxed = SystemSpec(**d)
    a = integrate(boxed, 1.0, T_end=4.0, h=0.01, point={"tau": 1.0})
    b = integrate(spec, 1.0, T_end=4.0, h=0.01)
    np.testing.assert_allclose(a.x, b.x)
    A = PolyMatrix([[Poly.var("a") * -1]])
    d = dict(spec.__dict__)
    d["matrices"] = [PolyMatrix([[0]]), A]
    d["parameters"] = {"a": (0, 2)}
    c = integrate(SystemSpec(**d), 1.0, T_end=4.0, h=0.01)
    np.testing.assert_allclose(c.x, b.x)
