import numpy as np
import pytest

from delaycert.polynomial import Poly
from delaycert.search import as_template, margin_bisection, parse_grid, region_certify, spot_check, sweep
from delaycert.stability.certificate import CERTIFIED, NOT_CERTIFIED, verify_certificate
from delaycert.stability.systems import SystemSpec, example1, fix_parameter, scalar_delay


def test_parse_grid():
    assert parse_grid("0.1:0.1:0.5") == [0.1, 0.2, 0.3, 0.4, 0.5]
    assert parse_grid("1:1:1") == [1.0]
    for bad in ("1:2", "a:b:c", "1:0:2", "2:1:1"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_bisection_upper_margin():
    res = margin_bisection(scalar_delay(1.0), 2, (1.0, 2.0), tol=0.01, verify_trials=3)
    assert res.direction == "upper"
    assert res.width <= 0.01
    assert res.certified < res.uncertified < np.pi / 2 + 0.01
    assert res.verification["passed"]
    lo, hi = res.bracket
    assert lo == res.certified
    # every recorded solve agrees with the final bracket
    for row in res.solves:
        assert (row["verdict"] == CERTIFIED) == (row["value"] <= res.certified)


def test_bisection_lower_margin():
    res = margin_bisection(example1(1.0), 2, (0.3, 0.05), tol=0.005, verify_trials=0)
    assert res.direction == "lower"
    assert res.uncertified < 0.10017 < res.certified + 0.001


def test_bisection_rejects_same_verdict():
    with pytest.raises(ValueError, match="straddle"):
        margin_bisection(scalar_delay(1.0), 2, (0.5, 1.0), verify_trials=0)
    with pytest.raises(ValueError):
        margin_bisection(scalar_delay(1.0), 2, (0.5, 2.0), tol=0)


def test_sweep_trivial_system_certified_everywhere():
    x = Poly.var("x_0")
    spec = SystemSpec("ode", 1, rhs=[-x])
    rows = sweep(lambda v: spec, [1.0, 2.0], 2)
    assert [r["verdict"] for r in rows] == [CERTIFIED, CERTIFIED]


def test_sweep_verdicts_and_threads():
    grid = [1.0, 1.5, 1.7, 1.8]
    rows = sweep(example1(1.0), grid, 2, jobs=2)
    assert [r["value"] for r in rows] == grid
    assert [r["verdict"] for r in rows] == [CERTIFIED, CERTIFIED, NOT_CERTIFIED, NOT_CERTIFIED]
    with pytest.raises(ValueError):
        sweep(example1(1.0), [], 2)


def test_template_for_named_parameter():
    a = Poly.var("a")
    spec = SystemSpec("linear-single", 1, [1], [[[0]], [[-a]]], parameters={"a": (0, 2)})
    t = as_template(spec, "a")
    assert float(t(1.5).matrices[1][0, 0].constant_term()) == -1.5
    assert as_template(t) is t


def test_region_certificate_and_spot_check():
    d = dict(example1(1.0).__dict__)
    d["parameters"] = {"tau": ("0.5", "1.0")}
    spec = SystemSpec(**d)
    rep = region_certify(spec, 2, 2)
    assert rep.verdict == CERTIFIED
    assert rep.certificate.solver["gram_residual"] <= 1e-7
    for tau in (0.5, 0.8, 1.0):
        assert verify_certificate(rep.certificate, fix_parameter(spec, "tau", tau), trials=3, point={"tau": tau})["passed"]
    rows = spot_check(spec, 2, points=3)
    assert all(r["verdict"] == CERTIFIED and 0.5 <= r["point"]["tau"] <= 1.0 for r in rows)
    with pytest.raises(ValueError):
        region_certify(example1(1.0), 2, 2)
