"""Delay-margin bisection, grid sweeps and parameter-region certification.

Bisection treats every non-certified point as lying beyond the margin. That
is only correct when the certifiable set is an interval at the given degree;
solver failures inside the bracket trigger a coarse sweep as a cross-check.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .stability.certificate import (CERTIFIED, UNKNOWN, Certificate, Report, certify, dumps,
                                    verify_certificate)
from .stability.systems import SystemSpec, fix_parameter

Template = Callable[[float], SystemSpec]


def as_template(spec: SystemSpec | Template, param: str = "tau") -> Template:
    if callable(spec) and not isinstance(spec, SystemSpec):
        return spec
    return lambda v: fix_parameter(spec, param, v)


def _row(value: float, rep: Report) -> dict:
    row = {"value": float(value), "verdict": rep.verdict, "margin": float(rep.margin),
           "status": rep.status, "seconds": rep.seconds}
    if rep.certificate is not None:
        row["gram_residual"] = rep.certificate.solver.get("gram_residual")
    return row


@dataclass
class MarginResult:
    """Bracket ``[certified, uncertified]`` around the certifiable margin."""

    certified: float
    uncertified: float
    degree: int
    direction: str
    certificate: Certificate | None = None
    verification: dict | None = None
    solves: list[dict] = field(default_factory=list)
    cross_check: list[dict] = field(default_factory=list)

    @property
    def bracket(self) -> tuple[float, float]:
        return tuple(sorted((self.certified, self.uncertified)))

    @property
    def width(self) -> float:
        return abs(self.uncertified - self.certified)

    def to_json(self) -> dict:
        return {"certified": self.certified, "uncertified": self.uncertified, "bracket": list(self.bracket),
                "degree": self.degree, "direction": self.direction,
                "spec_hash": self.certificate.spec_hash if self.certificate else None,
                "margin": self.certificate.margin if self.certificate else None,
                "verification": {k: v for k, v in (self.verification or {}).items() if k != "details"},
                "solves": self.solves, "cross_check": self.cross_check}


def margin_bisection(spec: SystemSpec | Template, d: int, bracket: tuple[float, float], tol: float = 1e-3,
                     param: str = "tau", verify_trials: int = 10, **certify_kw) -> MarginResult:
    """Bisect on the CERTIFIED predicate until the bracket is at most ``tol`` wide.

    The endpoints must get opposite verdicts; the certified one determines
    whether this is an upper (``tau_max``) or lower (``tau_min``) search.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    template = as_template(spec, param)
    lo, hi = map(float, bracket)
    solves = []

    def run(v):
        rep = certify(template(v), d, **certify_kw)
        solves.append(_row(v, rep))
        return rep

    rl, rh = run(lo), run(hi)
    if rl.certified == rh.certified:
        raise ValueError(f"both endpoints give {rl.verdict!r}; the bracket does not straddle the margin")
    good, bad, best = (lo, hi, rl) if rl.certified else (hi, lo, rh)
    failures = False
    while abs(bad - good) > tol:
        mid = (good + bad) / 2
        rep = run(mid)
        if rep.certified:
            good, best = mid, rep
        else:
            failures |= rep.verdict == UNKNOWN
            bad = mid
    res = MarginResult(good, bad, d, "upper" if good < bad else "lower", best.certificate, solves=solves)
    if verify_trials:
        res.verification = verify_certificate(best.certificate, template(good), trials=verify_trials)
    if failures:
        res.cross_check = sweep(template, np.linspace(min(lo, hi), max(lo, hi), 6), d, **certify_kw)
    return res


def sweep(spec: SystemSpec | Template, grid: Sequence[float], d: int, param: str = "tau", jobs: int = 1,
          **certify_kw) -> list[dict]:
    """One independent solve per grid point."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    template = as_template(spec, param)

    def one(v):
        return _row(v, certify(template(v), d, **certify_kw))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(one, grid))
    return [one(v) for v in grid]


def parse_grid(text: str) -> list[float]:
    """``LO:STEP:HI`` (inclusive) into a list of values."""
    try:
        lo, step, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like LO:STEP:HI, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise ValueError("grid needs step > 0 and HI >= LO")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(count)]


def region_certify(spec: SystemSpec, d_theta: int, d_param: int, **certify_kw) -> Report:
    """One parameter-dependent solve covering every box in ``spec.parameters``."""
    if not spec.parameters:
        raise ValueError("no parameter boxes")
    for k, (lo, hi) in spec.parameters.items():
        if lo > hi:
            raise ValueError(f"empty box for {k}")
    return certify(spec, d_theta, method="region", param_degree=d_param, **certify_kw)


def spot_check(spec: SystemSpec, d: int, points: int = 5, seed: int = 0, **certify_kw) -> list[dict]:
    """Fixed-parameter certification at random points of the parameter box."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(points):
        fixed = spec
        values = {}
        for k, (lo, hi) in spec.parameters.items():
            values[k] = float(lo) + float(hi - lo) * rng.random()
        for k, v in values.items():
            fixed = fix_parameter(fixed, k, round(v, 12))
        rep = certify(fixed, d, **certify_kw)
        row = _row(0.0, rep)
        del row["value"]
        out.append({"point": values, **row})
    return out


def results_json(rows: list[dict]) -> str:
    return dumps(rows, indent=1)


__all__ = ["MarginResult", "margin_bisection", "sweep", "region_certify", "spot_check", "parse_grid",
           "results_json", "as_template"]
