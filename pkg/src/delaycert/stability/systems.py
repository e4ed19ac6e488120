"""Delay system descriptions and the reference systems used in tests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ..polynomial import Poly, PolyMatrix, to_fraction

KINDS = ("linear-single", "linear-multiple", "linear-distributed", "nonlinear-delay", "ode")


def delayed_name(state: str, k: int) -> str:
    """Symbol for ``state(t - tau_k)``; ``k = 0`` is the current value."""
    return f"{state}_{k}"


@dataclass
class SystemSpec:
    """A delay system.

    Linear kinds use ``matrices = [A0, A1, ..., AK]`` (entries numbers or
    polynomials in parameter symbols). The distributed kind uses ``A0`` and the
    polynomial kernel ``kernel`` in ``theta``. Nonlinear kinds use ``rhs``: one
    polynomial per state over the symbols ``delayed_name(state, k)``.
    """

    kind: str
    n: int
    delays: list[Fraction] = field(default_factory=list)
    matrices: list[PolyMatrix] = field(default_factory=list)
    kernel: PolyMatrix | None = None
    rhs: list[Poly] | None = None
    states: list[str] = field(default_factory=list)
    parameters: dict[str, tuple[Fraction, Fraction]] = field(default_factory=dict)
    state_box: Fraction | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        self.delays = [to_fraction(t) for t in self.delays]
        if any(t <= 0 for t in self.delays):
            raise ValueError("delays must be positive")
        if any(a >= b for a, b in zip(self.delays, self.delays[1:])):
            raise ValueError("delays must be strictly increasing")
        self.matrices = [m if isinstance(m, PolyMatrix) else PolyMatrix.from_array(np.asarray(m, dtype=object))
                         for m in self.matrices]
        for m in self.matrices:
            if m.shape != (self.n, self.n):
                raise ValueError(f"matrix shape {m.shape} does not match n={self.n}")
        if not self.states:
            self.states = ["x"] if self.n == 1 else [f"x{i + 1}" for i in range(self.n)]
        if self.kind in ("nonlinear-delay", "ode"):
            if self.rhs is None or len(self.rhs) != self.n:
                raise ValueError("nonlinear systems need one right-hand side per state")
            for p in self.rhs:
                assign = {v: 0 for v in p.variables if v not in self.parameters}
                at0 = p.subs(assign)
                if not at0.is_zero():
                    raise ValueError("right-hand side must vanish at the origin")
        self.parameters = {k: (to_fraction(lo), to_fraction(hi)) for k, (lo, hi) in self.parameters.items()}
        for k, (lo, hi) in self.parameters.items():
            if lo > hi:
                raise ValueError(f"empty parameter box for {k}")

    @property
    def K(self) -> int:
        return len(self.delays)

    @property
    def tau_max(self) -> Fraction:
        return self.delays[-1]

    def scale(self) -> float:
        """Largest absolute system coefficient (sets the certification threshold)."""
        vals = [0.0]
        for m in self.matrices:
            for _, _, p in m.entries():
                vals.extend(abs(float(c)) for c in p.terms.values())
        if self.kernel is not None:
            for _, _, p in self.kernel.entries():
                vals.extend(abs(float(c)) for c in p.terms.values())
        for p in self.rhs or []:
            vals.extend(abs(float(c)) for c in p.terms.values())
        return max(vals) or 1.0

    def with_delays(self, delays: Sequence) -> "SystemSpec":
        d = dict(self.__dict__)
        d["delays"] = list(delays)
        return SystemSpec(**d)

    def scaled_delays(self, tau) -> "SystemSpec":
        """Same system with all delays rescaled so that the largest equals ``tau``."""
        tau = to_fraction(tau)
        ratio = tau / self.tau_max
        return self.with_delays([t * ratio for t in self.delays])

    def numeric_matrices(self, point: Mapping | None = None) -> list[np.ndarray]:
        return [m.evaluate(dict(point or {})) for m in self.matrices]

    def to_dict(self) -> dict:
        from ..cli.specfile import spec_to_dict

        return spec_to_dict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _mat(rows) -> PolyMatrix:
    return PolyMatrix([[to_fraction(x) for x in r] for r in rows])


def example1(tau=1.0) -> SystemSpec:
    """x' = A x(t) + B x(t - tau) with a two-dimensional oscillator."""
    return SystemSpec("linear-single", 2, [tau], [_mat([[0, 1], [-2, "0.1"]]), _mat([[0, 0], [1, 0]])],
                      name="example1")


def example3(tau=1.0) -> SystemSpec:
    """Two delays tau/2 and tau with weights 1/20 and 19/20."""
    tau = to_fraction(tau)
    B = np.array([[-1, 0], [-1, -1]], dtype=object)
    A0 = _mat([[-2, 0], [0, "-0.9"]])
    A1 = PolyMatrix.from_array(B * Fraction(1, 20))
    A2 = PolyMatrix.from_array(B * Fraction(19, 20))
    return SystemSpec("linear-multiple", 2, [tau / 2, tau], [A0, A1, A2], name="example3")


def scalar_delay(tau=1.0, a=0, b=-1) -> SystemSpec:
    """x' = a x(t) + b x(t - tau)."""
    return SystemSpec("linear-single", 1, [tau], [_mat([[a]]), _mat([[b]])], name="scalar")


def distributed_scalar(c, tau=1.0, a=-1) -> SystemSpec:
    """x' = a x(t) + c * int_{-tau}^0 x(t + theta) d theta."""
    return SystemSpec("linear-distributed", 1, [tau], [_mat([[a]])], kernel=_mat([[c]]), name="distributed")


def _x(k=0, state="x"):
    return Poly.var(delayed_name(state, k))


def hale(b, a=-1, tau=1.0) -> SystemSpec:
    """x' = a x^3 + b x(t - tau)^3."""
    x0, x1 = _x(0), _x(1)
    f = x0 ** 3 * to_fraction(a) + x1 ** 3 * to_fraction(b)
    return SystemSpec("nonlinear-delay", 1, [tau], rhs=[f], name="hale")


def cross_term(a=-1, b="0.5", c="0.2", tau=1.0, box="1") -> SystemSpec:
    """x' = a x^3 + c (x x(t - tau))^2 + b x(t - tau)^3 on the box |x| <= box."""
    x0, x1 = _x(0), _x(1)
    f = x0 ** 3 * to_fraction(a) + (x0 * x1) ** 2 * to_fraction(c) + x1 ** 3 * to_fraction(b)
    return SystemSpec("nonlinear-delay", 1, [tau], rhs=[f], state_box=None if box is None else to_fraction(box),
                      name="cross-term")


def cooke(a, b, tau=1.0, box="0.5") -> SystemSpec:
    """y' = -a y + b y(t - tau) (1 - y), a fraction-of-infected model."""
    y0, y1 = _x(0, "y"), _x(1, "y")
    f = y0 * (-to_fraction(a)) + y1 * (1 - y0) * to_fraction(b)
    return SystemSpec("nonlinear-delay", 1, [tau], rhs=[f], states=["y"],
                      state_box=None if box is None else to_fraction(box), name="cooke")


def pd_controller(a, tau) -> SystemSpec:
    """x'' = -a x(t - tau) - (a/2) x'(t - tau) as a first-order system."""
    a = to_fraction(a)
    A0 = _mat([[0, 1], [0, 0]])
    A1 = PolyMatrix.from_array(np.array([[0, 0], [-a, -a / 2]], dtype=object))
    return SystemSpec("linear-single", 2, [tau], [A0, A1], name="pd-controller")


def fix_parameter(spec: SystemSpec, name: str, value) -> SystemSpec:
    """The system with boxed parameter ``name`` set to ``value``.

    ``tau`` rescales the delays (keeping their ratios); other names are
    substituted into the matrices, kernel and right-hand side.
    """
    value = to_fraction(value)
    d = dict(spec.__dict__)
    d["parameters"] = {k: v for k, v in spec.parameters.items() if k != name}
    if name == "tau":
        ratio = value / spec.tau_max
        d["delays"] = [t * ratio for t in spec.delays]
        return SystemSpec(**d)
    sub = {name: value}
    d["matrices"] = [m.subs(sub) for m in spec.matrices]
    d["kernel"] = spec.kernel.subs(sub) if spec.kernel is not None else None
    d["rhs"] = [p.subs(sub) for p in spec.rhs] if spec.rhs is not None else None
    return SystemSpec(**d)
