"""Stability programs for polynomial delay systems and ODEs.

The delay functional uses the same normalized pieces as the linear builder
(``phi_i(s) = x(t - tau_{i-1} + Delta_i s)``, ``s in [-1, 0]``)::

    V(x_t) = sum_i int g_i(x0, phi_i(s), s) ds
             + sum_ij int int h_ij(phi_i(s), phi_j(r), s, r) ds dr,

    h_ij(a, b, s, r) = Z(a)' K_ij(s, r) Z(b)     (K a positive kernel).

With ``c_i = tau_K / Delta_i`` and ``xs`` standing for ``phi_j(s)``::

    tau_K dV/dt = sum_j int ghat_j(xi, xs, s) ds - int int hhat

    ghat_j = c_j [g_j(x0, x_{j-1}, 0) - g_j(x0, x_j, -1) - d/ds g_j(x0, xs, s)]
             + tau_K grad_x0 g_j(x0, xs, s) . f(xi)
             + sum_i c_i [h_ij(x_{i-1}, xs, 0, s) - h_ij(x_i, xs, -1, s)
                          + h_ji(xs, x_{i-1}, s, 0) - h_ji(xs, x_i, s, -1)]
    hhat_ij = (c_i d/ds + c_j d/dr) h_ij.

Certification: ``g_j - t_j - (alpha/K) w1(x0)`` and ``-ghat_j - u_j - (alpha/K) w3(x0)``
are nonnegative on ``s in [-1, 0]`` (and on the state box, if any) with
``sum_j int t_j = sum_j int u_j = 0``; ``hhat`` is a positive kernel. The
margins ``w1``, ``w3`` are even powers of ``x0`` matched to the lowest order
of ``f``. The problem is homogeneous, so ``alpha <= 1`` fixes the scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ..cones import KernelVariable, Pieces, free_poly, g2_derivative, g2_kernel
from ..polynomial import (LinExpr, MonomialBasis, Poly, PolyMatrix, intern, mono_degree, to_fraction)
from ..sdp import SdpProblem
from ..sos import SosConstraint, interval_multiplier, psatz
from .systems import SystemSpec, delayed_name

S, R = "s", "r"


@dataclass
class NonlinearProgram:
    """An assembled SOS program together with the symbolic functional."""

    spec: SystemSpec
    problem: SdpProblem
    kind: str
    degree: int
    theta_degree: int
    alpha: LinExpr
    functional: dict = field(default_factory=dict)
    constraints: dict = field(default_factory=dict)
    margins: tuple[Poly, Poly] | None = None
    region: list = field(default_factory=list)

    @property
    def margin(self) -> LinExpr:
        return self.alpha


# ---------------------------------------------------------------------------
# helpers


def state_names(spec: SystemSpec, k: int) -> list[str]:
    return [delayed_name(st, k) for st in spec.states]


def piece_names(spec: SystemSpec, tag: str) -> list[str]:
    return [f"{st}_{tag}" for st in spec.states]


def _monomials(variables: Sequence[str], lo: int, hi: int, extra: Sequence[str] = (), extra_deg: int = 0):
    """State monomials of total degree in ``[lo, hi]`` times powers of ``extra`` up to ``extra_deg``."""
    states = MonomialBasis(list(variables), hi).monomials
    states = [m for m in states if lo <= mono_degree(m)]
    if not extra:
        return states
    ext = MonomialBasis(list(extra), extra_deg).monomials
    out = []
    for a in states:
        for b in ext:
            out.append(tuple(sorted(a + b, key=lambda t: _order(t[0]))))
    return out


def _order(v):
    from ..polynomial import _VAR_ORDER

    return _VAR_ORDER[v]


def lowest_order(rhs: Sequence[Poly], state_vars: Sequence[str]) -> int:
    degs = [sum(e for v, e in m if v in state_vars) for p in rhs for m in p.terms]
    degs = [d for d in degs if d > 0]
    return min(degs) if degs else 1


def margin_polys(spec: SystemSpec, m: int | None = None) -> tuple[Poly, Poly]:
    """``(w1, w3)``: positivity and decrease margins as sums of even powers of ``x0``."""
    x0 = state_names(spec, 0)
    if m is None:
        names = [delayed_name(st, k) for st in spec.states for k in range(spec.K + 1)]
        m = lowest_order(spec.rhs, names)
    k1 = 2 * math.ceil((m + 1) / 2)
    k3 = 2 * m
    w1 = sum((Poly.var(v) ** k1 for v in x0), Poly())
    w3 = sum((Poly.var(v) ** k3 for v in x0), Poly())
    return w1, w3


def box_region(names: Sequence[str], r) -> list[Poly]:
    r = to_fraction(r)
    return [Poly.const(r * r) - Poly.var(v) ** 2 for v in names]


def _gradient_dot(g: Poly, x0: Sequence[str], f: Sequence[Poly]) -> Poly:
    out = Poly()
    for v, fv in zip(x0, f):
        out = out + g.diff(v) * fv
    return out


def _quad(Za: list[Poly], M: PolyMatrix, Zb: list[Poly]) -> Poly:
    out = Poly()
    for a, pa in enumerate(Za):
        for b, pb in enumerate(Zb):
            e = M[a, b]
            if not e.is_zero():
                out = out + pa * e * pb
    return out


def _positive(pb: SdpProblem, target: Poly, region: list[Poly], name: str) -> SosConstraint:
    vs = list(dict.fromkeys(target.variables + [v for g in region for v in g.variables]))
    return psatz(pb, target, region, sorted(vs, key=_order), name=name)


def _new_program(spec, kind, d, dth):
    pb = SdpProblem()
    alpha = pb.free_expr("alpha")
    pb.set_objective(alpha)
    cap = pb.add_block(1, "normalization")
    pb.add_equality(LinExpr.var(cap.entry(0, 0)) + alpha, 1)
    return pb, alpha


# ---------------------------------------------------------------------------
# delay functionals


def build_nonlinear(spec: SystemSpec, d: int, theta_degree: int | None = None, kernel_degree: int | None = None,
                    box=None, margins: tuple[Poly, Poly] | None = None) -> NonlinearProgram:
    """Assemble the functional program for ``x' = f(x(t), x(t - tau_1), ..., x(t - tau_K))``.

    ``d`` bounds the state degree of ``g``; ``theta_degree`` (default
    ``min(d, 2)``) its degree in ``s``. ``kernel_degree`` is the ``s``-degree of the kernel
    (default ``theta_degree // 2``); its state basis has degree ``d // 2``.
    ``box`` (default ``spec.state_box``) restricts all state variables to
    ``|x| <= box``.
    """
    if spec.kind != "nonlinear-delay":
        raise ValueError(f"not a nonlinear delay system: {spec.kind}")
    if d < 2:
        raise ValueError("state degree must be >= 2")
    K, n = spec.K, spec.n
    dth = min(d, 2) if theta_degree is None else theta_degree
    dk = dth // 2 if kernel_degree is None else kernel_degree
    box = spec.state_box if box is None else box
    intern(S)
    xs = [state_names(spec, k) for k in range(K + 1)]
    xp = piece_names(spec, "s")
    for v in xp:
        intern(v)
    w1, w3 = margins or margin_polys(spec)
    f = spec.rhs
    ratios = [t / spec.tau_max for t in spec.delays]
    prev = [Fraction(0)] + ratios[:-1]
    c = [1 / (r - p) for r, p in zip(ratios, prev)]
    tK = spec.tau_max

    pb, alpha = _new_program(spec, "nonlinear", d, dth)
    s_int = interval_multiplier(S, -1, 0)
    sbox = [] if box is None else box_region(xs[0] + xp, box)

    gmons = _monomials(xs[0] + xp, 2, d, [S], dth)
    g = [free_poly(pb, gmons, f"g{i}") for i in range(K)]

    # kernel over Z(x) of degree 1..d//2
    zmons = _monomials(xs[0], 1, max(d // 2, 1))
    kernel = g2_kernel(pb, len(zmons), d=dk, pieces=Pieces.normalized(K, S))
    kernel_der = g2_derivative(pb, kernel, c)

    def Z(names):
        sub = dict(zip(xs[0], (Poly.var(v) for v in names)))
        return [Poly({m: Fraction(1)}).subs(sub) for m in zmons]

    # positivity
    t1mons = _monomials(xs[0], 2, d, [S], dth)
    t1 = [free_poly(pb, t1mons, f"t{i}") for i in range(K)]
    _zero_integral(pb, t1)
    pos = []
    for i in range(K):
        target = g[i] - t1[i] - w1 * (alpha * Fraction(1, K))
        region = ([s_int] if dth > 0 else []) + sbox
        pos.append(_positive(pb, target, region, f"positivity{i}"))

    # derivative
    ghat = []
    for j in range(K):
        gj = g[j]
        to_prev = dict(zip(xp, (Poly.var(v) for v in xs[j])))
        to_here = dict(zip(xp, (Poly.var(v) for v in xs[j + 1])))
        term = (gj.subs({**to_prev, S: 0}) - gj.subs({**to_here, S: -1}) - gj.diff(S)) * c[j]
        term = term + _gradient_dot(gj, xs[0], f) * tK
        Zs = Z(xp)
        for i in range(K):
            Kij = kernel.block(i, j, "_u", S)
            Kji = kernel.block(j, i, S, "_u")
            b0, b1 = Z(xs[i]), Z(xs[i + 1])
            term = term + (_quad(b0, Kij.subs({"_u": 0}), Zs) - _quad(b1, Kij.subs({"_u": -1}), Zs)
                           + _quad(Zs, Kji.subs({"_u": 0}), b0) - _quad(Zs, Kji.subs({"_u": -1}), b1)) * c[i]
        ghat.append(term)
    xi = [v for names in xs for v in names]
    top = max(p.degree_in(xi + xp) for p in ghat)
    t3mons = _monomials(xi, 2, max(top, 2), [S], dth)
    t3 = [free_poly(pb, t3mons, f"u{i}") for i in range(K)]
    _zero_integral(pb, t3)
    dbox = [] if box is None else box_region(xi + xp, box)
    dec = []
    for j in range(K):
        target = -ghat[j] - t3[j] - w3 * (alpha * Fraction(1, K))
        region = ([s_int] if dth > 0 else []) + dbox
        dec.append(_positive(pb, target, region, f"derivative{j}"))

    return NonlinearProgram(spec, pb, "nonlinear", d, dth, alpha,
                            functional={"g": g, "kernel": kernel, "kernel_monomials": zmons, "ghat": ghat,
                                        "t": t1, "u": t3, "coeffs": c},
                            constraints={"positivity": pos, "derivative": dec, "kernel_derivative": kernel_der},
                            margins=(w1, w3), region=sbox)


def _zero_integral(pb: SdpProblem, polys: list[Poly]):
    total = Poly()
    for p in polys:
        total = total + p.integrate(S, -1, 0)
    for _, coef in total.terms.items():
        pb.add_equality(coef, 0)


def build_nonlinear_single(spec: SystemSpec, d: int, **kw) -> NonlinearProgram:
    if spec.K != 1:
        raise ValueError("single-delay builder needs exactly one delay")
    return build_nonlinear(spec, d, **kw)


def build_nonlinear_multiple(spec: SystemSpec, d: int, **kw) -> NonlinearProgram:
    return build_nonlinear(spec, d, **kw)


# ---------------------------------------------------------------------------
# delay-independent and ODE programs


def build_delay_independent(spec: SystemSpec, d: int, box=None,
                            margins: tuple[Poly, Poly] | None = None) -> NonlinearProgram:
    """``V = p0(x(t)) + sum_i int_{-tau_i}^0 p_i(x(t+theta)) d theta``; the conditions do not involve tau."""
    if spec.kind != "nonlinear-delay":
        raise ValueError(f"not a nonlinear delay system: {spec.kind}")
    if d < 2:
        raise ValueError("degree must be >= 2")
    K = spec.K
    box = spec.state_box if box is None else box
    xs = [state_names(spec, k) for k in range(K + 1)]
    w1, w3 = margins or margin_polys(spec)
    pb, alpha = _new_program(spec, "delay-independent", d, 0)
    mons = _monomials(xs[0], 2, d)
    p = [free_poly(pb, mons, f"p{i}") for i in range(K + 1)]
    box0 = [] if box is None else box_region(xs[0], box)
    cons = {"p0": _positive(pb, p[0] - w1 * alpha, box0, "p0")}
    for i in range(1, K + 1):
        cons[f"p{i}"] = _positive(pb, p[i], box0, f"p{i}")
    deriv = _gradient_dot(p[0], xs[0], spec.rhs)
    for i in range(1, K + 1):
        pi_delayed = p[i].subs(dict(zip(xs[0], (Poly.var(v) for v in xs[i]))))
        deriv = deriv + p[i] - pi_delayed
    xi = [v for names in xs for v in names]
    dbox = [] if box is None else box_region(xi, box)
    cons["derivative"] = _positive(pb, -deriv - w3 * alpha, dbox, "derivative")
    return NonlinearProgram(spec, pb, "delay-independent", d, 0, alpha,
                            functional={"p": p, "derivative": deriv}, constraints=cons,
                            margins=(w1, w3), region=box0)


def build_ode(spec: SystemSpec, d: int, param_degree: int = 0, box=None,
              margins: tuple[Poly, Poly] | None = None) -> NonlinearProgram:
    """Polynomial Lyapunov function ``V(x, p)`` for ``x' = f(x, p)`` (globally, or on the region)."""
    if spec.kind != "ode":
        raise ValueError(f"not an ODE: {spec.kind}")
    if d < 2:
        raise ValueError("degree must be >= 2")
    box = spec.state_box if box is None else box
    x = state_names(spec, 0)
    params = list(spec.parameters)
    w1, w3 = margins or margin_polys(spec, lowest_order(spec.rhs, x))
    pb, alpha = _new_program(spec, "ode", d, 0)
    mons = _monomials(x, 2, d, params, param_degree) if params else _monomials(x, 2, d)
    V = free_poly(pb, mons, "V")
    region = [interval_multiplier(k, lo, hi) for k, (lo, hi) in spec.parameters.items()]
    if box is not None:
        region += box_region(x, box)
    cons = {"positivity": _positive(pb, V - w1 * alpha, region, "positivity")}
    deriv = _gradient_dot(V, x, spec.rhs)
    cons["derivative"] = _positive(pb, -deriv - w3 * alpha, region, "derivative")
    return NonlinearProgram(spec, pb, "ode", d, 0, alpha, functional={"V": V, "derivative": deriv},
                            constraints=cons, margins=(w1, w3), region=region)


def build_linear_uncertain_ode(A: PolyMatrix, parameters: dict, param_degree: int = 2) -> NonlinearProgram:
    """``P(y) - alpha I`` and ``-(A(y)'P(y) + P(y)A(y) + alpha I)`` positive on the parameter box."""
    n = A.shape[0]
    spec = SystemSpec("ode", n, rhs=_linear_rhs(A, n), parameters=parameters, name="linear-uncertain")
    pb, alpha = _new_program(spec, "linear-uncertain", 2, 0)
    params = list(spec.parameters)
    basis = MonomialBasis(params, param_degree).monomials
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            rows[i][j] = rows[j][i] = free_poly(pb, basis, f"P[{i},{j}]")
    P = PolyMatrix(rows)
    I = PolyMatrix.identity(n)
    region = [interval_multiplier(k, lo, hi) for k, (lo, hi) in spec.parameters.items()]
    cons = {"positivity": psatz(pb, P - I * alpha, region, params, name="positivity"),
            "derivative": psatz(pb, -(A.T @ P + P @ A + I * alpha), region, params, name="derivative")}
    return NonlinearProgram(spec, pb, "linear-uncertain", 2, 0, alpha, functional={"P": P, "A": A},
                            constraints=cons, region=region)


def _linear_rhs(A: PolyMatrix, n: int) -> list[Poly]:
    x = [Poly.var(delayed_name(f"x{i + 1}" if n > 1 else "x", 0)) for i in range(n)]
    return [sum((A[i, j] * x[j] for j in range(n)), Poly()) for i in range(n)]
