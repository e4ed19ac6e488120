"""Stability programs for linear delay systems.

Every piece ``[-tau_i, -tau_{i-1}]`` of the delay interval is mapped to
``s in [-1, 0]`` through ``theta = -tau_{i-1} + Delta_i s``, and the
functional is written directly in that coordinate::

    V(x_t) = x0'P x0 + sum_i int_{-1}^{0} [2 x0'Q_i(s) phi_i(s) + phi_i(s)'S_i(s) phi_i(s)] ds
             + sum_ij int int phi_i(s)' K_ij(s, r) phi_j(r) ds dr,

with ``phi_i(s) = x(t - tau_{i-1} + Delta_i s)``. Differentiating along
solutions and multiplying by ``tau_K`` gives (``c_i = tau_K / Delta_i``,
``xi = (x(t), x(t - tau_1), ..., x(t - tau_K))``)::

    tau_K dV/dt = xi'D0 xi + 2 sum_j int xi'D1_j phi_j + sum_j int phi_j'D2_j phi_j
                  - sum_ij int int phi_i' L_ij phi_j

    D0[0,0]   += tau_K (P A0 + A0'P)        D0[0,k]   += tau_K P A_k
    D0[0,i-1] += c_i Q_i(0)                 D0[0,i]   -= c_i Q_i(-1)
    D0[i-1,i-1] += c_i S_i(0)               D0[i,i]   -= c_i S_i(-1)
    D1_j[0]   += tau_K A0'Q_j - c_j Q_j'    D1_j[k]   += tau_K A_k'Q_j
    D1_j[i-1] += c_i K_ij(0, s)             D1_j[i]   -= c_i K_ij(-1, s)
    D2_j       = -c_j S_j'
    L_ij       = (c_i d/ds + c_j d/dr) K_ij

(``D0[a,b] += M`` for ``a != b`` also adds ``M'`` at ``[b,a]``; for ``a == b``
it adds ``M + M'``.) A distributed kernel ``A(theta)`` contributes
``tau_K P Ahat(s)`` to ``D1[0]`` and ``-tau_K (Ahat(s)'Q(r) + Q(s)'Ahat(r))`` to
``L``, where ``Ahat(s) = tau A(tau s)``.

Certification: ``V - eps|x0|^2`` is a positive functional and
``tau_K dV/dt + eps|x0|^2`` a negative one, with ``eps`` maximized and
``P <= I`` fixing the scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ..cones import (KernelVariable, MultiplierCone, Pieces, box_polynomial, free_matrix, g1, g2_derivative,
                     g2_kernel, g3,
                     param_basis)
from ..polynomial import LinExpr, MonomialBasis, Poly, PolyMatrix, kron_basis, to_fraction
from ..sdp import SdpProblem
from ..sos import psatz
from .systems import SystemSpec, fix_parameter

S, R = "s", "r"


@dataclass
class LinearProgram:
    """An assembled stability SDP together with the symbolic functional."""

    spec: SystemSpec
    problem: SdpProblem
    degree: int
    kernel_degree: int
    eps: LinExpr
    P: PolyMatrix
    Q: list[PolyMatrix]
    S: list[PolyMatrix]
    kernel: KernelVariable
    D0: PolyMatrix
    D1: list[PolyMatrix]
    D2: list[PolyMatrix]
    tau_K: Poly
    coeffs: list[Fraction]
    ratios: list[Fraction]
    kernel_extra: PolyMatrix | None = None  # distributed-kernel part of L in (s, r)
    cones: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    region: list = field(default_factory=list)

    kind = "linear"

    @property
    def margin(self) -> LinExpr:
        return self.eps

    @property
    def K(self) -> int:
        return len(self.Q)


def _add(D, i, j, X):
    D[i][j] = X if D[i][j] is None else D[i][j] + X


def _sym_add(D: list[list[PolyMatrix | None]], a: int, b: int, M: PolyMatrix):
    if a == b:
        _add(D, a, a, M + M.T)
    else:
        _add(D, a, b, M)
        _add(D, b, a, M.T)


def _assemble(grid, n) -> PolyMatrix:
    rows = [[blk if blk is not None else PolyMatrix.zeros(n) for blk in row] for row in grid]
    return PolyMatrix.block(rows)


def _kernel_degree(d: int, kernel_degree: int | None) -> int:
    return d // 2 if kernel_degree is None else kernel_degree


def build_linear(spec: SystemSpec, d: int, kernel_degree: int | None = None,
                 params: Mapping[str, int] | None = None, tau: Poly | None = None,
                 region: Sequence[Poly] = ()) -> LinearProgram:
    """Assemble the stability program for a linear (single, multiple or distributed) system.

    ``params`` maps parameter symbols to their polynomial degree in the unknowns;
    ``tau`` optionally replaces the largest delay by a polynomial (e.g. the
    symbol of a boxed delay), the other delays keeping their ratios.
    """
    if spec.kind not in ("linear-single", "linear-multiple", "linear-distributed"):
        raise ValueError(f"not a linear system: {spec.kind}")
    if d < 0:
        raise ValueError("degree must be >= 0")
    n, K = spec.n, spec.K
    distributed = spec.kind == "linear-distributed"
    if distributed:
        if len(spec.matrices) != 1 or spec.kernel is None:
            raise ValueError("distributed systems need A0 and a kernel A(theta)")
        if spec.kernel.degree("theta") > d:
            raise ValueError("kernel degree exceeds d")
        if K != 1:
            raise ValueError("distributed systems use a single delay")
    elif len(spec.matrices) != K + 1:
        raise ValueError(f"expected {K + 1} matrices, got {len(spec.matrices)}")
    params = dict(params or {})
    dk = _kernel_degree(d, kernel_degree)
    tK = Poly.lift(tau) if tau is not None else Poly.const(spec.tau_max)
    ratios = [t / spec.tau_max for t in spec.delays]
    prev = [Fraction(0)] + ratios[:-1]
    coeffs = [1 / (r - p) for r, p in zip(ratios, prev)]

    pb = SdpProblem()
    eps = pb.free_expr("eps")
    pb.set_objective(eps)
    pbasis = param_basis(params).monomials
    qbasis = kron_basis(MonomialBasis([S], d), param_basis(params))
    P = free_matrix(pb, n, n, pbasis, symmetric=True, name="P")
    Qs = [free_matrix(pb, n, n, qbasis, name=f"Q{i}") for i in range(K)]
    Ss = [free_matrix(pb, n, n, qbasis, symmetric=True, name=f"S{i}") for i in range(K)]
    I = PolyMatrix.identity(n)
    cones: dict = {}

    # scale: P <= I
    if params:
        cones["normalization"] = psatz(pb, I - P, list(region), list(params), name="normalization")
    else:
        h = pb.add_block(n, "normalization")
        for i in range(n):
            for j in range(i, n):
                pb.add_equality(LinExpr.var(h.entry(i, j)) - (I - P)[i, j].constant_term(), 0)
        cones["normalization"] = h

    pieces = Pieces.normalized(K, S)
    Pm = (P - I * eps) * Fraction(1, K)
    Ms = [PolyMatrix.block([[Pm, Qs[i]], [Qs[i].T, Ss[i]]]) for i in range(K)]
    cones["positivity"] = g1(pb, Ms, d=d, pieces=pieces, params=params or None, region=list(region))

    kernel = g2_kernel(pb, n, d=dk, pieces=pieces, params=params or None, region=list(region))
    cones["kernel"] = kernel

    A = spec.matrices
    Ahat = None
    extra = None
    if distributed:
        Ahat = spec.kernel.subs({"theta": tK * Poly.var(S)}) * tK
        Qr = Qs[0].subs({S: Poly.var(R)})
        Ahr = Ahat.subs({S: Poly.var(R)})
        extra = -((Ahat.T @ Qr) + (Qs[0].T @ Ahr)) * tK
    if distributed:
        cones["kernel_derivative"] = _distributed_derivative(pb, kernel, coeffs, extra)
    else:
        cones["kernel_derivative"] = g2_derivative(pb, kernel, coeffs, region=list(region))

    # derivative blocks
    nb = K + 1
    D0g: list[list] = [[None] * nb for _ in range(nb)]
    _sym_add(D0g, 0, 0, (P @ A[0]) * tK)
    if not distributed:
        for k in range(1, K + 1):
            _sym_add(D0g, 0, k, (P @ A[k]) * tK)
    for i in range(1, K + 1):
        c = coeffs[i - 1]
        Qi, Si = Qs[i - 1], Ss[i - 1]
        _sym_add(D0g, 0, i - 1, Qi.subs({S: 0}) * c)
        _sym_add(D0g, 0, i, -Qi.subs({S: -1}) * c)
        _add(D0g, i - 1, i - 1, Si.subs({S: 0}) * c)
        _add(D0g, i, i, -Si.subs({S: -1}) * c)
    D0 = _assemble(D0g, n)
    D0 = D0 + PolyMatrix.block([[I * eps, None], [None, PolyMatrix.zeros(K * n)]]) if K else D0

    D1, D2 = [], []
    for j in range(1, K + 1):
        Qj, Sj = Qs[j - 1], Ss[j - 1]
        col: list = [None] * nb
        col[0] = (A[0].T @ Qj) * tK - Qj.diff(S) * coeffs[j - 1]
        if distributed:
            col[0] = col[0] + (P @ Ahat) * tK
        else:
            for k in range(1, K + 1):
                term = (A[k].T @ Qj) * tK
                col[k] = term if col[k] is None else col[k] + term
        for i in range(1, K + 1):
            c = coeffs[i - 1]
            Kij = kernel.block(i - 1, j - 1, "_u", S)
            for idx, val, sign in ((i - 1, 0, 1), (i, -1, -1)):
                term = Kij.subs({"_u": val}) * (c * sign)
                col[idx] = term if col[idx] is None else col[idx] + term
        col = [blk if blk is not None else PolyMatrix.zeros(n) for blk in col]
        D1.append(PolyMatrix.block([[blk] for blk in col]))
        D2.append(-Sj.diff(S) * coeffs[j - 1])

    G3s = []
    for j in range(K):
        G3s.append(-PolyMatrix.block([[D0 * Fraction(1, K), D1[j]], [D1[j].T, D2[j]]]))
    cones["derivative"] = g3(pb, G3s, d=d, pieces=pieces, params=params or None, region=list(region), n=n)

    return LinearProgram(spec, pb, d, dk, eps, P, Qs, Ss, kernel, D0, D1, D2, tK, coeffs, ratios, extra,
                         cones, params, list(region))


def _distributed_derivative(pb: SdpProblem, kernel: KernelVariable, coeffs, extra: PolyMatrix):
    """``c (d/ds + d/dr) K + extra`` must be a positive kernel (matched over a common basis)."""
    n = kernel.n
    base = kernel.block(0, 0, S, R)
    L = base.diff(S) * coeffs[0] + base.diff(R) * coeffs[0] + extra
    dm = max(L.degree(S), L.degree(R), 0)
    size = n * (dm + 1)
    h = pb.add_block(size, "kernel.derivative")
    s, r = Poly.var(S), Poly.var(R)
    for a in range(n):
        for b in range(n):
            target = L[a, b]
            seen = set(target.terms)
            model = {}
            for e1 in range(dm + 1):
                for e2 in range(dm + 1):
                    m = (s ** e1 * r ** e2)
                    mono = next(iter(m.terms))
                    model[mono] = h.expr(a * (dm + 1) + e1, b * (dm + 1) + e2)
            for mono in set(model) | seen:
                expr = model.get(mono, LinExpr()) - target.coeff(mono)
                pb.add_equality(expr, 0)
    return h


# ---------------------------------------------------------------------------
# entry points per system class


def build_single_delay(spec: SystemSpec, d: int, kernel_degree: int | None = None) -> LinearProgram:
    if spec.kind != "linear-single" or spec.K != 1:
        raise ValueError("expected a linear single-delay system")
    return build_linear(spec, d, kernel_degree)


def build_multiple_delay(spec: SystemSpec, d: int, kernel_degree: int | None = None) -> LinearProgram:
    if spec.kind not in ("linear-single", "linear-multiple"):
        raise ValueError("expected a linear system with discrete delays")
    return build_linear(spec, d, kernel_degree)


def build_distributed_delay(spec: SystemSpec, d: int, kernel_degree: int | None = None) -> LinearProgram:
    if spec.kind != "linear-distributed":
        raise ValueError("expected a distributed-delay system")
    return build_linear(spec, d, kernel_degree)


def build_single_delay_pd(spec: SystemSpec, d_theta: int, d_param: int,
                          kernel_degree: int | None = None) -> LinearProgram:
    """Parameter-dependent functional valid on the whole parameter box.

    A parameter named ``tau`` replaces the largest delay (the other delays keep
    their ratios); other parameters may appear in the matrix entries.
    """
    if not spec.parameters:
        raise ValueError("no parameters to range over")
    for name, (lo, hi) in list(spec.parameters.items()):
        if lo == hi:
            # a point box carries no information beyond the fixed value
            spec = fix_parameter(spec, name, lo)
    if not spec.parameters:
        return build_linear(spec, d_theta, kernel_degree)
    # Each parameter is written as mid + half*u with u in [-1, 1]. The box
    # polynomial 1 - u^2 is positive at u = 0, so Gram entries that are forced
    # to vanish show up as nonnegative combinations and are removed by the
    # solver's facial reduction; with (p - lo)(hi - p) they need not.
    inner = dict(spec.__dict__)
    inner["parameters"] = {}
    to_u, back = {}, {}
    for name, (lo, hi) in spec.parameters.items():
        u = f"{name}__c"
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        to_u[name] = Poly.const(mid) + Poly.var(u) * half
        back[u] = (Poly.var(name) - mid) * (1 / half)
    sub = {k: v for k, v in to_u.items() if k != "tau"}
    if sub:
        inner["matrices"] = [m.subs(sub) for m in spec.matrices]
        inner["kernel"] = spec.kernel.subs(sub) if spec.kernel is not None else None
    params = {u: d_param for u in back}
    region = [box_polynomial(u, -1, 1) for u in back]
    prog = build_linear(SystemSpec(**inner), d_theta, kernel_degree, params=params, tau=to_u.get("tau"),
                        region=region)
    return _restore_parameters(prog, spec, back, d_param)


def _restore_parameters(prog: LinearProgram, spec: SystemSpec, back: dict, d_param: int) -> LinearProgram:
    """Express the functional and derivative blocks in the original parameters."""
    prog.spec = spec
    prog.P = prog.P.subs(back)
    prog.Q = [Q.subs(back) for Q in prog.Q]
    prog.S = [S.subs(back) for S in prog.S]
    prog.kernel.gram = prog.kernel.gram.subs(back)
    prog.kernel.params = {name: d_param for name in spec.parameters}
    prog.D0 = prog.D0.subs(back)
    prog.D1 = [M.subs(back) for M in prog.D1]
    prog.D2 = [M.subs(back) for M in prog.D2]
    prog.tau_K = prog.tau_K.subs(back)
    if prog.kernel_extra is not None:
        prog.kernel_extra = prog.kernel_extra.subs(back)
    prog.params = {name: d_param for name in spec.parameters}
    prog.region = [box_polynomial(name, lo, hi) for name, (lo, hi) in spec.parameters.items()]
    return prog
