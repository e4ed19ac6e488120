"""Positive multiplier and integral-operator cones for delay functionals.

All builders work on a list of *pieces*: intervals of one scalar variable
(``theta`` by default). The continuous case is a single piece ``[-tau, 0]``;
the piecewise case uses ``[-tau_i, -tau_{i-1}]``. The stability builders use
the normalized layout where every piece is ``[-1, 0]`` in a variable ``s``.

Optional parameters (e.g. an uncertain delay) enter through ``params``
(variable -> polynomial degree) and ``region`` (polynomials ``>= 0`` on the
parameter box); positivity then goes through Putinar multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .polynomial import LinExpr, MonomialBasis, Poly, PolyMatrix, intern, to_fraction
from .sdp import SdpProblem, SdpSolution
from .sos import SosConstraint, interval_multiplier, psatz


@dataclass
class Pieces:
    var: str
    intervals: list[tuple[Fraction, Fraction]]

    @classmethod
    def physical(cls, delays: Sequence, piecewise: bool = False, var: str = "theta") -> "Pieces":
        taus = [to_fraction(t) for t in delays]
        _check_delays(taus)
        if not piecewise:
            return cls(var, [(-taus[-1], Fraction(0))])
        prev = [Fraction(0)] + taus[:-1]
        return cls(var, [(-t, -p) for t, p in zip(taus, prev)])

    @classmethod
    def normalized(cls, count: int, var: str = "s") -> "Pieces":
        return cls(var, [(Fraction(-1), Fraction(0))] * count)

    def __len__(self):
        return len(self.intervals)


def _check_delays(taus):
    if not taus:
        raise ValueError("at least one delay is required")
    if any(t <= 0 for t in taus):
        raise ValueError("delays must be positive")
    if any(a >= b for a, b in zip(taus, taus[1:])):
        raise ValueError("delays must be strictly increasing")


def _pieces(delays, piecewise, var, pieces):
    if pieces is not None:
        return pieces
    return Pieces.physical(delays, piecewise, var)


def param_basis(params: Mapping[str, int] | None) -> MonomialBasis:
    params = dict(params or {})
    return MonomialBasis(list(params), sum(params.values()), params) if params else MonomialBasis([], 0)


def free_poly(problem: SdpProblem, basis: Sequence, name: str = "") -> Poly:
    """Polynomial with one fresh free coefficient per monomial in ``basis``."""
    return Poly({m: LinExpr.var(problem.add_free(name)) for m in basis})


def free_matrix(problem: SdpProblem, n: int, m: int, basis: Sequence, symmetric: bool = False,
                name: str = "") -> PolyMatrix:
    rows = [[None] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            if symmetric and j < i:
                rows[i][j] = rows[j][i]
            else:
                rows[i][j] = free_poly(problem, basis, f"{name}[{i},{j}]")
    return PolyMatrix(rows)


def _product_basis(var: str, d: int, params: Mapping[str, int] | None) -> list:
    from .polynomial import kron_basis

    return kron_basis(MonomialBasis([var], d), param_basis(params))


# ---------------------------------------------------------------------------
# spacing functions


@dataclass
class SpacingFunction:
    pieces: Pieces
    T: list[PolyMatrix]
    rows: list[int] = field(default_factory=list)

    def integral(self) -> PolyMatrix:
        """Exact ``sum_i int T_i`` (identically zero after solving)."""
        total = PolyMatrix.zeros(*self.T[0].shape)
        for (a, b), Ti in zip(self.pieces.intervals, self.T):
            total = total + Ti.integrate(self.pieces.var, a, b)
        return total

    def resolve(self, x) -> list[PolyMatrix]:
        return [Ti.resolve(x) for Ti in self.T]


def spacing_var(problem: SdpProblem, n: int, delays: Sequence | None = None, d: int = 0,
                piecewise: bool = False, var: str = "theta", pieces: Pieces | None = None,
                params: Mapping[str, int] | None = None) -> SpacingFunction:
    """Symmetric ``T_i(var)`` of degree ``d`` per piece with ``sum_i int T_i = 0``."""
    if d < 0:
        raise ValueError("degree must be >= 0")
    pcs = _pieces(delays, piecewise, var, pieces)
    intern(pcs.var)
    basis = _product_basis(pcs.var, d, params)
    T = [free_matrix(problem, n, n, basis, symmetric=True, name=f"T{i}") for i in range(len(pcs))]
    sf = SpacingFunction(pcs, T)
    total = sf.integral()
    for i in range(n):
        for j in range(i, n):
            for m, c in total[i, j].terms.items():
                cid = problem.add_equality(c, 0)
                if cid is not None:
                    sf.rows.append(cid)
    return sf


# ---------------------------------------------------------------------------
# G1 / G3: multiplier cones with spacing


@dataclass
class MultiplierCone:
    spacing: SpacingFunction
    constraints: list[SosConstraint]
    n: int


def _positivity_with_spacing(problem, Ms: list[PolyMatrix], spacing_size: int, d: int, pcs: Pieces,
                             params, region, name) -> MultiplierCone:
    size = Ms[0].shape[0]
    if any(M.shape != (size, size) for M in Ms):
        raise ValueError("all pieces must have the same size")
    sf = spacing_var(problem, spacing_size, d=d, pieces=pcs, params=params)
    cons = []
    extra = [Poly.lift(g) for g in (region or [])]
    variables = [pcs.var, *(params or {})]
    for k, ((a, b), M, T) in enumerate(zip(pcs.intervals, Ms, sf.T)):
        pad = PolyMatrix.block([[T, None], [None, PolyMatrix.zeros(size - spacing_size)]]) \
            if size > spacing_size else T
        target = M + pad
        region_k = [interval_multiplier(pcs.var, a, b)] + extra
        cons.append(psatz(problem, target, region_k, variables, name=f"{name}{k}"))
    return MultiplierCone(sf, cons, spacing_size)


def _as_pieces(M, count):
    if isinstance(M, PolyMatrix):
        return [M] * count
    Ms = list(M)
    if len(Ms) != count:
        raise ValueError(f"expected {count} pieces, got {len(Ms)}")
    return Ms


def g1(problem: SdpProblem, M, delays: Sequence | None = None, d: int = 0, piecewise: bool = False,
       var: str = "theta", pieces: Pieces | None = None, params=None, region=None) -> MultiplierCone:
    """``M`` (2n x 2n, one per piece or shared) in the G1 cone."""
    pcs = _pieces(delays, piecewise, var, pieces)
    Ms = _as_pieces(M, len(pcs))
    size = Ms[0].shape[0]
    if size % 2:
        raise ValueError("G1 needs an even-sized matrix [[., .], [., .]] with n x n blocks")
    return _positivity_with_spacing(problem, Ms, size // 2, d, pcs, params, region, "g1.")


def g3(problem: SdpProblem, M, delays: Sequence | None = None, d: int = 0, piecewise: bool = False,
       var: str = "theta", pieces: Pieces | None = None, params=None, region=None,
       n: int | None = None) -> MultiplierCone:
    """``M`` in the G3 cone: size 3n (continuous) or (K+2)n (K pieces)."""
    pcs = _pieces(delays, piecewise, var, pieces)
    Ms = _as_pieces(M, len(pcs))
    size = Ms[0].shape[0]
    blocks = len(pcs) + 2 if len(pcs) > 1 else 3
    if n is None:
        if size % blocks:
            raise ValueError(f"G3 matrix of size {size} is not a multiple of {blocks}")
        n = size // blocks
    elif size % n:
        raise ValueError("dimension mismatch")
    return _positivity_with_spacing(problem, Ms, size - n, d, pcs, params, region, "g3.")


# ---------------------------------------------------------------------------
# G2: positive finite-rank kernels


def derivative_matrix(d: int) -> np.ndarray:
    """``C`` with ``Z_d'(t) = C Z_d(t)`` for ``Z_d = [1, t, ..., t^d]``."""
    C = np.zeros((d + 1, d + 1))
    for k in range(1, d + 1):
        C[k, k - 1] = k
    return C


@dataclass
class KernelVariable:
    """``R_ij(a, b) = Zbar(map_i(a))' Q_ij Zbar(map_j(b))`` with Q PSD (on the parameter box)."""

    pieces: Pieces
    n: int
    d: int
    gram: PolyMatrix  # symbolic Gram (entries affine in unknowns, polynomial in params)
    constraint: object  # BlockHandle or SosConstraint
    maps: list[tuple[Fraction, Fraction]]  # affine maps a -> alpha*a + beta into the reference interval
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.n * (self.d + 1)

    def gram_block(self, i: int, j: int) -> PolyMatrix:
        r = self.size
        return self.gram[i * r:(i + 1) * r, j * r:(j + 1) * r]

    def _zbar(self, var: str, k: int) -> PolyMatrix:
        alpha, beta = self.maps[k]
        t = Poly.var(var) * alpha + beta
        z = [t ** e for e in range(self.d + 1)]
        rows = []
        for comp in range(self.n):
            for e in range(self.d + 1):
                rows.append([z[e] if c == comp else Poly() for c in range(self.n)])
        return PolyMatrix(rows)

    def block(self, i: int, j: int, var1: str = "theta", var2: str = "omega") -> PolyMatrix:
        """Kernel block ``R_ij(var1, var2)``."""
        return self._zbar(var1, i).T @ self.gram_block(i, j) @ self._zbar(var2, j)

    def gram_values(self, sol: SdpSolution, point: Mapping | None = None) -> np.ndarray:
        G = self.gram.resolve(sol.x)
        return G.evaluate(dict(point or {}))


def _symbolic_gram(problem: SdpProblem, size: int, params, region, name):
    if not params:
        h = problem.add_block(size, name)
        rows = [[Poly.const(h.expr(i, j)) for j in range(size)] for i in range(size)]
        return PolyMatrix(rows), h
    G = free_matrix(problem, size, size, param_basis(params).monomials, symmetric=True, name=name)
    con = psatz(problem, G, list(region or []), list(params), name=name)
    return G, con


def g2_kernel(problem: SdpProblem, n: int, delays: Sequence | None = None, d: int = 0,
              piecewise: bool = False, var: str = "theta", pieces: Pieces | None = None,
              params=None, region=None) -> KernelVariable:
    """Positive kernel of degree ``d`` per variable.

    Piecewise: a kernel of size ``nK`` on the last piece's reference interval
    ``[-tau_K, 0]`` is pulled back to piece ``i`` by the affine map sending
    ``[-tau_i, -tau_{i-1}]`` onto it.
    """
    if d < 0:
        raise ValueError("degree must be >= 0")
    pcs = _pieces(delays, piecewise, var, pieces)
    K = len(pcs)
    lo_ref, hi_ref = min(a for a, _ in pcs.intervals), max(b for _, b in pcs.intervals)
    if all(iv == pcs.intervals[0] for iv in pcs.intervals):
        lo_ref, hi_ref = pcs.intervals[0]
    maps = []
    for a, b in pcs.intervals:
        alpha = (hi_ref - lo_ref) / (b - a)
        beta = hi_ref - alpha * b
        maps.append((alpha, beta))
    size = K * n * (d + 1)
    G, con = _symbolic_gram(problem, size, params, region, "kernel")
    return KernelVariable(pcs, n, d, G, con, maps, dict(params or {}))


def g2_derivative(problem: SdpProblem, kernel: KernelVariable, coeffs: Sequence | None = None,
                  region=None):
    """Require ``sum_ij (c_i d/da + c_j d/db) R_ij`` to be a positive kernel.

    The derivative of ``Zbar(alpha a + beta)`` is ``alpha (I kron C) Zbar``, so
    the derivative kernel has Gram ``D'Q + QD`` with ``D = diag(c_i alpha_i) kron I_n kron C``;
    the constraint is that this matrix is PSD (on the parameter box).
    """
    K = len(kernel.pieces)
    coeffs = [Fraction(1)] * K if coeffs is None else [to_fraction(c) for c in coeffs]
    C = derivative_matrix(kernel.d)
    r = kernel.size
    D = np.zeros((K * r, K * r), dtype=object)
    D[:] = Fraction(0)
    blk = np.kron(np.eye(kernel.n), C)
    for i in range(K):
        scale = coeffs[i] * kernel.maps[i][0]
        for a in range(r):
            for b in range(r):
                if blk[a, b]:
                    D[i * r + a, i * r + b] = scale * to_fraction(blk[a, b])
    Dm = PolyMatrix.from_array(D)
    L = Dm.T @ kernel.gram + kernel.gram @ Dm
    size = K * r
    if not kernel.params:
        h = problem.add_block(size, "kernel.derivative")
        for i in range(size):
            for j in range(i, size):
                expr = L[i, j].constant_term()
                problem.add_equality(LinExpr.var(h.entry(i, j)) - expr, 0)
        return h
    return psatz(problem, L, list(region or []), list(kernel.params), name="kernel.derivative")


# ---------------------------------------------------------------------------
# parameter dependence


def param_dependent(problem: SdpProblem, cone_builder, region: Sequence[Poly], params: Mapping[str, int],
                    *args, **kwargs):
    """Run a cone builder with parameter variables adjoined and Putinar multipliers for ``region``.

    With an empty ``params`` mapping this is exactly the unconditioned builder.
    """
    if not params:
        return cone_builder(problem, *args, **kwargs)
    return cone_builder(problem, *args, params=dict(params), region=list(region), **kwargs)


def box_polynomial(var: str, lo, hi) -> Poly:
    """``(v - lo)(hi - v)``: nonnegative exactly on ``[lo, hi]``."""
    return interval_multiplier(var, lo, hi)
