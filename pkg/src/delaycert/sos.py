"""Gram-matrix encodings of polynomial nonnegativity.

A target (scalar or symmetric matrix polynomial, affine in SDP unknowns) is
matched coefficient by coefficient against

    Z'Q0 Z + sum_i g_i * Z_i'Q_i Z_i ,      Q0, Q_i PSD,

with ``Z = I_n kron Z_d``. Without region polynomials this is plain (matrix)
SOS; with ``g = (theta-a)(b-theta)`` it is positivity on an interval, and
with general ``g_i`` it is the Putinar cone over ``{g_i >= 0}``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .polynomial import (LinExpr, Monomial, MonomialBasis, Poly, PolyMatrix, mono_degree, mono_exponent,
                         mono_mul, to_fraction)
from .sdp import BlockHandle, SdpProblem, SdpSolution


@dataclass
class GramTerm:
    """``g * (I_n kron Z)' Q (I_n kron Z)`` for one PSD block ``Q``."""

    block: BlockHandle
    basis: MonomialBasis
    multiplier: Poly | None = None


@dataclass
class SosConstraint:
    target: PolyMatrix
    variables: tuple[str, ...]
    terms: list[GramTerm] = field(default_factory=list)
    rows: list[int] = field(default_factory=list)

    @property
    def gram(self) -> BlockHandle:
        return self.terms[0].block

    @property
    def basis(self) -> MonomialBasis:
        return self.terms[0].basis

    @property
    def multipliers(self) -> list[GramTerm]:
        return self.terms[1:]

    def gram_values(self, sol: SdpSolution) -> list[np.ndarray]:
        return [sol.blocks[t.block.index] for t in self.terms]

    def residual(self, sol: SdpSolution) -> float:
        """Max coefficient mismatch between the solved target and its Gram expansion."""
        target = self.target.resolve(sol.x)
        expansion = PolyMatrix.zeros(*target.shape)
        for t, Q in zip(self.terms, self.gram_values(sol)):
            expansion = expansion + gram_expand(Q, t.basis, target.shape[0], t.multiplier)
        return max_coeff_diff(target, expansion)


def _as_matrix(target) -> PolyMatrix:
    if isinstance(target, PolyMatrix):
        return target
    return PolyMatrix([[Poly.lift(target)]])


def _degrees(target: PolyMatrix, variables: Sequence[str]) -> tuple[dict[str, int], int]:
    per = {v: max(target.degree(v), 0) for v in variables}
    total = max(target.degree_in(variables), 0)
    return per, total


def half_basis(variables: Sequence[str], degrees: dict[str, int], total: int,
               shift: Poly | None = None) -> MonomialBasis | None:
    """Monomials able to appear in an SOS term of a target with the given degree profile.

    ``shift`` is a multiplier whose degrees are subtracted first (Putinar terms).
    Returns None if the multiplier's degree already exceeds the target's.
    """
    caps = {}
    for v in variables:
        dv = degrees.get(v, 0) - (shift.degree(v) if shift is not None and v in shift.variables else 0)
        caps[v] = max(math.ceil(dv / 2), 0)
    t = total - (shift.degree_in(variables) if shift is not None else 0)
    if t < 0:
        return None
    return MonomialBasis(variables, math.ceil(t / 2), caps)


class _Products:
    def __init__(self):
        self.cache: dict[tuple, Monomial] = {}

    def __call__(self, a, b):
        key = (a, b)
        m = self.cache.get(key)
        if m is None:
            m = self.cache[key] = mono_mul(a, b)
        return m


_mul = _Products()


def _gram_contributions(term: GramTerm, n: int, acc: dict):
    mons = term.basis.monomials
    k = len(mons)
    gterms = list(term.multiplier.terms.items()) if term.multiplier is not None else [((), Fraction(1))]
    h = term.block
    for r in range(n):
        for c in range(r, n):
            for i in range(k):
                jstart = i if r == c else 0
                for j in range(jstart, k):
                    coef = 2 if (r == c and i != j) else 1
                    vid = h.entry(r * k + i, c * k + j)
                    m = _mul(mons[i], mons[j])
                    for gm, gc in gterms:
                        d = acc[(r, c, _mul(m, gm))]
                        d[vid] = d.get(vid, 0) + coef * gc


def _emit(problem: SdpProblem, target: PolyMatrix, terms: list[GramTerm]) -> list[int]:
    n = target.shape[0]
    acc: dict = defaultdict(dict)
    for t in terms:
        _gram_contributions(t, n, acc)
    keys = set(acc)
    for r in range(n):
        for c in range(r, n):
            for m in target[r, c].terms:
                keys.add((r, c, m))
    rows = []
    for key in sorted(keys, key=lambda t: (t[0], t[1], mono_degree(t[2]), repr(t[2]))):
        r, c, m = key
        expr = LinExpr(acc.get(key, {})) - target[r, c].coeff(m)
        cid = problem.add_equality(expr, 0)
        if cid is not None:
            rows.append(cid)
    return rows


def _check_symmetric(target: PolyMatrix):
    n, m = target.shape
    if n != m:
        raise ValueError(f"target must be square, got {target.shape}")
    if not target.is_symmetric():
        raise ValueError("target matrix is not symmetric")


def psatz(problem: SdpProblem, target, region: Sequence[Poly] = (), variables: Sequence[str] | None = None,
          basis: MonomialBasis | None = None, mult_bases: Sequence[MonomialBasis] | None = None,
          name: str = "") -> SosConstraint:
    """``target - sum g_i S_i`` matrix-SOS with every ``S_i`` matrix-SOS.

    Bases default to the smallest ones that can match the target's degree
    profile in ``variables`` (all variables of the target and region by default).
    """
    target = _as_matrix(target)
    _check_symmetric(target)
    region = [Poly.lift(g) for g in region]
    if variables is None:
        vs = set(target.variables)
        for g in region:
            vs.update(g.variables)
        from .polynomial import _VAR_ORDER

        variables = sorted(vs, key=_VAR_ORDER.__getitem__)
    variables = tuple(variables)
    per, total = _degrees(target, variables)
    for g in region:
        for v in variables:
            per[v] = max(per[v], g.degree(v) if v in g.variables else 0)
        total = max(total, g.degree_in(variables))
    n = target.shape[0]
    if basis is None:
        # even up the degree profile so the SOS part can carry the top terms
        basis = half_basis(variables, per, total)
    terms = [GramTerm(problem.add_block(n * len(basis), name or "sos"), basis, None)]
    for idx, g in enumerate(region):
        mb = mult_bases[idx] if mult_bases is not None else half_basis(variables, per, total, g)
        if mb is None:
            continue
        terms.append(GramTerm(problem.add_block(n * len(mb), f"{name or 'sos'}.mult{idx}"), mb, g))
    rows = _emit(problem, target, terms)
    return SosConstraint(target, variables, terms, rows)


def sos(problem: SdpProblem, target, variables: Sequence[str] | None = None,
        basis: MonomialBasis | None = None, name: str = "") -> SosConstraint:
    """Scalar SOS membership of ``target`` (Poly affine in problem unknowns)."""
    t = _as_matrix(target)
    if t.shape != (1, 1):
        raise ValueError("sos expects a scalar target; use matrix_sos")
    vs = tuple(variables) if variables is not None else tuple(t.variables)
    if basis is None and vs:
        deg = t.degree_in(vs)
        if deg % 2:
            raise ValueError(f"odd-degree target (degree {deg}) cannot be SOS")
        basis = MonomialBasis(vs, deg // 2)
    return psatz(problem, t, (), vs, basis, name=name)


def matrix_sos(problem: SdpProblem, target: PolyMatrix, variables: Sequence[str] | None = None,
               basis: MonomialBasis | None = None, name: str = "") -> SosConstraint:
    """Matrix SOS: ``target = (I kron Z)'Q(I kron Z)`` with ``Q`` PSD."""
    _check_symmetric(target)
    vs = tuple(variables) if variables is not None else tuple(target.variables)
    if basis is None and vs:
        deg = target.degree_in(vs)
        if deg % 2:
            raise ValueError(f"odd-degree target (degree {deg}) cannot be SOS")
        basis = MonomialBasis(vs, deg // 2)
    return psatz(problem, target, (), vs, basis, name=name)


def interval_multiplier(var: str, a, b) -> Poly:
    """``(v - a)(b - v)``, nonnegative exactly on ``[a, b]``."""
    v = Poly.var(var)
    return (v - to_fraction(a)) * (to_fraction(b) - v)


def interval_positivity(problem: SdpProblem, target, interval: tuple, var: str = "theta",
                        variables: Sequence[str] | None = None, name: str = "") -> SosConstraint:
    """``target(v) = S0(v) + p(v) S1(v)`` with ``p = (v-a)(b-v)`` and S0, S1 matrix-SOS."""
    a, b = (to_fraction(x) for x in interval)
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    target = _as_matrix(target)
    vs = tuple(variables) if variables is not None else tuple(dict.fromkeys([var, *target.variables]))
    return psatz(problem, target, [interval_multiplier(var, a, b)], vs, name=name)


def putinar(problem: SdpProblem, target, region: Sequence[Poly], d_mult: int | None = None,
            variables: Sequence[str] | None = None, name: str = "") -> SosConstraint:
    """Membership in the Putinar cone over ``{g_i >= 0}``.

    ``d_mult`` bounds the degree of each multiplier ``S_i`` (basis degree
    ``d_mult // 2``); by default it is chosen from the target's degree.
    """
    target = _as_matrix(target)
    mult_bases = None
    if d_mult is not None:
        if d_mult < 0:
            raise ValueError("d_mult must be >= 0")
        vs = tuple(variables) if variables is not None else None
        if vs is None:
            s = set(target.variables)
            for g in region:
                s.update(Poly.lift(g).variables)
            from .polynomial import _VAR_ORDER

            vs = tuple(sorted(s, key=_VAR_ORDER.__getitem__))
        variables = vs
        mult_bases = [MonomialBasis(vs, d_mult // 2) for _ in region]
    return psatz(problem, target, region, variables, mult_bases=mult_bases, name=name)


# ---------------------------------------------------------------------------
# reconstruction and checks


def gram_expand(Q: np.ndarray, basis: MonomialBasis, n: int = 1, multiplier: Poly | None = None) -> PolyMatrix:
    """``g * (I_n kron Z)' Q (I_n kron Z)`` with float Gram entries (as exact fractions)."""
    mons = basis.monomials
    k = len(mons)
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (n * k, n * k):
        raise ValueError(f"Gram shape {Q.shape} does not match n={n}, |Z|={k}")
    rows = []
    for r in range(n):
        row = []
        for c in range(n):
            terms: dict = {}
            for i in range(k):
                for j in range(k):
                    q = Q[r * k + i, c * k + j]
                    if q == 0:
                        continue
                    m = _mul(mons[i], mons[j])
                    terms[m] = terms.get(m, 0) + to_fraction(q)
            p = Poly(terms)
            row.append(p * multiplier if multiplier is not None else p)
        rows.append(row)
    return PolyMatrix(rows)


def max_coeff_diff(a: PolyMatrix, b: PolyMatrix) -> float:
    worst = 0.0
    for (_, _, p), (_, _, q) in zip(a.entries(), b.entries()):
        d = p - q
        for c in d.terms.values():
            worst = max(worst, abs(float(c)))
    return worst


def check_decomposition(poly, gram, basis: MonomialBasis) -> dict:
    """Coefficient residual ``||poly - Z'QZ||_inf`` and the Gram's minimum eigenvalue."""
    target = _as_matrix(poly)
    Q = np.atleast_2d(np.asarray(gram, dtype=float))
    n = target.shape[0]
    if Q.size == 0:
        resid = max_coeff_diff(target, PolyMatrix.zeros(n))
        return {"residual": resid, "min_eig": 0.0}
    expansion = gram_expand(Q, basis, n)
    return {"residual": max_coeff_diff(target, expansion),
            "min_eig": float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])}
