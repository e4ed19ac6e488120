"""Exact multivariate polynomials and polynomial matrices.

Coefficients are :class:`fractions.Fraction` for numeric data, or
:class:`LinExpr` when a coefficient is an affine expression in decision
variables of an SDP. Every equality constraint of the certification
problems is obtained by matching coefficients of such polynomials, so
all arithmetic here is exact.

A monomial is stored sparsely as a tuple of ``(variable, exponent)`` pairs
sorted by the global variable order (order of first use).
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from numbers import Number
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

_VAR_ORDER: dict[str, int] = {}


def intern(name: str) -> int:
    """Register ``name`` in the global variable order and return its rank."""
    rank = _VAR_ORDER.get(name)
    if rank is None:
        rank = _VAR_ORDER[name] = len(_VAR_ORDER)
    return rank


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise ValueError(f"non-finite coefficient {x!r}")
        # decimal reading of the float, so 0.1 becomes 1/10
        return Fraction(repr(float(x)))
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot convert {type(x).__name__} to an exact coefficient")


class LinExpr:
    """Affine expression ``c + sum_k a_k v_k`` over integer variable ids.

    The constant term is stored under key ``-1``.
    """

    __slots__ = ("terms",)
    CONST = -1

    def __init__(self, terms: Mapping[int, Fraction] | None = None):
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def var(cls, idx: int, coef=1) -> "LinExpr":
        return cls({idx: to_fraction(coef)})

    @classmethod
    def const(cls, c) -> "LinExpr":
        return cls({cls.CONST: to_fraction(c)})

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def constant(self) -> Fraction:
        return self.terms.get(self.CONST, Fraction(0))

    def variables(self) -> list[int]:
        return [k for k in self.terms if k != self.CONST]

    def __add__(self, other):
        if isinstance(other, Poly):
            return NotImplemented
        if isinstance(other, LinExpr):
            out = dict(self.terms)
            for k, v in other.terms.items():
                out[k] = out.get(k, 0) + v
            return LinExpr(out)
        c = to_fraction(other)
        if c == 0:
            return self
        out = dict(self.terms)
        out[self.CONST] = out.get(self.CONST, 0) + c
        return LinExpr(out)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, Poly):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Poly):
            return NotImplemented
        if isinstance(other, LinExpr):
            if self.variables() and other.variables():
                raise TypeError("product of two non-constant affine expressions")
            if not other.variables():
                return self * other.constant
            return other * self.constant
        c = to_fraction(other)
        if c == 0:
            return LinExpr()
        return LinExpr({k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, LinExpr):
            return self.terms == other.terms
        if isinstance(other, Number):
            return (self - other).is_zero()
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def value(self, x: np.ndarray) -> float:
        """Evaluate at the variable vector ``x``."""
        s = float(self.terms.get(self.CONST, 0))
        for k, v in self.terms.items():
            if k != self.CONST:
                s += float(v) * x[k]
        return s

    def __repr__(self):
        parts = []
        for k, v in sorted(self.terms.items()):
            parts.append(f"{v}" if k == self.CONST else f"{v}*v{k}")
        return "LinExpr(" + " + ".join(parts or ["0"]) + ")"


Coef = Union[Fraction, LinExpr]
Monomial = tuple  # tuple[tuple[str, int], ...]

ONE: Monomial = ()


def _is_zero(c: Coef) -> bool:
    return c.is_zero() if isinstance(c, LinExpr) else c == 0


def _coerce(c) -> Coef:
    return c if isinstance(c, LinExpr) else to_fraction(c)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items(), key=lambda t: _VAR_ORDER[t[0]]))


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_exponent(m: Monomial, v: str) -> int:
    for name, e in m:
        if name == v:
            return e
    return 0


def mono_drop(m: Monomial, v: str) -> Monomial:
    return tuple(t for t in m if t[0] != v)


def make_monomial(exps: Mapping[str, int]) -> Monomial:
    for v in exps:
        intern(v)
    return tuple(sorted(((v, int(e)) for v, e in exps.items() if e), key=lambda t: _VAR_ORDER[t[0]]))


def mono_str(m: Monomial) -> str:
    if not m:
        return "1"
    return "*".join(v if e == 1 else f"{v}^{e}" for v, e in m)


class Poly:
    """Sparse multivariate polynomial with exact coefficients.

    Instances are treated as immutable.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, Coef] | None = None):
        clean = {}
        for m, c in (terms or {}).items():
            c = _coerce(c)
            if not _is_zero(c):
                clean[m] = c
        self.terms: dict[Monomial, Coef] = clean

    # construction -------------------------------------------------------
    @classmethod
    def const(cls, c) -> "Poly":
        return cls({ONE: c})

    @classmethod
    def var(cls, name: str) -> "Poly":
        intern(name)
        return cls({((name, 1),): Fraction(1)})

    @classmethod
    def from_exponents(cls, data: Mapping[Monomial, Coef] | Iterable[tuple[Mapping[str, int], object]]) -> "Poly":
        items = data.items() if isinstance(data, Mapping) else data
        out: dict[Monomial, Coef] = {}
        for exps, c in items:
            m = exps if isinstance(exps, tuple) else make_monomial(exps)
            out[m] = out.get(m, 0) + _coerce(c)
        return cls(out)

    @classmethod
    def lift(cls, x) -> "Poly":
        if isinstance(x, Poly):
            return x
        return cls.const(x)

    # inspection ---------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def is_numeric(self) -> bool:
        return all(not isinstance(c, LinExpr) for c in self.terms.values())

    @property
    def variables(self) -> list[str]:
        vs = {v for m in self.terms for v, _ in m}
        return sorted(vs, key=_VAR_ORDER.__getitem__)

    def degree(self, v: str | None = None) -> int:
        """Total degree, or degree in ``v``; the zero polynomial has degree -1."""
        if not self.terms:
            return -1
        if v is None:
            return max(mono_degree(m) for m in self.terms)
        return max(mono_exponent(m, v) for m in self.terms)

    def degree_in(self, vs: Iterable[str]) -> int:
        vs = set(vs)
        if not self.terms:
            return -1
        return max(sum(e for x, e in m if x in vs) for m in self.terms)

    def coeff(self, m: Monomial) -> Coef:
        return self.terms.get(m, Fraction(0))

    def constant_term(self) -> Coef:
        return self.coeff(ONE)

    def unknowns(self) -> set[int]:
        out = set()
        for c in self.terms.values():
            if isinstance(c, LinExpr):
                out.update(c.variables())
        return out

    # arithmetic ---------------------------------------------------------
    def __add__(self, other) -> "Poly":
        other = Poly.lift(other)
        if not other.terms:
            return self
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return Poly(out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-Poly.lift(other))

    def __rsub__(self, other) -> "Poly":
        return Poly.lift(other) - self

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            if isinstance(other, LinExpr):
                return Poly({m: c * other for m, c in self.terms.items()})
            c = to_fraction(other)
            if c == 0:
                return Poly()
            return Poly({m: v * c for m, v in self.terms.items()})
        out: dict[Monomial, Coef] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                p = c1 * c2
                out[m] = out[m] + p if m in out else p
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative power")
        out = Poly.const(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (Poly, Number, LinExpr)):
            return (self - Poly.lift(other)).is_zero() if not isinstance(other, LinExpr) else (self - Poly.const(other)).is_zero()
        return NotImplemented

    def __hash__(self):
        return hash(frozenset((m, c if isinstance(c, Fraction) else hash(c)) for m, c in self.terms.items()))

    # calculus -----------------------------------------------------------
    def diff(self, v: str) -> "Poly":
        """Formal partial derivative in ``v``."""
        out: dict[Monomial, Coef] = {}
        for m, c in self.terms.items():
            e = mono_exponent(m, v)
            if e == 0:
                continue
            nm = tuple((x, k - 1) if x == v else (x, k) for x, k in m if not (x == v and k == 1))
            out[nm] = out[nm] + c * e if nm in out else c * e
        return Poly(out)

    def antiderivative(self, v: str) -> "Poly":
        intern(v)
        out: dict[Monomial, Coef] = {}
        for m, c in self.terms.items():
            e = mono_exponent(m, v)
            nm = mono_mul(mono_drop(m, v), ((v, e + 1),))
            out[nm] = c * Fraction(1, e + 1)
        return Poly(out)

    def integrate(self, v: str, a, b) -> "Poly":
        """Definite integral over ``v`` from ``a`` to ``b`` (numbers or polynomials)."""
        F = self.antiderivative(v)
        return F.subs({v: b}) - F.subs({v: a})

    def subs(self, mapping: Mapping[str, object]) -> "Poly":
        """Substitute variables by numbers or polynomials, expanding fully."""
        if not mapping:
            return self
        repl = {v: Poly.lift(p) for v, p in mapping.items()}
        cache: dict[tuple[str, int], Poly] = {}

        def power(v, e):
            key = (v, e)
            if key not in cache:
                cache[key] = repl[v] ** e
            return cache[key]

        out = Poly()
        acc: dict[Monomial, Coef] = {}
        for m, c in self.terms.items():
            keep = tuple(t for t in m if t[0] not in repl)
            factor = None
            for v, e in m:
                if v in repl:
                    p = power(v, e)
                    factor = p if factor is None else factor * p
            if factor is None:
                acc[keep] = acc[keep] + c if keep in acc else c
                continue
            for fm, fc in factor.terms.items():
                nm = mono_mul(keep, fm)
                val = fc * c if isinstance(c, LinExpr) else c * fc
                acc[nm] = acc[nm] + val if nm in acc else val
        out = Poly(acc)
        return out

    def affine_substitute(self, v: str, scale, shift) -> "Poly":
        """Replace ``v`` by ``scale*v + shift``."""
        return self.subs({v: Poly.var(v) * to_fraction(scale) + to_fraction(shift)})

    def evaluate(self, point: Mapping[str, object]):
        """Value at ``point``; every variable must be assigned.

        Returns a Fraction for exact inputs and a float otherwise.
        """
        missing = set(self.variables) - set(point)
        if missing:
            raise KeyError(f"unassigned variables: {sorted(missing)}")
        exact = all(isinstance(x, (int, Fraction, np.integer)) for x in point.values())
        total = Fraction(0) if exact else 0.0
        for m, c in self.terms.items():
            if isinstance(c, LinExpr):
                raise TypeError("cannot evaluate a polynomial with unknown coefficients")
            t = c if exact else float(c)
            for v, e in m:
                x = point[v]
                t = t * (Fraction(x) if exact else float(x)) ** e
            total += t
        return total

    def map_coefficients(self, fn: Callable[[Coef], object]) -> "Poly":
        return Poly({m: fn(c) for m, c in self.terms.items()})

    def resolve(self, x: np.ndarray) -> "Poly":
        """Replace unknown coefficients by their values under the solution ``x`` (floats)."""
        return Poly({m: (to_fraction(c.value(x)) if isinstance(c, LinExpr) else c) for m, c in self.terms.items()})

    def lambdify(self, variables: Sequence[str]) -> Callable[..., np.ndarray]:
        """Vectorised float evaluator ``f(*arrays)`` in the given variable order."""
        idx = {v: i for i, v in enumerate(variables)}
        missing = set(self.variables) - set(idx)
        if missing:
            raise KeyError(f"variables not in signature: {sorted(missing)}")
        terms = [(float(c), [(idx[v], e) for v, e in m]) for m, c in self.terms.items()]

        def f(*args):
            shape = np.broadcast(*args).shape if args else ()
            out = np.zeros(shape)
            for c, m in terms:
                t = np.full(shape, c)
                for i, e in m:
                    t = t * np.asarray(args[i], dtype=float) ** e
                out = out + t
            return out

        return f

    def __repr__(self):
        if not self.terms:
            return "Poly(0)"
        items = sorted(self.terms.items(), key=lambda t: (-mono_degree(t[0]), t[0]))
        return "Poly(" + " + ".join(f"{c}*{mono_str(m)}" for m, c in items) + ")"


def poly_from_coeffs(var: str, coeffs: Sequence) -> Poly:
    """Univariate polynomial ``sum_k coeffs[k] * var**k``."""
    intern(var)
    return Poly({(((var, k),) if k else ONE): c for k, c in enumerate(coeffs)})


# ---------------------------------------------------------------------------
# monomial bases


class MonomialBasis:
    """Ordered monomial vector ``Z_d`` in graded lexicographic order.

    ``caps`` optionally bounds the exponent of individual variables, which
    gives the mixed-degree (tensor) bases used for kernels and Xi cones.
    """

    def __init__(self, variables: Sequence[str], degree: int, caps: Mapping[str, int] | None = None):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        self.variables = tuple(variables)
        for v in self.variables:
            intern(v)
        self.degree = degree
        self.caps = dict(caps or {})
        mons = []
        for total in range(degree + 1):
            level = []
            for exps in _compositions(total, len(self.variables)):
                if any(e > self.caps.get(v, total) for v, e in zip(self.variables, exps)):
                    continue
                level.append(exps)
            level.sort(reverse=True)
            mons.extend(level)
        self.exponents = mons
        self.monomials: list[Monomial] = [make_monomial(dict(zip(self.variables, e))) for e in mons]
        self._index = {m: i for i, m in enumerate(self.monomials)}

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, i):
        return self.monomials[i]

    def index(self, m: Monomial) -> int:
        return self._index[m]

    def polys(self) -> list[Poly]:
        return [Poly({m: Fraction(1)}) for m in self.monomials]

    def evaluate(self, point: Mapping[str, object]) -> list:
        return [Poly({m: Fraction(1)}).evaluate(point) for m in self.monomials]

    def rename(self, mapping: Mapping[str, str]) -> "MonomialBasis":
        vs = [mapping.get(v, v) for v in self.variables]
        caps = {mapping.get(v, v): c for v, c in self.caps.items()}
        return MonomialBasis(vs, self.degree, caps)

    def block(self, n: int) -> "PolyMatrix":
        """``I_n kron Z_d`` as an ``(n*len) x n`` polynomial matrix."""
        z = self.polys()
        k = len(z)
        rows = []
        for i in range(n):
            for j in range(k):
                rows.append([z[j] if c == i else Poly() for c in range(n)])
        return PolyMatrix(rows)

    def __repr__(self):
        return f"MonomialBasis({[mono_str(m) for m in self.monomials]})"


def _compositions(total: int, parts: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def monomial_basis(variables: Sequence[str], d: int, caps: Mapping[str, int] | None = None) -> MonomialBasis:
    return MonomialBasis(variables, d, caps)


def tensor_basis(degrees: Mapping[str, int]) -> MonomialBasis:
    """Basis of monomials with per-variable exponent bounds."""
    return MonomialBasis(list(degrees), sum(degrees.values()), degrees)


# ---------------------------------------------------------------------------
# polynomial matrices


class PolyMatrix:
    """Dense matrix of :class:`Poly` entries."""

    __slots__ = ("rows", "shape")

    def __init__(self, rows: Sequence[Sequence]):
        self.rows = tuple(tuple(Poly.lift(x) for x in r) for r in rows)
        nr = len(self.rows)
        nc = len(self.rows[0]) if nr else 0
        if any(len(r) != nc for r in self.rows):
            raise ValueError("ragged polynomial matrix")
        self.shape = (nr, nc)

    @classmethod
    def zeros(cls, n: int, m: int | None = None) -> "PolyMatrix":
        m = n if m is None else m
        return cls([[Poly() for _ in range(m)] for _ in range(n)])

    @classmethod
    def identity(cls, n: int, scale=1) -> "PolyMatrix":
        return cls([[Poly.const(scale) if i == j else Poly() for j in range(n)] for i in range(n)])

    @classmethod
    def from_array(cls, a) -> "PolyMatrix":
        a = np.asarray(a, dtype=object) if not isinstance(a, PolyMatrix) else a
        if isinstance(a, PolyMatrix):
            return a
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        return cls([[Poly.lift(x) for x in r] for r in a])

    @classmethod
    def block(cls, blocks: Sequence[Sequence]) -> "PolyMatrix":
        """Assemble from a grid of PolyMatrix / numeric arrays; ``None`` means zeros."""
        heights = []
        widths = []
        for bi, brow in enumerate(blocks):
            for bj, b in enumerate(brow):
                if b is None:
                    continue
                b = b if isinstance(b, PolyMatrix) else cls.from_array(b)
                h, w = b.shape
                if len(heights) <= bi:
                    heights.extend([None] * (bi + 1 - len(heights)))
                if len(widths) <= bj:
                    widths.extend([None] * (bj + 1 - len(widths)))
                heights[bi] = h
                widths[bj] = w
        if None in heights or None in widths or len(heights) != len(blocks):
            raise ValueError("cannot infer block sizes")
        rows = []
        for bi, brow in enumerate(blocks):
            for r in range(heights[bi]):
                row = []
                for bj in range(len(widths)):
                    b = brow[bj] if bj < len(brow) else None
                    if b is None:
                        row.extend(Poly() for _ in range(widths[bj]))
                    else:
                        b = b if isinstance(b, PolyMatrix) else cls.from_array(b)
                        row.extend(b.rows[r])
                rows.append(row)
        return cls(rows)

    def __getitem__(self, idx):
        i, j = idx
        if isinstance(i, slice) or isinstance(j, slice):
            ri = range(*i.indices(self.shape[0])) if isinstance(i, slice) else [i]
            rj = range(*j.indices(self.shape[1])) if isinstance(j, slice) else [j]
            return PolyMatrix([[self.rows[a][b] for b in rj] for a in ri])
        return self.rows[i][j]

    @property
    def T(self) -> "PolyMatrix":
        return PolyMatrix(list(zip(*self.rows)) if self.rows else [])

    def map(self, fn: Callable[[Poly], Poly]) -> "PolyMatrix":
        return PolyMatrix([[fn(x) for x in r] for r in self.rows])

    def _binary(self, other, op):
        other = other if isinstance(other, PolyMatrix) else PolyMatrix.from_array(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return PolyMatrix([[op(a, b) for a, b in zip(r1, r2)] for r1, r2 in zip(self.rows, other.rows)])

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return PolyMatrix.from_array(other) - self

    def __neg__(self):
        return self.map(lambda p: -p)

    def __mul__(self, scalar):
        if isinstance(scalar, (PolyMatrix, np.ndarray)):
            raise TypeError("use @ for matrix products")
        s = scalar if isinstance(scalar, (Poly, LinExpr)) else to_fraction(scalar)
        return self.map(lambda p: p * s)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = other if isinstance(other, PolyMatrix) else PolyMatrix.from_array(other)
        n, k = self.shape
        k2, m = other.shape
        if k != k2:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        out = []
        for i in range(n):
            row = []
            for j in range(m):
                acc = Poly()
                for t in range(k):
                    a = self.rows[i][t]
                    b = other.rows[t][j]
                    if a.terms and b.terms:
                        acc = acc + a * b
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def __rmatmul__(self, other):
        return PolyMatrix.from_array(other) @ self

    def diff(self, v: str) -> "PolyMatrix":
        return self.map(lambda p: p.diff(v))

    def integrate(self, v: str, a, b) -> "PolyMatrix":
        return self.map(lambda p: p.integrate(v, a, b))

    def subs(self, mapping) -> "PolyMatrix":
        return self.map(lambda p: p.subs(mapping))

    def affine_substitute(self, v, scale, shift) -> "PolyMatrix":
        return self.map(lambda p: p.affine_substitute(v, scale, shift))

    def resolve(self, x) -> "PolyMatrix":
        return self.map(lambda p: p.resolve(x))

    def evaluate(self, point) -> np.ndarray:
        return np.array([[float(p.evaluate(point)) for p in r] for r in self.rows], dtype=float).reshape(self.shape)

    def is_symmetric(self) -> bool:
        n, m = self.shape
        if n != m:
            return False
        return all(self.rows[i][j] == self.rows[j][i] for i in range(n) for j in range(i + 1, n))

    def symmetrize(self) -> "PolyMatrix":
        return (self + self.T) * Fraction(1, 2)

    def degree(self, v: str | None = None) -> int:
        return max((p.degree(v) for r in self.rows for p in r), default=-1)

    def degree_in(self, vs) -> int:
        return max((p.degree_in(vs) for r in self.rows for p in r), default=-1)

    @property
    def variables(self) -> list[str]:
        vs = set()
        for r in self.rows:
            for p in r:
                vs.update(p.variables)
        return sorted(vs, key=_VAR_ORDER.__getitem__)

    def entries(self):
        for i, r in enumerate(self.rows):
            for j, p in enumerate(r):
                yield i, j, p

    def __eq__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self.shape == other.shape and all(a == b for r1, r2 in zip(self.rows, other.rows) for a, b in zip(r1, r2))

    __hash__ = None

    def __repr__(self):
        return f"PolyMatrix{self.shape}"


class PiecewisePolyMatrix:
    """Polynomial matrices on the consecutive intervals ``[-tau_i, -tau_{i-1}]``."""

    def __init__(self, breakpoints: Sequence, pieces: Sequence[PolyMatrix], var: str = "theta"):
        bps = [to_fraction(b) for b in breakpoints]
        if len(bps) != len(pieces) + 1:
            raise ValueError("need one more breakpoint than pieces")
        if any(b1 >= b2 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if bps[-1] != 0:
            raise ValueError("last breakpoint must be 0")
        self.breakpoints = bps
        self.pieces = list(pieces)
        self.var = var

    def piece_index(self, theta: float) -> int:
        # piece i covers [bp[K-1-i], bp[K-i]] counting from 0 backwards
        for k in range(len(self.pieces)):
            lo, hi = self.breakpoints[k], self.breakpoints[k + 1]
            if lo <= theta <= hi:
                return k
        raise ValueError(f"{theta} outside [{self.breakpoints[0]}, 0]")

    def evaluate(self, theta: float) -> np.ndarray:
        return self.pieces[self.piece_index(theta)].evaluate({self.var: theta})


def matrix_values(a) -> np.ndarray:
    return np.asarray(a, dtype=float)


def poly_vector(polys: Iterable[Poly]) -> PolyMatrix:
    return PolyMatrix([[p] for p in polys])


def kron_basis(left: MonomialBasis, right: MonomialBasis) -> list[Monomial]:
    """Products ``l*r`` in the order of ``kron(left, right)``."""
    return [mono_mul(a, b) for a, b in itertools.product(left.monomials, right.monomials)]
