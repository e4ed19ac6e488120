"""SDP container: PSD blocks, free scalars, affine equalities, linear objective.

Every scalar unknown has an integer id. A block of size ``k`` owns the ids of
its upper triangle; free scalars own one id each. Constraints are sparse
rows ``sum_i a_i v_i = rhs`` with exact rational coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from ..polynomial import LinExpr, to_fraction


@dataclass(frozen=True)
class BlockHandle:
    index: int
    size: int
    offset: int  # id of entry (0, 0)
    name: str = ""

    def entry(self, i: int, j: int) -> int:
        """Variable id of entry ``(i, j)``; ``(j, i)`` maps to the same id."""
        if i > j:
            i, j = j, i
        if not (0 <= i and j < self.size):
            raise IndexError(f"entry ({i}, {j}) outside block of size {self.size}")
        # row-major upper triangle
        return self.offset + i * self.size - i * (i - 1) // 2 + (j - i)

    def expr(self, i: int, j: int) -> LinExpr:
        return LinExpr.var(self.entry(i, j))

    def ids(self) -> range:
        return range(self.offset, self.offset + self.size * (self.size + 1) // 2)

    def triu_indices(self):
        return np.triu_indices(self.size)


@dataclass
class Constraint:
    coeffs: dict[int, Fraction]
    rhs: Fraction


@dataclass
class SdpProblem:
    """Maximize ``objective . v`` subject to equalities, blocks PSD."""

    blocks: list[BlockHandle] = field(default_factory=list)
    free: list[int] = field(default_factory=list)
    free_names: list[str] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, Fraction] = field(default_factory=dict)
    n_vars: int = 0
    # id -> ("block", block index) or ("free", position)
    owner: list[tuple[str, int]] = field(default_factory=list)

    # declarations ---------------------------------------------------------
    def add_block(self, size: int, name: str = "") -> BlockHandle:
        if size < 1:
            raise ValueError("block size must be >= 1")
        h = BlockHandle(len(self.blocks), size, self.n_vars, name)
        count = size * (size + 1) // 2
        self.blocks.append(h)
        self.owner.extend([("block", h.index)] * count)
        self.n_vars += count
        return h

    def add_free(self, name: str = "") -> int:
        vid = self.n_vars
        self.n_vars += 1
        self.owner.append(("free", len(self.free)))
        self.free.append(vid)
        self.free_names.append(name)
        return vid

    def free_expr(self, name: str = "") -> LinExpr:
        return LinExpr.var(self.add_free(name))

    def declare(self, size: int | None = None, name: str = ""):
        """Declare a PSD block of ``size`` or, with ``size=None``, a free scalar."""
        return self.add_free(name) if size is None else self.add_block(size, name)

    # constraints ----------------------------------------------------------
    def add_equality(self, lincomb: LinExpr | Mapping[int, object], rhs=0) -> int | None:
        """Record ``lincomb = rhs``; returns the constraint id.

        A LinExpr's constant part is moved to the right-hand side. A row with no
        variables is checked for consistency and dropped (returns None) when it
        reads ``0 = 0``.
        """
        if isinstance(lincomb, LinExpr):
            coeffs = {k: v for k, v in lincomb.terms.items() if k != LinExpr.CONST}
            rhs = to_fraction(rhs) - lincomb.constant
        else:
            coeffs = {}
            for k, v in lincomb.items():
                v = to_fraction(v)
                coeffs[k] = coeffs.get(k, 0) + v
            coeffs = {k: v for k, v in coeffs.items() if v != 0}
            rhs = to_fraction(rhs)
        for k in coeffs:
            if not (0 <= k < self.n_vars):
                raise KeyError(f"constraint references undeclared variable {k}")
        if not coeffs:
            if rhs == 0:
                return None
            # keep the inconsistent row so the solver reports infeasibility
        self.constraints.append(Constraint(coeffs, rhs))
        return len(self.constraints) - 1

    def set_objective(self, expr: LinExpr | Mapping[int, object]):
        """Linear objective to maximize (constant parts are ignored)."""
        items = expr.terms.items() if isinstance(expr, LinExpr) else expr.items()
        obj = {}
        for k, v in items:
            if k == LinExpr.CONST:
                continue
            if not (0 <= k < self.n_vars):
                raise KeyError(f"objective references undeclared variable {k}")
            obj[k] = to_fraction(v)
        self.objective = {k: v for k, v in obj.items() if v != 0}

    # helpers ----------------------------------------------------------------
    def gram(self, h: BlockHandle) -> list[list[LinExpr]]:
        return [[h.expr(i, j) for j in range(h.size)] for i in range(h.size)]

    def equality_matrix(self):
        """Dense float ``(A, b)`` of the equality constraints."""
        A = np.zeros((len(self.constraints), self.n_vars))
        b = np.zeros(len(self.constraints))
        for r, c in enumerate(self.constraints):
            for k, v in c.coeffs.items():
                A[r, k] = float(v)
            b[r] = float(c.rhs)
        return A, b

    def objective_vector(self) -> np.ndarray:
        g = np.zeros(self.n_vars)
        for k, v in self.objective.items():
            g[k] = float(v)
        return g

    def summary(self) -> dict:
        return {
            "blocks": [h.size for h in self.blocks],
            "free": len(self.free),
            "constraints": len(self.constraints),
            "variables": self.n_vars,
        }
