"""Dense primal-dual interior-point solver with Nesterov-Todd scaling.

The equality constraints ``A v = b`` are eliminated first (``v = v0 + N y``),
leaving a linear matrix inequality in ``y``::

    maximize  b'y   subject to   Z(y) = C - sum_j y_j A_j  >= 0   (blockwise)

paired with the primal ``min <C, X>  s.t.  <A_j, X> = b_j,  X >= 0``.
Blocks whose diagonal entry is identically zero are shrunk beforehand
(a one-step facial reduction, repeated to a fixed point). Pure feasibility
problems go through a phase-1 program ``max t  s.t.  Z(y) >= t I,  t <= 1``
whose dual solution is an infeasibility certificate when ``t* < 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from ..polynomial import LinExpr
from .problem import SdpProblem

log = logging.getLogger(__name__)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible-certificate"
FAILURE = "numerical-failure"

_SQ2 = math.sqrt(2.0)


@dataclass
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 200
    step: float = 0.98
    eig_tol: float = 1e-8
    eq_tol: float = 1e-7
    verbose: bool = False


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray | None
    blocks: list[np.ndarray]
    objective: float = float("nan")
    eq_residual: float = float("nan")
    gap: float = float("nan")
    dual_residual: float = float("nan")
    min_eigs: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    certificate: dict | None = None
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def value(self, expr) -> float:
        if self.x is None:
            raise ValueError(f"no primal point (status {self.status})")
        if isinstance(expr, LinExpr):
            return expr.value(self.x)
        return float(self.x[int(expr)])

    def free_values(self, problem: SdpProblem) -> np.ndarray:
        return self.x[problem.free] if self.x is not None else np.array([])


# ---------------------------------------------------------------------------
# svec helpers (upper triangle, row-major, sqrt(2) on off-diagonals)


def _svec_scale(k: int) -> np.ndarray:
    iu = np.triu_indices(k)
    return np.where(iu[0] == iu[1], 1.0, _SQ2)


def svec(X: np.ndarray) -> np.ndarray:
    k = X.shape[-1]
    iu = np.triu_indices(k)
    return X[..., iu[0], iu[1]] * _svec_scale(k)


def smat(v: np.ndarray, k: int) -> np.ndarray:
    iu = np.triu_indices(k)
    out = np.zeros(v.shape[:-1] + (k, k))
    vals = v / _svec_scale(k)
    out[..., iu[0], iu[1]] = vals
    out[..., iu[1], iu[0]] = vals
    return out


def _upper_to_full(vals: np.ndarray, k: int) -> np.ndarray:
    """Symmetric matrices from raw upper-triangle entries (last axis)."""
    iu = np.triu_indices(k)
    out = np.zeros(vals.shape[:-1] + (k, k))
    out[..., iu[0], iu[1]] = vals
    out[..., iu[1], iu[0]] = vals
    return out


def _sym(X):
    return 0.5 * (X + X.T)


# ---------------------------------------------------------------------------
# elimination


def _nullspace_qr(A: np.ndarray, b: np.ndarray, rtol: float = 1e-10):
    """Return (v0, N, residual) with A v0 ~ b and orthonormal N spanning ker A."""
    m, n = A.shape
    if m == 0:
        return np.zeros(n), np.eye(n), 0.0
    Q, R, piv = sla.qr(A.T, mode="full", pivoting=True)
    diag = np.abs(np.diag(R))
    r = int(np.sum(diag > rtol * max(diag[0], 1.0))) if diag.size else 0
    N = Q[:, r:]
    if r == 0:
        v0 = np.zeros(n)
    else:
        z = sla.solve_triangular(R[:r, :r].T, b[piv[:r]], lower=True)
        v0 = Q[:, :r] @ z
    res = float(np.max(np.abs(A @ v0 - b))) if m else 0.0
    return v0, N, res


def _row_normalize(A: np.ndarray, b: np.ndarray):
    s = np.max(np.abs(A), axis=1)
    s[s == 0] = 1.0
    return A / s[:, None], b / s


class _Reduced:
    """Problem data after elimination and facial reduction."""

    def __init__(self, problem: SdpProblem, v0: np.ndarray, N: np.ndarray):
        self.problem = problem
        self.v0 = v0
        self.N = N
        self.active = [list(range(h.size)) for h in problem.blocks]
        self.reduced_rows = 0

    def facial_reduction(self, tz: float = 1e-10) -> bool:
        """Drop identically-zero diagonal entries; returns False if inconsistent."""
        pb = self.problem
        forced: dict = {}
        while True:
            rows, rhs = [], []
            for h, act in zip(pb.blocks, self.active):
                drop = []
                for i in act:
                    vid = h.entry(i, i)
                    if abs(self.v0[vid]) < tz and (self.N.shape[1] == 0 or np.max(np.abs(self.N[vid])) < tz):
                        drop.append(i)
                for i in forced.get(h.index, ()):
                    if i in act and i not in drop:
                        drop.append(i)
                        rows.append(self.N[h.entry(i, i)])
                        rhs.append(-self.v0[h.entry(i, i)])
                for i in drop:
                    for j in act:
                        if j == i:
                            continue
                        vid = h.entry(i, j)
                        rows.append(self.N[vid])
                        rhs.append(-self.v0[vid])
                for i in drop:
                    act.remove(i)
                    self.reduced_rows += 1
            forced = {}
            if not rows:
                forced = self._diagonal_face(tz)
                if not forced:
                    return True
                continue
            E = np.array(rows)
            r = np.array(rhs)
            if E.shape[1] == 0:
                if np.max(np.abs(r)) > tz:
                    return False
                continue
            y0, N2, res = _nullspace_qr(E, r)
            if res > 1e-9 * (1 + np.max(np.abs(r))):
                return False
            self.v0 = self.v0 + self.N @ y0
            self.N = self.N @ N2

    def _diagonal_face(self, tz: float) -> dict:
        """Diagonal entries in the support of a nonnegative combination that vanishes identically.

        Each diagonal entry is nonnegative on the feasible set, so every entry
        carrying positive weight in such a combination is zero there.
        """
        p = self.N.shape[1]
        if p == 0:
            return {}
        labels, vids = [], []
        for h, act in zip(self.problem.blocks, self.active):
            for i in act:
                labels.append((h.index, i))
                vids.append(h.entry(i, i))
        if not vids:
            return {}
        D = self.N[vids]
        c = self.v0[vids]
        scale = np.maximum(np.max(np.abs(D), axis=1), np.abs(c))
        scale[scale == 0] = 1.0
        D, c = D / scale[:, None], c / scale
        Aeq = np.vstack([D.T, c[None, :], np.ones((1, len(c)))])
        beq = np.zeros(Aeq.shape[0])
        beq[-1] = 1.0
        res = linprog(np.zeros(len(c)), A_eq=Aeq, b_eq=beq, bounds=(0, None), method="highs")
        if res.status != 0:
            return {}
        # the LP solution is only accurate to its own tolerances; confirm the
        # support with a left null vector of the supported rows
        supp = np.nonzero(res.x > 1e-9)[0]
        U, sv, _ = np.linalg.svd(np.hstack([D[supp], c[supp, None]]), full_matrices=True)
        u = U[:, -1]
        smin = sv[-1] if len(sv) == len(supp) else 0.0
        u = u if u.sum() > 0 else -u
        if smin > tz or np.min(u) <= 0:
            return {}
        out: dict = {}
        for k in supp:
            b, i = labels[k]
            out.setdefault(b, []).append(i)
        return out

    def block_data(self):
        """C blocks and A_j stacks (p, k, k) on the active sub-blocks, in LMI form."""
        C, A, owners = [], [], []
        p = self.N.shape[1]
        for h, act in zip(self.problem.blocks, self.active):
            if not act:
                continue
            k = len(act)
            ids = np.array([[h.entry(i, j) for j in act] for i in act])
            C.append(self.v0[ids])
            # Z(y) = C + sum_j y_j F_j with F_j = mat(N[ids, j]); A_j = -F_j
            A.append(-np.transpose(self.N[ids], (2, 0, 1)) if p else np.zeros((0, k, k)))
            owners.append(h.index)
        return C, A, owners


# ---------------------------------------------------------------------------
# interior point core


@dataclass
class _IpmResult:
    y: np.ndarray
    X: list[np.ndarray]
    Z: list[np.ndarray]
    pobj: float
    dobj: float
    relgap: float
    pinf: float
    dinf: float
    iterations: int
    converged: bool
    message: str


def _max_step(lam: np.ndarray, D: np.ndarray) -> float:
    """Largest a <= inf with diag(lam) + a D >= 0."""
    s = 1.0 / np.sqrt(lam)
    E = D * s[:, None] * s[None, :]
    mn = np.linalg.eigvalsh(_sym(E))[0]
    return math.inf if mn >= 0 else -1.0 / mn


def ipm(C: list[np.ndarray], A: list[np.ndarray], b: np.ndarray, opts: SolverOptions) -> _IpmResult:
    """Solve ``max b'y s.t. C - sum y_j A_j >= 0`` (A blocks shaped (p, k, k))."""
    p = b.size
    sizes = [c.shape[0] for c in C]
    ntot = sum(sizes)
    Asv = [svec(Ab) if p else np.zeros((0, k * (k + 1) // 2)) for Ab, k in zip(A, sizes)]

    def Aop(Xs):
        out = np.zeros(p)
        for As, X in zip(Asv, Xs):
            out += As @ svec(X)
        return out

    def Aadj(y):
        return [smat(As.T @ y, k) for As, k in zip(Asv, sizes)]

    normb = float(np.linalg.norm(b))
    normC = math.sqrt(sum(float(np.sum(c * c)) for c in C))
    X, Z = [], []
    for c, As, k in zip(C, Asv, sizes):
        normA = np.linalg.norm(As, axis=1) if p else np.zeros(0)
        xi = max(10.0, math.sqrt(k), k * float(np.max((1 + np.abs(b)) / (1 + normA))) if p else 10.0)
        eta = max(10.0, math.sqrt(k), float(np.max(normA)) if p else 0.0, float(np.linalg.norm(c)))
        X.append(xi * np.eye(k))
        Z.append(eta * np.eye(k))
    y = np.zeros(p)

    best = None
    stall = 0
    msg = "max iterations"
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        ATy = Aadj(y)
        Rd = [c - z - a for c, z, a in zip(C, Z, ATy)]
        rp = b - Aop(X)
        pobj = sum(float(np.sum(c * x)) for c, x in zip(C, X))
        dobj = float(b @ y)
        mu = sum(float(np.sum(x * z)) for x, z in zip(X, Z)) / ntot
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / (1 + normb)
        dinf = math.sqrt(sum(float(np.sum(r * r)) for r in Rd)) / (1 + normC)
        merit = max(relgap, pinf, dinf)
        if best is None or merit < best[0]:
            best = (merit, y.copy(), [x.copy() for x in X], [z.copy() for z in Z], pobj, dobj, relgap, pinf, dinf)
        if opts.verbose:
            log.info("it %3d pobj %+.9e dobj %+.9e gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, relgap, pinf, dinf)
        if relgap < opts.tol and pinf < opts.tol and dinf < opts.tol:
            converged = True
            msg = "converged"
            break
        if np.max(np.abs(y), initial=0) > 1e13 or max(np.max(np.abs(x)) for x in X) > 1e13:
            msg = "diverging iterates"
            break

        # NT scaling point per block
        Gs, Gis, lams = [], [], []
        M = np.zeros((p, p))
        try:
            for Xb, Zb, Ab in zip(X, Z, A):
                L = np.linalg.cholesky(Xb)
                R = np.linalg.cholesky(Zb)
                U, s, Vt = np.linalg.svd(R.T @ L)
                G = (L @ Vt.T) / np.sqrt(s)[None, :]
                Gi = (np.sqrt(s)[:, None] * Vt) @ sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
                Gs.append(G)
                Gis.append(Gi)
                lams.append(s)
                if p:
                    At = svec(np.matmul(np.matmul(G.T, Ab), G))
                    M += At @ At.T
        except np.linalg.LinAlgError:
            msg = "lost positive definiteness"
            break
        M = _sym(M)
        try:
            fac = sla.cho_factor(M + 1e-15 * np.trace(M) / max(p, 1) * np.eye(p)) if p else None
            solveM = (lambda r: sla.cho_solve(fac, r)) if p else (lambda r: r)
        except (np.linalg.LinAlgError, ValueError):
            Mp = np.linalg.pinv(M, rcond=1e-14)
            solveM = lambda r: Mp @ r  # noqa: E731

        WRdW = [G @ (G.T @ r @ G) @ G.T for G, r in zip(Gs, Rd)]

        def direction(Rc):
            rhs = rp - Aop([rc - w for rc, w in zip(Rc, WRdW)])
            dy = solveM(rhs) if p else np.zeros(0)
            for _ in range(3 if p else 0):
                # iterative refinement against the unshifted Schur complement
                dy = dy + solveM(rhs - M @ dy)
            ATdy = Aadj(dy)
            dZ = [_sym(r - a) for r, a in zip(Rd, ATdy)]
            dX = [_sym(rc - G @ (G.T @ dz @ G) @ G.T) for rc, G, dz in zip(Rc, Gs, dZ)]
            return dX, dy, dZ

        def scaled(dX, dZ):
            dXt = [Gi @ d @ Gi.T for Gi, d in zip(Gis, dX)]
            dZt = [G.T @ d @ G for G, d in zip(Gs, dZ)]
            return dXt, dZt

        def steps(dXt, dZt):
            ap = min(_max_step(l, d) for l, d in zip(lams, dXt))
            ad = min(_max_step(l, d) for l, d in zip(lams, dZt))
            return ap, ad

        # predictor
        dX, dy, dZ = direction([-x for x in X])
        dXt, dZt = scaled(dX, dZ)
        ap, ad = steps(dXt, dZt)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(float(np.sum((x + ap * dx) * (z + ad * dz))) for x, dx, z, dz in zip(X, dX, Z, dZ)) / ntot
        sigma = min(1.0, max(0.0, mu_aff / mu) ** 3) if mu > 0 else 0.0

        # corrector
        Rc = []
        for G, lam, a, c in zip(Gs, lams, dXt, dZt):
            H = -np.diag(lam * lam) + sigma * mu * np.eye(lam.size) - 0.5 * (a @ c + c @ a)
            Rt = 2.0 * H / (lam[:, None] + lam[None, :])
            Rc.append(G @ Rt @ G.T)
        dX, dy, dZ = direction(Rc)
        dXt, dZt = scaled(dX, dZ)
        ap, ad = steps(dXt, dZt)
        gamma = max(opts.step, 0.9 + 0.09 * min(ap, ad, 1.0))
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        X = [x + ap * d for x, d in zip(X, dX)]
        y = y + ad * dy
        Z = [z + ad * d for z, d in zip(Z, dZ)]
        if ap < 1e-9 and ad < 1e-9:
            stall += 1
            if stall >= 3:
                msg = "stalled"
                break
        else:
            stall = 0

    if converged:
        ATy = Aadj(y)
        Rd = [c - z - a for c, z, a in zip(C, Z, ATy)]
        return _IpmResult(y, X, Z, pobj, dobj, relgap, pinf, dinf, it, True, msg)
    _, y, X, Z, pobj, dobj, relgap, pinf, dinf = best
    return _IpmResult(y, X, Z, pobj, dobj, relgap, pinf, dinf, it, False, msg)


# ---------------------------------------------------------------------------
# driver


def _orthonormal_directions(A: list[np.ndarray], p: int):
    """Basis T of directions that move some block, scaled so A T has orthonormal svec columns."""
    if p == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    F = np.zeros((p, p))
    for Ab in A:
        S = svec(Ab)
        F += S @ S.T
    w, V = np.linalg.eigh(_sym(F))
    keep = w > 1e-12 * max(w[-1], 1e-300)
    T = V[:, keep] / np.sqrt(w[keep])[None, :]
    return T, V[:, ~keep]


def _reconstruct(problem: SdpProblem, v: np.ndarray):
    blocks = []
    for h in problem.blocks:
        ids = list(h.ids())
        blocks.append(_upper_to_full(v[ids], h.size))
    return blocks


def _finish(problem, v, status, it, opts, **kw) -> SdpSolution:
    blocks = _reconstruct(problem, v)
    min_eigs = [float(np.linalg.eigvalsh(B)[0]) for B in blocks]
    A, b = problem.equality_matrix()
    eqres = float(np.max(np.abs(A @ v - b))) if len(b) else 0.0
    if status == FEASIBLE:
        ok_eq = eqres <= opts.eq_tol * (1 + (np.max(np.abs(b)) if len(b) else 0.0))
        ok_eig = all(m >= -opts.eig_tol * (1 + np.linalg.norm(B, 2)) for m, B in zip(min_eigs, blocks))
        if not (ok_eq and ok_eig):
            status = FAILURE
            kw["message"] = (kw.get("message", "") + "; point violates tolerances").lstrip("; ")
    g = problem.objective_vector()
    return SdpSolution(status=status, x=v, blocks=blocks, objective=float(g @ v), eq_residual=eqres,
                       min_eigs=min_eigs, iterations=it, **kw)


def _phase1(C, A, opts, floor=None):
    """max t  s.t.  C - sum y_j A_j - t I >= 0,  1 - t >= 0.

    With ``floor = (b, f)`` the objective bound ``b'y - f >= t`` is added.
    """
    p = A[0].shape[0] if A else 0
    if floor is not None:
        fb, f = floor
        C = list(C) + [np.full((1, 1), -float(f))]
        A = list(A) + [-np.asarray(fb, dtype=float).reshape(p, 1, 1)]
    C1 = [c for c in C] + [np.ones((1, 1))]
    A1 = []
    for c, Ab in zip(C, A):
        k = c.shape[0]
        A1.append(np.concatenate([Ab, np.eye(k)[None]], axis=0))
    A1.append(np.concatenate([np.zeros((p, 1, 1)), np.ones((1, 1, 1))], axis=0))
    b1 = np.zeros(p + 1)
    b1[-1] = 1.0
    return _lmi(C1, A1, b1, opts)


def _primal_route(C, A, b, opts) -> _IpmResult:
    """Same problem posed with the slice ``{Z : P'(svec Z - svec C) = 0}`` as equality constraints.

    Used when there are more free directions than constraints: the Schur
    complement then has the (smaller) size of the orthogonal complement.
    Requires the columns of the direction map to be orthonormal.
    """
    sizes = [c.shape[0] for c in C]
    F = -np.concatenate([svec(Ab) for Ab in A], axis=1).T
    csv = np.concatenate([svec(c) for c in C])
    p = F.shape[1]
    Q, _ = np.linalg.qr(F, mode="complete")
    P = Q[:, p:]
    G = F @ b
    C2, A2, off = [], [], 0
    for k in sizes:
        nk = k * (k + 1) // 2
        C2.append(-smat(G[off:off + nk], k))
        A2.append(smat(P[off:off + nk].T, k))
        off += nk
    r = ipm(C2, A2, P.T @ csv, opts)
    zsv = np.concatenate([svec(X) for X in r.X])
    y = F.T @ (zsv - csv)
    return _IpmResult(y, r.Z, r.X, -r.dobj, -r.pobj, r.relgap, r.dinf, r.pinf, r.iterations, r.converged,
                      r.message)


def _lmi(C, A, b, opts) -> _IpmResult:
    """``max b'y s.t. C - sum y_j A_j >= 0`` through whichever Schur complement is smaller."""
    p = b.size
    nsvec = sum(c.shape[0] * (c.shape[0] + 1) // 2 for c in C)
    if 2 * p <= nsvec:
        return ipm(C, A, b, opts)
    T, null_dirs = _orthonormal_directions(A, p)
    if null_dirs.size:
        return ipm(C, A, b, opts)
    At = [np.tensordot(T.T, Ab, axes=(1, 0)) for Ab in A]
    r = _primal_route(C, At, T.T @ b, opts)
    r.y = T @ r.y
    return r


def solve(problem: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve ``problem``; see the module docstring for the method."""
    opts = opts or SolverOptions()
    if not problem.blocks and not problem.free:
        raise ValueError("empty problem")
    A, b = problem.equality_matrix()
    g = problem.objective_vector()
    if len(b):
        An, bn = _row_normalize(A, b)
    else:
        An, bn = A, b
    v0, N, res = _nullspace_qr(An, bn)
    if res > 1e-9 * (1 + (np.max(np.abs(bn)) if len(bn) else 0)):
        w = b - A @ np.linalg.lstsq(A, b, rcond=None)[0]
        cert = {"kind": "inconsistent-equalities", "w": w, "wTb": float(w @ b),
                "max_abs_wTA": float(np.max(np.abs(w @ A)))}
        return SdpSolution(INFEASIBLE, None, [], certificate=cert, message="equalities inconsistent")

    red = _Reduced(problem, v0, N)
    if not red.facial_reduction():
        return SdpSolution(INFEASIBLE, None, [], certificate={"kind": "zero-diagonal"},
                           message="a zero diagonal entry forces a nonzero off-diagonal entry")
    C, Ablocks, owners = red.block_data()
    p = red.N.shape[1]
    T, null_dirs = _orthonormal_directions(Ablocks, p)
    gN = red.N.T @ g
    if null_dirs.size and np.max(np.abs(gN @ null_dirs)) > 1e-9 * (1 + np.linalg.norm(g)):
        return _finish(problem, red.v0, FAILURE, 0, opts, message="objective unbounded along a block-free direction")
    Ared = [np.tensordot(T.T, Ab, axes=(1, 0)) for Ab in Ablocks] if p else Ablocks
    bred = T.T @ gN if p else np.zeros(0)
    if not C:
        # only free variables, all determined
        return _finish(problem, red.v0, FEASIBLE, 0, opts, converged=True, message="no PSD blocks left")

    def point(yr):
        return red.v0 + red.N @ (T @ yr) if p else red.v0.copy()

    has_objective = bred.size and np.max(np.abs(bred)) > 0
    if has_objective:
        r = _lmi(C, Ared, bred, opts)
        sol = _finish(problem, point(r.y), FEASIBLE, r.iterations, opts, gap=r.relgap,
                      dual_residual=r.dinf, converged=r.converged, message=r.message)
        if sol.status == FEASIBLE:
            return sol
        # degenerate optimal face: back off the objective and recentre
        f_est = float(bred @ r.y)
        delta = max(r.relgap, 1e-7) * (1 + abs(r.pobj) + abs(r.dobj))
        for _ in range(3):
            delta *= 10
            rb = _phase1(C, Ared, opts, floor=(bred, f_est - delta))
            if rb.y[-1] > 0:
                back = _finish(problem, point(rb.y[:-1]), FEASIBLE, r.iterations + rb.iterations, opts,
                               gap=r.relgap, dual_residual=rb.dinf, converged=rb.converged,
                               message=f"{r.message}; objective backed off by {delta:.2e}")
                if back.status == FEASIBLE:
                    return back
    r1 = _phase1(C, Ared, opts)
    t = float(r1.y[-1])
    normC = 1 + math.sqrt(sum(float(np.sum(c * c)) for c in C))
    thr = max(1e-7, 10 * r1.relgap) * normC
    if t >= -thr:
        y = r1.y[:-1]
        if has_objective:
            return _finish(problem, point(y), FAILURE, r1.iterations, opts, gap=r1.relgap,
                           message="objective solve failed; phase 1 finds the constraints feasible")
        return _finish(problem, point(y), FEASIBLE, r1.iterations, opts, gap=r1.relgap,
                       dual_residual=r1.dinf, converged=r1.converged, message=f"phase 1 t*={t:.3e}")
    if r1.pinf > 1e-6 or not math.isfinite(t):
        return _finish(problem, point(r1.y[:-1]), FAILURE, r1.iterations, opts,
                       message=f"phase 1 inconclusive (t*={t:.3e}, {r1.message})")
    # dual certificate: X >= 0, <A_j, X> = 0, <C, X> < 0
    Xc = r1.X[:-1]
    AX = np.array([sum(float(np.sum(Ab[j] * X)) for Ab, X in zip(Ared, Xc)) for j in range(len(bred))])
    CX = sum(float(np.sum(c * X)) for c, X in zip(C, Xc))
    full = []
    i = 0
    for h, act in zip(problem.blocks, red.active):
        Xf = np.zeros((h.size, h.size))
        if act:
            Xf[np.ix_(act, act)] = Xc[i]
            i += 1
        full.append(Xf)
    cert = {"kind": "dual-ray", "blocks": full, "CX": CX,
            "max_abs_AX": float(np.max(np.abs(AX))) if AX.size else 0.0,
            "min_eig_X": min(float(np.linalg.eigvalsh(X)[0]) for X in Xc), "t": t}
    return SdpSolution(INFEASIBLE, None, [], objective=t, iterations=r1.iterations, gap=r1.relgap,
                       certificate=cert, converged=r1.converged, message=f"phase 1 t*={t:.3e}")
