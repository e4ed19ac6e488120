"""Method-of-steps integration of delay equations and functional evaluation along solutions.

Classical RK4 on a uniform grid. Delayed arguments come from the initial
history (for negative times) or from a cubic Hermite interpolant built from
the stored states and their derivatives, so lookups never extrapolate as long
as ``h`` does not exceed the smallest delay.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .polynomial import Poly, to_fraction
from .stability.systems import SystemSpec, delayed_name

BLOWUP = 1e8


# ---------------------------------------------------------------------------
# histories


def as_history(history, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised ``theta -> x(theta)`` of shape ``(len(theta), n)``.

    Accepts a callable, a list of polynomials in ``theta``, or a constant
    (scalar or length-``n`` vector).
    """
    if callable(history) and not isinstance(history, Poly):
        def f(th):
            th = np.atleast_1d(np.asarray(th, dtype=float))
            out = np.asarray(history(th), dtype=float)
            return out.reshape(len(th), n)
        return f
    if isinstance(history, Poly):
        history = [history]
    if isinstance(history, (list, tuple)) and history and isinstance(history[0], Poly):
        if len(history) != n:
            raise ValueError("history needs one polynomial per state")
        fns = [p.lambdify(["theta"]) for p in history]

        def f(th):
            th = np.atleast_1d(np.asarray(th, dtype=float))
            return np.stack([fn(th) for fn in fns], axis=1)
        return f
    c = np.broadcast_to(np.asarray(history, dtype=float), (n,)).copy()
    return lambda th: np.tile(c, (len(np.atleast_1d(th)), 1))


def random_history(rng: np.random.Generator, n: int, tau: float, degree: int = 3, amplitude: float = 1.0):
    """Random polynomial history on ``[-tau, 0]`` with sup-norm about ``amplitude``."""
    C = rng.standard_normal((degree + 1, n))
    grid = np.linspace(-1, 0, 64)
    V = np.vander(grid, degree + 1, increasing=True) @ C
    C *= amplitude / max(np.max(np.abs(V)), 1e-12)

    def f(th):
        s = np.atleast_1d(np.asarray(th, dtype=float)) / tau
        return np.vander(s, degree + 1, increasing=True) @ C
    return f


# ---------------------------------------------------------------------------
# right-hand sides


def _resolve_params(spec: SystemSpec, point: Mapping | None):
    point = dict(point or {})
    for k, (lo, hi) in spec.parameters.items():
        point.setdefault(k, (lo + hi) / 2)
    return point


def _rhs(spec: SystemSpec, point: Mapping | None):
    """Returns ``(delays, f, extra)`` with ``f(x0, delayed_list, moments)``."""
    point = _resolve_params(spec, point)
    pvals = {k: to_fraction(v) for k, v in point.items()}
    delays = [float(t) for t in spec.delays]
    if "tau" in spec.parameters and spec.kind.startswith("linear"):
        tau = float(point["tau"])
        delays = [t / delays[-1] * tau for t in delays]
    if spec.kind in ("nonlinear-delay", "ode"):
        K = spec.K if spec.kind == "nonlinear-delay" else 0
        names = [delayed_name(st, k) for k in range(K + 1) for st in spec.states]
        polys = [p.subs(pvals) if pvals else p for p in spec.rhs]
        fns = [p.lambdify(names) for p in polys]

        def f(x0, xd, m):
            args = list(x0) + [v for x in xd for v in x]
            return np.array([float(fn(*args)) for fn in fns])
        return delays, f, 0
    mats = [m.subs(pvals).evaluate({}) if pvals else m.evaluate({}) for m in spec.matrices]
    mats = [np.asarray(M, dtype=float) for M in mats]
    if spec.kind == "linear-distributed":
        A0 = mats[0]
        kern = spec.kernel.subs(pvals) if pvals else spec.kernel
        deg = max(kern.degree("theta"), 0)
        Ak = [np.array([[float(p.coeff((("theta", k),) if k else ())) for p in row] for row in kern.rows])
              for k in range(deg + 1)]

        def f(x0, xd, m):
            out = A0 @ x0
            for k, Akk in enumerate(Ak):
                out = out + Akk @ m[k]
            return out
        return delays, f, deg + 1

    def f(x0, xd, m):
        out = mats[0] @ x0
        for A, x in zip(mats[1:], xd):
            out = out + A @ x
        return out
    return delays, f, 0


# ---------------------------------------------------------------------------
# trajectories


def _hermite(t0, h, x0, x1, f0, f1, t):
    u = (t - t0) / h
    u2, u3 = u * u, u * u * u
    h00 = 2 * u3 - 3 * u2 + 1
    h10 = u3 - 2 * u2 + u
    h01 = -2 * u3 + 3 * u2
    h11 = u3 - u2
    return h00[:, None] * x0 + h10[:, None] * h * f0 + h01[:, None] * x1 + h11[:, None] * h * f1


@dataclass
class Segment:
    """``theta -> x(t + theta)`` on ``[-tau, 0]`` with the interpolation knots inside."""

    trajectory: "Trajectory"
    t: float
    tau: float

    def __call__(self, theta) -> np.ndarray:
        return self.trajectory(self.t + np.asarray(theta, dtype=float))

    @property
    def breakpoints(self) -> np.ndarray:
        h = self.trajectory.h
        lo = self.t - self.tau
        k0, k1 = math.ceil(max(lo, 0.0) / h), math.floor(self.t / h)
        knots = np.arange(k0, k1 + 1) * h - self.t
        pts = list(knots[(knots > -self.tau) & (knots < 0)])
        if lo < 0 < self.t:
            pts.append(-self.t)
        return np.unique(np.asarray(pts, dtype=float))


@dataclass
class Trajectory:
    """Grid solution ``x(k h)`` with stored derivatives and dense output."""

    h: float
    t: np.ndarray
    x: np.ndarray
    f: np.ndarray
    history: Callable
    delays: list[float]
    blew_up: bool = False
    escape_time: float | None = None
    error_estimate: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def __call__(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((len(times), self.n))
        neg = times <= 0
        if np.any(neg):
            out[neg] = self.history(times[neg])
        pos = ~neg
        if np.any(pos):
            tp = times[pos]
            if np.any(tp > self.t_end * (1 + 1e-12) + 1e-12):
                raise ValueError("requested time beyond the integrated horizon")
            k = np.minimum(np.floor(tp / self.h + 1e-9).astype(int), len(self.t) - 2)
            k = np.maximum(k, 0)
            out[pos] = _hermite(self.t[k], self.h, self.x[k], self.x[k + 1], self.f[k], self.f[k + 1], tp)
        return out

    def segment(self, t: float, tau: float | None = None) -> Segment:
        return Segment(self, float(t), float(max(self.delays) if tau is None else tau))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(self.n)])
            for t, row in zip(self.t, self.x):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def _moments0(history, tau: float, count: int, n: int) -> np.ndarray:
    nodes, weights = np.polynomial.legendre.leggauss(32)
    panels = 16
    m = np.zeros((count, n))
    edges = np.linspace(-tau, 0, panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        th = (b - a) / 2 * nodes + (a + b) / 2
        X = history(th)
        for k in range(count):
            m[k] += ((b - a) / 2 * weights * th ** k) @ X
    return m


def _run(spec, hist, T_end, h, point):
    n = spec.n
    delays, f, nmom = _rhs(spec, point)
    tau = delays[-1] if delays else 0.0
    steps = int(round(T_end / h))
    t = np.arange(steps + 1) * h
    X = np.zeros((steps + 1, n))
    F = np.zeros((steps + 1, n))
    X[0] = hist(np.array([0.0]))[0]
    mom = _moments0(hist, tau, nmom, n) if nmom else np.zeros((0, n))

    # delayed arguments at RK stages usually fall on the half-step lattice
    half = h / 2
    nneg = int(math.ceil(tau / half)) + 2 if delays else 0
    Hneg = hist(-np.arange(nneg) * half) if nneg else np.zeros((0, n))

    def lookup(time, upto):
        q = time / half
        j = int(round(q))
        if abs(q - j) < 1e-9:
            if j <= 0:
                return Hneg[-j] if -j < nneg else hist(np.array([time]))[0]
            k, odd = divmod(j, 2)
            if not odd:
                return X[k]
            return 0.5 * (X[k] + X[k + 1]) + h / 8 * (F[k] - F[k + 1])
        if time <= 0:
            return hist(np.array([time]))[0]
        k = min(int(math.floor(time / h + 1e-9)), upto - 1)
        return _hermite(t[k], h, X[k], X[k + 1], F[k], F[k + 1], np.array([time]))[0]

    def rhs(s, x, m, upto):
        xd = [lookup(s - d, upto) for d in delays]
        dx = f(x, xd, m)
        if not nmom:
            return dx, m
        xt = xd[-1]
        dm = np.empty_like(m)
        for k in range(nmom):
            dm[k] = (x if k == 0 else 0.0) - (-tau) ** k * xt - (k * m[k - 1] if k else 0.0)
        return dx, dm

    F[0] = rhs(0.0, X[0], mom, 0)[0]
    blew, escape = False, None
    last = steps
    for k in range(steps):
        s, x = t[k], X[k]
        k1, l1 = rhs(s, x, mom, k)
        k2, l2 = rhs(s + h / 2, x + h / 2 * k1, mom + h / 2 * l1, k)
        k3, l3 = rhs(s + h / 2, x + h / 2 * k2, mom + h / 2 * l2, k)
        k4, l4 = rhs(s + h, x + h * k3, mom + h * l3, k)
        X[k + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if nmom:
            mom = mom + h / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
        if not np.all(np.isfinite(X[k + 1])) or np.max(np.abs(X[k + 1])) > BLOWUP:
            blew, escape, last = True, float(t[k + 1]), k + 1
            X[k + 1] = np.where(np.isfinite(X[k + 1]), X[k + 1], np.sign(X[k + 1]) * BLOWUP)
            F[k + 1] = F[k]
            break
        F[k + 1] = rhs(t[k + 1], X[k + 1], mom, k + 1)[0]
    return delays, t[:last + 1], X[:last + 1], F[:last + 1], blew, escape


def integrate(spec: SystemSpec, history=1.0, T_end: float | None = None, h: float | None = None,
              point: Mapping | None = None, error_estimate: bool = True) -> Trajectory:
    """Integrate ``spec`` from ``history`` on ``[-tau_K, 0]``.

    Defaults: ``h = tau_min / 50`` and ``T_end = 20 tau_K``. ``point`` fixes
    the values of boxed parameters (midpoints otherwise). With
    ``error_estimate`` the run is repeated at ``2h`` and the step-doubling
    estimate ``max |x_h - x_2h| / 15`` is stored.
    """
    hist = as_history(history, spec.n)
    delays, _, _ = _rhs(spec, point)
    tau_min = min(delays) if delays else 1.0
    tau_max = max(delays) if delays else 1.0
    h = tau_min / 50 if h is None else float(h)
    T_end = 20 * tau_max if T_end is None else float(T_end)
    if delays and h > tau_min / 10 + 1e-15:
        raise ValueError("step must not exceed a tenth of the smallest delay")
    delays, t, X, F, blew, escape = _run(spec, hist, T_end, h, point)
    traj = Trajectory(h, t, X, F, hist, delays, blew, escape)
    if error_estimate and not blew:
        _, t2, X2, _, blew2, _ = _run(spec, hist, T_end, 2 * h, point)
        if not blew2:
            m = min(len(t2), (len(t) + 1) // 2)
            diff = X[: 2 * m: 2][:m] - X2[:m]
            traj.error_estimate = float(np.max(np.abs(diff))) / 15
    return traj


# ---------------------------------------------------------------------------
# functionals along solutions


@functools.lru_cache(maxsize=64)
def _leggauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights over consecutive ``edges``."""
    nodes, weights = _leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    pts = (b - a) / 2 * nodes[None, :] + (a + b) / 2
    wts = (b - a) / 2 * weights[None, :]
    return pts.ravel(), wts.ravel()


def piece_rule(segment, lo: float, hi: float, order: int, panels: int = 8):
    """Nodes on ``[lo, hi]`` split at the segment's interpolation knots when it has them."""
    bps = getattr(segment, "breakpoints", None)
    if bps is not None:
        inner = bps[(bps > lo + 1e-12) & (bps < hi - 1e-12)]
        edges = np.concatenate([[lo], inner, [hi]])
    else:
        edges = np.linspace(lo, hi, panels + 1)
    return gauss_panels(edges, order)


def functional_value(cert, segment, point: Mapping | None = None, order: int | None = None) -> float:
    """``V(x_t)`` for a certificate and a history segment ``theta -> x(t + theta)``."""
    from .stability.certificate import evaluate_functional

    return evaluate_functional(cert, segment, point=point, order=order)


def decrease_check(cert, trajectory: Trajectory, tolerance: float | None = None, stride: int = 5,
                   point: Mapping | None = None) -> dict:
    """Sample ``V(x_t)`` for ``t >= tau_K`` and compare its slope against the certified decay rate."""
    from .stability.certificate import decay_weight, evaluate_functional

    tK = max(trajectory.delays) if trajectory.delays else 0.0
    k0 = int(math.ceil(tK / trajectory.h - 1e-9))
    idx = np.arange(k0, len(trajectory.t), stride)
    if len(idx) < 2:
        raise ValueError("trajectory too short for a decrease check")
    times = trajectory.t[idx]
    V = np.array([evaluate_functional(cert, trajectory.segment(s, tK), point=point) for s in times])
    W = np.array([decay_weight(cert, trajectory.x[i], point=point) for i in idx])
    dt = np.diff(times)
    slope = np.diff(V) / dt
    # the rate bound integrated over each interval: V(b) - V(a) <= -int w, with w sampled densely
    Wint = np.empty(len(dt))
    for j, (a, b) in enumerate(zip(idx[:-1], idx[1:])):
        ws = np.array([decay_weight(cert, trajectory.x[i], point=point) for i in range(a, b + 1)])
        Wint[j] = np.trapezoid(ws, trajectory.t[a:b + 1])
    scale = max(float(np.max(np.abs(V))), 1e-300)
    tol = 1e-7 * scale if tolerance is None else tolerance
    viol_mono = np.diff(V) - tol
    viol_rate = np.diff(V) + Wint - tol
    return {
        "samples": int(len(V)),
        "max_forward_difference": float(np.max(np.diff(V))),
        "max_slope": float(np.max(slope)),
        "worst_rate_violation": float(np.max(viol_rate + tol)),
        "tolerance": float(tol),
        "monotone": bool(np.all(viol_mono <= 0)),
        "rate_ok": bool(np.all(viol_rate <= 0)),
        "passed": bool(np.all(viol_mono <= 0) and np.all(viol_rate <= 0)),
        "V_start": float(V[0]),
        "V_end": float(V[-1]),
        "min_weight": float(np.min(W)),
    }
