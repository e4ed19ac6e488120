"""Certificates: extraction from a solved program, JSON persistence, evaluation and verification."""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from ..cones import KernelVariable, MultiplierCone
from ..polynomial import LinExpr, Poly, PolyMatrix, intern, to_fraction
from ..sdp import FAILURE, SdpSolution, SolverOptions, solve
from ..sos import SosConstraint
from .linear import LinearProgram, build_linear, build_single_delay_pd
from .nonlinear import NonlinearProgram, build_delay_independent, build_nonlinear, build_ode
from .systems import SystemSpec, delayed_name

VERSION = 1
CERTIFIED, NOT_CERTIFIED, UNKNOWN = "CERTIFIED", "NOT CERTIFIED", "UNKNOWN"


# ---------------------------------------------------------------------------
# serialization helpers


def poly_to_json(p: Poly) -> dict:
    variables = p.variables
    pos = {v: i for i, v in enumerate(variables)}
    terms = []
    for m, c in p.terms.items():
        exps = [0] * len(variables)
        for v, e in m:
            exps[pos[v]] = e
        terms.append([exps, float(c)])
    terms.sort()
    return {"variables": variables, "terms": terms}


def poly_from_json(d: dict) -> Poly:
    for v in d["variables"]:
        intern(v)
    out = {}
    for exps, c in d["terms"]:
        mono = tuple((v, e) for v, e in zip(d["variables"], exps) if e)
        out[tuple(sorted(mono, key=lambda t: intern(t[0])))] = Fraction(c)
    return Poly(out)


def _encode(obj):
    if isinstance(obj, Poly):
        return {"type": "poly", **poly_to_json(obj)}
    if isinstance(obj, PolyMatrix):
        return {"type": "polymatrix", "shape": list(obj.shape),
                "entries": [[poly_to_json(p) for p in row] for row in obj.rows]}
    if isinstance(obj, np.ndarray):
        return {"type": "matrix", "shape": list(obj.shape), "data": [float(v) for v in obj.ravel()]}
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    if not isinstance(obj, dict):
        return obj
    kind = obj.get("type")
    if kind == "poly":
        return poly_from_json(obj)
    if kind == "polymatrix":
        return PolyMatrix([[poly_from_json(p) for p in row] for row in obj["entries"]])
    if kind == "matrix":
        return np.array(obj["data"], dtype=float).reshape(obj["shape"])
    return {k: _decode(v) for k, v in obj.items()}


_FLOAT = "\x00F"


def _mark_floats(obj):
    if isinstance(obj, float):
        if math.isfinite(obj):
            return f"{_FLOAT}{obj:.17g}"
        return None
    if isinstance(obj, list):
        return [_mark_floats(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _mark_floats(v) for k, v in obj.items()}
    return obj


def dumps(obj, indent: int | None = None) -> str:
    """JSON text with every float printed to 17 significant digits."""
    text = json.dumps(_mark_floats(obj), indent=indent, sort_keys=False)
    return re.sub(r'"\\u0000F([^"]*)"', r"\1", text)


# ---------------------------------------------------------------------------
# the certificate


@dataclass
class Certificate:
    """Recovered functional data plus the Gram blocks and the achieved margin."""

    kind: str
    degree: int
    margin: float
    data: dict
    grams: dict = field(default_factory=dict)
    status: str = "feasible"
    spec_hash: str = ""
    theta_degree: int = 0
    solver: dict = field(default_factory=dict)
    version: int = VERSION
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "version": self.version, "kind": self.kind, "degree": self.degree,
            "theta_degree": self.theta_degree, "margin": float(self.margin), "status": self.status,
            "spec_hash": self.spec_hash, "solver": _encode(self.solver), "data": _encode(self.data),
            "grams": {k: [[float(v) for v in row] for row in np.asarray(G)] for k, G in self.grams.items()},
        }

    @classmethod
    def from_json(cls, d: dict) -> "Certificate":
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported certificate version {d.get('version')}")
        return cls(d["kind"], d["degree"], d["margin"], _decode(d["data"]),
                   {k: np.array(v, dtype=float) for k, v in d["grams"].items()}, d["status"], d["spec_hash"],
                   d.get("theta_degree", 0), _decode(d.get("solver", {})), d["version"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "Certificate":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def sos_constraints(obj) -> list[SosConstraint]:
    """All Gram-matrix constraints reachable from a program's constraint registry."""
    out = []
    if isinstance(obj, SosConstraint):
        out.append(obj)
    elif isinstance(obj, MultiplierCone):
        out.extend(obj.constraints)
    elif isinstance(obj, KernelVariable):
        out.extend(sos_constraints(obj.constraint))
    elif isinstance(obj, dict):
        for v in obj.values():
            out.extend(sos_constraints(v))
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            out.extend(sos_constraints(v))
    return out


def gram_residual(program, solution: SdpSolution) -> float:
    """Largest coefficient mismatch between any solved target and its Gram expansion."""
    registry = program.cones if isinstance(program, LinearProgram) else program.constraints
    cons = sos_constraints(registry)
    return max((c.residual(solution) for c in cons), default=0.0)


def _linear_data(program: LinearProgram, x: np.ndarray) -> dict:
    spec = program.spec
    tau = None if program.tau_K.variables else float(program.tau_K.constant_term())
    return {
        "n": spec.n, "ratios": [float(r) for r in program.ratios], "tau": tau,
        "delays": [float(t) for t in spec.delays],
        "params": list(program.params), "param_box": {k: [float(lo), float(hi)] for k, (lo, hi) in
                                                      spec.parameters.items() if k in program.params},
        "P": program.P.resolve(x), "Q": [Q.resolve(x) for Q in program.Q],
        "S": [S.resolve(x) for S in program.S], "kernel_gram": program.kernel.gram.resolve(x),
        "kernel_degree": program.kernel.d, "kernel_maps": [[float(a), float(b)] for a, b in program.kernel.maps],
    }


def _nonlinear_data(program: NonlinearProgram, x: np.ndarray) -> dict:
    spec = program.spec
    fn = program.functional
    data = {"states": list(spec.states), "delays": [float(t) for t in spec.delays],
            "box": None if spec.state_box is None else float(spec.state_box),
            "params": {k: [float(lo), float(hi)] for k, (lo, hi) in spec.parameters.items()}}
    if program.margins is not None:
        data["w1"], data["w3"] = program.margins
    if program.kind == "nonlinear":
        kern: KernelVariable = fn["kernel"]
        data.update(g=[g.resolve(x) for g in fn["g"]], kernel_gram=kern.gram.resolve(x), kernel_degree=kern.d,
                    kernel_monomials=[Poly({m: Fraction(1)}) for m in fn["kernel_monomials"]],
                    kernel_maps=[[float(a), float(b)] for a, b in kern.maps])
    elif program.kind == "delay-independent":
        data["p"] = [p.resolve(x) for p in fn["p"]]
    elif program.kind == "ode":
        data["V"] = fn["V"].resolve(x)
    elif program.kind == "linear-uncertain":
        data["P"] = fn["P"].resolve(x)
    return data


def certificate_from_assignment(program, x: np.ndarray, margin: float | None = None) -> Certificate:
    """Certificate built from an arbitrary assignment of the program's unknowns (no solve)."""
    if isinstance(program, LinearProgram):
        data = _linear_data(program, x)
        kind, dth = "linear", program.degree
    else:
        data = _nonlinear_data(program, x)
        kind, dth = program.kind, program.theta_degree
    m = program.margin.value(x) if margin is None else margin
    return Certificate(kind, program.degree, float(m), data, theta_degree=dth)


def extract_certificate(program, solution: SdpSolution) -> Certificate:
    """Map a solved program back to named functional data."""
    if not solution.feasible:
        raise ValueError(f"cannot extract a certificate from a {solution.status} solution")
    cert = certificate_from_assignment(program, solution.x, solution.value(program.margin))
    pb = program.problem
    cert.grams = {f"{i}:{h.name}": solution.blocks[i] for i, h in enumerate(pb.blocks)}
    cert.status = solution.status
    cert.spec_hash = program.spec.digest()
    cert.solver = {"iterations": solution.iterations, "gap": solution.gap, "eq_residual": solution.eq_residual,
                   "min_eig": min(solution.min_eigs, default=0.0), "message": solution.message,
                   "gram_residual": gram_residual(program, solution)}
    return cert


# ---------------------------------------------------------------------------
# evaluation


def _matrix_fn(cert: Certificate, key, pm: PolyMatrix, var: str, point: Mapping):
    ck = (key, var, tuple(sorted((k, float(v)) for k, v in point.items())))
    if ck in cert._cache:
        return cert._cache[ck]
    sub = {k: to_fraction(v) for k, v in point.items() if k in pm.variables}
    pm = pm.subs(sub) if sub else pm
    r, c = pm.shape
    deg = max(pm.degree(var), 0)
    coef = np.zeros((deg + 1, r, c))
    for i, j, p in pm.entries():
        for m, v in p.terms.items():
            coef[dict(m).get(var, 0), i, j] += float(v)

    def f(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.tensordot(np.vander(s, deg + 1, increasing=True), coef, axes=1)
    cert._cache[ck] = f
    return f


def _poly_fn(cert: Certificate, key, p: Poly, variables: list[str], point: Mapping):
    ck = (key, tuple(variables), tuple(sorted((k, float(v)) for k, v in point.items())))
    if ck not in cert._cache:
        sub = {k: to_fraction(v) for k, v in point.items() if k in p.variables}
        cert._cache[ck] = (p.subs(sub) if sub else p).lambdify(variables)
    return cert._cache[ck]


def _tau(cert: Certificate, point: Mapping) -> float:
    tau = cert.data.get("tau")
    if tau is None:
        if "tau" not in point:
            raise ValueError("parameter-dependent certificate: give the delay in `point`")
        tau = float(point["tau"])
    return tau


def _point(cert: Certificate, point: Mapping | None) -> dict:
    point = dict(point or {})
    box = cert.data.get("param_box") or cert.data.get("params") or {}
    if isinstance(box, dict):
        for k, (lo, hi) in box.items():
            point.setdefault(k, (lo + hi) / 2)
    return point


def _default_order(cert: Certificate) -> int:
    if cert.kind == "linear":
        return (cert.degree + 7) // 2 + 1
    return (3 * cert.degree + cert.theta_degree + 1) // 2 + 1


def _zbar(a: np.ndarray, d: int) -> np.ndarray:
    return np.vander(a, d + 1, increasing=True)


def evaluate_functional(cert: Certificate, segment, point: Mapping | None = None, order: int | None = None) -> float:
    """``V(x_t)`` with ``segment(theta) = x(t + theta)`` on ``[-tau_K, 0]`` (vectorised in theta)."""
    from ..simulate import piece_rule

    point = _point(cert, point)
    order = order or _default_order(cert)
    d = cert.data
    x0 = np.asarray(segment(np.array([0.0])), dtype=float)[0]
    if cert.kind == "linear":
        tK = _tau(cert, point)
        ratios = d["ratios"]
        prev = [0.0] + ratios[:-1]
        P = _matrix_fn(cert, "P", d["P"], "s", point)(np.zeros(1))[0]
        V = float(x0 @ P @ x0)
        dk, n = d["kernel_degree"], d["n"]
        moments = []
        for i, (r, p) in enumerate(zip(ratios, prev)):
            lo, hi = -r * tK, -p * tK
            th, w = piece_rule(segment, lo, hi, order)
            delta = (r - p) * tK
            s = (th + p * tK) / delta
            ws = w / delta
            X = np.asarray(segment(th), dtype=float)
            Qv = _matrix_fn(cert, ("Q", i), d["Q"][i], "s", point)(s)
            Sv = _matrix_fn(cert, ("S", i), d["S"][i], "s", point)(s)
            V += float(np.sum(ws * (2 * np.einsum("a,qab,qb->q", x0, Qv, X) + np.einsum("qa,qab,qb->q", X, Sv, X))))
            al, be = d["kernel_maps"][i]
            Z = _zbar(al * s + be, dk)
            moments.append(np.einsum("q,qe,qc->ce", ws, Z, X).reshape(n * (dk + 1)))
        G = _matrix_fn(cert, "kernel", d["kernel_gram"], "s", point)(np.zeros(1))[0]
        m = np.concatenate(moments)
        return V + float(m @ G @ m)

    states = d["states"]
    x0n = [delayed_name(st, 0) for st in states]
    if cert.kind == "nonlinear":
        xp = [f"{st}_s" for st in states]
        delays = d["delays"]
        tK = delays[-1]
        prev = [0.0] + delays[:-1]
        dk = d["kernel_degree"]
        zfns = [_poly_fn(cert, ("z", k), z, x0n, {}) for k, z in enumerate(d["kernel_monomials"])]
        V = 0.0
        moments = []
        for i, (t, p) in enumerate(zip(delays, prev)):
            th, w = piece_rule(segment, -t, -p, order)
            delta = t - p
            s = (th + p) / delta
            ws = w / delta
            X = np.asarray(segment(th), dtype=float)
            g = _poly_fn(cert, ("g", i), d["g"][i], x0n + xp + ["s"], {})
            args = [np.full(len(s), v) for v in x0] + [X[:, c] for c in range(X.shape[1])] + [s]
            V += float(np.sum(ws * g(*args)))
            Zx = np.stack([zf(*[X[:, c] for c in range(X.shape[1])]) for zf in zfns], axis=1)
            al, be = d["kernel_maps"][i]
            Z = _zbar(al * s + be, dk)
            moments.append(np.einsum("q,qe,qc->ce", ws, Z, Zx).reshape(-1))
        G = d["kernel_gram"].evaluate({})
        m = np.concatenate(moments)
        return V + float(m @ G @ m)
    if cert.kind == "delay-independent":
        p0 = _poly_fn(cert, ("p", 0), d["p"][0], x0n, {})
        V = float(p0(*x0))
        for i, t in enumerate(d["delays"]):
            th, w = piece_rule(segment, -t, 0.0, order)
            X = np.asarray(segment(th), dtype=float)
            pi = _poly_fn(cert, ("p", i + 1), d["p"][i + 1], x0n, {})
            V += float(np.sum(w * pi(*[X[:, c] for c in range(X.shape[1])])))
        return V
    if cert.kind == "ode":
        Vf = _poly_fn(cert, "V", d["V"], x0n, point)
        return float(Vf(*x0))
    if cert.kind == "linear-uncertain":
        P = _matrix_fn(cert, "P", d["P"], "_", point)(np.zeros(1))[0]
        return float(x0 @ P @ x0)
    raise ValueError(f"unknown certificate kind {cert.kind}")


def _weight(cert: Certificate, x: np.ndarray, key: str) -> float:
    x = np.asarray(x, dtype=float)
    if cert.kind in ("linear", "linear-uncertain") or key not in cert.data:
        return float(x @ x)
    names = [delayed_name(st, 0) for st in cert.data["states"]]
    return float(_poly_fn(cert, key, cert.data[key], names, {})(*x))


def positivity_weight(cert: Certificate, x0: np.ndarray, point: Mapping | None = None) -> float:
    """``(margin / 2) w1(x0)``: the lower bound checked against ``V``."""
    return cert.margin / 2 * _weight(cert, x0, "w1")


def decay_weight(cert: Certificate, x0: np.ndarray, point: Mapping | None = None) -> float:
    """``(margin / 2) w3(x0)`` in time units: the decay rate checked against ``dV/dt``."""
    w = cert.margin / 2 * _weight(cert, x0, "w3")
    if cert.kind == "linear":
        return w / _tau(cert, _point(cert, point))
    if cert.kind == "nonlinear":
        return w / cert.data["delays"][-1]
    return w


# ---------------------------------------------------------------------------
# certification


@dataclass
class Report:
    """Verdict of one certification run."""

    verdict: str
    margin: float
    threshold: float
    status: str
    seconds: float
    certificate: Certificate | None = None
    solution: SdpSolution | None = field(default=None, repr=False)
    program: object = field(default=None, repr=False)
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "margin": self.margin, "threshold": self.threshold,
               "status": self.status, "seconds": self.seconds, "message": self.message}
        if self.certificate is not None:
            out["spec_hash"] = self.certificate.spec_hash
            out["gram_residual"] = self.certificate.solver.get("gram_residual")
        return out


def build_program(spec: SystemSpec, d: int, method: str | None = None, theta_degree: int | None = None,
                  param_degree: int | None = None, kernel_degree: int | None = None):
    """Choose the builder for ``spec``.

    ``method`` is one of ``functional`` (default), ``delay-independent`` or
    ``region`` (parameter-dependent linear functional over ``spec.parameters``).
    """
    if spec.kind.startswith("linear"):
        if method == "region" or (spec.parameters and method is None):
            return build_single_delay_pd(spec, d, 2 if param_degree is None else param_degree, kernel_degree)
        return build_linear(spec, d, kernel_degree)
    if spec.kind == "ode":
        return build_ode(spec, d, param_degree or 0)
    if method == "delay-independent":
        return build_delay_independent(spec, d)
    return build_nonlinear(spec, d, theta_degree, kernel_degree)


def certify(spec: SystemSpec, d: int, method: str | None = None, theta_degree: int | None = None,
            param_degree: int | None = None, kernel_degree: int | None = None,
            opts: SolverOptions | None = None) -> Report:
    """Build, solve and classify. ``NOT CERTIFIED`` means no certificate at this degree."""
    t0 = time.perf_counter()
    program = build_program(spec, d, method, theta_degree, param_degree, kernel_degree)
    sol = solve(program.problem, opts)
    thr = 1e-6 * spec.scale()
    secs = time.perf_counter() - t0
    if sol.status == FAILURE:
        m = sol.value(program.margin) if sol.x is not None else float("nan")
        return Report(UNKNOWN, m, thr, sol.status, secs, None, sol, program, sol.message)
    if not sol.feasible:
        return Report(NOT_CERTIFIED, float("nan"), thr, sol.status, secs, None, sol, program, sol.message)
    margin = sol.value(program.margin)
    cert = extract_certificate(program, sol)
    verdict = CERTIFIED if margin >= thr else NOT_CERTIFIED
    return Report(verdict, margin, thr, sol.status, time.perf_counter() - t0, cert, sol, program, sol.message)


# ---------------------------------------------------------------------------
# verification


def verify_certificate(cert: Certificate, spec: SystemSpec, trials: int = 100, seed: int = 0,
                       amplitude: float | None = None, T_end: float | None = None, h: float | None = None,
                       point: Mapping | None = None, stride: int = 5) -> dict:
    """Sampling checks on random polynomial histories.

    (a) ``V(phi) >= (margin/2) w1(phi(0))``; (b) along the simulated solution
    ``V(x_t)`` is non-increasing and decays at least at the rate
    ``(margin/2) w3(x(t))`` (divided by ``tau_K`` for delay-dependent
    functionals). A blow-up is reported separately. For systems certified on
    a state box, histories are scaled into half the box and runs leaving the
    box are counted, not judged.
    """
    from ..simulate import decrease_check, integrate, random_history

    if (cert.kind == "linear") != spec.kind.startswith("linear"):
        raise ValueError("certificate kind does not match the system")
    rng = np.random.default_rng(seed)
    point = _point(cert, point)
    box = cert.data.get("box")
    if amplitude is None:
        amplitude = 1.0 if box is None else box / 2
    if cert.kind == "linear":
        tK = _tau(cert, point)
    else:
        tK = max(cert.data.get("delays") or [1.0])
    if cert.kind == "ode":
        tK = 1.0
    pos_fail, dec_fail, blowups, left_box, worst_pos, worst_rate = 0, 0, 0, 0, math.inf, -math.inf
    details = []
    for k in range(trials):
        phi = random_history(rng, spec.n, tK, amplitude=amplitude)
        V = evaluate_functional(cert, phi, point)
        lb = positivity_weight(cert, phi(np.array([0.0]))[0], point)
        slack = V - lb
        worst_pos = min(worst_pos, slack)
        if slack < -1e-9 * max(1.0, abs(V)):
            pos_fail += 1
        traj = integrate(spec, phi, T_end=T_end, h=h, point=point, error_estimate=False)
        if traj.blew_up:
            blowups += 1
            details.append({"trial": k, "blow_up": traj.escape_time})
            continue
        if box is not None and float(np.max(np.abs(traj.x))) > box:
            left_box += 1
            continue
        rep = decrease_check(cert, traj, stride=stride, point=point)
        worst_rate = max(worst_rate, rep["worst_rate_violation"])
        if not rep["passed"]:
            dec_fail += 1
            details.append({"trial": k, **rep})
    return {
        "trials": trials, "positivity_failures": pos_fail, "decrease_failures": dec_fail,
        "blow_ups": blowups, "left_box": left_box, "worst_positivity_slack": float(worst_pos),
        "worst_rate_violation": float(worst_rate),
        "passed": pos_fail == 0 and dec_fail == 0 and blowups == 0, "details": details[:5],
    }


# ---------------------------------------------------------------------------
# derivative identity (for oracle tests)


def derivative_value(program: LinearProgram, x: np.ndarray, segment, point: Mapping | None = None,
                     order: int | None = None) -> float:
    """``tau_K dV/dt`` from the assembled ``D0, D1, D2, L`` blocks, minus ``eps |x(t)|^2``.

    Along a solution this must equal ``tau_K`` times the time derivative of
    :func:`evaluate_functional` for the certificate of the same assignment.
    """
    from ..simulate import piece_rule

    point = dict(point or {})
    cert = certificate_from_assignment(program, x)
    tK = _tau(cert, point)
    eps = program.eps.value(x)
    n, K = program.spec.n, program.K
    order = order or _default_order(cert)
    ratios = [float(r) for r in program.ratios]
    prev = [0.0] + ratios[:-1]
    delays = [r * tK for r in ratios]
    xi = np.concatenate([segment(np.array([0.0]))[0]] + [segment(np.array([-t]))[0] for t in delays])
    sub = {k: to_fraction(v) for k, v in point.items()}
    resolve = (lambda M: M.resolve(x).subs(sub)) if sub else (lambda M: M.resolve(x))
    D0 = resolve(program.D0).evaluate({})
    val = float(xi @ D0 @ xi) - eps * float(xi[:n] @ xi[:n])
    dk = program.kernel.d
    G = resolve(program.kernel.gram).evaluate({})
    r = n * (dk + 1)
    m, md, nodes = [], [], []
    for j in range(K):
        lo, hi = -ratios[j] * tK, -prev[j] * tK
        th, w = piece_rule(segment, lo, hi, order)
        delta = (ratios[j] - prev[j]) * tK
        s = (th + prev[j] * tK) / delta
        ws = w / delta
        X = np.asarray(segment(th), dtype=float)
        D1 = _lambdify_matrix(resolve(program.D1[j]))(s)
        D2 = _lambdify_matrix(resolve(program.D2[j]))(s)
        val += float(np.sum(ws * (2 * np.einsum("a,qab,qb->q", xi, D1, X) + np.einsum("qa,qab,qb->q", X, D2, X))))
        al, be = program.kernel.maps[j]
        a = float(al) * s + float(be)
        Z = _zbar(a, dk)
        dZ = np.zeros_like(Z)
        for e in range(1, dk + 1):
            dZ[:, e] = e * a ** (e - 1) * float(al)
        m.append(np.einsum("q,qe,qc->ce", ws, Z, X).reshape(r))
        md.append(np.einsum("q,qe,qc->ce", ws, dZ, X).reshape(r))
        nodes.append((s, ws, X))
    c = [float(v) for v in program.coeffs]
    for i in range(K):
        for j in range(K):
            Gij = G[i * r:(i + 1) * r, j * r:(j + 1) * r]
            val -= c[i] * float(md[i] @ Gij @ m[j]) + c[j] * float(m[i] @ Gij @ md[j])
    if program.kernel_extra is not None:
        E = resolve(program.kernel_extra)
        s, ws, X = nodes[0]
        Ef = _lambdify_matrix(E, ["s", "r"])
        Ss, Rr = np.meshgrid(s, s, indexing="ij")
        Ev = Ef(Ss.ravel(), Rr.ravel()).reshape(len(s), len(s), n, n)
        val -= float(np.einsum("q,p,qa,qpab,pb->", ws, ws, X, Ev, X))
    return val


def _lambdify_matrix(pm: PolyMatrix, variables=("s",)):
    variables = list(variables)
    rows, cols = pm.shape
    fns = [[p.lambdify(variables) for p in row] for row in pm.rows]

    def f(*args):
        args = [np.atleast_1d(np.asarray(a, dtype=float)) for a in args]
        out = np.empty((len(args[0]), rows, cols))
        for i in range(rows):
            for j in range(cols):
                out[:, i, j] = fns[i][j](*args)
        return out
    return f
