"""SDPA sparse format (.dat-s) writer and reader.

The problem maps onto the SDPA dual form ``max F0 . Y  s.t.  Fk . Y = c_k,
Y >= 0``: constraint ``k`` becomes ``Fk``, its right-hand side ``c_k``, and
the objective becomes ``F0``. Free scalars ``u = u+ - u-`` are written as a
final diagonal block (negative size) holding the pairs ``(u+, u-)``.
A coefficient ``a`` on an off-diagonal entry ``Y_ij`` is written as ``a/2``
because ``Fk . Y`` counts both ``(i, j)`` and ``(j, i)``.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .problem import SdpProblem


def _fmt(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _entries(problem: SdpProblem, coeffs: dict, k: int, free_block: int):
    out = []
    for vid, a in coeffs.items():
        kind, idx = problem.owner[vid]
        a = float(a)
        if kind == "block":
            h = problem.blocks[idx]
            i, j = _entry_position(h, vid)
            v = a if i == j else a / 2
            out.append((k, idx + 1, i + 1, j + 1, v))
        else:
            out.append((k, free_block, 2 * idx + 1, 2 * idx + 1, a))
            out.append((k, free_block, 2 * idx + 2, 2 * idx + 2, -a))
    return out


def _entry_position(h, vid):
    off = vid - h.offset
    i = 0
    while off >= h.size - i:
        off -= h.size - i
        i += 1
    return i, i + off


def export_sdpa(problem: SdpProblem) -> str:
    """Serialize ``problem``; output is deterministic."""
    nb = len(problem.blocks)
    has_free = bool(problem.free)
    free_block = nb + 1
    sizes = [str(h.size) for h in problem.blocks]
    if has_free:
        sizes.append(str(-2 * len(problem.free)))
    lines = [str(len(problem.constraints)), str(nb + (1 if has_free else 0)), " ".join(sizes),
             " ".join(_fmt(c.rhs) for c in problem.constraints)]
    entries = _entries(problem, problem.objective, 0, free_block)
    for k, c in enumerate(problem.constraints, start=1):
        entries.extend(_entries(problem, c.coeffs, k, free_block))
    entries = [e for e in entries if e[4] != 0]
    entries.sort(key=lambda e: e[:4])
    for k, bl, i, j, v in entries:
        lines.append(f"{k} {bl} {i} {j} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def write_sdpa(problem: SdpProblem, path) -> None:
    with open(path, "w") as fh:
        fh.write(export_sdpa(problem))


def _numbers(line: str) -> list[str]:
    return [t for t in re.split(r"[\s,{}()]+", line.strip()) if t]


def parse_sdpa(text: str) -> SdpProblem:
    """Read an SDPA sparse file written by :func:`export_sdpa` (or compatible)."""
    lines = [ln for ln in text.splitlines() if ln.strip() and ln.lstrip()[0] not in '"*']
    if len(lines) < 3:
        raise ValueError("truncated SDPA file")
    m = int(_numbers(lines[0])[0])
    nblocks = int(_numbers(lines[1])[0])
    sizes = [int(t) for t in _numbers(lines[2])[:nblocks]]
    pos = 3
    cvals: list[str] = []
    while len(cvals) < m:
        cvals.extend(_numbers(lines[pos]))
        pos += 1
    pb = SdpProblem()
    handles = {}
    free_block = None
    for b, s in enumerate(sizes, start=1):
        if s > 0:
            handles[b] = pb.add_block(s)
        elif b == nblocks:
            if s % 2:
                raise ValueError("free-variable block must have even size")
            free_block = b
        else:
            raise ValueError("only the last block may be diagonal")
    free_ids = [pb.add_free() for _ in range(-sizes[-1] // 2)] if free_block else []

    rows: list[dict] = [dict() for _ in range(m + 1)]
    neg: list[dict] = [dict() for _ in range(m + 1)]
    for ln in lines[pos:]:
        tok = _numbers(ln)
        if len(tok) < 5:
            raise ValueError(f"bad entry line: {ln!r}")
        k, bl, i, j = (int(t) for t in tok[:4])
        v = Fraction(tok[4])
        if i > j:
            i, j = j, i
        if bl == free_block:
            if i != j:
                raise ValueError("off-diagonal entry in the diagonal block")
            r, plus = divmod(i - 1, 2)
            if plus == 0:
                rows[k][free_ids[r]] = rows[k].get(free_ids[r], 0) + v
            else:
                neg[k][free_ids[r]] = neg[k].get(free_ids[r], 0) - v
        else:
            h = handles[bl]
            a = v if i == j else 2 * v
            vid = h.entry(i - 1, j - 1)
            rows[k][vid] = rows[k].get(vid, 0) + a
    for k in range(m + 1):
        if neg[k] != {key: val for key, val in rows[k].items() if key in free_ids}:
            raise ValueError("free-variable pairs are not antisymmetric")
    pb.set_objective(rows[0])
    for k in range(1, m + 1):
        pb.constraints.append(_constraint(rows[k], Fraction(cvals[k - 1])))
    return pb


def _constraint(coeffs, rhs):
    from .problem import Constraint

    return Constraint({key: val for key, val in sorted(coeffs.items()) if val != 0}, rhs)


def read_sdpa(path) -> SdpProblem:
    with open(path) as fh:
        return parse_sdpa(fh.read())


def to_cvxpy(problem: SdpProblem):
    """Build an equivalent cvxpy problem (used as an independent cross-check)."""
    import cvxpy as cp

    mats = [cp.Variable((h.size, h.size), symmetric=True) for h in problem.blocks]
    free = cp.Variable(len(problem.free)) if problem.free else None
    free_pos = {vid: r for r, vid in enumerate(problem.free)}

    def term(vid):
        kind, idx = problem.owner[vid]
        if kind == "block":
            h = problem.blocks[idx]
            i, j = _entry_position(h, vid)
            return mats[idx][i, j]
        return free[free_pos[vid]]

    def lin(coeffs):
        return sum(float(a) * term(v) for v, a in coeffs.items())

    cons = [M >> 0 for M in mats]
    for c in problem.constraints:
        cons.append(lin(c.coeffs) == float(c.rhs))
    obj = cp.Maximize(lin(problem.objective)) if problem.objective else cp.Minimize(0)
    return cp.Problem(obj, cons), mats, free
