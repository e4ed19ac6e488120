"""JSON system specification files.

Polynomials are lists of ``[exponents, coefficient]`` pairs, where
``exponents`` maps symbol names to powers and coefficients are numbers or
rational strings such as ``"19/20"``. State symbols in ``rhs`` are
``<state>_<k>`` for ``state(t - tau_k)`` (``k = 0`` is the current value).
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema

from ..polynomial import Poly, PolyMatrix, to_fraction
from ..stability.systems import KINDS, SystemSpec

SCHEMA_VERSION = 1

_number = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*-?[0-9.]+(e-?[0-9]+)?(/[0-9]+)?\s*$"}]}
_poly = {"type": "array", "items": {
    "type": "array", "minItems": 2, "maxItems": 2,
    "prefixItems": [{"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}}, _number],
}}
_entry = {"oneOf": [_number, _poly]}
_matrix = {"type": "array", "items": {"type": "array", "items": _entry}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "delay system specification",
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "n"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "kind": {"enum": list(KINDS)},
        "n": {"type": "integer", "minimum": 1},
        "states": {"type": "array", "items": {"type": "string", "pattern": "^[A-Za-z][A-Za-z0-9]*$"}},
        "delays": {"type": "array", "items": _number},
        "matrices": {"type": "object", "additionalProperties": _matrix,
                     "propertyNames": {"pattern": "^A[0-9]+$"}},
        "distributed_kernel": {"type": "array", "items": {"type": "array", "items": {
            "oneOf": [_number, {"type": "array", "items": _number}]}}},
        "rhs": {"type": "array", "items": _poly},
        "parameters": {"type": "object", "additionalProperties": {
            "type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
        "state_box": _number,
        "degree": {"type": "object", "additionalProperties": False, "properties": {
            "d": {"type": "integer", "minimum": 0},
            "theta": {"type": "integer", "minimum": 0},
            "param": {"type": "integer", "minimum": 0},
            "kernel": {"type": "integer", "minimum": 0},
        }},
    },
}


class SpecError(ValueError):
    """A specification file that cannot be used."""


def _poly(items) -> Poly:
    return Poly.from_exponents([(exps, to_fraction(c)) for exps, c in items])


def _entry(e) -> Poly:
    return _poly(e) if isinstance(e, list) else Poly.const(to_fraction(e))


def _poly_json(p: Poly) -> list:
    out = []
    for m, c in sorted(p.terms.items(), key=lambda t: (len(t[0]), t[0])):
        out.append([{v: e for v, e in m}, str(c)])
    return out


def _entry_json(p: Poly):
    if not p.variables:
        return str(p.constant_term()) if not p.is_zero() else "0"
    return _poly_json(p)


def parse(doc: dict) -> tuple[SystemSpec, dict]:
    """Validate ``doc`` and build the system; also returns the degree defaults."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SpecError(f"{where}: {exc.message}") from None
    n = doc["n"]
    mats = doc.get("matrices", {})
    names = sorted(mats, key=lambda k: int(k[1:]))
    if names and names != [f"A{i}" for i in range(len(names))]:
        raise SpecError("matrices must be named A0, A1, ... without gaps")
    matrices = []
    for k in names:
        rows = mats[k]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise SpecError(f"matrices/{k}: expected {n}x{n}")
        matrices.append(PolyMatrix([[_entry(e) for e in r] for r in rows]))
    kernel = None
    if "distributed_kernel" in doc:
        rows = doc["distributed_kernel"]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise SpecError(f"distributed_kernel: expected {n}x{n}")
        th = Poly.var("theta")
        kernel = PolyMatrix([[sum((th ** k * to_fraction(c) for k, c in enumerate(e)), Poly())
                              if isinstance(e, list) else Poly.const(to_fraction(e)) for e in r] for r in rows])
    rhs = [_poly(p) for p in doc["rhs"]] if "rhs" in doc else None
    params = {k: (to_fraction(lo), to_fraction(hi)) for k, (lo, hi) in doc.get("parameters", {}).items()}
    box = doc.get("state_box")
    try:
        spec = SystemSpec(doc["kind"], n, [to_fraction(t) for t in doc.get("delays", [])], matrices, kernel, rhs,
                          list(doc.get("states", [])), params, None if box is None else to_fraction(box),
                          doc.get("name", ""))
    except (ValueError, TypeError) as exc:
        raise SpecError(str(exc)) from None
    return spec, dict(doc.get("degree", {}))


def loads(text: str) -> tuple[SystemSpec, dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse(doc)


def load(path) -> tuple[SystemSpec, dict]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError(str(exc)) from None
    return loads(text)


def spec_to_dict(spec: SystemSpec) -> dict:
    doc = {"version": SCHEMA_VERSION, "kind": spec.kind, "n": spec.n, "states": list(spec.states),
           "delays": [str(t) for t in spec.delays]}
    if spec.name:
        doc["name"] = spec.name
    if spec.matrices:
        doc["matrices"] = {f"A{i}": [[_entry_json(p) for p in row] for row in m.rows]
                           for i, m in enumerate(spec.matrices)}
    if spec.kernel is not None:
        deg = max(spec.kernel.degree("theta"), 0)
        doc["distributed_kernel"] = [[[str(p.coeff((("theta", k),) if k else ())) for k in range(deg + 1)]
                                      for p in row] for row in spec.kernel.rows]
    if spec.rhs is not None:
        doc["rhs"] = [_poly_json(p) for p in spec.rhs]
    if spec.parameters:
        doc["parameters"] = {k: [str(lo), str(hi)] for k, (lo, hi) in spec.parameters.items()}
    if spec.state_box is not None:
        doc["state_box"] = str(spec.state_box)
    return doc


def bundled(name: str = "example1") -> tuple[SystemSpec, dict]:
    """A specification shipped with the package."""
    text = resources.files("delaycert.data").joinpath(f"{name}.json").read_text()
    return loads(text)


def schema_json() -> str:
    return json.dumps(SCHEMA, indent=2)


__all__ = ["SCHEMA", "SpecError", "parse", "load", "loads", "spec_to_dict", "bundled", "schema_json"]
