"""Parsing and serialization of the template JSON format.

Top-level document layout::

    {
      "panels": {
        "<name>": {
          "vertices": [[x, y], ...],
          "edges": [{"endpoints": [a, b], "curvature": [cx, cy]?}, ...],
          "translation": [x, y, z],
          "rotation": [rx, ry, rz]
        }
      },
      "stitches": [[{"panel": p, "edge": e}, {"panel": p, "edge": e}], ...],
      "parameters": {
        "<name>": {"target": ..., "kind": ..., "range": [lo, hi],
                    "value": v, "influence": [...]}
      },
      "parameter_order": [...],
      "constraints": [{"edges": [...], "multipliers": [...]}]
    }

Unknown keys are rejected so typos surface as schema errors. Sampled
patterns carry an extra "sample" block which round-trips untouched.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from .model import (
    Constraint,
    Diagnostic,
    Edge,
    EdgeRef,
    InfluenceEntry,
    Panel,
    ParameterRule,
    PatternSpec,
    SchemaError,
    SemanticError,
    Stitch,
    TemplateSpec,
    TemplateSyntaxError,
    Vertex2D,
    validate_template,
)

_TOP_KEYS = {"panels", "stitches", "parameters", "parameter_order", "constraints", "sample"}
_PANEL_KEYS = {"vertices", "edges", "translation", "rotation"}
_EDGE_KEYS = {"endpoints", "curvature"}
_RULE_KEYS = {"target", "kind", "range", "value", "influence"}
_INFLUENCE_KEYS = {"panel", "edge", "toward_end", "along", "distribute_group"}
_CONSTRAINT_KEYS = {"edges", "multipliers"}
_REF_KEYS = {"panel", "edge"}


def _no_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise SemanticError(
                f"duplicate key {key!r} in JSON object",
                (Diagnostic("error", "duplicate-key", f"duplicate key {key!r}"),),
            )
        seen.add(key)
    return dict(pairs)


def _obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(f"{path}: expected object, got {type(value).__name__}")
    return value


def _array(value: Any, path: str, length: Optional[int] = None) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{path}: expected array, got {type(value).__name__}")
    if length is not None and len(value) != length:
        raise SchemaError(f"{path}: expected array of length {length}, got {len(value)}")
    return value


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected number, got {type(value).__name__}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected integer, got {type(value).__name__}")
    return value


def _string(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{path}: expected string, got {type(value).__name__}")
    return value


def _boolean(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(f"{path}: expected boolean, got {type(value).__name__}")
    return value


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{path}: missing required field {key!r}")
    return obj[key]


def _reject_unknown(obj: dict, allowed: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"{path}: unknown field(s) {sorted(unknown)}")


def _vec(value: Any, path: str, length: int) -> tuple[float, ...]:
    arr = _array(value, path, length)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(arr))


def _parse_edge_ref(value: Any, path: str) -> EdgeRef:
    obj = _obj(value, path)
    _reject_unknown(obj, _REF_KEYS, path)
    return EdgeRef(
        _string(_require(obj, "panel", path), f"{path}.panel"),
        _integer(_require(obj, "edge", path), f"{path}.edge"),
    )


def _parse_panel(name: str, value: Any) -> Panel:
    path = f"panels.{name}"
    obj = _obj(value, path)
    _reject_unknown(obj, _PANEL_KEYS, path)
    vertices = tuple(
        Vertex2D(*_vec(v, f"{path}.vertices[{i}]", 2))
        for i, v in enumerate(_array(_require(obj, "vertices", path), f"{path}.vertices"))
    )
    edges = []
    for j, ev in enumerate(_array(_require(obj, "edges", path), f"{path}.edges")):
        epath = f"{path}.edges[{j}]"
        eobj = _obj(ev, epath)
        _reject_unknown(eobj, _EDGE_KEYS, epath)
        endpoints = _array(_require(eobj, "endpoints", epath), f"{epath}.endpoints", 2)
        curvature = None
        if "curvature" in eobj:
            curvature = _vec(eobj["curvature"], f"{epath}.curvature", 2)
        edges.append(
            Edge(
                _integer(endpoints[0], f"{epath}.endpoints[0]"),
                _integer(endpoints[1], f"{epath}.endpoints[1]"),
                curvature,
            )
        )
    translation = _vec(_require(obj, "translation", path), f"{path}.translation", 3)
    rotation = _vec(_require(obj, "rotation", path), f"{path}.rotation", 3)
    return Panel(name, vertices, tuple(edges), translation, rotation)


def _parse_rule(name: str, value: Any) -> ParameterRule:
    path = f"parameters.{name}"
    obj = _obj(value, path)
    _reject_unknown(obj, _RULE_KEYS, path)
    target = _string(_require(obj, "target", path), f"{path}.target")
    kind = _string(_require(obj, "kind", path), f"{path}.kind")
    lo, hi = _vec(_require(obj, "range", path), f"{path}.range", 2)
    default = 1.0 if kind == "multiplicative" else 0.0
    rule_value = _number(obj["value"], f"{path}.value") if "value" in obj else default
    influence = []
    for i, iv in enumerate(_array(_require(obj, "influence", path), f"{path}.influence")):
        ipath = f"{path}.influence[{i}]"
        iobj = _obj(iv, ipath)
        _reject_unknown(iobj, _INFLUENCE_KEYS, ipath)
        along = _vec(iobj["along"], f"{ipath}.along", 2) if "along" in iobj else None
        influence.append(
            InfluenceEntry(
                edge_ref=EdgeRef(
                    _string(_require(iobj, "panel", ipath), f"{ipath}.panel"),
                    _integer(_require(iobj, "edge", ipath), f"{ipath}.edge"),
                ),
                toward_end=_boolean(iobj.get("toward_end", True), f"{ipath}.toward_end"),
                along=along,
                distribute_group=(
                    _string(iobj["distribute_group"], f"{ipath}.distribute_group")
                    if "distribute_group" in iobj
                    else None
                ),
            )
        )
    return ParameterRule(name, target, kind, (lo, hi), rule_value, tuple(influence))


def _parse_constraint(index: int, value: Any) -> Constraint:
    path = f"constraints[{index}]"
    obj = _obj(value, path)
    _reject_unknown(obj, _CONSTRAINT_KEYS, path)
    edges = tuple(
        _parse_edge_ref(ev, f"{path}.edges[{i}]")
        for i, ev in enumerate(_array(_require(obj, "edges", path), f"{path}.edges"))
    )
    if "multipliers" in obj:
        multipliers = tuple(
            _number(m, f"{path}.multipliers[{i}]")
            for i, m in enumerate(_array(obj["multipliers"], f"{path}.multipliers", len(edges)))
        )
    else:
        multipliers = (1.0,) * len(edges)
    return Constraint(edges, multipliers)


def parse_template(text: str) -> TemplateSpec:
    """Parse and fully validate a template document.

    Raises TemplateSyntaxError for malformed JSON (with position), SchemaError
    for missing or wrongly typed fields, and SemanticError carrying the full
    diagnostic list for consistency violations.
    """
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise TemplateSyntaxError(exc.msg, exc.lineno, exc.colno) from exc

    doc = _obj(doc, "$")
    _reject_unknown(doc, _TOP_KEYS, "$")

    panels_obj = _obj(_require(doc, "panels", "$"), "panels")
    if not panels_obj:
        raise SchemaError("panels: at least one panel is required")
    panels = tuple(_parse_panel(name, value) for name, value in panels_obj.items())

    stitches = []
    for i, sv in enumerate(_array(doc.get("stitches", []), "stitches")):
        sides = _array(sv, f"stitches[{i}]", 2)
        stitches.append(
            Stitch(
                (
                    _parse_edge_ref(sides[0], f"stitches[{i}][0]"),
                    _parse_edge_ref(sides[1], f"stitches[{i}][1]"),
                )
            )
        )

    params_obj = _obj(doc.get("parameters", {}), "parameters")
    parameters = tuple(_parse_rule(name, value) for name, value in params_obj.items())

    if "parameter_order" in doc:
        order = tuple(
            _string(n, f"parameter_order[{i}]")
            for i, n in enumerate(_array(doc["parameter_order"], "parameter_order"))
        )
    else:
        order = tuple(r.name for r in parameters)

    constraints = tuple(
        _parse_constraint(i, cv) for i, cv in enumerate(_array(doc.get("constraints", []), "constraints"))
    )

    template = TemplateSpec(PatternSpec(panels, tuple(stitches)), parameters, order, constraints)
    errors = [d for d in validate_template(template) if d.severity == "error"]
    if errors:
        raise SemanticError(errors[0].message, tuple(errors))
    return template


def template_to_doc(template: TemplateSpec, sample: Optional[dict] = None) -> dict:
    """Plain-JSON document for a template, key order fixed."""
    panels: dict[str, Any] = {}
    for p in template.pattern.panels:
        edges = []
        for e in p.edges:
            entry: dict[str, Any] = {"endpoints": [e.start_id, e.end_id]}
            if e.curvature is not None:
                entry["curvature"] = [e.curvature[0], e.curvature[1]]
            edges.append(entry)
        panels[p.name] = {
            "vertices": [[v.x, v.y] for v in p.vertices],
            "edges": edges,
            "translation": list(p.translation),
            "rotation": list(p.rotation),
        }
    doc: dict[str, Any] = {
        "panels": panels,
        "stitches": [
            [{"panel": r.panel, "edge": r.edge} for r in s.sides] for s in template.pattern.stitches
        ],
        "parameters": {
            r.name: {
                "target": r.target,
                "kind": r.kind,
                "range": [r.range[0], r.range[1]],
                "value": r.value,
                "influence": [_influence_doc(entry) for entry in r.influence],
            }
            for r in template.parameters
        },
        "parameter_order": list(template.parameter_order),
        "constraints": [
            {
                "edges": [{"panel": r.panel, "edge": r.edge} for r in c.edges],
                "multipliers": list(c.multipliers),
            }
            for c in template.constraints
        ],
    }
    if sample is not None:
        doc["sample"] = sample
    return doc


def _influence_doc(entry: InfluenceEntry) -> dict:
    out: dict[str, Any] = {
        "panel": entry.edge_ref.panel,
        "edge": entry.edge_ref.edge,
        "toward_end": entry.toward_end,
    }
    if entry.along is not None:
        out["along"] = [entry.along[0], entry.along[1]]
    if entry.distribute_group is not None:
        out["distribute_group"] = entry.distribute_group
    return out


def serialize_template(template: TemplateSpec, sample: Optional[dict] = None) -> str:
    """UTF-8 JSON for the template; parse(serialize(t)) equals t structurally.

    Floats are written in shortest round-trip form; defaults are always
    materialized so documents are self-contained.
    """
    return json.dumps(template_to_doc(template, sample), indent=2) + "\n"


def pattern_to_template(pattern: PatternSpec) -> TemplateSpec:
    return TemplateSpec(pattern)
