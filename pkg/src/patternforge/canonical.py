"""Deterministic ordering of patterns.

Canonical form: panels sorted by 3D translation (x, then y, then z, panel
name as a final tiebreaker), every edge loop counterclockwise, edge 0
starting at the lowest-leftmost loop vertex, and vertices renumbered in loop
order. Stitches and any edge references held by templates are remapped so
the garment geometry is untouched.
"""

from __future__ import annotations

from dataclasses import replace

from . import geometry
from .model import (
    Constraint,
    Edge,
    EdgeRef,
    InfluenceEntry,
    Panel,
    ParameterRule,
    PatternSpec,
    Stitch,
    TemplateSpec,
)

EdgeMap = dict[str, dict[int, int]]


def reverse_curvature(curvature: tuple[float, float] | None) -> tuple[float, float] | None:
    """Relative control point of the same curve traversed backwards.

    cy is a perpendicular offset in a frame that rotates with the edge, so
    reversal negates it; cx measures along the chord from the start, so it
    reflects about the midpoint.
    """
    if curvature is None:
        return None
    cx, cy = curvature
    return (1.0 - cx, -cy)


def _canonicalize_panel(panel: Panel) -> tuple[Panel, dict[int, int]]:
    edges = list(panel.edges)
    n = len(edges)
    edge_map = {i: i for i in range(n)}

    area = geometry.signed_area(geometry.sample_boundary(panel, 16))
    if area < 0:
        edges = [
            Edge(e.end_id, e.start_id, reverse_curvature(e.curvature)) for e in reversed(edges)
        ]
        edge_map = {i: n - 1 - i for i in range(n)}

    starts = [panel.vertices[e.start_id] for e in edges]
    k = min(range(n), key=lambda j: (starts[j].y, starts[j].x))
    edges = edges[k:] + edges[:k]
    edge_map = {old: (new - k) % n for old, new in edge_map.items()}

    vertices = tuple(panel.vertices[e.start_id] for e in edges)
    new_edges = tuple(Edge(j, (j + 1) % n, edges[j].curvature) for j in range(n))
    return replace(panel, vertices=vertices, edges=new_edges), edge_map


def _canonicalize_with_maps(pattern: PatternSpec) -> tuple[PatternSpec, EdgeMap]:
    canon_panels = []
    maps: EdgeMap = {}
    for panel in pattern.panels:
        cp, m = _canonicalize_panel(panel)
        canon_panels.append(cp)
        maps[panel.name] = m
    canon_panels.sort(key=lambda p: (p.translation[0], p.translation[1], p.translation[2], p.name))

    def remap(ref: EdgeRef) -> EdgeRef:
        return EdgeRef(ref.panel, maps[ref.panel][ref.edge])

    stitches = []
    for stitch in pattern.stitches:
        sides = tuple(sorted((remap(stitch.sides[0]), remap(stitch.sides[1]))))
        stitches.append(Stitch(sides))
    stitches.sort(key=lambda s: s.sides)

    return PatternSpec(tuple(canon_panels), tuple(stitches)), maps


def canonicalize(pattern: PatternSpec) -> PatternSpec:
    """Canonical form of a valid pattern; geometry is bit-identical."""
    canon, _ = _canonicalize_with_maps(pattern)
    return canon


def canonicalize_template(template: TemplateSpec) -> TemplateSpec:
    """Canonicalize the base pattern and remap every edge reference."""
    canon, maps = _canonicalize_with_maps(template.pattern)

    def remap(ref: EdgeRef) -> EdgeRef:
        return EdgeRef(ref.panel, maps[ref.panel][ref.edge])

    parameters = tuple(
        replace(
            rule,
            influence=tuple(
                replace(entry, edge_ref=remap(entry.edge_ref)) for entry in rule.influence
            ),
        )
        for rule in template.parameters
    )
    constraints = tuple(
        replace(c, edges=tuple(remap(ref) for ref in c.edges)) for c in template.constraints
    )
    return TemplateSpec(canon, parameters, template.parameter_order, constraints)
