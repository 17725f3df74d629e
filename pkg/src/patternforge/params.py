"""Parameter rule application, constraint repair, and design sampling.

Length edits move one designated endpoint of each influenced edge. Because
curvature lives in the edge's similarity frame, arc length is proportional
to chord length for a fixed curvature, so hitting a target arc length
reduces to hitting a target chord length. The moved vertex is shared with
one neighbouring loop edge, which deforms implicitly; there is no further
ripple, and the loop always stays closed.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import geometry
from .model import (
    Constraint,
    EdgeRef,
    InfluenceEntry,
    Panel,
    ParameterRule,
    PatternSpec,
    SampleRecord,
    TemplateSpec,
    Vertex2D,
)

_MIN_EDGE_LEN = 1e-6
_CONSTRAINT_TOL = 1e-12  # arc-length measurement tolerance for exact targets


class ParameterError(Exception):
    """A rule or constraint could not be applied."""


class DegenerateEdgeError(ParameterError):
    """A displacement would collapse an edge below the minimum length."""


class InfeasibleDisplacementError(ParameterError):
    """No displacement along the requested vector reaches the target length."""


class ConstraintError(ParameterError):
    pass


class SamplingError(Exception):
    def __init__(self, message: str, last_values: dict[str, float], retries: int):
        super().__init__(message)
        self.last_values = last_values
        self.retries = retries


def _move_vertex(pattern: PatternSpec, panel_name: str, vertex_id: int, pos: Vertex2D) -> PatternSpec:
    panels = tuple(
        replace(
            p,
            vertices=tuple(pos if i == vertex_id else v for i, v in enumerate(p.vertices)),
        )
        if p.name == panel_name
        else p
        for p in pattern.panels
    )
    return replace(pattern, panels=panels)


def _set_curvature(pattern: PatternSpec, ref: EdgeRef, curvature: tuple[float, float]) -> PatternSpec:
    panels = tuple(
        replace(
            p,
            edges=tuple(
                replace(e, curvature=curvature) if j == ref.edge else e for j, e in enumerate(p.edges)
            ),
        )
        if p.name == ref.panel
        else p
        for p in pattern.panels
    )
    return replace(pattern, panels=panels)


def _solve_along(chord: tuple[float, float], along: tuple[float, float], k: float) -> float:
    """Displacement s with |chord + s * along| = k * |chord|, minimal |s|.

    Ties (pure perpendicular moves) resolve to the positive root so the
    motion follows the authored direction of application.
    """
    cx, cy = chord
    ax, ay = along
    ac = ax * cx + ay * cy
    c2 = cx * cx + cy * cy
    disc = ac * ac + c2 * (k * k - 1.0)
    if disc < 0.0:
        raise InfeasibleDisplacementError(
            f"target length factor {k:.6g} unreachable along ({ax:.3g}, {ay:.3g})"
        )
    root = math.sqrt(disc)
    s_plus = -ac + root
    s_minus = -ac - root
    if abs(s_plus) < abs(s_minus):
        return s_plus
    if abs(s_minus) < abs(s_plus):
        return s_minus
    return max(s_plus, s_minus)


def _rescale_edge(
    pattern: PatternSpec,
    ref: EdgeRef,
    k: float,
    toward_end: bool = True,
    along: tuple[float, float] | None = None,
) -> PatternSpec:
    """Move one endpoint so the edge chord (hence arc) scales by factor k."""
    if k == 1.0:
        return pattern
    panel = pattern.panel(ref.panel)
    edge = panel.edges[ref.edge]
    anchor_id, move_id = (edge.start_id, edge.end_id) if toward_end else (edge.end_id, edge.start_id)
    anchor = panel.vertices[anchor_id]
    moving = panel.vertices[move_id]
    chord = (moving.x - anchor.x, moving.y - anchor.y)
    chord_len = math.hypot(*chord)
    if chord_len < _MIN_EDGE_LEN:
        raise DegenerateEdgeError(f"edge {ref.edge} of panel {ref.panel!r} is already degenerate")
    if k * chord_len < _MIN_EDGE_LEN:
        raise DegenerateEdgeError(
            f"edge {ref.edge} of panel {ref.panel!r} would collapse to {k * chord_len:.3g} cm"
        )
    if along is None:
        new_pos = Vertex2D(anchor.x + k * chord[0], anchor.y + k * chord[1])
    else:
        s = _solve_along(chord, along, k)
        new_pos = Vertex2D(moving.x + s * along[0], moving.y + s * along[1])
    for j, other in enumerate(panel.edges):
        if j == ref.edge or move_id not in (other.start_id, other.end_id):
            continue
        far_id = other.end_id if other.start_id == move_id else other.start_id
        far = panel.vertices[far_id]
        if math.dist(new_pos, far) < _MIN_EDGE_LEN:
            raise DegenerateEdgeError(
                f"moving vertex {move_id} of panel {ref.panel!r} would collapse edge {j}"
            )
    return _move_vertex(pattern, ref.panel, move_id, new_pos)


def _iter_groups(rule: ParameterRule):
    """Influence entries grouped by distribute_group, in first-seen order."""
    order: list[str | None] = []
    groups: dict[str | None, list[InfluenceEntry]] = {}
    for i, entry in enumerate(rule.influence):
        key = entry.distribute_group if entry.distribute_group is not None else f"_solo_{i}"
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(entry)
    return [groups[k] for k in order]


def _apply_length(pattern: PatternSpec, rule: ParameterRule, value: float) -> PatternSpec:
    for entries in _iter_groups(rule):
        if value == rule.identity_value:
            continue
        if len(entries) == 1:
            entry = entries[0]
            if rule.kind == "multiplicative":
                k = value
            else:
                current = geometry.edge_length(
                    pattern.panel(entry.edge_ref.panel), entry.edge_ref.edge, tol=_CONSTRAINT_TOL
                )
                k = (current + value) / current
            if k <= 0:
                raise DegenerateEdgeError(
                    f"rule {rule.name!r}: factor {k:.4g} collapses edge {entry.edge_ref}"
                )
            pattern = _rescale_edge(pattern, entry.edge_ref, k, entry.toward_end, entry.along)
            continue
        # Distribute group: freeze absolute targets from the lengths at group
        # start, proportional to those lengths, then drive each edge to its
        # target so chained moves cannot corrupt later shares.
        lengths = [
            geometry.edge_length(pattern.panel(e.edge_ref.panel), e.edge_ref.edge, tol=_CONSTRAINT_TOL)
            for e in entries
        ]
        total = sum(lengths)
        if total <= 0:
            raise DegenerateEdgeError(f"rule {rule.name!r}: zero total length in group")
        if rule.kind == "multiplicative":
            targets = [value * length for length in lengths]
        else:
            targets = [length + value * length / total for length in lengths]
        for entry, target in zip(entries, targets):
            if target <= 0:
                raise DegenerateEdgeError(
                    f"rule {rule.name!r}: target {target:.4g} collapses edge {entry.edge_ref}"
                )
            current = geometry.edge_length(
                pattern.panel(entry.edge_ref.panel), entry.edge_ref.edge, tol=_CONSTRAINT_TOL
            )
            pattern = _rescale_edge(
                pattern, entry.edge_ref, target / current, entry.toward_end, entry.along
            )
    return pattern


def _apply_curvature(pattern: PatternSpec, rule: ParameterRule, value: float) -> PatternSpec:
    for entry in rule.influence:
        ref = entry.edge_ref
        current = pattern.resolve(ref).curvature
        if rule.kind == "multiplicative":
            if value == 1.0 or current is None:
                continue
            new = (value * current[0], value * current[1])
        else:
            if value == 0.0:
                continue
            direction = entry.along if entry.along is not None else (0.0, 1.0)
            base = current if current is not None else (0.5, 0.0)
            new = (base[0] + value * direction[0], base[1] + value * direction[1])
        pattern = _set_curvature(pattern, ref, new)
    return pattern


def apply_parameter(pattern: PatternSpec, rule: ParameterRule, value: float) -> PatternSpec:
    """Apply one rule at the given value; identity values are bitwise no-ops."""
    if not math.isfinite(value):
        raise ParameterError(f"rule {rule.name!r}: non-finite value {value!r}")
    if rule.target == "length":
        return _apply_length(pattern, rule, value)
    if rule.target == "curvature":
        return _apply_curvature(pattern, rule, value)
    raise ParameterError(f"rule {rule.name!r}: unknown target {rule.target!r}")


def apply_constraints(
    pattern: PatternSpec, constraints: tuple[Constraint, ...] | list[Constraint]
) -> tuple[PatternSpec, tuple[Constraint, ...]]:
    """Equalize each constraint's edges to their mean length.

    Returns the repaired pattern and the constraints with restore multipliers
    populated (new length / old length per edge).
    """
    updated = []
    for constraint in constraints:
        lengths = [
            geometry.edge_length(pattern.panel(ref.panel), ref.edge, tol=_CONSTRAINT_TOL)
            for ref in constraint.edges
        ]
        if any(length < _MIN_EDGE_LEN for length in lengths):
            raise ConstraintError("constraint lists a zero-length edge")
        mean = sum(lengths) / len(lengths)
        multipliers = tuple(mean / length for length in lengths)
        pattern = _drive_to_targets(pattern, constraint.edges, [mean] * len(lengths))
        updated.append(replace(constraint, multipliers=multipliers))
    return pattern, tuple(updated)


def restore_constraints(
    pattern: PatternSpec, constraints: tuple[Constraint, ...] | list[Constraint]
) -> PatternSpec:
    """Rescale each constrained edge by the inverse of its stored multiplier."""
    for constraint in constraints:
        if any(m <= 0 for m in constraint.multipliers):
            raise ConstraintError("constraint multiplier must be positive")
        targets = [
            geometry.edge_length(pattern.panel(ref.panel), ref.edge, tol=_CONSTRAINT_TOL) / m
            for ref, m in zip(constraint.edges, constraint.multipliers)
        ]
        pattern = _drive_to_targets(pattern, constraint.edges, targets)
    return pattern


def _drive_to_targets(
    pattern: PatternSpec, refs: tuple[EdgeRef, ...], targets: list[float], max_rounds: int = 10
) -> PatternSpec:
    """Rescale edges toward absolute arc-length targets, re-running passes
    when edges share vertices and disturb each other."""
    for _ in range(max_rounds):
        dirty = False
        for ref, target in zip(refs, targets):
            current = geometry.edge_length(pattern.panel(ref.panel), ref.edge, tol=_CONSTRAINT_TOL)
            if abs(current - target) <= 1e-10 * max(target, 1.0):
                continue
            pattern = _rescale_edge(pattern, ref, target / current, toward_end=True)
            dirty = True
        if not dirty:
            return pattern
    for ref, target in zip(refs, targets):
        current = geometry.edge_length(pattern.panel(ref.panel), ref.edge, tol=_CONSTRAINT_TOL)
        if abs(current - target) > 1e-9 * max(target, 1.0):
            raise ConstraintError(
                f"edge {ref.edge} of panel {ref.panel!r} did not converge to its target length"
            )
    return pattern


def _apply_rules(template: TemplateSpec, values: dict[str, float]) -> PatternSpec:
    missing = [n for n in template.parameter_order if n not in values]
    if missing:
        raise ParameterError(f"missing values for parameters {missing}")
    pattern = template.pattern
    for name in template.parameter_order:
        rule = template.rule(name)
        try:
            pattern = apply_parameter(pattern, rule, values[name])
        except ParameterError as exc:
            raise type(exc)(f"rule {name!r}: {exc}") from exc
    return pattern


def apply_template(
    template: TemplateSpec, values: dict[str, float]
) -> tuple[PatternSpec, tuple[Constraint, ...]]:
    """Rules in declared order, then constraints; returns stored multipliers."""
    pattern = _apply_rules(template, values)
    return apply_constraints(pattern, template.constraints)


def apply_all(template: TemplateSpec, values: dict[str, float]) -> PatternSpec:
    """Apply every parameter in parameter_order, then the constraints."""
    pattern, _ = apply_template(template, values)
    return pattern


def sample_pattern(
    template: TemplateSpec, seed: int, max_retries: int = 100
) -> tuple[PatternSpec, SampleRecord]:
    """Draw one non-self-intersecting design from the template.

    Values are uniform over each rule's range, drawn in parameter_order from
    a generator seeded with `seed`, so results are deterministic. Samples
    whose panels self-intersect (before or after constraints) are rejected
    and redrawn up to max_retries times.
    """
    if max_retries < 1:
        raise ValueError("max_retries must be at least 1")
    rng = np.random.default_rng(seed)
    rejected_post = 0
    values: dict[str, float] = {}
    for attempt in range(max_retries):
        values = {}
        for name in template.parameter_order:
            lo, hi = template.rule(name).range
            values[name] = float(rng.uniform(lo, hi))
        try:
            pattern = _apply_rules(template, values)
        except ParameterError:
            continue
        if any(geometry.panel_self_intersects(p) for p in pattern.panels):
            continue
        try:
            pattern, updated = apply_constraints(pattern, template.constraints)
        except ParameterError:
            continue
        if template.constraints and any(
            geometry.panel_self_intersects(p) for p in pattern.panels
        ):
            rejected_post += 1
            continue
        record = SampleRecord(
            seed=seed,
            values=values,
            constraint_multipliers=tuple(c.multipliers for c in updated),
            retries=attempt,
            rejected_after_constraints=rejected_post,
        )
        return pattern, record
    raise SamplingError(
        f"no acceptable sample after {max_retries} retries", values, max_retries
    )
