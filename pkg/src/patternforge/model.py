"""Domain model for sewing patterns and parametric templates.

All values are immutable after construction, so they can be shared freely
across threads and hashed into caches. Lengths are centimeters, angles are
degrees (Euler XYZ, intrinsic), and edge curvature is expressed in the
edge's similarity frame (see :mod:`patternforge.geometry`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Optional


class Vertex2D(NamedTuple):
    """Panel-local 2D point, centimeters."""

    x: float
    y: float


class EdgeRef(NamedTuple):
    """Reference to one edge of one panel."""

    panel: str
    edge: int


@dataclass(frozen=True)
class Edge:
    """Oriented edge between two panel vertices.

    ``curvature`` is the optional quadratic Bezier control point in relative
    edge-frame coordinates; ``None`` means a straight segment.
    """

    start_id: int
    end_id: int
    curvature: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class Panel:
    """One flat fabric piece: a closed edge loop plus its 3D placement."""

    name: str
    vertices: tuple[Vertex2D, ...]
    edges: tuple[Edge, ...]
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def edge_chord(self, edge_index: int) -> tuple[Vertex2D, Vertex2D]:
        e = self.edges[edge_index]
        return self.vertices[e.start_id], self.vertices[e.end_id]


@dataclass(frozen=True)
class Stitch:
    """Unordered pair of edges joined during draping."""

    sides: tuple[EdgeRef, EdgeRef]


@dataclass(frozen=True)
class PatternSpec:
    """A complete sewing pattern: panels plus stitch relations."""

    panels: tuple[Panel, ...]
    stitches: tuple[Stitch, ...] = ()

    def panel(self, name: str) -> Panel:
        for p in self.panels:
            if p.name == name:
                return p
        raise KeyError(name)

    def panel_index(self, name: str) -> int:
        for i, p in enumerate(self.panels):
            if p.name == name:
                return i
        raise KeyError(name)

    def resolve(self, ref: EdgeRef) -> Edge:
        return self.panel(ref.panel).edges[ref.edge]


@dataclass(frozen=True)
class InfluenceEntry:
    """One edge a parameter acts on, plus how its endpoint moves."""

    edge_ref: EdgeRef
    toward_end: bool = True
    along: Optional[tuple[float, float]] = None
    distribute_group: Optional[str] = None


@dataclass(frozen=True)
class ParameterRule:
    """Edge-level design rule: scales or offsets edge length or curvature."""

    name: str
    target: str  # "length" | "curvature"
    kind: str  # "multiplicative" | "additive"
    range: tuple[float, float]
    value: float
    influence: tuple[InfluenceEntry, ...]

    @property
    def identity_value(self) -> float:
        return 1.0 if self.kind == "multiplicative" else 0.0


@dataclass(frozen=True)
class Constraint:
    """Post-parameter repair equalizing listed edges to their mean length."""

    edges: tuple[EdgeRef, ...]
    multipliers: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.multipliers) != len(self.edges):
            raise ValueError("constraint multiplier count must match edge count")


@dataclass(frozen=True)
class TemplateSpec:
    """A base pattern plus the parameter rules defining its design space."""

    pattern: PatternSpec
    parameters: tuple[ParameterRule, ...] = ()
    parameter_order: tuple[str, ...] = ()
    constraints: tuple[Constraint, ...] = ()

    def rule(self, name: str) -> ParameterRule:
        for r in self.parameters:
            if r.name == name:
                return r
        raise KeyError(name)


@dataclass(frozen=True)
class SampleRecord:
    """Bookkeeping for one design drawn from a template."""

    seed: int
    values: dict[str, float]
    constraint_multipliers: tuple[tuple[float, ...], ...]
    retries: int
    rejected_after_constraints: int = 0


# ---------------------------------------------------------------------------
# Diagnostics and errors


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding with its locus in the pattern."""

    severity: str  # "error" | "warning"
    code: str
    message: str
    panel: Optional[str] = None
    edge: Optional[int] = None

    def format(self, filename: str = "<pattern>") -> str:
        panel = self.panel if self.panel is not None else "-"
        edge = str(self.edge) if self.edge is not None else "-"
        return f"{filename}:{panel}:{edge}: {self.severity}: {self.message}"


class TemplateError(Exception):
    """Base class for template parsing and validation failures."""

    def __init__(self, message: str, diagnostics: tuple[Diagnostic, ...] = ()):
        super().__init__(message)
        self.diagnostics = diagnostics


class TemplateSyntaxError(TemplateError):
    """The document is not valid JSON; carries the reported position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(TemplateError):
    """The JSON is well formed but a field is missing or has the wrong kind."""


class SemanticError(TemplateError):
    """Structurally parsed but inconsistent: open loops, dangling refs, ..."""


# ---------------------------------------------------------------------------
# Validation


def _loop_is_closed(panel: Panel) -> bool:
    n = len(panel.edges)
    return all(
        panel.edges[i].end_id == panel.edges[(i + 1) % n].start_id for i in range(n)
    )


def validate(pattern: PatternSpec) -> list[Diagnostic]:
    """Check every pattern invariant; an empty result means the pattern is valid.

    Accepts structurally parsed but possibly inconsistent patterns and never
    raises: problems are returned as diagnostics.
    """
    out: list[Diagnostic] = []
    seen_names: set[str] = set()
    for panel in pattern.panels:
        if panel.name in seen_names:
            out.append(
                Diagnostic("error", "duplicate-panel", f"duplicate panel name {panel.name!r}", panel.name)
            )
        seen_names.add(panel.name)
        out.extend(_validate_panel(panel))

    used_edges: set[EdgeRef] = set()
    for i, stitch in enumerate(pattern.stitches):
        a, b = stitch.sides
        if a == b:
            out.append(
                Diagnostic("error", "stitch-self", f"stitch {i} joins an edge to itself", a.panel, a.edge)
            )
        for ref in stitch.sides:
            diag = _check_edge_ref(pattern, ref, f"stitch {i}")
            if diag is not None:
                out.append(diag)
                continue
            if ref in used_edges:
                out.append(
                    Diagnostic(
                        "error",
                        "stitch-reuse",
                        f"edge {ref.edge} of panel {ref.panel!r} appears in more than one stitch",
                        ref.panel,
                        ref.edge,
                    )
                )
            used_edges.add(ref)
    return out


def _validate_panel(panel: Panel) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    nv = len(panel.vertices)

    for i, v in enumerate(panel.vertices):
        if not (math.isfinite(v.x) and math.isfinite(v.y)):
            out.append(
                Diagnostic("error", "nonfinite-vertex", f"vertex {i} has non-finite coordinates", panel.name)
            )
    coords = {}
    for i, v in enumerate(panel.vertices):
        key = (v.x, v.y)
        if key in coords:
            out.append(
                Diagnostic(
                    "error",
                    "duplicate-vertex",
                    f"vertices {coords[key]} and {i} have identical coordinates {key}",
                    panel.name,
                )
            )
        else:
            coords[key] = i

    if not all(math.isfinite(c) for c in panel.translation + panel.rotation):
        out.append(Diagnostic("error", "nonfinite-placement", "non-finite translation or rotation", panel.name))

    if len(panel.edges) < 3:
        out.append(
            Diagnostic("error", "short-loop", f"panel has {len(panel.edges)} edges, need at least 3", panel.name)
        )

    referenced: set[int] = set()
    index_ok = True
    for j, e in enumerate(panel.edges):
        if e.start_id == e.end_id:
            out.append(
                Diagnostic("error", "degenerate-edge", f"edge {j} starts and ends at vertex {e.start_id}", panel.name, j)
            )
        for vid in (e.start_id, e.end_id):
            if not (0 <= vid < nv):
                out.append(
                    Diagnostic("error", "bad-vertex-index", f"edge {j} references vertex {vid} of {nv}", panel.name, j)
                )
                index_ok = False
            else:
                referenced.add(vid)
        if e.curvature is not None and not all(math.isfinite(c) for c in e.curvature):
            out.append(Diagnostic("error", "nonfinite-curvature", f"edge {j} has non-finite curvature", panel.name, j))

    if index_ok and panel.edges:
        n = len(panel.edges)
        for j in range(n):
            nxt = (j + 1) % n
            if panel.edges[j].end_id != panel.edges[nxt].start_id:
                out.append(
                    Diagnostic(
                        "error",
                        "open-loop",
                        f"edge {j} ends at vertex {panel.edges[j].end_id} but edge {nxt} "
                        f"starts at vertex {panel.edges[nxt].start_id}",
                        panel.name,
                        j,
                    )
                )
        if index_ok and referenced != set(range(nv)):
            unused = sorted(set(range(nv)) - referenced)
            if unused:
                out.append(
                    Diagnostic("error", "unreferenced-vertex", f"vertices {unused} are not used by any edge", panel.name)
                )
        for j, e in enumerate(panel.edges):
            if 0 <= e.start_id < nv and 0 <= e.end_id < nv and e.start_id != e.end_id:
                a, b = panel.vertices[e.start_id], panel.vertices[e.end_id]
                if math.hypot(b.x - a.x, b.y - a.y) < 1e-9:
                    out.append(
                        Diagnostic("error", "zero-length-edge", f"edge {j} has near-zero chord length", panel.name, j)
                    )
    return out


def _check_edge_ref(pattern: PatternSpec, ref: EdgeRef, context: str) -> Optional[Diagnostic]:
    try:
        panel = pattern.panel(ref.panel)
    except KeyError:
        return Diagnostic("error", "dangling-panel", f"{context} references unknown panel {ref.panel!r}", ref.panel)
    if not (0 <= ref.edge < len(panel.edges)):
        return Diagnostic(
            "error",
            "dangling-edge",
            f"{context} references edge {ref.edge} of panel {ref.panel!r} which has {len(panel.edges)} edges",
            ref.panel,
            ref.edge,
        )
    return None


def validate_template(template: TemplateSpec) -> list[Diagnostic]:
    """Validate the base pattern plus parameter rules and constraints."""
    out = validate(template.pattern)
    pattern = template.pattern

    names = [r.name for r in template.parameters]
    if sorted(template.parameter_order) != sorted(names):
        out.append(
            Diagnostic("error", "bad-parameter-order", "parameter_order is not a permutation of parameter names")
        )

    for rule in template.parameters:
        lo, hi = rule.range
        if not (lo <= hi):
            out.append(Diagnostic("error", "bad-range", f"parameter {rule.name!r} has range [{lo}, {hi}]"))
        if rule.target not in ("length", "curvature"):
            out.append(Diagnostic("error", "bad-target", f"parameter {rule.name!r} target {rule.target!r}"))
        if rule.kind not in ("multiplicative", "additive"):
            out.append(Diagnostic("error", "bad-kind", f"parameter {rule.name!r} kind {rule.kind!r}"))
        if not rule.influence:
            out.append(Diagnostic("error", "empty-influence", f"parameter {rule.name!r} influences no edges"))
        for entry in rule.influence:
            diag = _check_edge_ref(pattern, entry.edge_ref, f"parameter {rule.name!r}")
            if diag is not None:
                out.append(diag)
            if entry.along is not None:
                norm = math.hypot(*entry.along)
                if abs(norm - 1.0) > 1e-9:
                    out.append(
                        Diagnostic(
                            "error",
                            "bad-along",
                            f"parameter {rule.name!r} has non-unit along vector (norm {norm:.6g})",
                            entry.edge_ref.panel,
                            entry.edge_ref.edge,
                        )
                    )
        out.extend(_validate_groups(pattern, rule))

    for ci, constraint in enumerate(template.constraints):
        if not constraint.edges:
            out.append(Diagnostic("error", "empty-constraint", f"constraint {ci} lists no edges"))
        for ref in constraint.edges:
            diag = _check_edge_ref(pattern, ref, f"constraint {ci}")
            if diag is not None:
                out.append(diag)
        if any(m <= 0 for m in constraint.multipliers):
            out.append(Diagnostic("error", "bad-multiplier", f"constraint {ci} has a non-positive multiplier"))
    return out


def _validate_groups(pattern: PatternSpec, rule: ParameterRule) -> list[Diagnostic]:
    """Edges sharing a distribute_group must be contiguous in one panel's loop."""
    out: list[Diagnostic] = []
    groups: dict[str, list[EdgeRef]] = {}
    for entry in rule.influence:
        if entry.distribute_group is not None:
            groups.setdefault(entry.distribute_group, []).append(entry.edge_ref)
    for gid, refs in groups.items():
        panels = {r.panel for r in refs}
        if len(panels) != 1:
            out.append(
                Diagnostic("error", "group-multi-panel", f"distribute group {gid!r} of {rule.name!r} spans panels {sorted(panels)}")
            )
            continue
        try:
            panel = pattern.panel(refs[0].panel)
        except KeyError:
            continue
        n = len(panel.edges)
        idx = sorted(r.edge for r in refs if 0 <= r.edge < n)
        if len(idx) != len(refs):
            continue  # dangling refs reported separately
        contiguous = any(
            set(idx) == {(start + k) % n for k in range(len(idx))} for start in idx
        )
        if not contiguous:
            out.append(
                Diagnostic(
                    "error",
                    "group-not-contiguous",
                    f"distribute group {gid!r} of {rule.name!r} edges {idx} are not contiguous in the loop",
                    refs[0].panel,
                )
            )
    return out


def iter_edge_refs(pattern: PatternSpec) -> Iterator[EdgeRef]:
    for panel in pattern.panels:
        for j in range(len(panel.edges)):
            yield EdgeRef(panel.name, j)
