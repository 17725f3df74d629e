"""2D geometry kernel for panels.

Curved edges are quadratic Beziers whose control point lives in the edge's
similarity frame: the transform mapping (0,0) to the start vertex and (1,0)
to the end vertex carries the relative coordinates (cx, cy) to the absolute
control point. Both axes scale with edge length, so multiplicative length
changes preserve curve shape up to scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Panel, PatternSpec, Vertex2D


class GeometryError(Exception):
    pass


class TriangulationError(GeometryError):
    pass


def control_point_abs(start: Vertex2D, end: Vertex2D, rel: tuple[float, float]) -> Vertex2D:
    """Absolute control point for relative coordinates in the edge frame.

    perp() is the +90 degree rotation of the edge vector, so cy > 0 bows the
    curve to the left of the travel direction.
    """
    ex, ey = end[0] - start[0], end[1] - start[1]
    if ex == 0.0 and ey == 0.0:
        raise GeometryError("degenerate edge: start equals end")
    cx, cy = rel
    return Vertex2D(start[0] + cx * ex - cy * ey, start[1] + cx * ey + cy * ex)


def _edge_points(panel: Panel, edge_index: int) -> tuple[Vertex2D, Vertex2D, Vertex2D | None]:
    e = panel.edges[edge_index]
    p0 = panel.vertices[e.start_id]
    p1 = panel.vertices[e.end_id]
    c = control_point_abs(p0, p1, e.curvature) if e.curvature is not None else None
    return p0, p1, c


def eval_edge(panel: Panel, edge_index: int, t: float) -> Vertex2D:
    """Point on the edge at parameter t in [0, 1]."""
    p0, p1, c = _edge_points(panel, edge_index)
    if c is None:
        return Vertex2D(p0.x + t * (p1.x - p0.x), p0.y + t * (p1.y - p0.y))
    u = 1.0 - t
    return Vertex2D(
        u * u * p0.x + 2.0 * t * u * c.x + t * t * p1.x,
        u * u * p0.y + 2.0 * t * u * c.y + t * t * p1.y,
    )


def eval_edge_many(panel: Panel, edge_index: int, ts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`eval_edge`; returns an (n, 2) array."""
    p0, p1, c = _edge_points(panel, edge_index)
    t = np.asarray(ts, dtype=np.float64)[:, None]
    a = np.array(p0, dtype=np.float64)
    b = np.array(p1, dtype=np.float64)
    if c is None:
        return a + t * (b - a)
    u = 1.0 - t
    cc = np.array(c, dtype=np.float64)
    return u * u * a + 2.0 * t * u * cc + t * t * b


def _bezier_arc_length(p0, c, p1, tol: float) -> float:
    """Adaptive de Casteljau subdivision; (2 chord + polygon) / 3 estimate."""

    def recurse(a, b, d, eps):
        chord = math.dist(a, d)
        poly = math.dist(a, b) + math.dist(b, d)
        if poly - chord <= eps or poly < 1e-30:
            return (2.0 * chord + poly) / 3.0
        ab = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        bd = ((b[0] + d[0]) / 2, (b[1] + d[1]) / 2)
        mid = ((ab[0] + bd[0]) / 2, (ab[1] + bd[1]) / 2)
        return recurse(a, ab, mid, eps / 2) + recurse(mid, bd, d, eps / 2)

    rough = math.dist(p0, c) + math.dist(c, p1)
    return recurse(tuple(p0), tuple(c), tuple(p1), tol * max(rough, 1e-30))


def edge_length(panel: Panel, edge_index: int, tol: float = 1e-6) -> float:
    """Arc length of the edge in cm, converged to relative tolerance tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    p0, p1, c = _edge_points(panel, edge_index)
    if c is None:
        return math.dist(p0, p1)
    return _bezier_arc_length(p0, c, p1, tol)


def chord_length_ratio(curvature: tuple[float, float] | None) -> float:
    """Arc length divided by chord length for a unit edge with this curvature."""
    if curvature is None:
        return 1.0
    p0 = Vertex2D(0.0, 0.0)
    p1 = Vertex2D(1.0, 0.0)
    c = control_point_abs(p0, p1, curvature)
    return _bezier_arc_length(p0, c, p1, 1e-9)


@dataclass
class Polyline2D:
    """Sampled closed boundary; tags record (edge index, curve parameter t)."""

    points: np.ndarray  # (n, 2)
    tags: list[tuple[int, float]]


def _edge_param_grid(panel: Panel, edge_index: int, count: int) -> np.ndarray:
    """count+1 t values from 0 to 1, spaced uniformly in arc length."""
    e = panel.edges[edge_index]
    if e.curvature is None:
        return np.linspace(0.0, 1.0, count + 1)
    dense_t = np.linspace(0.0, 1.0, 257)
    pts = eval_edge_many(panel, edge_index, dense_t)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = cum[-1]
    if total <= 0:
        return np.linspace(0.0, 1.0, count + 1)
    targets = np.linspace(0.0, total, count + 1)
    ts = np.interp(targets, cum, dense_t)
    ts[0], ts[-1] = 0.0, 1.0
    return ts


def sample_boundary(panel: Panel, samples_per_edge: int) -> Polyline2D:
    """Closed polyline visiting the loop; shared corner points deduplicated.

    Point count is len(edges) * (samples_per_edge - 1): each edge contributes
    its samples except the final endpoint, which the next edge re-emits.
    """
    if samples_per_edge < 2:
        raise ValueError("samples_per_edge must be at least 2")
    pts: list[np.ndarray] = []
    tags: list[tuple[int, float]] = []
    for j in range(len(panel.edges)):
        ts = np.linspace(0.0, 1.0, samples_per_edge)[:-1]
        pts.append(eval_edge_many(panel, j, ts))
        tags.extend((j, float(t)) for t in ts)
    return Polyline2D(np.concatenate(pts, axis=0), tags)


def signed_area(points: np.ndarray | Polyline2D) -> float:
    """Shoelace signed area of a closed polyline; positive iff CCW."""
    p = points.points if isinstance(points, Polyline2D) else np.asarray(points, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polyline_self_intersects(points: np.ndarray) -> bool:
    """True iff the closed polyline crosses itself.

    Counts proper crossings between non-adjacent segments, collinear overlap
    of positive length anywhere, and adjacent segments doubling back past
    their shared endpoint.
    """
    p = np.asarray(points, dtype=np.float64)
    n = len(p)
    if n < 3:
        return False
    a = p
    b = np.roll(p, -1, axis=0)

    ii, jj = np.triu_indices(n, k=2)
    keep = ~((ii == 0) & (jj == n - 1))
    ii, jj = ii[keep], jj[keep]

    a1, b1 = a[ii], b[ii]
    a2, b2 = a[jj], b[jj]

    def cross(o, u, v):
        return (u[:, 0] - o[:, 0]) * (v[:, 1] - o[:, 1]) - (u[:, 1] - o[:, 1]) * (v[:, 0] - o[:, 0])

    d1 = cross(a2, b2, a1)
    d2 = cross(a2, b2, b1)
    d3 = cross(a1, b1, a2)
    d4 = cross(a1, b1, b2)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )
    if bool(proper.any()):
        return True

    # Collinear pairs: overlap of positive length along the shared line.
    col = (d1 == 0) & (d2 == 0) & (d3 == 0) & (d4 == 0)
    if bool(col.any()):
        k = np.nonzero(col)[0]
        q1, r1, q2, r2 = a1[k], b1[k], a2[k], b2[k]
        d = r1 - q1
        axis = (np.abs(d[:, 0]) < np.abs(d[:, 1])).astype(int)
        rows = np.arange(len(k))
        lo1 = np.minimum(q1[rows, axis], r1[rows, axis])
        hi1 = np.maximum(q1[rows, axis], r1[rows, axis])
        lo2 = np.minimum(q2[rows, axis], r2[rows, axis])
        hi2 = np.maximum(q2[rows, axis], r2[rows, axis])
        if bool(np.any(np.minimum(hi1, hi2) - np.maximum(lo1, lo2) > 0.0)):
            return True

    # Adjacent segments folding back over each other.
    prev_dir = a - np.roll(a, 1, axis=0)  # incoming direction at each point
    next_dir = b - a
    crossz = prev_dir[:, 0] * next_dir[:, 1] - prev_dir[:, 1] * next_dir[:, 0]
    dot = prev_dir[:, 0] * next_dir[:, 0] + prev_dir[:, 1] * next_dir[:, 1]
    return bool(np.any((crossz == 0.0) & (dot < 0.0)))


def panel_self_intersects(panel: Panel, samples_per_edge: int = 16) -> bool:
    """Self-intersection test on the sampled closed boundary polyline.

    Straight edges contribute a single segment: subdividing them cannot
    change the verdict, so only curved edges are discretized.
    """
    pts = []
    for j, e in enumerate(panel.edges):
        count = samples_per_edge if e.curvature is not None else 2
        ts = np.linspace(0.0, 1.0, count)[:-1]
        pts.append(eval_edge_many(panel, j, ts))
    return polyline_self_intersects(np.concatenate(pts, axis=0))


# ---------------------------------------------------------------------------
# Triangulation


@dataclass
class PanelMesh2D:
    """Conforming triangulation of a panel interior.

    boundary_map assigns each boundary vertex its primary (edge index,
    arc-length parameter); loop corners map to the edge they start.
    edge_vertices lists, per edge, the ordered (vertex id, s) chain including
    both endpoints, which stitch pairing consumes.
    """

    vertices: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3) CCW
    boundary_map: dict[int, tuple[int, float]]
    edge_vertices: list[list[tuple[int, float]]] = field(default_factory=list)


_COLLINEARITY_NUDGE = 1e-5  # cm, breaks exact collinearity for qhull


def _boundary_samples(panel: Panel, target: float):
    """Per-edge arc-length-uniform samples at spacing <= target.

    Alternating interior samples are nudged a tenth of a micron toward the
    panel interior: exactly collinear runs on straight edges otherwise make
    the Delaunay step emit degenerate facets.
    """
    counts = []
    for j in range(len(panel.edges)):
        length = edge_length(panel, j)
        counts.append(max(1, math.ceil(length / target)))
    pts: list[np.ndarray] = []
    tags: list[tuple[int, float]] = []
    for j, nseg in enumerate(counts):
        ts = _edge_param_grid(panel, j, nseg)
        pe = eval_edge_many(panel, j, ts)
        if nseg > 2:
            tangent = pe[2:] - pe[:-2]
            norm = np.linalg.norm(tangent, axis=1, keepdims=True)
            norm[norm == 0] = 1.0
            inward = np.column_stack([-tangent[:, 1], tangent[:, 0]]) / norm
            k = np.arange(1, nseg)
            # index-hashed magnitudes: no three samples can stay collinear
            wobble = 0.5 + ((k * 2654435761) >> 7) % 16 / 16.0
            pe[k] += (_COLLINEARITY_NUDGE * wobble)[:, None] * inward[k - 1]
        pts.append(pe[:-1])
        tags.extend((j, k / nseg) for k in range(nseg))
    return np.concatenate(pts, axis=0), tags, counts


def _grid_points(boundary: np.ndarray, h: float, shift: tuple[float, float]) -> np.ndarray:
    """Hexagonal interior grid clipped to the polygon with a boundary margin."""
    import shapely

    polygon = shapely.Polygon(boundary)
    minx, miny, maxx, maxy = polygon.bounds
    row_h = h * math.sqrt(3.0) / 2.0
    ys = np.arange(miny + shift[1] * row_h, maxy, row_h)
    cols = []
    for irow, y in enumerate(ys):
        offset = (irow % 2) * h / 2.0
        xs = np.arange(minx + shift[0] * h + offset, maxx, h)
        cols.append(np.column_stack([xs, np.full_like(xs, y)]))
    if not cols:
        return np.empty((0, 2))
    cand = np.concatenate(cols, axis=0)
    if len(cand) == 0:
        return cand
    inside = shapely.contains_xy(polygon, cand[:, 0], cand[:, 1])
    cand = cand[inside]
    if len(cand) == 0:
        return cand
    ring = shapely.LineString(np.vstack([boundary, boundary[:1]]))
    dist = shapely.distance(shapely.points(cand), ring)
    return cand[dist >= 0.5 * h]


def _mesh_edges(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def _check_mesh(vertices, triangles, boundary_count, poly_area, target) -> str | None:
    if len(triangles) == 0:
        return "no triangles"
    v = vertices
    t = triangles
    cross = (v[t[:, 1], 0] - v[t[:, 0], 0]) * (v[t[:, 2], 1] - v[t[:, 0], 1]) - (
        v[t[:, 1], 1] - v[t[:, 0], 1]
    ) * (v[t[:, 2], 0] - v[t[:, 0], 0])
    areas = 0.5 * cross
    if np.any(areas < 1e-9):
        return "degenerate triangle"
    total = float(np.sum(areas))
    if abs(total - poly_area) > 1e-6 * max(abs(poly_area), 1e-30):
        return f"area mismatch {total} vs {poly_area}"
    edges = _mesh_edges(t)
    edge_set = {(int(a), int(b)) for a, b in edges}
    nb = boundary_count
    ring = {tuple(sorted((i, (i + 1) % nb))) for i in range(nb)}
    if ring - edge_set:
        return f"{len(ring - edge_set)} boundary segments not conforming"
    interior = np.array([e for e in edge_set if e not in ring])
    if len(interior):
        lens = np.linalg.norm(v[interior[:, 0]] - v[interior[:, 1]], axis=1)
        if float(lens.max()) > 1.5 * target:
            return f"interior edge {lens.max():.3f} exceeds 1.5 * {target}"
    return None


def triangulate_panel(panel: Panel, target_edge_len: float) -> PanelMesh2D:
    """Triangulate the panel interior at the requested resolution.

    Boundary spacing is at most target_edge_len; interior edges stay within
    1.5x of it. Interior points come from a hexagonal grid kept clear of the
    boundary; the combined point set is Delaunay triangulated and triangles
    outside the polygon are culled.
    """
    from scipy.spatial import Delaunay
    import shapely

    if target_edge_len <= 0:
        raise ValueError("target_edge_len must be positive")

    last_reason = "unknown"
    # Sharp notches force denser meshing: boundary and grid rescale together
    # so boundary segments stay Delaunay-conforming against the grid margin.
    for scale, shift in [
        (1.0, (0.31, 0.47)),
        (1.0, (0.73, 0.11)),
        (1.3, (0.31, 0.47)),
        (1.69, (0.57, 0.23)),
        (2.2, (0.23, 0.61)),
    ]:
        h = target_edge_len / scale
        boundary, tags, counts = _boundary_samples(panel, h)
        poly_area = signed_area(boundary)
        if abs(poly_area) < 1e-9:
            raise TriangulationError(f"panel {panel.name!r} has near-zero area")
        if poly_area < 0:
            raise TriangulationError(f"panel {panel.name!r} loop is clockwise; canonicalize first")
        if polyline_self_intersects(boundary):
            raise TriangulationError(f"panel {panel.name!r} boundary self-intersects")
        nb = len(boundary)
        interior = _grid_points(boundary, h, shift)
        pts = np.vstack([boundary, interior]) if len(interior) else boundary.copy()
        if len(pts) < 3:
            last_reason = "too few points"
            continue
        try:
            dela = Delaunay(pts)
        except Exception as exc:  # qhull degeneracies
            last_reason = f"delaunay failed: {exc}"
            continue
        tris = _orient_ccw(pts, dela.simplices)
        kept = _flood_select_interior(tris, nb)
        if kept is None:
            last_reason = "boundary not conforming"
            continue
        reason = _check_mesh(pts, kept, nb, poly_area, target_edge_len)
        if reason is None:
            return _finish_mesh(pts, kept, nb, tags, counts)
        last_reason = reason
    raise TriangulationError(f"panel {panel.name!r}: triangulation failed ({last_reason})")


def _flood_select_interior(tris: np.ndarray, boundary_count: int) -> np.ndarray | None:
    """Select triangles inside the boundary ring by topology alone.

    Requires every ring segment to appear as a triangle edge (None
    otherwise). Seeds are the triangles to the left of each directed ring
    segment (CCW triangles containing the segment in cyclic order); the
    region grows without crossing the ring, so arbitrarily thin notches are
    handled exactly.
    """
    edge_owners: dict[tuple[int, int], list[int]] = {}
    for t_idx, (a, b, c) in enumerate(tris):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_owners.setdefault((min(u, v), max(u, v)), []).append(t_idx)

    ring = set()
    seeds = []
    tri_list = tris.tolist()
    for i in range(boundary_count):
        a, b = i, (i + 1) % boundary_count
        key = (min(a, b), max(a, b))
        owners = edge_owners.get(key)
        if not owners:
            return None
        ring.add(key)
        for t_idx in owners:
            ta, tb, tc = tri_list[t_idx]
            if (ta, tb) == (a, b) or (tb, tc) == (a, b) or (tc, ta) == (a, b):
                seeds.append(t_idx)

    if not seeds:
        return None
    visited = np.zeros(len(tris), dtype=bool)
    stack = list(dict.fromkeys(seeds))
    for s in stack:
        visited[s] = True
    while stack:
        t_idx = stack.pop()
        a, b, c = tri_list[t_idx]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            if key in ring:
                continue
            for other in edge_owners[key]:
                if not visited[other]:
                    visited[other] = True
                    stack.append(other)
    return tris[visited]


def _orient_ccw(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    v = vertices
    t = triangles.copy()
    cross = (v[t[:, 1], 0] - v[t[:, 0], 0]) * (v[t[:, 2], 1] - v[t[:, 0], 1]) - (
        v[t[:, 1], 1] - v[t[:, 0], 1]
    ) * (v[t[:, 2], 0] - v[t[:, 0], 0])
    flip = cross < 0
    t[flip] = t[flip][:, [0, 2, 1]]
    return t


def _finish_mesh(pts, tris, nb, tags, counts) -> PanelMesh2D:
    boundary_map = {i: tags[i] for i in range(nb)}
    edge_vertices: list[list[tuple[int, float]]] = []
    start = 0
    for j, nseg in enumerate(counts):
        chain = [(start + k, k / nseg) for k in range(nseg)]
        chain.append(((start + nseg) % nb, 1.0))
        edge_vertices.append(chain)
        start += nseg
    return PanelMesh2D(
        vertices=pts.astype(np.float64),
        triangles=tris.astype(np.int64),
        boundary_map=boundary_map,
        edge_vertices=edge_vertices,
    )


# ---------------------------------------------------------------------------
# Debug SVG export


def pattern_svg(pattern: PatternSpec, margin: float = 4.0) -> str:
    """Render panels side by side as SVG paths with native quadratic segments."""
    groups = []
    cursor_x = margin
    for panel in pattern.panels:
        xs = [v.x for v in panel.vertices]
        ys = [v.y for v in panel.vertices]
        w = max(xs) - min(xs)
        h = max(ys) - min(ys)
        dx = cursor_x - min(xs)
        dy = margin + max(ys)
        cmds = []
        first = panel.vertices[panel.edges[0].start_id]
        cmds.append(f"M {first.x + dx:.4f} {dy - first.y:.4f}")
        for j, e in enumerate(panel.edges):
            p1 = panel.vertices[e.end_id]
            if e.curvature is None:
                cmds.append(f"L {p1.x + dx:.4f} {dy - p1.y:.4f}")
            else:
                p0 = panel.vertices[e.start_id]
                c = control_point_abs(p0, p1, e.curvature)
                cmds.append(f"Q {c.x + dx:.4f} {dy - c.y:.4f} {p1.x + dx:.4f} {dy - p1.y:.4f}")
        cmds.append("Z")
        groups.append(
            f'  <path id="{panel.name}" d="{" ".join(cmds)}" fill="none" stroke="#222" stroke-width="0.5"/>\n'
            f'  <text x="{cursor_x:.1f}" y="{dy + h + 8:.1f}" font-size="6">{panel.name}</text>'
        )
        cursor_x += w + margin
    height = max(
        (max(v.y for v in p.vertices) - min(v.y for v in p.vertices) for p in pattern.panels),
        default=0.0,
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{cursor_x:.1f}" '
        f'height="{height + 3 * margin + 10:.1f}" viewBox="0 0 {cursor_x:.1f} {height + 3 * margin + 10:.1f}">\n'
        + "\n".join(groups)
        + "\n</svg>\n"
    )
